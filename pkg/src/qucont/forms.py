"""Named analytic scalar fields.

Coefficients (metric entries, weights, potentials, damping) are given either
as a registered form name plus a numeric parameter list, or directly as a
:class:`ScalarForm` built from callables.  Every form carries closed-form first
and second derivatives so pseudo-convexity checks never depend on finite
differences unless asked to.

All callables take an ``(N, d)`` array of points and return arrays of shape
``(N,)``, ``(N, d)`` and ``(N, d, d)`` respectively.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ScalarForm:
    name: str
    value: ArrayFn
    grad: ArrayFn | None = None
    hess: ArrayFn | None = None

    @property
    def analytic(self) -> bool:
        return self.grad is not None and self.hess is not None


def _constant(params, d):
    (c,) = _expect(params, 1, "constant")

    def value(x):
        return np.full(x.shape[0], c, dtype=float)

    def grad(x):
        return np.zeros_like(x, dtype=float)

    def hess(x):
        return np.zeros((x.shape[0], d, d))

    return value, grad, hess


def _affine(params, d):
    c, *a = _expect(params, 1 + d, "affine")
    a = np.asarray(a, dtype=float)

    def value(x):
        return c + x @ a

    def grad(x):
        return np.broadcast_to(a, x.shape).copy()

    def hess(x):
        return np.zeros((x.shape[0], d, d))

    return value, grad, hess


def _poly2(params, d):
    # c + b.x + 1/2 x^T H x, H given row-major and symmetrized
    vals = _expect(params, 1 + d + d * d, "poly2")
    c = vals[0]
    b = np.asarray(vals[1:1 + d], dtype=float)
    H = np.asarray(vals[1 + d:], dtype=float).reshape(d, d)
    H = 0.5 * (H + H.T)

    def value(x):
        return c + x @ b + 0.5 * np.einsum("ni,ij,nj->n", x, H, x)

    def grad(x):
        return b + x @ H

    def hess(x):
        return np.broadcast_to(H, (x.shape[0], d, d)).copy()

    return value, grad, hess


def _trig(kind):
    def build(params, d):
        c, a, k, axis = _expect(params, 4, kind)
        axis = int(axis)
        if not 0 <= axis < d:
            raise ConfigurationError(f"{kind}: axis {axis} out of range for dim {d}")
        f, df, ddf = {
            "sin": (np.sin, np.cos, lambda s: -np.sin(s)),
            "cos": (np.cos, lambda s: -np.sin(s), lambda s: -np.cos(s)),
        }[kind]

        def value(x):
            return c + a * f(k * x[:, axis])

        def grad(x):
            g = np.zeros_like(x, dtype=float)
            g[:, axis] = a * k * df(k * x[:, axis])
            return g

        def hess(x):
            h = np.zeros((x.shape[0], d, d))
            h[:, axis, axis] = a * k * k * ddf(k * x[:, axis])
            return h

        return value, grad, hess

    return build


def _scaled_sqdist(params, d):
    s, *x0 = _expect(params, 1 + d, "scaled_sqdist")
    x0 = np.asarray(x0, dtype=float)

    def value(x):
        r = x - x0
        return s * np.einsum("ni,ni->n", r, r)

    def grad(x):
        return 2.0 * s * (x - x0)

    def hess(x):
        return np.broadcast_to(2.0 * s * np.eye(d), (x.shape[0], d, d)).copy()

    return value, grad, hess


def _sqdist(params, d):
    return _scaled_sqdist([1.0, *params], d)


def _gaussian(params, d):
    c, a, w, *x0 = _expect(params, 3 + d, "gaussian")
    x0 = np.asarray(x0, dtype=float)
    if w <= 0:
        raise ConfigurationError("gaussian: width must be positive")

    def value(x):
        r = x - x0
        return c + a * np.exp(-np.einsum("ni,ni->n", r, r) / w**2)

    def grad(x):
        r = x - x0
        e = a * np.exp(-np.einsum("ni,ni->n", r, r) / w**2)
        return (-2.0 / w**2) * e[:, None] * r

    def hess(x):
        r = x - x0
        e = a * np.exp(-np.einsum("ni,ni->n", r, r) / w**2)
        outer = np.einsum("ni,nj->nij", r, r)
        return e[:, None, None] * (4.0 / w**4 * outer - 2.0 / w**2 * np.eye(d))

    return value, grad, hess


REGISTRY = {
    "constant": _constant,
    "affine": _affine,
    "poly2": _poly2,
    "sin": _trig("sin"),
    "cos": _trig("cos"),
    "sqdist": _sqdist,
    "scaled_sqdist": _scaled_sqdist,
    "gaussian": _gaussian,
}


def _expect(params: Sequence[float], count: int, name: str) -> list[float]:
    params = [float(p) for p in params]
    if len(params) != count:
        raise ConfigurationError(
            f"form '{name}' expects {count} parameters, got {len(params)}"
        )
    return params


def make_form(name: str, params: Sequence[float], dim: int) -> ScalarForm:
    """Look up a registered form and bind its parameters for dimension ``dim``."""
    try:
        builder = REGISTRY[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown form '{name}'; known forms: {sorted(REGISTRY)}"
        ) from None
    value, grad, hess = builder(params, dim)
    return ScalarForm(name, value, grad, hess)


def as_form(spec, dim: int) -> ScalarForm:
    """Accept a ScalarForm, a number, or a ``{"form": ..., "params": [...]}`` mapping."""
    if isinstance(spec, ScalarForm):
        return spec
    if isinstance(spec, (int, float)):
        return make_form("constant", [spec], dim)
    if isinstance(spec, dict):
        if "form" not in spec:
            raise ConfigurationError(f"field spec missing 'form': {spec!r}")
        return make_form(spec["form"], spec.get("params", []), dim)
    if callable(spec):
        return ScalarForm(getattr(spec, "__name__", "callable"), spec)
    raise ConfigurationError(f"cannot interpret field spec {spec!r}")
