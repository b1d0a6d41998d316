"""Dense eigendecomposition of the discrete operator and spectral norms.

Fractional norms are defined on the coefficient sequence ``c_j = <w, phi_j>``::

    L2     = (sum c_j^2)^(1/2)
    H10    = (sum lambda_j c_j^2)^(1/2)
    Htheta = (sum lambda_j^theta c_j^2)^(1/2)

With these definitions the interpolation inequality between H10, Htheta and L2
holds with constant one (Hoelder on the coefficient sequence).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, ParameterError, SpectralError
from .operator import DiscreteOperator

MAX_DENSE = 5000


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    lambdas: np.ndarray     # (K,) nondecreasing
    modes: np.ndarray       # (N_int, K), columns mass-orthonormal
    op: DiscreteOperator

    @property
    def size(self) -> int:
        return self.lambdas.size

    def coeffs(self, w: np.ndarray) -> np.ndarray:
        """``c_j = <w, phi_j>_mass``; nodes on the last axis of ``w``."""
        w = np.asarray(w)
        if w.shape[-1] != self.modes.shape[0]:
            raise ParameterError(
                f"field has length {w.shape[-1]}, basis expects {self.modes.shape[0]}"
            )
        return (w * self.op.mass) @ self.modes

    def synthesize(self, c: np.ndarray) -> np.ndarray:
        return np.asarray(c) @ self.modes.T

    def mode(self, j: int) -> np.ndarray:
        """Eigenvector ``phi_j`` with 1-based index ``j``."""
        return self.modes[:, j - 1].copy()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["j", "lambda"])
            for j, lam in enumerate(self.lambdas, start=1):
                w.writerow([j, repr(float(lam))])


def eigendecompose(A: DiscreteOperator) -> SpectralBasis:
    """Full dense decomposition; eigenvectors are rescaled to unit mass norm."""
    if A.size > MAX_DENSE:
        raise ConfigurationError(
            f"{A.size} interior nodes exceed the dense limit of {MAX_DENSE}"
        )
    m = A.mass[0]
    try:
        lam, vec = scipy.linalg.eigh(A.matrix.toarray())
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise SpectralError(f"dense eigensolver failed: {exc}") from exc
    if not np.all(np.isfinite(lam)):
        raise SpectralError("eigensolver returned non-finite eigenvalues")
    # fix the sign of each mode so results do not depend on LAPACK internals
    pivot = np.argmax(np.abs(vec), axis=0)
    signs = np.sign(vec[pivot, np.arange(vec.shape[1])])
    vec = vec * signs / np.sqrt(m)
    return SpectralBasis(lam, vec, A)


def coeffs(w: np.ndarray, basis: SpectralBasis) -> np.ndarray:
    return basis.coeffs(w)


def coefficient_norm(c: np.ndarray, lambdas: np.ndarray, kind: str = "L2",
                     theta: float | None = None) -> np.ndarray:
    """Spectral norm of a coefficient vector (or a stack of them on the last axis)."""
    a2 = np.abs(np.asarray(c)) ** 2
    if kind == "L2":
        return np.sqrt(np.sum(a2, axis=-1))
    if kind == "H10":
        weight = lambdas
    elif kind == "Htheta":
        if theta is None or not theta > 1.0:
            raise ParameterError(f"Htheta needs theta > 1, got {theta}")
        if np.any(lambdas < 0):
            raise ParameterError("Htheta is undefined for negative eigenvalues")
        weight = lambdas ** theta
    else:
        raise ParameterError(f"unknown norm kind '{kind}'")
    s = np.sum(weight * a2, axis=-1)
    if np.any(s < 0):
        raise ParameterError(f"{kind} norm is undefined: negative spectral energy")
    return np.sqrt(s)


def snorm(w: np.ndarray, basis: SpectralBasis, kind: str = "L2",
          theta: float | None = None) -> float:
    return float(coefficient_norm(basis.coeffs(w), basis.lambdas, kind, theta))


def project(w: np.ndarray, basis: SpectralBasis, lam: float, side: str) -> np.ndarray:
    """Low (``lambda_j <= lam``) or high (``lambda_j > lam``) spectral part of ``w``.

    The high part is formed as ``w - low`` so the two parts add back to ``w``
    exactly.
    """
    if lam < basis.lambdas[0]:
        raise ParameterError(f"threshold {lam} below lambda_1 = {basis.lambdas[0]}")
    w = np.asarray(w)
    c = basis.coeffs(w)
    low = basis.synthesize(np.where(basis.lambdas <= lam, c, 0.0))
    if side == "low":
        return low
    if side == "high":
        return w - low
    raise ParameterError(f"side must be 'low' or 'high', got '{side}'")


def interpolation_ratio(w: np.ndarray, basis: SpectralBasis, theta: float) -> float:
    """``H10(w) / (Htheta(w)^(1/theta) * L2(w)^(1 - 1/theta))``; never exceeds one."""
    if not theta > 1.0:
        raise ParameterError(f"theta must exceed 1, got {theta}")
    c = basis.coeffs(w)
    l2 = coefficient_norm(c, basis.lambdas, "L2")
    if l2 == 0.0:
        raise ParameterError("interpolation ratio is undefined for w = 0")
    h1 = coefficient_norm(c, basis.lambdas, "H10")
    ht = coefficient_norm(c, basis.lambdas, "Htheta", theta)
    return float(h1 / (ht ** (1.0 / theta) * l2 ** (1.0 - 1.0 / theta)))
