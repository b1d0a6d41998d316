"""Geometric tensors behind the g-pseudo-convexity condition.

For a metric ``g`` with first derivatives ``d_p g_kl`` and a weight ``h``::

    Lambda^m_kl = -sum_p d_p g_kl g_pm + 2 sum_p g_kp d_p g_lm
    Upsilon_kl  = sum_m Lambda^m_kl d_m h
    Theta       = 2 g Hess(h) g + Upsilon

``h`` is pseudo-convex with parameter ``kappa > 0`` when the smallest
eigenvalue of ``Theta`` is at least ``kappa`` everywhere and ``|grad h|``
never vanishes.  The observed boundary part is where the conormal derivative
``(g grad psi | nu)`` is strictly positive.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .geometry import Grid, MetricField, WeightFunction


def lambda_field(g: MetricField) -> np.ndarray:
    """Lambda tensor at every node, indexed ``[node, k, l, m]``."""
    G, D = g.entries, g.derivs
    return (-np.einsum("npkl,npm->nklm", D, G)
            + 2.0 * np.einsum("nkp,nplm->nklm", G, D))


def lambda_tensor(g: MetricField, node: int) -> np.ndarray:
    """Lambda tensor ``[k, l, m]`` at a single node."""
    G, D = g.entries[node], g.derivs[node]
    return -np.einsum("pkl,pm->klm", D, G) + 2.0 * np.einsum("kp,plm->klm", G, D)


def upsilon_field(g: MetricField, h: WeightFunction) -> np.ndarray:
    return np.einsum("nklm,nm->nkl", lambda_field(g), h.grad)


def theta_tensor(g: MetricField, h: WeightFunction) -> tuple[np.ndarray, float]:
    """Symmetrized Theta at every node and the asymmetry residual before symmetrizing."""
    G = g.entries
    theta = 2.0 * G @ h.hess @ G + upsilon_field(g, h)
    asym = float(np.max(np.abs(theta - theta.transpose(0, 2, 1)), initial=0.0))
    return 0.5 * (theta + theta.transpose(0, 2, 1)), asym


def sym_min_eig(mats: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of each symmetric 1x1 or 2x2 matrix, in closed form."""
    d = mats.shape[-1]
    if d == 1:
        return mats[..., 0, 0].copy()
    if d == 2:
        a, b, c = mats[..., 0, 0], mats[..., 0, 1], mats[..., 1, 1]
        return 0.5 * (a + c) - np.hypot(0.5 * (a - c), b)
    return np.linalg.eigvalsh(mats)[..., 0]


def conormal_derivative(g: MetricField, grad: np.ndarray, grid: Grid) -> np.ndarray:
    """``(g grad f | nu)`` at every boundary facet, from nodal gradients."""
    G = g.entries[grid.facet_node]
    return np.einsum("eij,ej,ei->e", G, grad[grid.facet_node], grid.normal)


@dataclass(frozen=True, eq=False)
class PseudoconvexReport:
    theta: np.ndarray          # (N, d, d)
    lambda_min: np.ndarray     # (N,) smallest eigenvalue of Theta
    grad_norm: np.ndarray      # (N,)
    kappa: float
    m_h: float
    conormal: np.ndarray       # (E,) per boundary facet
    gamma_mask: np.ndarray     # (E,) conormal > 0
    asymmetry: float

    @property
    def is_pseudoconvex(self) -> bool:
        return self.kappa > 0.0 and self.m_h > 0.0

    def summary(self) -> dict:
        return {
            "kappa": self.kappa,
            "m_h": self.m_h,
            "is_pseudoconvex": self.is_pseudoconvex,
            "theta_asymmetry": self.asymmetry,
            "gamma_facets": int(self.gamma_mask.sum()),
            "boundary_facets": int(self.gamma_mask.size),
        }

    def write_csv(self, path, grid: Grid) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "facet", "lambda_min_theta", "grad_norm", "conormal"])
            for i in grid.interior_ids:
                w.writerow([int(i), "", repr(float(self.lambda_min[i])),
                            repr(float(self.grad_norm[i])), ""])
            for e, i in enumerate(grid.facet_node):
                w.writerow([int(i), e, repr(float(self.lambda_min[i])),
                            repr(float(self.grad_norm[i])), repr(float(self.conormal[e]))])


def check_pseudoconvex(g: MetricField, h: WeightFunction, grid: Grid) -> PseudoconvexReport:
    """Evaluate kappa, m_h and the observed boundary part for the weight ``h``.

    kappa is reported even when negative; a weight failing the condition is a
    valid result, not an error.  Nodes with vanishing conormal derivative are
    left out of the observed part (strict inequality, no tolerance).
    """
    theta, asym = theta_tensor(g, h)
    lam = sym_min_eig(theta)
    gnorm = np.linalg.norm(h.grad, axis=1)
    conormal = conormal_derivative(g, h.grad, grid)
    return PseudoconvexReport(
        theta=theta,
        lambda_min=lam,
        grad_norm=gnorm,
        kappa=float(lam.min()),
        m_h=float(gnorm.min()),
        conormal=conormal,
        gamma_mask=conormal > 0.0,
        asymmetry=asym,
    )
