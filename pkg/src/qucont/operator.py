"""Symmetric finite-difference discretization of ``-div(g grad .)`` with Dirichlet data.

The operator is assembled from a discrete energy rather than from a stencil.
Each grid cell contributes, for each of its corners ``c``::

    (1/2^d) * |cell| * (grad_c u)^T g(c) (grad_c u)

where ``grad_c u`` uses the one-sided differences along the cell edges that
meet at ``c``.  Summing over corners reproduces the usual 3/5-point fluxes
with face coefficients equal to the average of the two adjacent nodes, and the
mixed ``g_12`` terms become the symmetric cell-centered cross stencil.  The
matrix is therefore exactly symmetric, and since every corner term is bounded
below by ``varkappa^-1 |grad_c u|^2`` it is positive definite.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError
from .geometry import Grid, MetricField


def _difference_rows(grid: Grid):
    """Sparse one-sided differences along every cell edge.

    Returns the list of corners, each as ``(node_ids, [D_axis0, D_axis1, ...])``
    with one row per cell, together with the cell measure.
    """
    n, h, N = grid.n, grid.h, grid.num_nodes
    idx = np.arange(N).reshape(n)
    cell_measure = float(np.prod(h))

    if grid.dim == 1:
        lo, hi = idx[:-1], idx[1:]
        rows = np.arange(lo.size)
        D = sp.csr_matrix(
            (np.r_[-np.ones(lo.size), np.ones(lo.size)] / h[0],
             (np.r_[rows, rows], np.r_[lo, hi])),
            shape=(lo.size, N),
        )
        return [(lo, [D]), (hi, [D])], cell_measure

    n00 = idx[:-1, :-1].ravel()
    n10 = idx[1:, :-1].ravel()
    n01 = idx[:-1, 1:].ravel()
    n11 = idx[1:, 1:].ravel()
    C = n00.size
    rows = np.arange(C)

    def diff(a, b, step):
        return sp.csr_matrix(
            (np.r_[-np.ones(C), np.ones(C)] / step, (np.r_[rows, rows], np.r_[a, b])),
            shape=(C, N),
        )

    dx_bottom, dx_top = diff(n00, n10, h[0]), diff(n01, n11, h[0])
    dy_left, dy_right = diff(n00, n01, h[1]), diff(n10, n11, h[1])
    corners = [
        (n00, [dx_bottom, dy_left]),
        (n10, [dx_bottom, dy_right]),
        (n01, [dx_top, dy_left]),
        (n11, [dx_top, dy_right]),
    ]
    return corners, cell_measure


def stiffness_matrix(grid: Grid, g: MetricField) -> sp.csr_matrix:
    """Full (all-node) stiffness matrix of the discrete energy."""
    if g.entries.shape != (grid.num_nodes, grid.dim, grid.dim):
        raise AssemblyError(
            f"metric sampled on {g.entries.shape[0]} nodes of dimension "
            f"{g.entries.shape[1]}, grid has {grid.num_nodes} nodes of dimension {grid.dim}"
        )
    corners, measure = _difference_rows(grid)
    wcorner = measure / len(corners)
    K = sp.csr_matrix((grid.num_nodes, grid.num_nodes))
    for nodes, D in corners:
        G = g.entries[nodes]
        for k in range(grid.dim):
            for l in range(grid.dim):
                coef = G[:, k, l]
                if not np.any(coef):
                    continue
                K = K + D[k].T @ sp.diags(wcorner * coef) @ D[l]
    K = 0.5 * (K + K.T)   # removes rounding-level asymmetry from the k/l sums
    return K.tocsr()


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Discrete ``-div(g grad .) - q`` acting on interior nodes.

    ``matrix`` is symmetric, ``stiffness`` is the pure part (no potential) and
    ``mass`` holds the interior quadrature weights (uniform on these grids).
    """

    matrix: sp.csr_matrix
    stiffness: sp.csr_matrix
    mass: np.ndarray
    potential: np.ndarray | None
    kind: str
    grid: Grid
    metric: MetricField

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def _check(self, w):
        w = np.asarray(w)
        if w.shape[-1] != self.size:
            raise AssemblyError(f"field has length {w.shape[-1]}, operator size {self.size}")
        return w

    def apply(self, w: np.ndarray) -> np.ndarray:
        """``A w`` for interior vectors; accepts a stack with nodes on the last axis."""
        w = self._check(w)
        return (self.matrix @ w.T).T

    def apply_pure(self, w: np.ndarray) -> np.ndarray:
        w = self._check(w)
        return (self.stiffness @ w.T).T

    def inner(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Mass inner product, conjugate-linear in the first argument."""
        return np.sum(np.conj(u) * v * self.mass, axis=-1)

    def gradient_energy(self, u: np.ndarray) -> np.ndarray:
        """``||sqrt(g) grad u||^2`` as the pure quadratic form ``<A u, u>``."""
        return np.real(self.inner(u, self.apply_pure(u)))

    def potential_energy(self, u: np.ndarray, shift: float = 0.0) -> np.ndarray:
        """``||sqrt(shift - q) u||^2`` (zero potential if none is folded in)."""
        q = np.zeros(self.size) if self.potential is None else self.potential
        return np.sum((shift - q) * np.abs(u) ** 2 * self.mass, axis=-1)

    def write_coo_csv(self, path) -> None:
        coo = self.matrix.tocoo()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row", "col", "value"])
            for r, c, v in zip(coo.row, coo.col, coo.data):
                w.writerow([int(r), int(c), repr(float(v))])


def assemble(g: MetricField, grid: Grid, q: np.ndarray | None = None) -> DiscreteOperator:
    """Assemble the Dirichlet operator; ``q`` (nodal, all nodes) is subtracted on the diagonal."""
    K = stiffness_matrix(grid, g)
    ii = grid.interior_ids
    mass = grid.mass
    if not np.allclose(mass, mass[0], rtol=1e-14, atol=0.0):
        raise AssemblyError("interior mass must be uniform")
    pure = (K[ii][:, ii] / mass[0]).tocsr()
    pure = (0.5 * (pure + pure.T)).tocsr()
    if q is None:
        return DiscreteOperator(pure, pure, mass, None, "pure", grid, g)
    q = np.asarray(q, dtype=float)
    if q.shape != (grid.num_nodes,):
        raise AssemblyError(f"potential has shape {q.shape}, expected ({grid.num_nodes},)")
    q_int = q[ii]
    shifted = (pure - sp.diags(q_int)).tocsr()
    return DiscreteOperator(shifted, pure, mass, q_int, "shifted-by-q", grid, g)


def apply(A: DiscreteOperator, w: np.ndarray) -> np.ndarray:
    return A.apply(w)


def flux_energy(grid: Grid, g: MetricField, u_int: np.ndarray) -> float:
    """Corner-gradient energy summed directly over cells, without any matrix.

    Independent route to ``<A u, u>`` for the pure operator.
    """
    u = grid.embed(np.asarray(u_int, dtype=float)).reshape(grid.n)
    G = g.entries.reshape(grid.n + (grid.dim, grid.dim))
    measure = float(np.prod(grid.h))
    if grid.dim == 1:
        du = np.diff(u) / grid.h[0]
        gface = 0.5 * (G[:-1, 0, 0] + G[1:, 0, 0])
        return float(measure * np.sum(gface * du**2))
    hx, hy = grid.h
    dxb = (u[1:, :-1] - u[:-1, :-1]) / hx
    dxt = (u[1:, 1:] - u[:-1, 1:]) / hx
    dyl = (u[:-1, 1:] - u[:-1, :-1]) / hy
    dyr = (u[1:, 1:] - u[1:, :-1]) / hy
    total = 0.0
    for gc, dx, dy in (
        (G[:-1, :-1], dxb, dyl),
        (G[1:, :-1], dxb, dyr),
        (G[:-1, 1:], dxt, dyl),
        (G[1:, 1:], dxt, dyr),
    ):
        total += np.sum(gc[..., 0, 0] * dx * dx + 2.0 * gc[..., 0, 1] * dx * dy
                        + gc[..., 1, 1] * dy * dy)
    return float(0.25 * measure * total)


def discrete_gradient_norm_sq(grid: Grid, u_int: np.ndarray) -> float:
    """Sum of squared edge differences times the cell measure (each edge counted once per cell side)."""
    u = grid.embed(np.asarray(u_int, dtype=float)).reshape(grid.n)
    measure = float(np.prod(grid.h))
    if grid.dim == 1:
        return float(measure * np.sum((np.diff(u) / grid.h[0]) ** 2))
    hx, hy = grid.h
    dx = np.diff(u, axis=0) / hx    # x-edges, each shared by up to two cells
    dy = np.diff(u, axis=1) / hy
    # corner averaging gives each interior edge weight 1/2 from each of its two cells
    wx = np.ones(dx.shape)
    wx[:, [0, -1]] = 0.5
    wy = np.ones(dy.shape)
    wy[[0, -1], :] = 0.5
    return float(measure * (np.sum(wx * dx**2) + np.sum(wy * dy**2)))
