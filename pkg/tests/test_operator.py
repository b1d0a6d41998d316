import math

import numpy as np
import pytest
import scipy.sparse as sps
import scipy.sparse.linalg as spla
import sympy as sp
from hypothesis import given, strategies as st

from qucont.errors import AssemblyError
from qucont.geometry import build_grid, sample_metric
from qucont.operator import (apply, assemble, discrete_gradient_norm_sq, flux_energy,
                             stiffness_matrix)


def test_1d_stencil():
    g = build_grid(1, [[0, 1]], [6])
    A = assemble(sample_metric("identity", g), g).matrix.toarray()
    h2 = g.h[0] ** 2
    assert np.allclose(np.diag(A) * h2, 2.0)
    assert np.allclose(np.diag(A, 1) * h2, -1.0)
    assert np.allclose(np.diag(A, -1) * h2, -1.0)


def test_1d_eigenvalues_closed_form():
    # discrete Dirichlet Laplacian: 4/h^2 sin^2(j h / 2)
    g = build_grid(1, [[0, math.pi]], [41])
    A = assemble(sample_metric("identity", g), g).matrix.toarray()
    h = g.h[0]
    exact = 4 / h**2 * np.sin(np.arange(1, 40) * h / 2) ** 2
    assert np.max(np.abs(np.linalg.eigvalsh(A) - exact) / exact) <= 1e-12


def test_symmetric_positive(grid2d, metric2d):
    A = assemble(metric2d, grid2d)
    M = A.matrix
    assert abs(M - M.T).max() == 0.0
    lo = spla.eigsh(M, k=1, sigma=0, which="LM")[0][0]
    assert lo > 0


@given(seed=st.integers(0, 2**32 - 1))
def test_coercivity_and_flux_route(seed, grid2d, metric2d):
    rng = np.random.default_rng(seed)
    A = assemble(metric2d, grid2d)
    u = rng.standard_normal(A.size)
    form = float(A.gradient_energy(u))
    assert abs(flux_energy(grid2d, metric2d, u) - form) <= 1e-12 * max(1.0, form)
    assert form >= discrete_gradient_norm_sq(grid2d, u) / metric2d.varkappa * (1 - 1e-12)


def test_potential_shift(grid2d, metric2d):
    q = np.linspace(-1, 0, grid2d.num_nodes)
    A0, Aq = assemble(metric2d, grid2d), assemble(metric2d, grid2d, q)
    assert Aq.kind == "shifted-by-q" and A0.kind == "pure"
    assert abs((Aq.matrix - A0.matrix) + sps.diags(q[grid2d.interior_ids])).max() <= 1e-12
    u = np.ones(A0.size)
    assert np.allclose(apply(Aq, u), A0.apply(u) - q[grid2d.interior_ids])
    with pytest.raises(AssemblyError):
        assemble(metric2d, grid2d, q[:-1])


def test_metric_grid_mismatch(grid2d):
    other = build_grid(2, [[0, 1], [0, 1]], [5, 5])
    with pytest.raises(AssemblyError):
        stiffness_matrix(grid2d, sample_metric("identity", other))


def _consistency_error(n):
    x, y = sp.symbols("x y")
    g11, g12, g22 = 1.2 + 0.2 * sp.sin(x), 0.05 + 0.02 * x - 0.01 * y, 1.0 + 0.3 * sp.cos(y)
    u = sp.sin(x) * sp.sin(2 * y)
    fx = g11 * sp.diff(u, x) + g12 * sp.diff(u, y)
    fy = g12 * sp.diff(u, x) + g22 * sp.diff(u, y)
    f = sp.lambdify((x, y), -(sp.diff(fx, x) + sp.diff(fy, y)))
    uf = sp.lambdify((x, y), u)
    grid = build_grid(2, [[0, math.pi], [0, math.pi]], [n, n])
    spec = {"kind": "full", "entries": [
        [{"form": "sin", "params": [1.2, 0.2, 1.0, 0]}, {"form": "affine", "params": [0.05, 0.02, -0.01]}],
        [0.0, {"form": "cos", "params": [1.0, 0.3, 1.0, 1]}]]}
    A = assemble(sample_metric(spec, grid), grid)
    X = grid.coords[grid.interior_ids]
    r = A.apply(uf(X[:, 0], X[:, 1])) - f(X[:, 0], X[:, 1])
    return np.max(np.abs(r))


def test_second_order_consistency():
    e = [_consistency_error(n) for n in (17, 33, 65)]
    orders = np.log2(np.array(e[:-1]) / np.array(e[1:]))
    assert np.all((orders > 1.8) & (orders < 2.2)), orders


def test_coo_dump(tmp_path):
    g = build_grid(1, [[0, 1]], [5])
    A = assemble(sample_metric("identity", g), g)
    A.write_coo_csv(tmp_path / "a.csv")
    assert len((tmp_path / "a.csv").read_text().splitlines()) == 1 + A.matrix.nnz
