import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qucont.errors import ConfigurationError, MethodError, ParameterError, RegionError
from qucont.evolution import (boundary_flux, heat_propagate, region_norm, schrodinger_propagate,
                              trapezoid_weights, wave_propagate)
from qucont.geometry import build_grid, build_region, sample_metric
from qucont.operator import assemble
from qucont.spectral import eigendecompose

from conftest import random_unit


def test_heat_single_mode_decays_exactly(basis1d):
    phi = basis1d.mode(2)
    tr = heat_propagate(basis1d, phi, 0.5, 10)
    expected = np.exp(-basis1d.lambdas[1] * tr.times)[:, None] * phi
    assert np.max(np.abs(tr.states - expected)) <= 1e-12


def test_crank_nicolson_heat_second_order(basis1d):
    u0 = random_unit(np.random.default_rng(0), basis1d, 5)
    ref = heat_propagate(basis1d, u0, 0.2, 1).states[-1]
    err = [np.max(np.abs(heat_propagate(basis1d, u0, 0.2, M, "stepper").states[-1] - ref))
           for M in (20, 40, 80)]
    orders = np.log2(np.array(err[:-1]) / np.array(err[1:]))
    assert np.all((orders > 1.8) & (orders < 2.2))


@pytest.mark.parametrize("method,tol", [("spectral", 1e-12), ("stepper", 1e-11)])
def test_schrodinger_unitary(method, tol, basis1d, basis1d_q):
    for B in (basis1d, basis1d_q):
        u0 = random_unit(np.random.default_rng(1), B, 10, complex_=True)
        l2 = schrodinger_propagate(B, u0, 1.0, 1000, method).l2_norms()
        assert np.max(np.abs(l2 - l2[0])) / l2[0] <= tol


def test_schrodinger_phase(basis1d):
    tr = schrodinger_propagate(basis1d, basis1d.mode(1), 0.3, 3)
    c = basis1d.coeffs(tr.states[-1])[0]
    assert abs(c - np.exp(-1j * basis1d.lambdas[0] * 0.3)) <= 1e-12


def test_wave_single_mode_cosine(basis1d):
    lam = basis1d.lambdas[0]
    tr = wave_propagate(basis1d, basis1d.mode(1), np.zeros(basis1d.op.size), 2.0, 50)
    c = basis1d.coeffs(tr.states)[:, 0]
    assert np.max(np.abs(c - np.cos(np.sqrt(lam) * tr.times))) <= 1e-12


def test_midpoint_wave_converges(basis1d):
    rng = np.random.default_rng(2)
    u0, u1 = random_unit(rng, basis1d, 5), random_unit(rng, basis1d, 5)
    ref = wave_propagate(basis1d, u0, u1, 1.0, 1).states[-1]
    err = [np.max(np.abs(wave_propagate(basis1d, u0, u1, 1.0, M, method="stepper").states[-1] - ref))
           for M in (50, 100, 200)]
    orders = np.log2(np.array(err[:-1]) / np.array(err[1:]))
    assert np.all((orders > 1.8) & (orders < 2.2))


def test_method_errors(basis1d):
    u = basis1d.mode(1)
    with pytest.raises(MethodError):
        wave_propagate(basis1d, u, u, 1.0, 10, p=np.full(basis1d.op.size, -0.5))
    with pytest.raises(MethodError):
        heat_propagate(basis1d, u, 1.0, 10, "euler")
    with pytest.raises(ConfigurationError):
        heat_propagate(basis1d, u, 0.0, 10)
    with pytest.raises(ConfigurationError):
        heat_propagate(basis1d, u, 1.0, 0)
    with pytest.raises(ParameterError):
        heat_propagate(basis1d, u[:-1], 1.0, 10)


def test_first_mode_flux(basis1d):
    # phi_1 = sqrt(2/pi) sin x, so the outward derivative is -sqrt(2/pi) at both ends
    tr = heat_propagate(basis1d, basis1d.mode(1), 0.1, 1)
    flux = boundary_flux(tr)
    assert np.allclose(flux.conormal[0], -math.sqrt(2 / math.pi), rtol=1e-3)
    assert np.array_equal(flux.conormal, flux.euclidean)


def test_region_norm_constant_trace(basis1d, grid1d):
    tr = heat_propagate(basis1d, basis1d.mode(1), 0.1, 4)
    flux = boundary_flux(tr)
    right = build_region("lateral", {"faces": [[0, 1]]}, grid1d)
    # trapezoid of exp(-2 lam t) f^2 on the right end
    f2 = flux.conormal[:, 1] ** 2
    expected = math.sqrt(np.sum(trapezoid_weights(tr.times) * f2))
    assert abs(region_norm(flux, right) - expected) <= 1e-14
    with pytest.raises(RegionError):
        region_norm(tr, right)
    inner = build_region("interior", {"box": [[0, 1]]}, grid1d)
    with pytest.raises(RegionError):
        region_norm(flux, inner)
    with pytest.raises(ParameterError):
        region_norm(flux, right, "Linf")


@given(seed=st.integers(0, 2**32 - 1))
def test_identity_metric_flux_paths_agree(seed, basis2d):
    g = build_grid(2, [[0, 1], [0, 1]], [8, 8])
    B = eigendecompose(assemble(sample_metric("identity", g), g))
    u0 = random_unit(np.random.default_rng(seed), B, 6)
    flux = boundary_flux(heat_propagate(B, u0, 0.05, 5))
    region = build_region("lateral", {"select": "all"}, g)
    a, b = region_norm(flux, region, flux="conormal"), region_norm(flux, region, flux="euclidean")
    assert abs(a - b) <= 1e-12 * max(1.0, a)


def test_flux_needs_four_nodes():
    g = build_grid(1, [[0, 1]], [3])
    B = eigendecompose(assemble(sample_metric("identity", g), g))
    with pytest.raises(ConfigurationError):
        boundary_flux(heat_propagate(B, B.mode(1), 0.1, 1))


@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=20))
def test_trapezoid_weights_sum(dts):
    t = np.concatenate([[0.0], np.cumsum(dts)])
    assert math.isclose(trapezoid_weights(t).sum(), t[-1], rel_tol=1e-12)


def test_csv_dumps(tmp_path, basis1d):
    tr = schrodinger_propagate(basis1d, basis1d.mode(1), 0.1, 2)
    tr.write_csv(tmp_path / "t.csv")
    boundary_flux(tr).write_csv(tmp_path / "f.csv")
    assert (tmp_path / "t.csv").read_text().startswith("t,node,re,im")
    assert len((tmp_path / "f.csv").read_text().splitlines()) == 1 + 3 * 2
