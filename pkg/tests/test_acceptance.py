"""Acceptance gate: every criterion at its stated tolerance and runtime budget.

Each test prints one PASS/FAIL line in the terminal summary.
"""

import json
import math
import subprocess
import sys
import time

import jsonschema
import numpy as np
import pytest

from qucont.config import report_schema
from qucont.continuation import (estimate_observability, spectral_transfer, splitting_check,
                                 verify_mt1, verify_mt2, verify_mt3)
from qucont.energy import heat_audit, schrodinger_audit, wave_audit, wave_energy
from qucont.evolution import heat_propagate, schrodinger_propagate, wave_propagate
from qucont.geometry import build_grid, build_region, sample_metric, sample_weight
from qucont.operator import assemble
from qucont.pseudoconvex import check_pseudoconvex, lambda_field
from qucont.spectral import eigendecompose, interpolation_ratio

from conftest import random_unit

pytestmark = pytest.mark.acceptance
T = 0.1


def _basis(q=None, n=101):
    g = build_grid(1, [[0.0, math.pi]], [n])
    qq = None if q is None else np.full(g.num_nodes, float(q))
    return eigendecompose(assemble(sample_metric("identity", g), g, qq))


def test_01_schrodinger_l2_conservation(criterion):
    t0 = time.perf_counter()
    worst = {"spectral": 0.0, "stepper": 0.0}
    for q in (0.0, -2.0):
        B = _basis(q)
        u0 = random_unit(np.random.default_rng(1), B, 20, complex_=True)
        for method in worst:
            l2 = schrodinger_propagate(B, u0, 1.0, 1000, method).l2_norms()
            worst[method] = max(worst[method], float(np.max(np.abs(l2 - l2[0])) / l2[0]))
    dt = time.perf_counter() - t0
    ok = worst["spectral"] <= 1e-12 and worst["stepper"] <= 1e-11 and dt < 5
    criterion(1, "Schroedinger L2 conservation", ok,
              f"spectral {worst['spectral']:.2e} <= 1e-12, stepper {worst['stepper']:.2e} <= 1e-11, {dt:.2f} s < 5 s")
    assert ok


def test_02_schrodinger_graded_energy(criterion):
    t0 = time.perf_counter()
    worst = 0.0
    rng = np.random.default_rng(2)
    for q in (0.0, -2.0):
        B = _basis(q)
        for _ in range(50):
            u0 = random_unit(rng, B, 20, complex_=True)
            rep = schrodinger_audit(schrodinger_propagate(B, u0, 1.0, 200))
            worst = max(worst, float(np.max(rep.series["energy_residual"])))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-10 and dt < 10
    criterion(2, "Schroedinger graded energy", ok,
              f"100 data, max drift {worst:.2e} <= 1e-10, {dt:.2f} s < 10 s")
    assert ok


def test_03_heat_energy(criterion):
    t0 = time.perf_counter()
    B = _basis()
    lam = B.lambdas[0]
    tr = heat_propagate(B, B.mode(1), T, 1000)
    g = B.op.gradient_energy(tr.states)
    quad = float(np.sum(0.5 * (g[1:] + g[:-1]) * np.diff(tr.times)))
    balance = abs(quad - 0.5 * (1 - math.exp(-2 * lam * T)))
    margin = math.inf
    rng = np.random.default_rng(3)
    for q in (0.0, -1.0):
        Bq = _basis(q)
        for _ in range(50):
            rep = heat_audit(heat_propagate(Bq, random_unit(rng, Bq, 30), T, 200))
            for c in rep.checks:
                if c.tag in ("(e4)", "(e5)", "(e7)") and not c.informational:
                    margin = min(margin, c.margin)
    dt = time.perf_counter() - t0
    ok = balance <= 1e-8 and margin >= -1e-12 and dt < 20
    criterion(3, "Heat energy balance and dissipation bounds", ok,
              f"balance residual {balance:.2e} <= 1e-8, min margin {margin:.2e} >= -1e-12, {dt:.2f} s < 20 s")
    assert ok


def test_04_spectral_transfer(criterion):
    t0 = time.perf_counter()
    B = _basis()
    worst, retained, excluded_ok = 0.0, 0, True
    for horizon in (T, 1.0):
        keep = np.flatnonzero(B.lambdas * horizon <= 30)
        retained += keep.size
        for j in keep:
            r = spectral_transfer(heat_propagate(B, B.modes[:, j], horizon, 1).states[-1], B, horizon)
            worst = max(worst, abs(r.coeffs[j] - 1.0))
        excluded_ok &= np.array_equal(r.excluded, np.flatnonzero(B.lambdas * horizon > 30) + 1)
    dt = time.perf_counter() - t0
    ok = worst <= 1e-9 and excluded_ok and dt < 5
    criterion(4, "Spectral transfer round trip", ok,
              f"{retained} retained modes, max relative error {worst:.2e} <= 1e-9, guard exact: {excluded_ok}, {dt:.2f} s < 5 s")
    assert ok


def test_05_splitting(criterion):
    t0 = time.perf_counter()
    B = _basis()
    lams = [B.lambdas[0], 2 * B.lambdas[0], 5 * B.lambdas[0], B.lambdas[24]]
    rng = np.random.default_rng(5)
    margin = math.inf
    for _ in range(100):
        u0 = random_unit(rng, B, 50)
        uT = heat_propagate(B, u0, T, 1).states[-1]
        for lam in lams:
            margin = min(margin, splitting_check(u0, uT, B, lam, T).margin)
    u0 = B.mode(1)
    r = splitting_check(u0, heat_propagate(B, u0, T, 1).states[-1], B, B.lambdas[0], T)
    single = max(abs(r.lhs - 1), abs(r.rhs - 2))
    dt = time.perf_counter() - t0
    ok = margin >= -1e-12 and single <= 1e-12 and dt < 10
    criterion(5, "Splitting bound", ok,
              f"min margin {margin:.3e} >= -1e-12 over 400 cases, single mode error {single:.1e} <= 1e-12, {dt:.2f} s < 10 s")
    assert ok


def test_06_interpolation(criterion):
    t0 = time.perf_counter()
    B = _basis()
    rng = np.random.default_rng(6)
    top = 0.0
    for _ in range(200):
        w = random_unit(rng, B, int(rng.integers(2, B.size)))
        top = max(top, interpolation_ratio(w, B, float(rng.uniform(1.01, 6.0))))
    eq = max(abs(interpolation_ratio(B.mode(j), B, th) - 1)
             for j in (1, 2, 10, B.size) for th in (1.5, 2.0, 3.0, 5.0))
    dt = time.perf_counter() - t0
    ok = top <= 1 + 1e-10 and eq <= 1e-12 and dt < 5
    criterion(6, "Interpolation inequality", ok,
              f"max ratio {top:.12f} <= 1 + 1e-10, single-mode equality {eq:.1e} <= 1e-12, {dt:.2f} s < 5 s")
    assert ok


def test_07_pseudoconvexity(criterion):
    t0 = time.perf_counter()
    grid = build_grid(2, [[0, 1], [0, 1]], [21, 21])
    g = sample_metric("identity", grid)
    r = check_pseudoconvex(g, sample_weight({"form": "sqdist", "params": [-1, -1]}, grid), grid)
    lam0 = float(np.max(np.abs(lambda_field(sample_metric({"kind": "constant", "matrix": [[2, 0.5], [0.5, 1]]}, grid)))))
    x = grid.coords[grid.facet_node]
    analytic = np.einsum("ei,ei->e", x - np.array([-1.0, -1.0]), grid.normal) > 0
    mask_ok = np.array_equal(r.gamma_mask, analytic)
    dt = time.perf_counter() - t0
    ok = (abs(r.kappa - 4) <= 1e-10 and abs(r.m_h - 2 * math.sqrt(2)) <= 1e-10
          and lam0 <= 1e-12 and mask_ok and dt < 2)
    criterion(7, "Pseudo-convexity", ok,
              f"kappa {r.kappa!r}, m_psi {r.m_h!r}, max|Lambda| {lam0:.1e}, mask exact: {mask_ok}, {dt:.2f} s < 2 s")
    assert ok


def test_08_wave_energy(criterion):
    t0 = time.perf_counter()
    B = _basis()
    rng = np.random.default_rng(8)
    u0, u1 = random_unit(rng, B, 10), random_unit(rng, B, 10)
    E = wave_energy(wave_propagate(B, u0, u1, 2.0, 1000))
    drift = float(np.max(np.abs(E - E[0])) / E[0])
    p = np.full(B.op.size, -0.5)
    viol, res = 0.0, []
    for M in (200, 400, 800):
        tr = wave_propagate(B, u0, u1, 1.0, M, p=p, method="stepper")
        E = wave_energy(tr)
        viol = max(viol, float(np.max(np.diff(E)) / E[0]))
        res.append(wave_audit(tr).check("wave dissipation identity").residual)
    orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    dt = time.perf_counter() - t0
    ok = drift <= 1e-10 and viol <= 1e-10 and np.all((orders >= 1.8) & (orders <= 2.2)) and dt < 20
    criterion(8, "Wave energy", ok,
              f"drift {drift:.1e} <= 1e-10, worst step increase {viol:.1e} <= 1e-10, "
              f"dissipation orders {np.round(orders, 3).tolist()} in [1.8, 2.2], {dt:.2f} s < 20 s")
    assert ok


def test_09_operator_spectrum(criterion):
    t0 = time.perf_counter()
    j = np.arange(1, 6)
    e1 = float(np.max(np.abs(_basis(n=200).lambdas[:5] - j**2) / j**2))
    g = build_grid(2, [[0, math.pi], [0, math.pi]], [64, 64])
    lam = eigendecompose(assemble(sample_metric("identity", g), g)).lambdas[:5]
    ref = np.array([2, 5, 5, 8, 10.0])
    e2 = float(np.max(np.abs(lam - ref) / ref))
    dt = time.perf_counter() - t0
    ok = e1 <= 1e-3 and e2 <= 2e-3 and dt < 60
    criterion(9, "Operator spectrum", ok, f"1D {e1:.2e} <= 1e-3, 2D {e2:.2e} <= 2e-3, {dt:.1f} s < 60 s")
    assert ok


def test_10_observability_scans(criterion):
    t0 = time.perf_counter()
    B = _basis()
    grid = B.op.grid
    pc = check_pseudoconvex(sample_metric("identity", grid),
                            sample_weight({"form": "sqdist", "params": [-1.0]}, grid), grid)
    gamma = build_region("lateral", {"mask": pc.gamma_mask, "name": "gamma"}, grid)
    full = build_region("lateral", {"select": "all", "name": "full"}, grid)
    M, S = 200, 64
    finite, mono, margins = True, -math.inf, {}
    pools = {}
    for eq in ("heat", "schrodinger", "wave"):
        a = estimate_observability(eq, B, gamma, S, 7, 10, T, M)
        b = estimate_observability(eq, B, full, S, 7, 10, T, M)
        finite &= bool(np.all(np.isfinite(a.ratios)) and np.all(a.ratios > 0))
        mono = max(mono, float(np.max(b.ratios - a.ratios)))
        pools[eq] = a
    for key, region in (("R1(2)", build_region("spacetime", {"steps": M, "fraction": 0.1, "seed": 7}, grid)),
                        ("R1(3)", build_region("interior", {"box": [[0, 1]]}, grid))):
        e = estimate_observability("heat", B, region, S, 7, 10, T, M)
        finite &= e.statement == key and bool(np.all(np.isfinite(e.ratios)) and np.all(e.ratios > 0))

    e = pools["heat"]
    margins["MT1"] = min(verify_mt1(e.initial_data(i, B), B, gamma, lam, 2.0, e.c_emp, T, M)
                         .check("(e1.1) with c_emp").margin
                         for i in range(S) for lam in (B.lambdas[0], 5 * B.lambdas[0]))
    e = pools["schrodinger"]
    margins["MT2"] = min(verify_mt2(e.initial_data(i, B), B, gamma, e.c_emp, T, M)
                         .check("(e2) with c_emp").margin for i in range(S))
    e = pools["wave"]
    margins["MT3"] = min(verify_mt3(*e.initial_data(i, B), B, gamma, e.c_emp, T, M)
                         .check("(e3) with c_emp").margin for i in range(S))
    dt = time.perf_counter() - t0
    ok = finite and mono <= 1e-12 and min(margins.values()) >= 0 and dt < 180
    criterion(10, "Observability scans and harnesses", ok,
              f"finite positive: {finite}, region monotonicity {mono:.2e} <= 1e-12, "
              f"min margins {', '.join(f'{k} {v:.2e}' for k, v in margins.items())} >= 0, {dt:.1f} s < 180 s")
    assert ok


def _cli(*args):
    return subprocess.run([sys.executable, "-m", "qucont", *args], capture_output=True, text=True)


def test_11_cli(criterion, tmp_path):
    t0 = time.perf_counter()
    a, b = tmp_path / "a", tmp_path / "b"
    r1 = _cli("full-suite", "--out", str(a), "-q")
    elapsed = time.perf_counter() - t0
    r2 = _cli("full-suite", "--out", str(b), "-q")
    reports = [json.loads((d / "report.json").read_text()) for d in (a, b)]
    schema_ok = True
    try:
        jsonschema.validate(reports[0], report_schema())
    except jsonschema.ValidationError:
        schema_ok = False
    for r in reports:
        r["meta"].pop("timestamps")
    same = reports[0] == reports[1]
    bad = tmp_path / "bad.json"
    bad.write_text('{"grid": {"n": [101], "extents": [[0, "pi"]]}, "time": {"horizon": -1}}')
    r3 = _cli("full-suite", "--config", str(bad), "--out", str(tmp_path / "c"))
    ok = r1.returncode == 0 and r2.returncode == 0 and schema_ok and same and r3.returncode == 2 and elapsed < 60
    criterion(11, "CLI full-suite", ok,
              f"exit {r1.returncode}, schema valid: {schema_ok}, reproducible: {same}, "
              f"corrupted config exit {r3.returncode}, {elapsed:.1f} s < 60 s")
    assert ok
