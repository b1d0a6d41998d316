"""Energy identities and inequalities along heat, Schroedinger and wave trajectories.

Gradient energies ``||sqrt(g) grad u||^2`` are the pure operator quadratic form
``<A u, u>``, which is exactly what the propagators conserve or dissipate, so
discrepancies measure time integration and rounding only.

Time integrals over ``Q_t`` use the trapezoid rule on stored steps.  For the
inequalities of the heat lemma a spectral trajectory is integrated exactly
instead (mode by mode), because the trapezoid rule overestimates decaying
exponentials and would turn quadrature error into spurious violations.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .errors import ParameterError, PreconditionError
from .evolution import HEAT, SCHRODINGER, SPECTRAL, WAVE, Trajectory
from .report import Check, all_passed, identity, inequality

ROUNDING = 1e-12


@dataclass
class EnergyReport:
    equation: str
    times: np.ndarray
    series: dict = field(default_factory=dict)     # per-step scalars
    checks: list = field(default_factory=list)
    tolerances: dict = field(default_factory=dict)
    quadrature: str = "trapezoid"
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all_passed(self.checks)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def write_csv(self, path) -> None:
        names = list(self.series)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", *names])
            for m, t in enumerate(self.times):
                w.writerow([repr(float(t)), *(repr(float(self.series[k][m])) for k in names)])


def _expect(traj: Trajectory, equation: str):
    if traj.equation != equation:
        raise ParameterError(f"expected a {equation} trajectory, got {traj.equation}")


def exp_integral(mu, t: float) -> np.ndarray:
    """``int_0^t exp(-mu s) ds``, stable as ``mu -> 0``."""
    mu = np.asarray(mu, dtype=float)
    x = mu * t
    small = np.abs(x) < 1e-12
    safe = np.where(small, 1.0, mu)
    return np.where(small, t * (1.0 - 0.5 * x), -np.expm1(-x) / safe)


def _exact_heat_integrals(traj: Trajectory, shift: float) -> dict:
    """Closed-form time integrals over ``(0, T)`` for a spectral heat trajectory.

    Weighted by ``exp(-2 shift s)``; returns the integrals of the gradient
    energy, of ``||d_t u||^2`` and of ``||u||^2`` (the latter two unweighted).
    """
    basis = traj.basis
    (c0,) = traj.spectral_coeffs
    lam = basis.lambdas
    T = traj.horizon
    c2 = np.abs(c0) ** 2
    q = traj.q
    if not np.any(q):
        grad = np.sum(lam * c2 * exp_integral(2.0 * (lam + shift), T))
    else:
        # the pure quadratic form is not diagonal in the shifted eigenbasis
        active = np.flatnonzero(np.abs(c0) > 1e-15 * np.max(np.abs(c0)))
        phi = basis.modes[:, active]
        K = (phi * basis.op.mass[:, None]).T @ basis.op.apply_pure(phi.T).T
        mu = lam[active][:, None] + lam[active][None, :] + 2.0 * shift
        ca = c0[active]
        grad = float(np.real(np.conj(ca) @ (K * exp_integral(mu, T)) @ ca))
    return {
        "grad": float(grad),
        "dudt": float(np.sum(lam**2 * c2 * exp_integral(2.0 * lam, T))),
        "u": float(np.sum(c2 * exp_integral(2.0 * lam, T))),
    }


def heat_audit(traj: Trajectory, quadrature: str = "auto") -> EnergyReport:
    """Verify the heat lemma: balance identity for ``v = exp(-delta t) u``, then (e4), (e5), (e7).

    ``quadrature`` is ``"auto"`` (exact for spectral trajectories, trapezoid
    otherwise), ``"exact"`` or ``"trapezoid"``.
    """
    _expect(traj, HEAT)
    op = traj.basis.op
    t = traj.times
    T = traj.horizon
    dt = traj.dt
    delta = traj.delta
    q = traj.q

    l2 = traj.l2_norms()
    grad = op.gradient_energy(traj.states)
    pot = op.potential_energy(traj.states, delta)
    dudt = np.sum(np.abs(op.apply(traj.states)) ** 2 * op.mass, axis=-1)
    decay = np.exp(-2.0 * delta * t)
    half0 = 0.5 * l2[0] ** 2
    norm0 = half0 or 1.0   # zero data: absolute residual

    # balance identity with trapezoid time quadrature
    integrand = decay * (grad + pot)
    cum = cumulative_trapezoid(integrand, t, initial=0.0)
    balance = np.abs(cum - half0 + 0.5 * decay * l2**2) / norm0

    c0 = traj.basis.coeffs(traj.states[0])
    lam_shift = traj.basis.lambdas + delta
    lam_rms2 = float(np.sum(lam_shift**2 * np.abs(c0) ** 2) / (np.sum(np.abs(c0) ** 2) or 1.0))
    tol_balance = max(1e-10, 2.0 * dt**2 * lam_rms2 / 3.0)

    use_exact = (quadrature == "exact"
                 or (quadrature == "auto" and traj.method == SPECTRAL))
    if use_exact:
        if traj.spectral_coeffs is None:
            raise ParameterError("exact quadrature needs a spectral trajectory")
        ints = _exact_heat_integrals(traj, delta)
        ints_grad_weighted = _exact_heat_integrals(traj, 0.0)["grad"]
        quad_name = "exact"
        tol_ineq = ROUNDING
    else:
        ints = {"dudt": trapezoid(dudt, t), "u": trapezoid(l2**2, t)}
        ints_grad_weighted = trapezoid(grad, t)
        quad_name = "trapezoid"
        tol_ineq = max(ROUNDING, tol_balance)

    growth = np.exp(delta * T)
    scale = max(1.0, l2[0])
    sup_shift = float(np.sqrt(np.max(delta - q))) if q.size else 0.0

    checks = [
        identity("heat balance identity", "L1-balance", balance.max(), tol_balance,
                 note="v = exp(-delta t) u; trapezoid in time; residual relative to ||v(0)||^2/2"),
        inequality("heat gradient bound", "(e4)",
                   np.sqrt(2.0) * np.sqrt(ints_grad_weighted), growth * l2[0],
                   tol_ineq * scale),
        inequality("heat L2 bound", "(e5)", l2.max(), growth * l2[0], tol_ineq * scale),
        inequality("heat time-derivative bound", "(e7)",
                   np.sqrt(ints["dudt"]),
                   growth * (np.sqrt(grad[0]) + sup_shift * l2[0]) + delta * np.sqrt(ints["u"]),
                   tol_ineq * scale,
                   note="last term delta*||u||_{L2(Q)}"),
        inequality("heat time-derivative bound, Omega variant", "(e7)",
                   np.sqrt(ints["dudt"]),
                   growth * (np.sqrt(grad[0]) + sup_shift * l2[0]) + delta * l2[0],
                   tol_ineq * scale, informational=True,
                   note="last term delta*||u(.,0)||_{L2(Omega)}"),
    ]
    if use_exact:
        # independent exactness check of the quadrature-free balance
        exact_bal = abs(ints["grad"] + _exact_potential(traj, delta) - half0
                        + 0.5 * decay[-1] * l2[-1] ** 2) / norm0
        checks.append(identity("heat balance identity, exact in time", "L1-balance",
                               exact_bal, 1e-10))

    series = {
        "l2": l2, "grad_energy": grad, "potential": pot,
        "balance_residual": balance,
        "e5_margin": growth * l2[0] - l2,
    }
    return EnergyReport(HEAT, t, series, checks,
                        {"balance": tol_balance, "inequalities": tol_ineq},
                        quad_name)


def _exact_potential(traj: Trajectory, shift: float) -> float:
    """``int_0^T exp(-2 shift s) <(shift - q) u, u> ds`` in closed form."""
    basis = traj.basis
    (c0,) = traj.spectral_coeffs
    lam = basis.lambdas
    q = traj.q
    if not np.any(q):
        return float(shift * np.sum(np.abs(c0) ** 2 * exp_integral(2.0 * (lam + shift), traj.horizon)))
    active = np.flatnonzero(np.abs(c0) > 1e-15 * np.max(np.abs(c0)))
    phi = basis.modes[:, active]
    W = (phi * (basis.op.mass * (shift - q))[:, None]).T @ phi
    mu = lam[active][:, None] + lam[active][None, :] + 2.0 * shift
    ca = c0[active]
    return float(np.real(np.conj(ca) @ (W * exp_integral(mu, traj.horizon)) @ ca))


def schrodinger_audit(traj: Trajectory) -> EnergyReport:
    """L2 conservation (e9) and graded-energy conservation (e8)/(e.10); needs ``q <= 0``."""
    _expect(traj, SCHRODINGER)
    q = traj.q
    if np.any(q > 0):
        raise PreconditionError("Schroedinger energy identities require q <= 0")
    op = traj.basis.op
    l2 = traj.l2_norms()
    grad = op.gradient_energy(traj.states)
    pot = op.potential_energy(traj.states, 0.0)
    energy = grad + pot
    # zero data: residuals become absolute
    res_l2 = np.abs(l2 - l2[0]) / (l2[0] or 1.0)
    res_e = np.abs(energy - energy[0]) / (energy[0] or 1.0)
    tol_l2 = 1e-12 if traj.method == SPECTRAL else 1e-11
    tol_e = 1e-10
    checks = [
        identity("Schroedinger L2 conservation", "(e9)", res_l2.max(), tol_l2),
        identity("Schroedinger graded energy conservation", "(e8)", res_e.max(), tol_e,
                 note="energy = ||sqrt(g) grad u||^2 + ||sqrt(-q) u||^2, same as (e.10)"),
    ]
    series = {"l2": l2, "grad_energy": grad, "potential": pot, "energy": energy,
              "l2_residual": res_l2, "energy_residual": res_e}
    return EnergyReport(SCHRODINGER, traj.times, series, checks,
                        {"l2": tol_l2, "energy": tol_e})


def schrodinger_energy(traj: Trajectory) -> np.ndarray:
    op = traj.basis.op
    return op.gradient_energy(traj.states) + op.potential_energy(traj.states, 0.0)


def wave_energy(traj: Trajectory) -> np.ndarray:
    """``||u'||^2 + ||sqrt(g) grad u||^2 + ||sqrt(-q) u||^2`` at every stored step."""
    op = traj.basis.op
    kinetic = np.sum(np.abs(traj.velocity) ** 2 * op.mass, axis=-1)
    return kinetic + op.gradient_energy(traj.states) + op.potential_energy(traj.states, 0.0)


def wave_audit(traj: Trajectory, tol: float = 1e-10) -> EnergyReport:
    """Energy monotonicity (e.11) and the dissipation identity ``E(t) - E(0) = 2 int p |u'|^2``.

    Requires ``p <= 0`` and ``q <= 0``.
    """
    _expect(traj, WAVE)
    q = traj.q
    p = traj.p if traj.p is not None else np.zeros_like(q)
    if np.any(q > 0) or np.any(p > 0):
        raise PreconditionError("wave energy estimate requires p <= 0 and q <= 0")
    op = traj.basis.op
    kinetic = np.sum(np.abs(traj.velocity) ** 2 * op.mass, axis=-1)
    grad = op.gradient_energy(traj.states)
    pot = op.potential_energy(traj.states, 0.0)
    energy = kinetic + grad + pot
    e0 = energy[0]
    if e0 == 0.0:
        e0 = 1.0   # zero data: all residuals are absolute
    damping = np.sum(p * np.abs(traj.velocity) ** 2 * op.mass, axis=-1)
    dissipated = 2.0 * cumulative_trapezoid(damping, traj.times, initial=0.0)
    dissipation_res = np.abs(energy - energy[0] - dissipated) / e0
    increments = np.diff(energy) / e0
    drift = np.abs(energy - energy[0]) / e0

    checks = [
        inequality("wave energy bound", "(e.11)", energy.max(), energy[0], tol * abs(e0)),
        Check("wave energy monotonicity", "(e.11)",
              residual=float(max(0.0, increments.max(initial=0.0))), tolerance=tol,
              note="largest relative per-step increase"),
        identity("wave dissipation identity", "L3-dissipation", dissipation_res.max(),
                 max(tol, _dissipation_tolerance(traj, e0)),
                 note="trapezoid in time; O(dt^2)"),
    ]
    if not np.any(p):
        checks.append(identity("wave energy conservation", "(e.11)", drift.max(), tol,
                               note="p == 0: equality case"))
    series = {"kinetic": kinetic, "grad_energy": grad, "potential": pot, "energy": energy,
              "dissipated": dissipated, "dissipation_residual": dissipation_res}
    return EnergyReport(WAVE, traj.times, series, checks,
                        {"monotonicity": tol, "dissipation": checks[2].tolerance})


def _dissipation_tolerance(traj: Trajectory, e0: float) -> float:
    """A-priori O(dt^2) allowance from the initial data only.

    Trapezoid and midpoint quadrature of ``2 int p |u'|^2`` differ by about
    ``dt^2/2 int |p| |u''|^2``; with ``u'' = -A u + p u'`` and the second-order
    energy ``E2 = <A u', u'> + ||A u||^2`` (nonincreasing for constant p) this
    is at most ``dt^2 |p| T (E2 + |p|^2 E)``.
    """
    if traj.method == SPECTRAL:
        return 0.0
    op = traj.basis.op
    p = float(np.abs(traj.p).max())
    u0, v0 = traj.states[0], traj.velocity[0]
    e2 = float(np.real(op.inner(v0, op.apply(v0)) + op.inner(op.apply(u0), op.apply(u0))))
    return traj.dt**2 * p * traj.horizon * (e2 + p**2 * e0) / e0
