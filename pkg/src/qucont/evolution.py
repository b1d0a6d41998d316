"""Heat, Schroedinger and wave propagation with homogeneous Dirichlet data.

Sign conventions, with ``A`` the discrete ``-div(g grad .) - q``:

* heat        ``(H + q) u = 0``            ->  ``u' = -A u``
* Schroedinger ``(S + q) u = 0``           ->  ``i u' = A u``
* wave        ``(W + p d_t + q) u = 0``    ->  ``u'' = -A u + p u'``

``spectral`` integrates exactly in time through the eigenbasis; ``stepper``
uses Crank-Nicolson (heat, Schroedinger) or the implicit midpoint rule on
``(u, u')`` (wave).  States are stored on interior nodes only, so the Dirichlet
condition holds by construction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ConfigurationError, MethodError, ParameterError, RegionError
from .geometry import Grid, MetricField, ObservationRegion
from .spectral import SpectralBasis

HEAT, SCHRODINGER, WAVE = "heat", "schrodinger", "wave"
SPECTRAL, STEPPER = "spectral", "stepper"


@dataclass(frozen=True, eq=False)
class Trajectory:
    equation: str
    times: np.ndarray               # (M + 1,)
    states: np.ndarray              # (M + 1, N_int)
    basis: SpectralBasis
    method: str
    velocity: np.ndarray | None = None
    p: np.ndarray | None = None     # interior damping (wave)
    # spectral data for exact-in-time integrals: heat/schroedinger c0, wave (a, b)
    spectral_coeffs: tuple | None = field(default=None, repr=False)

    @property
    def grid(self) -> Grid:
        return self.basis.op.grid

    @property
    def metric(self) -> MetricField:
        return self.basis.op.metric

    @property
    def q(self) -> np.ndarray:
        op = self.basis.op
        return np.zeros(op.size) if op.potential is None else op.potential

    @property
    def delta(self) -> float:
        top = float(np.max(self.q))
        return top if top > 0.0 else 0.0

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def steps(self) -> int:
        return self.times.size - 1

    def full_state(self, m: int) -> np.ndarray:
        """State at step ``m`` on every node; boundary entries are zero."""
        return self.grid.embed(self.states[m])

    def l2_norms(self) -> np.ndarray:
        return np.sqrt(np.real(self.basis.op.inner(self.states, self.states)))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            cplx = np.iscomplexobj(self.states)
            w.writerow(["t", "node", "value"] if not cplx else ["t", "node", "re", "im"])
            for m, t in enumerate(self.times):
                full = self.full_state(m)
                for i, v in enumerate(full):
                    if cplx:
                        w.writerow([repr(float(t)), i, repr(float(v.real)), repr(float(v.imag))])
                    else:
                        w.writerow([repr(float(t)), i, repr(float(v))])


def _time_grid(horizon: float, steps: int) -> np.ndarray:
    if not horizon > 0.0:
        raise ConfigurationError(f"time horizon must be positive, got {horizon}")
    if steps < 1:
        raise ConfigurationError(f"need at least one time step, got {steps}")
    return np.linspace(0.0, horizon, steps + 1)


def _interior(basis: SpectralBasis, w, name: str, dtype=float) -> np.ndarray:
    w = np.asarray(w, dtype=dtype)
    grid = basis.op.grid
    if w.shape == (grid.num_nodes,):
        w = grid.restrict(w)
    if w.shape != (basis.op.size,):
        raise ParameterError(f"{name} has shape {w.shape}, expected ({basis.op.size},)")
    return w


def heat_propagate(basis: SpectralBasis, u0, horizon: float, steps: int,
                   method: str = SPECTRAL) -> Trajectory:
    """Solve ``u' = -A u`` on ``[0, horizon]`` with ``steps`` uniform steps."""
    times = _time_grid(horizon, steps)
    u0 = _interior(basis, u0, "u0")
    if method == SPECTRAL:
        if basis.lambdas[0] * horizon < -700.0:
            raise ConfigurationError(
                f"growth exp({-basis.lambdas[0] * horizon:.0f}) would overflow"
            )
        c0 = basis.coeffs(u0)
        states = (np.exp(-np.outer(times, basis.lambdas)) * c0) @ basis.modes.T
        states[0] = u0
        return Trajectory(HEAT, times, states, basis, method, spectral_coeffs=(c0,))
    if method == STEPPER:
        dt = times[1] - times[0]
        A = basis.op.matrix
        eye = sp.identity(A.shape[0], format="csc")
        lhs = splu((eye + 0.5 * dt * A).tocsc())
        rhs = (eye - 0.5 * dt * A).tocsr()
        states = np.empty((steps + 1, u0.size))
        states[0] = u0
        for m in range(steps):
            states[m + 1] = lhs.solve(rhs @ states[m])
        return Trajectory(HEAT, times, states, basis, method)
    raise MethodError(f"unknown method '{method}'")


def schrodinger_propagate(basis: SpectralBasis, u0, horizon: float, steps: int,
                          method: str = SPECTRAL) -> Trajectory:
    """Solve ``i u' = A u``; both methods conserve the mass norm."""
    times = _time_grid(horizon, steps)
    u0 = _interior(basis, u0, "u0", complex)
    if method == SPECTRAL:
        c0 = basis.coeffs(u0)
        states = (np.exp(-1j * np.outer(times, basis.lambdas)) * c0) @ basis.modes.T
        states[0] = u0
        return Trajectory(SCHRODINGER, times, states, basis, method, spectral_coeffs=(c0,))
    if method == STEPPER:
        dt = times[1] - times[0]
        A = basis.op.matrix.astype(complex)
        eye = sp.identity(A.shape[0], dtype=complex, format="csc")
        lhs = splu((eye + 0.5j * dt * A).tocsc())
        rhs = (eye - 0.5j * dt * A).tocsr()
        states = np.empty((steps + 1, u0.size), dtype=complex)
        states[0] = u0
        for m in range(steps):
            states[m + 1] = lhs.solve(rhs @ states[m])
        return Trajectory(SCHRODINGER, times, states, basis, method)
    raise MethodError(f"unknown method '{method}'")


def wave_propagate(basis: SpectralBasis, u0, u1, horizon: float, steps: int,
                   p=None, method: str = SPECTRAL) -> Trajectory:
    """Solve ``u'' = -A u + p u'`` with ``u(0) = u0`` and ``u'(0) = u1``.

    The potential ``q`` is the one folded into ``basis.op``.  The spectral
    route needs ``p == 0`` and a positive spectrum; otherwise use the stepper.
    """
    times = _time_grid(horizon, steps)
    u0 = _interior(basis, u0, "u0")
    u1 = _interior(basis, u1, "u1")
    pint = np.zeros(basis.op.size) if p is None else _interior(basis, p, "p")
    if method == SPECTRAL:
        if np.any(pint != 0.0):
            raise MethodError("spectral wave propagation requires p == 0; use the stepper")
        if basis.lambdas[0] <= 0.0:
            raise MethodError("spectral wave propagation requires lambda_1 > 0; use the stepper")
        a, b = basis.coeffs(u0), basis.coeffs(u1)
        om = np.sqrt(basis.lambdas)
        wt = np.outer(times, om)
        cos, sin = np.cos(wt), np.sin(wt)
        states = (cos * a + sin / om * b) @ basis.modes.T
        velocity = (-om * sin * a + cos * b) @ basis.modes.T
        states[0], velocity[0] = u0, u1
        return Trajectory(WAVE, times, states, basis, method, velocity=velocity,
                          p=pint, spectral_coeffs=(a, b))
    if method == STEPPER:
        dt = times[1] - times[0]
        A = basis.op.matrix
        P = sp.diags(pint)
        eye = sp.identity(A.shape[0], format="csc")
        # implicit midpoint on (u, v); s = v_n + v_{n+1}
        lhs = splu((eye + 0.25 * dt * dt * A - 0.5 * dt * P).tocsc())
        states = np.empty((steps + 1, u0.size))
        velocity = np.empty_like(states)
        states[0], velocity[0] = u0, u1
        for m in range(steps):
            u, v = states[m], velocity[m]
            s = lhs.solve(2.0 * v - dt * (A @ u))
            velocity[m + 1] = s - v
            states[m + 1] = u + 0.5 * dt * s
        return Trajectory(WAVE, times, states, basis, method, velocity=velocity, p=pint)
    raise MethodError(f"unknown method '{method}'")


# ----------------------------------------------------------------------------
# boundary observation


@dataclass(frozen=True, eq=False)
class FluxTrace:
    times: np.ndarray
    euclidean: np.ndarray   # (M + 1, E) normal derivative (grad u | nu)
    conormal: np.ndarray    # (M + 1, E) conormal derivative (g grad u | nu)
    grid: Grid

    def values(self, kind: str = "conormal") -> np.ndarray:
        if kind == "conormal":
            return self.conormal
        if kind == "euclidean":
            return self.euclidean
        raise ParameterError(f"unknown flux kind '{kind}'")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            cplx = np.iscomplexobj(self.conormal)
            head = ["t", "facet", "node"]
            head += ["conormal_re", "conormal_im", "euclidean_re", "euclidean_im"] if cplx \
                else ["conormal", "euclidean"]
            w.writerow(head)
            for m, t in enumerate(self.times):
                for e, node in enumerate(self.grid.facet_node):
                    c, n = self.conormal[m, e], self.euclidean[m, e]
                    vals = [c.real, c.imag, n.real, n.imag] if cplx else [c, n]
                    w.writerow([repr(float(t)), e, int(node), *(repr(float(v)) for v in vals)])


def boundary_flux(traj: Trajectory, grid: Grid | None = None,
                  g: MetricField | None = None) -> FluxTrace:
    """Normal and conormal derivatives on every boundary facet and stored step.

    The inward derivative uses the one-sided three-point formula
    ``(-3 u_0 + 4 u_1 - u_2) / (2 h)``.  The tangential derivative vanishes by the
    Dirichlet condition, so ``grad u = (d_nu u) nu`` on each face.
    """
    grid = traj.grid if grid is None else grid
    g = traj.metric if g is None else g
    if min(grid.n) < 4:
        raise ConfigurationError("boundary flux needs at least 4 nodes per axis")
    first, second = grid.inward_neighbors()
    full = grid.embed(traj.states)
    u0 = full[:, grid.facet_node]
    u1 = full[:, first]
    u2 = full[:, second]
    step = np.asarray(grid.h)[grid.facet_axis]
    inward = (-3.0 * u0 + 4.0 * u1 - u2) / (2.0 * step)
    dnu = -inward
    gnn = np.einsum("eij,ei,ej->e", g.entries[grid.facet_node], grid.normal, grid.normal)
    return FluxTrace(traj.times, dnu, dnu * gnn, grid)


def trapezoid_weights(times: np.ndarray) -> np.ndarray:
    w = np.zeros_like(times, dtype=float)
    dt = np.diff(times)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def region_norm(source, region: ObservationRegion, norm_kind: str | None = None,
                flux: str = "conormal") -> float:
    """L2 or L1 norm of a flux trace (boundary regions) or of states (node regions).

    Time is integrated with the trapezoid rule on stored steps and space with
    the region's quadrature weights (``bweight`` or ``vweight``).
    """
    kind = norm_kind or region.norm_kind
    if region.support == "boundary":
        if not isinstance(source, FluxTrace):
            raise RegionError(f"region '{region.name}' observes boundary fluxes; pass a FluxTrace")
        vals = source.values(flux)
        wx = source.grid.bweight
    elif region.support == "nodes":
        if not isinstance(source, Trajectory):
            raise RegionError(f"region '{region.name}' observes states; pass a Trajectory")
        vals = source.grid.embed(source.states)
        wx = source.grid.vweight
    else:
        raise RegionError(f"unknown region support '{region.support}'")

    wt = trapezoid_weights(source.times)
    if region.time_mask is not None:
        if region.time_mask.shape != vals.shape:
            raise RegionError(
                f"space-time mask shape {region.time_mask.shape} does not match "
                f"trace shape {vals.shape}"
            )
        mask = region.time_mask
    else:
        if region.space_mask.shape != vals.shape[1:]:
            raise RegionError("region mask does not match the trace")
        mask = np.broadcast_to(region.space_mask, vals.shape)
    weights = np.where(mask, np.outer(wt, wx), 0.0)
    if kind == "L2":
        return float(np.sqrt(np.sum(weights * np.abs(vals) ** 2)))
    if kind == "L1":
        return float(np.sum(weights * np.abs(vals)))
    raise ParameterError(f"unknown norm kind '{kind}'")
