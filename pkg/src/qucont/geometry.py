"""Rectangular grids, sampled coefficient fields and observation regions.

Nodes are numbered in row-major (``ij``) order over the tensor grid.  The
boundary is stored twice: ``boundary_ids`` lists the distinct boundary nodes,
while the *facet* arrays (``facet_node``, ``normal``, ``bweight``) hold one
entry per (face, node) pair.  In 2D a corner node therefore appears on both of
its faces, each time with that face's outward normal and half a trapezoid
weight, so every facet normal has unit length and the weights add up to the
perimeter.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, EllipticityError, RegionError
from .forms import ScalarForm, as_form


@dataclass(frozen=True, eq=False)
class Grid:
    dim: int
    extents: tuple[tuple[float, float], ...]
    n: tuple[int, ...]
    h: tuple[float, ...]
    coords: np.ndarray          # (N, dim)
    interior_ids: np.ndarray    # sorted node ids
    boundary_ids: np.ndarray    # sorted node ids
    facet_node: np.ndarray      # (E,) node id of each boundary facet entry
    facet_axis: np.ndarray      # (E,) axis of the outward normal
    facet_side: np.ndarray      # (E,) -1 for the low face, +1 for the high face
    normal: np.ndarray          # (E, dim) unit outward normals
    bweight: np.ndarray         # (E,) boundary quadrature weights
    vweight: np.ndarray         # (N,) trapezoid volume weights
    _interior_pos: np.ndarray = field(repr=False)  # node id -> interior slot or -1

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.n))

    @property
    def num_interior(self) -> int:
        return int(self.interior_ids.size)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def mass(self) -> np.ndarray:
        """Quadrature weights restricted to interior nodes."""
        return self.vweight[self.interior_ids]

    @property
    def volume(self) -> float:
        return float(np.prod([b - a for a, b in self.extents]))

    @property
    def boundary_measure(self) -> float:
        if self.dim == 1:
            return 2.0
        (a0, b0), (a1, b1) = self.extents
        return 2.0 * ((b0 - a0) + (b1 - a1))

    def interior_position(self, node_ids) -> np.ndarray:
        """Map node ids to positions in an interior-node vector (-1 if boundary)."""
        return self._interior_pos[np.asarray(node_ids)]

    def embed(self, u_int: np.ndarray) -> np.ndarray:
        """Extend interior values by zero to every node (last axis = nodes)."""
        u_int = np.asarray(u_int)
        out = np.zeros(u_int.shape[:-1] + (self.num_nodes,), dtype=u_int.dtype)
        out[..., self.interior_ids] = u_int
        return out

    def restrict(self, u_full: np.ndarray) -> np.ndarray:
        return np.asarray(u_full)[..., self.interior_ids]

    def inward_neighbors(self) -> tuple[np.ndarray, np.ndarray]:
        """Node ids one and two steps inward along each facet's normal axis."""
        idx = np.array(np.unravel_index(self.facet_node, self.n))  # (dim, E)
        first = idx.copy()
        second = idx.copy()
        ar = np.arange(self.facet_node.size)
        first[self.facet_axis, ar] -= self.facet_side
        second[self.facet_axis, ar] -= 2 * self.facet_side
        return (np.ravel_multi_index(tuple(first), self.n),
                np.ravel_multi_index(tuple(second), self.n))


def build_grid(dim: int, extents: Sequence[Sequence[float]], n) -> Grid:
    """Build a uniform rectangular grid on ``prod [a_k, b_k]`` with ``n_k`` nodes per axis.

    Examples
    --------
    >>> g = build_grid(1, [(0.0, 1.0)], 5)
    >>> g.normal.ravel().tolist()
    [-1.0, 1.0]
    """
    if dim not in (1, 2):
        raise ConfigurationError(f"dim must be 1 or 2, got {dim}")
    if np.isscalar(n):
        n = [int(n)] * dim
    n = tuple(int(k) for k in n)
    if len(n) != dim or len(extents) != dim:
        raise ConfigurationError("extents and n must have one entry per axis")
    extents = tuple((float(a), float(b)) for a, b in extents)
    for (a, b), nk in zip(extents, n):
        if not np.isfinite(a) or not np.isfinite(b) or not b > a:
            raise ConfigurationError(f"degenerate extent [{a}, {b}]")
        if nk < 3:
            raise ConfigurationError(f"need at least 3 nodes per axis, got {nk}")

    axes = [np.linspace(a, b, nk) for (a, b), nk in zip(extents, n)]
    h = tuple((b - a) / (nk - 1) for (a, b), nk in zip(extents, n))
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.ravel() for m in mesh], axis=1)

    # per-axis trapezoid weights; their tensor product gives vweight
    w1d = []
    for hk, nk in zip(h, n):
        w = np.full(nk, hk)
        w[[0, -1]] = 0.5 * hk
        w1d.append(w)
    vweight = w1d[0] if dim == 1 else np.outer(w1d[0], w1d[1]).ravel()

    on_bdry = np.zeros(n, dtype=bool)
    for ax in range(dim):
        sl = [slice(None)] * dim
        sl[ax] = 0
        on_bdry[tuple(sl)] = True
        sl[ax] = -1
        on_bdry[tuple(sl)] = True
    flat = on_bdry.ravel()
    boundary_ids = np.flatnonzero(flat)
    interior_ids = np.flatnonzero(~flat)

    facet_node, facet_axis, facet_side, bweight = [], [], [], []
    all_idx = np.arange(int(np.prod(n))).reshape(n)
    for ax in range(dim):
        for side, pos in ((-1, 0), (1, n[ax] - 1)):
            face = np.take(all_idx, pos, axis=ax).ravel()
            if dim == 1:
                wts = np.ones(1)
            else:
                wts = w1d[1 - ax]   # trapezoid along the face; corners get half
            facet_node.append(face)
            facet_axis.append(np.full(face.size, ax))
            facet_side.append(np.full(face.size, side))
            bweight.append(wts)
    facet_node = np.concatenate(facet_node)
    facet_axis = np.concatenate(facet_axis)
    facet_side = np.concatenate(facet_side)
    bweight = np.concatenate(bweight).astype(float)
    normal = np.zeros((facet_node.size, dim))
    normal[np.arange(facet_node.size), facet_axis] = facet_side

    pos = np.full(int(np.prod(n)), -1)
    pos[interior_ids] = np.arange(interior_ids.size)

    return Grid(dim, extents, n, h, coords, interior_ids, boundary_ids,
                facet_node, facet_axis, facet_side, normal, bweight, vweight, pos)


# ----------------------------------------------------------------------------
# coefficient fields


def _fd_gradient(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Centered differences inside, second-order one-sided at the edges."""
    arr = values.reshape(grid.n + values.shape[1:])
    parts = np.gradient(arr, *grid.h, axis=tuple(range(grid.dim)), edge_order=2)
    if grid.dim == 1:
        parts = [parts]
    stacked = np.stack(parts, axis=grid.dim)   # (*n, dim, *rest)
    return stacked.reshape((grid.num_nodes, grid.dim) + values.shape[1:])


@dataclass(frozen=True, eq=False)
class MetricField:
    entries: np.ndarray      # (N, d, d)
    varkappa: float
    derivs: np.ndarray       # (N, d, d, d), derivs[n, p, k, l] = d_p g_kl
    deriv_source: str        # "analytic" | "finite-difference"

    @property
    def is_constant(self) -> bool:
        return bool(np.all(self.derivs == 0.0))

    def at(self, node: int) -> np.ndarray:
        return self.entries[node]


def _metric_forms(spec, dim: int):
    """Return a d x d nested list of ScalarForms, or None for the identity."""
    if isinstance(spec, str):
        spec = {"kind": spec}
    kind = spec.get("kind", "identity")
    if kind == "identity":
        return None
    if kind == "constant":
        mat = np.asarray(spec["matrix"], dtype=float).reshape(dim, dim)
        return [[as_form(float(mat[k, l]), dim) for l in range(dim)] for k in range(dim)]
    if kind == "diag":
        entries = spec["entries"]
        if len(entries) != dim:
            raise ConfigurationError("diag metric needs one entry per axis")
        zero = as_form(0.0, dim)
        return [[as_form(entries[k], dim) if k == l else zero for l in range(dim)]
                for k in range(dim)]
    if kind == "full":
        entries = spec["entries"]
        if len(entries) != dim or any(len(r) != dim for r in entries):
            raise ConfigurationError("full metric needs a d x d table of entries")
        forms = [[None] * dim for _ in range(dim)]
        for k in range(dim):
            for l in range(k, dim):
                f = as_form(entries[k][l], dim)
                forms[k][l] = forms[l][k] = f   # upper triangle wins
        return forms
    raise ConfigurationError(f"unknown metric kind '{kind}'")


def sample_metric(spec, grid: Grid, derivs: str = "auto") -> MetricField:
    """Sample a metric specification on every grid node.

    ``spec`` is ``"identity"`` or a mapping with ``kind`` in
    ``{"identity", "constant", "diag", "full"}``.  Derivatives are analytic when
    every entry carries closed forms (and ``derivs != "fd"``), centered
    differences otherwise.
    """
    d, N = grid.dim, grid.num_nodes
    forms = _metric_forms(spec, d)
    if forms is None:
        entries = np.broadcast_to(np.eye(d), (N, d, d)).copy()
        return MetricField(entries, 1.0, np.zeros((N, d, d, d)), "analytic")

    x = grid.coords
    entries = np.empty((N, d, d))
    for k in range(d):
        for l in range(d):
            entries[:, k, l] = forms[k][l].value(x)

    use_analytic = derivs != "fd" and all(f.analytic for row in forms for f in row)
    if use_analytic:
        dg = np.empty((N, d, d, d))
        for k in range(d):
            for l in range(d):
                dg[:, :, k, l] = forms[k][l].grad(x)
        source = "analytic"
    else:
        dg = _fd_gradient(entries, grid)
        source = "finite-difference"

    if not np.all(np.isfinite(entries)):
        raise EllipticityError("metric has non-finite entries")
    if np.max(np.abs(entries - entries.transpose(0, 2, 1))) > 0.0:
        raise EllipticityError("metric is not symmetric")
    eig = np.linalg.eigvalsh(entries)
    lo, hi = eig[:, 0], eig[:, -1]
    if np.any(lo <= 0.0):
        bad = int(np.argmin(lo))
        raise EllipticityError(
            f"metric not positive definite at node {bad} (x={x[bad].tolist()}, "
            f"min eigenvalue {lo[bad]:.3g})"
        )
    varkappa = max(1.0, float(np.max(hi)), float(np.max(1.0 / lo)))
    return MetricField(entries, varkappa, dg, source)


@dataclass(frozen=True, eq=False)
class WeightFunction:
    values: np.ndarray   # (N,)
    grad: np.ndarray     # (N, d)
    hess: np.ndarray     # (N, d, d)
    source: str

    def scaled(self, a: float) -> "WeightFunction":
        return WeightFunction(a * self.values, a * self.grad, a * self.hess, self.source)


def sample_weight(spec, grid: Grid, derivs: str = "auto") -> WeightFunction:
    """Sample a weight function together with its gradient and Hessian."""
    form = as_form(spec, grid.dim)
    x = grid.coords
    values = np.asarray(form.value(x), dtype=float)
    if derivs != "fd" and form.analytic:
        return WeightFunction(values, form.grad(x), form.hess(x), "analytic")
    grad = _fd_gradient(values, grid)
    hess = _fd_gradient(grad, grid)
    hess = 0.5 * (hess + hess.transpose(0, 2, 1))
    return WeightFunction(values, grad, hess, "finite-difference")


def sample_field(spec, grid: Grid) -> np.ndarray:
    """Nodal values of a scalar coefficient (potential q, damping p, ...)."""
    if spec is None:
        return np.zeros(grid.num_nodes)
    if isinstance(spec, np.ndarray):
        if spec.shape != (grid.num_nodes,):
            raise ConfigurationError("nodal field has the wrong length")
        return spec.astype(float)
    form: ScalarForm = as_form(spec, grid.dim)
    return np.asarray(form.value(grid.coords), dtype=float)


# ----------------------------------------------------------------------------
# observation regions

LATERAL, INTERIOR, SPACETIME = "lateral", "interior", "spacetime"


@dataclass(frozen=True, eq=False)
class ObservationRegion:
    """Where a solution is observed.

    ``space_mask`` is a boolean array over boundary facets when
    ``support == "boundary"`` and over all nodes when ``support == "nodes"``.
    ``time_mask`` is only set for space-time sets and has shape
    ``(steps + 1, len(space_mask))``.
    """

    kind: str
    support: str
    space_mask: np.ndarray
    time_mask: np.ndarray | None = None
    norm_kind: str = "L2"
    name: str = ""

    def with_norm(self, norm_kind: str) -> "ObservationRegion":
        return ObservationRegion(self.kind, self.support, self.space_mask,
                                 self.time_mask, norm_kind, self.name)


def build_region(kind: str, params: dict, grid: Grid) -> ObservationRegion:
    """Construct an observation region.

    lateral
        ``mask`` (bool over facets, e.g. a Gamma^psi mask), ``faces`` (list of
        ``[axis, side]`` pairs) or ``select="all"``.
    interior
        ``mask`` (bool over nodes), ``box`` (per-axis ``[lo, hi]``) or
        ``predicate`` (callable on coordinates).  Boundary nodes are dropped.
    spacetime
        ``support`` (``"nodes"`` or ``"boundary"``), ``steps`` and either an
        explicit ``mask`` of shape ``(steps + 1, K)`` or a random ``fraction``
        with ``seed``.
    """
    params = dict(params or {})
    name = params.get("name", kind)
    if kind == LATERAL:
        E = grid.facet_node.size
        if "mask" in params:
            mask = np.asarray(params["mask"], dtype=bool)
            if mask.shape != (E,):
                raise RegionError("lateral mask must have one entry per boundary facet")
        elif "faces" in params:
            mask = np.zeros(E, dtype=bool)
            for ax, side in params["faces"]:
                mask |= (grid.facet_axis == int(ax)) & (grid.facet_side == int(side))
        elif params.get("select", "all") == "all":
            mask = np.ones(E, dtype=bool)
        else:
            raise RegionError(f"cannot build lateral region from {params!r}")
        region = ObservationRegion(LATERAL, "boundary", mask, None,
                                   params.get("norm", "L2"), name)
    elif kind == INTERIOR:
        x = grid.coords
        if "mask" in params:
            mask = np.asarray(params["mask"], dtype=bool)
        elif "box" in params:
            mask = np.ones(grid.num_nodes, dtype=bool)
            for ax, (lo, hi) in enumerate(params["box"]):
                mask &= (x[:, ax] >= lo) & (x[:, ax] <= hi)
        elif "predicate" in params:
            mask = np.asarray(params["predicate"](x), dtype=bool)
        else:
            raise RegionError(f"cannot build interior region from {params!r}")
        if mask.shape != (grid.num_nodes,):
            raise RegionError("interior mask must have one entry per node")
        mask = mask.copy()
        mask[grid.boundary_ids] = False
        region = ObservationRegion(INTERIOR, "nodes", mask, None,
                                   params.get("norm", "L2"), name)
    elif kind == SPACETIME:
        support = params.get("support", "nodes")
        K = grid.facet_node.size if support == "boundary" else grid.num_nodes
        if "mask" in params:
            tmask = np.asarray(params["mask"], dtype=bool)
            if tmask.ndim != 2 or tmask.shape[1] != K:
                raise RegionError("space-time mask must have shape (steps + 1, K)")
        else:
            steps = int(params["steps"])
            frac = float(params.get("fraction", 0.1))
            rng = np.random.default_rng(params.get("seed", 0))
            tmask = rng.random((steps + 1, K)) < frac
        if support == "nodes":
            tmask = tmask.copy()
            tmask[:, grid.boundary_ids] = False
        region = ObservationRegion(SPACETIME, support, tmask.any(axis=0), tmask,
                                   params.get("norm", "L1"), name)
    else:
        raise RegionError(f"unknown region kind '{kind}'")

    if not region.space_mask.any():
        raise RegionError(f"region '{name}' is empty")
    if region.time_mask is not None:
        # every trapezoid weight is positive, so one selected pair suffices
        if not region.time_mask.any():
            raise RegionError(f"region '{name}' has zero space-time measure")
    return region


# ----------------------------------------------------------------------------
# dumps


def write_nodes_csv(path, grid: Grid, **fields: np.ndarray) -> None:
    """One row per node: id, coordinates, then each named nodal field."""
    names = list(fields)
    axes = ["x", "y"][: grid.dim]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", *axes, *names])
        cols = [np.asarray(fields[k]) for k in names]
        for i in range(grid.num_nodes):
            w.writerow([i, *(repr(float(c)) for c in grid.coords[i]),
                        *(repr(float(c[i])) for c in cols)])
