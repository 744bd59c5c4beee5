"""First-order finite volume schemes on curved and flat surface meshes.

Both schemes share one update,

    u_K^{n+1} = |K_n| / |K_{n+1}| u_K^n
                - dt / |K_{n+1}| sum_e |e_n| g_{K,e}(u_K^n, u_{K_e}^n),

with a Lax-Friedrichs flux ``g``.  They differ only in where the geometry
comes from: exact spherical quantities and stream-function flux integrals
for the curved scheme, flat areas, averaged conormals and quadrature for
the flat scheme.  Fluxes are assembled per edge, so the two incident cells
receive contributions of exactly opposite sign.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import BlowUpError, GeometryError, ParameterError, UnsupportedFluxError
from .flux import FluxField
from .geometry import (
    QuadratureRule,
    cell_geometry,
    edge_geometry,
    edge_points,
    interval_rule,
    triangle_rule,
)
from .initial import flat_cell_means
from .mesh import MeshQuality, TriMesh, mesh_quality
from .motion import SurfaceMotion, identity, positions_at
from .sphere import SphereSurface, curved_cell_means, curved_conormal, exact_edge_flux_average

log = logging.getLogger(__name__)

# default quadrature degrees: cell, edge, time
DEFAULT_ORDERS = (2, 3, 1)
MAX_AREA_CHANGE = 0.05


@dataclass(frozen=True)
class Rules:
    cell: QuadratureRule = field(default_factory=lambda: triangle_rule(DEFAULT_ORDERS[0]))
    edge: QuadratureRule = field(default_factory=lambda: interval_rule(DEFAULT_ORDERS[1]))
    time: QuadratureRule = field(default_factory=lambda: interval_rule(DEFAULT_ORDERS[2]))

    @classmethod
    def from_orders(cls, p1=DEFAULT_ORDERS[0], p2=DEFAULT_ORDERS[1], p3=DEFAULT_ORDERS[2]):
        return cls(triangle_rule(p1), interval_rule(p2), interval_rule(p3))

    @property
    def orders(self):
        return (self.cell.order, self.edge.order, self.time.order)


@dataclass(frozen=True)
class CellField:
    """One value per cell at time ``time``."""

    values: np.ndarray
    time: float
    mesh: TriMesh

    def __post_init__(self):
        if len(self.values) != self.mesh.n_cells:
            raise ParameterError("cell field length does not match the mesh")


@dataclass(frozen=True)
class StepContext:
    """Geometry and step size of one time step.

    ``term_means[e, k]`` is the edge and time mean of ``<F_k, mu>`` seen from
    the left cell of edge ``e``.  ``cell_stream`` holds stream-function
    values at cell corners when the curved scheme uses the corner form.
    """

    dt: float
    areas_now: np.ndarray
    areas_next: np.ndarray
    edge_lengths: np.ndarray
    term_means: np.ndarray
    lam: float
    dt_cfl: float = math.inf
    cell_stream: Optional[np.ndarray] = None

    def __post_init__(self):
        if np.any(self.areas_now <= 0) or np.any(self.areas_next <= 0):
            raise GeometryError("non-positive cell area in step context")


@dataclass(frozen=True)
class StepRecord:
    step: int
    t: float
    dt: float
    mass: float
    min: float
    max: float


@dataclass
class RunResult:
    field: CellField
    initial: CellField
    log: list
    areas: np.ndarray  # cell areas at the final time, of the scheme's own kind

    @property
    def mass_drift(self) -> float:
        """Largest relative deviation of the discrete mass from its initial value.

        Relative to ``max(|m_0|, sum |K_0|)`` so that zero-mass data remain
        meaningful.
        """
        m = np.array([r.mass for r in self.log])
        scale = max(abs(m[0]), float(self._area0))
        return float(np.max(np.abs(m - m[0])) / scale)

    _area0: float = 1.0

    @property
    def dts(self):
        return np.array([r.dt for r in self.log[1:]])


# --------------------------------------------------------------------------
# CFL


def cfl_dt(quality: MeshQuality, flux: FluxField, cfl_factor: float = 1.0, T: float | None = None) -> float:
    """``cfl_factor * alpha**2 h / (8 L)`` with ``L = lambda + du_bound / 2``.

    A flux with ``L = 0`` imposes no restriction; the step is then ``T / 16``.
    """
    if not 0 < cfl_factor <= 1:
        raise ParameterError("cfl_factor must lie in (0, 1]")
    if quality.alpha <= 0:
        raise ParameterError("mesh quality alpha must be positive")
    L = flux.lipschitz
    if L == 0:
        if T is None:
            raise ParameterError("a flux without Lipschitz bound needs the horizon T")
        return T / 16.0
    return cfl_factor * quality.alpha**2 * quality.h / (8.0 * L)


# --------------------------------------------------------------------------
# edge flux geometry


def left_opposite(mesh: TriMesh):
    """Vertex of the left cell opposite to each edge."""
    e = np.arange(mesh.n_edges)
    j = np.argmax(mesh.cell_edges[mesh.left] == e[:, None], axis=1)
    return mesh.triangles[mesh.left, (j + 2) % 3]


def flat_means_at(mesh, flux: FluxField, x, edge_rule: QuadratureRule, t=0.0, cells=None):
    """Edge means of ``<F_k, mu_bar>`` on the polyhedron with vertices ``x``."""
    eg = edge_geometry(mesh, x, cells)
    pts = edge_points(edge_rule, x[mesh.edges[:, 0]], x[mesh.edges[:, 1]])
    out = np.empty((mesh.n_edges, len(flux.terms)))
    for k, term in enumerate(flux.terms):
        vals = np.einsum("eqi,ei->eq", term.field(pts), eg.conormal)
        out[:, k] = vals @ edge_rule.weights
    return out


def arc_points(p, q, nodes, R):
    """Points on the great arcs ``p -> q`` at fractions ``nodes`` of the angle."""
    pu = p / np.linalg.norm(p, axis=-1, keepdims=True)
    qu = q / np.linalg.norm(q, axis=-1, keepdims=True)
    theta = np.arctan2(np.linalg.norm(np.cross(pu, qu), axis=-1), np.einsum("...i,...i->...", pu, qu))
    w = qu - np.einsum("...i,...i->...", pu, qu)[..., None] * pu
    w /= np.linalg.norm(w, axis=-1, keepdims=True)
    th = theta[..., None] * nodes
    return R * (np.cos(th)[..., None] * pu[..., None, :] + np.sin(th)[..., None] * w[..., None, :])


def curved_means_at(mesh, flux: FluxField, x, sphere: SphereSurface, t=0.0,
                    fallback_points: int | None = None, opposite=None):
    """Exact edge means of ``<F_k, mu>`` over great arcs, seen from the left cell."""
    if sphere.center is not None and np.any(np.asarray(sphere.center) != 0):
        raise ParameterError("curved flux integrals need a sphere centered at the origin")
    opposite = left_opposite(mesh) if opposite is None else opposite
    a, b = x[mesh.edges[:, 0]], x[mesh.edges[:, 1]]
    R = sphere.radius(t)
    mu = curved_conormal(a, b, x[opposite])
    out = np.empty((mesh.n_edges, len(flux.terms)))
    for k, term in enumerate(flux.terms):
        if term.stream is not None:
            out[:, k] = exact_edge_flux_average(term.stream, a, b, mu, R)
        elif fallback_points:
            rule = interval_rule(2 * fallback_points - 1)
            pts = arc_points(a, b, rule.nodes, R)
            out[:, k] = np.einsum("eqi,ei->eq", term.field(pts), mu) @ rule.weights
        else:
            raise UnsupportedFluxError(
                f"flux term {term.coefficient.name} has no stream function and no quadrature fallback"
            )
    return out


def _time_mean(fn, t0, t1, rule: QuadratureRule, static: bool):
    if static or t1 == t0:
        return fn(t0)
    acc = 0.0
    for s, w in zip(rule.nodes, rule.weights):
        acc = acc + w * fn(t0 + s * (t1 - t0))
    return acc


def numerical_flux(u, v, means, flux: FluxField, lam=None):
    """Lax-Friedrichs flux from state ``u`` towards ``v`` for given edge means."""
    lam = flux.lam if lam is None else lam
    g = lam * (u - v)
    for k, term in enumerate(flux.terms):
        phi = term.coefficient.phi
        g = g + 0.5 * (phi(u) + phi(v)) * means[..., k]
    return g


def lf_flux_flat(u, v, mesh, edge, interval, flux: FluxField, motion: SurfaceMotion | None = None,
                 rules: Rules | None = None, side="left"):
    """Flat Lax-Friedrichs flux of one edge over a time interval."""
    rules = rules or Rules()
    motion = motion or identity(max(interval[1], 1.0))
    means = _time_mean(
        lambda t: flat_means_at(mesh, flux, positions_at(mesh, motion, t), rules.edge, t)[edge],
        interval[0], interval[1], rules.time, motion.is_static,
    )
    if side == "right":
        means = -means
    return float(numerical_flux(u, v, means, flux))


def lf_flux_curved(u, v, mesh, edge, interval, flux: FluxField, sphere: SphereSurface,
                   motion: SurfaceMotion | None = None, rules: Rules | None = None,
                   side="left", fallback_points=None):
    """Curved Lax-Friedrichs flux of one edge with exact arc integrals."""
    rules = rules or Rules()
    motion = motion or identity(max(interval[1], 1.0))
    means = _time_mean(
        lambda t: curved_means_at(mesh, flux, positions_at(mesh, motion, t), sphere, t, fallback_points)[edge],
        interval[0], interval[1], rules.time, motion.is_static,
    )
    if side == "right":
        means = -means
    return float(numerical_flux(u, v, means, flux))


# --------------------------------------------------------------------------
# updates


def _net_outflow(values, ctx: StepContext, flux: FluxField, mesh: TriMesh, traces=None):
    """``sum_e |e| g_{K,e}`` for every cell, assembled edge by edge."""
    if traces is None:
        uL, uR = values[mesh.left], values[mesh.right]
    else:
        uL, uR = traces
    g = ctx.edge_lengths * numerical_flux(uL, uR, ctx.term_means, flux, ctx.lam)
    n = mesh.n_cells
    return np.bincount(mesh.left, weights=g, minlength=n) - np.bincount(mesh.right, weights=g, minlength=n)


def _corner_outflow(values, ctx: StepContext, flux: FluxField, mesh: TriMesh):
    """Curved outflow with stream terms written at cell corners.

    Along local edge ``j`` (corner ``j`` to ``j + 1``) the outward integral is
    ``h(v_j) - h(v_{j+1})``, so the cell sum becomes
    ``sum_j h(v_j) (c_j - c_{j-1})``; equal coefficients cancel exactly.
    """
    nbr = mesh.neighbors
    u = values[:, None]
    v = values[nbr]
    w = ctx.edge_lengths[mesh.cell_edges]
    out = (ctx.lam * (u - v)) * w
    out = out.sum(axis=1)
    for k, term in enumerate(flux.terms):
        phi = term.coefficient.phi
        c = 0.5 * (phi(u) + phi(v))
        h = ctx.cell_stream[:, :, k]
        out = out + (h * (c - np.roll(c, 1, axis=1))).sum(axis=1)
    return out


def _update(values, ctx: StepContext, outflow):
    return (ctx.areas_now / ctx.areas_next) * values - (ctx.dt / ctx.areas_next) * outflow


def _check(values, step):
    bad = ~np.isfinite(values)
    if np.any(bad):
        raise BlowUpError(int(np.flatnonzero(bad)[0]), step)


def step_flat(state: CellField, ctx: StepContext, flux: FluxField, step=0) -> CellField:
    values = _update(state.values, ctx, _net_outflow(state.values, ctx, flux, state.mesh))
    _check(values, step)
    return CellField(values, state.time + ctx.dt, state.mesh)


def step_curved(state: CellField, ctx: StepContext, flux: FluxField, step=0) -> CellField:
    if ctx.cell_stream is not None:
        out = _corner_outflow(state.values, ctx, flux, state.mesh)
    else:
        out = _net_outflow(state.values, ctx, flux, state.mesh)
    values = _update(state.values, ctx, out)
    _check(values, step)
    return CellField(values, state.time + ctx.dt, state.mesh)


# --------------------------------------------------------------------------
# initial values


def init_flat(mesh: TriMesh, u0, positions=None, rule: QuadratureRule | None = None, depth=0) -> CellField:
    """Cell means ``Q_K(u0) / |K|`` on the flat cells."""
    P0, P1, P2 = mesh.cell_points(positions)
    return CellField(np.asarray(flat_cell_means(u0, P0, P1, P2, rule, depth), dtype=float), 0.0, mesh)


def init_curved(mesh: TriMesh, u0, sphere: SphereSurface, positions=None, t=0.0, tol=1e-10) -> CellField:
    """Exact cell means of ``u0`` over the spherical cells."""
    P0, P1, P2 = mesh.cell_points(positions)
    return CellField(curved_cell_means(u0, P0, P1, P2, sphere, t, tol), t, mesh)


def l1_diff(a, b, weights) -> float:
    a = a.values if isinstance(a, CellField) else np.asarray(a)
    b = b.values if isinstance(b, CellField) else np.asarray(b)
    return float(np.sum(np.asarray(weights) * np.abs(a - b)))


# --------------------------------------------------------------------------
# geometry providers


class _Geometry:
    """Areas, lengths and edge means of one scheme at given times."""

    def __init__(self, scheme, mesh, motion, flux, rules, sphere, fallback_points):
        if scheme not in ("flat", "curved"):
            raise ParameterError(f"unknown scheme {scheme!r}")
        if scheme == "curved" and sphere is None:
            raise ParameterError("the curved scheme needs a sphere oracle")
        self.scheme = scheme
        self.mesh = mesh
        self.motion = motion
        self.flux = flux
        self.rules = rules
        self.sphere = sphere
        self.fallback_points = fallback_points
        self.opposite = left_opposite(mesh) if scheme == "curved" else None
        self._pos_cache = {}
        self._cell_cache = {}

    def positions(self, t):
        if self.motion.is_static:
            return np.asarray(self.mesh.vertices)
        if t not in self._pos_cache:
            if len(self._pos_cache) > 8:
                self._pos_cache.clear()
            self._pos_cache[t] = positions_at(self.mesh, self.motion, t)
        return self._pos_cache[t]

    def cells(self, t):
        """Flat cell geometry at time ``t``, cached for the last few times."""
        if t not in self._cell_cache:
            if len(self._cell_cache) > 8:
                self._cell_cache.clear()
            self._cell_cache[t] = cell_geometry(self.mesh, self.positions(t))
        return self._cell_cache[t]

    def areas(self, t):
        if self.scheme == "curved":
            P0, P1, P2 = self.mesh.cell_points(self.positions(t))
            return self.sphere.cell_areas(P0, P1, P2, t)
        return self.cells(t).area

    def lengths(self, t):
        x = self.positions(t)
        a, b = x[self.mesh.edges[:, 0]], x[self.mesh.edges[:, 1]]
        if self.scheme == "curved":
            return self.sphere.edge_lengths(a, b, t)
        return np.linalg.norm(b - a, axis=1)

    def means(self, t0, t1):
        if self.scheme == "curved":
            fn = lambda t: curved_means_at(self.mesh, self.flux, self.positions(t), self.sphere, t,
                                           self.fallback_points, self.opposite)
        else:
            fn = lambda t: flat_means_at(self.mesh, self.flux, self.positions(t), self.rules.edge, t, self.cells(t))
        return _time_mean(fn, t0, t1, self.rules.time, self.motion.is_static)

    def corner_stream(self):
        x = self.positions(0.0)
        tri = self.mesh.triangles
        return np.stack([np.stack([term.stream(x[tri[:, j]]) for j in range(3)], axis=1)
                         for term in self.flux.terms], axis=2)


def _field_sups(flux, x):
    return [float(np.max(np.linalg.norm(t.field(x), axis=-1))) for t in flux.terms]


def run(scheme: str, mesh: TriMesh, motion: SurfaceMotion | None, flux: FluxField, u0, T: float,
        cfl_factor: float = 1.0, rules: Rules | None = None, sphere: SphereSurface | None = None,
        initial: CellField | None = None, adaptive: bool = False, init_depth: int = 0,
        init_tol: float = 1e-10, fallback_points: int | None = None,
        callback: Callable | None = None, stepper: Callable | None = None,
        max_steps: int = 10_000_000) -> RunResult:
    """Advance ``u0`` from 0 to ``T`` with the flat or the curved scheme.

    The step size follows the CFL bound on the flat mesh at the current
    time, so both schemes see the same time grid; the last step is
    shortened to land on ``T``.  On moving meshes each step is additionally
    limited to a relative flat-area change of at most 5 %.  With
    ``adaptive`` the viscosity and the flux bound are re-evaluated from the
    current state and geometry every step.

    ``callback(step, field, positions)`` is invoked after initialisation and
    after every step.  ``stepper(state, ctx, flux, geometry, step)`` replaces
    the first-order update (used by the second-order scheme).
    """
    rules = rules or Rules()
    motion = motion or identity(T, sphere)
    if sphere is None and scheme == "curved":
        sphere = motion.sphere
    if T < 0 or T > motion.time_horizon * (1 + 1e-12):
        raise ParameterError("T must lie in [0, motion.time_horizon]")
    geo = _Geometry(scheme, mesh, motion, flux, rules, sphere, fallback_points)
    flat_geo = geo if scheme == "flat" else _Geometry("flat", mesh, motion, flux, rules, None, None)

    if initial is None:
        if scheme == "flat":
            initial = init_flat(mesh, u0, geo.positions(0.0), rules.cell, init_depth)
        else:
            initial = init_curved(mesh, u0, sphere, geo.positions(0.0), 0.0, init_tol)
    state = initial
    areas = geo.areas(0.0)
    area0 = float(np.sum(areas))
    records = [StepRecord(0, 0.0, 0.0, float(np.dot(areas, state.values)),
                          float(state.values.min()), float(state.values.max()))]
    if callback:
        callback(0, state, geo.positions(0.0))

    static = motion.is_static
    cell_stream = None
    if static:
        lengths = geo.lengths(0.0)
        means = geo.means(0.0, 0.0)
        if scheme == "curved" and flux.has_stream:
            cell_stream = geo.corner_stream()
        quality0 = mesh_quality(mesh, geo.positions(0.0))

    t = 0.0
    n = 0
    while t < T:
        if n >= max_steps:
            raise ParameterError(f"exceeded {max_steps} steps before reaching T")
        cur = flux
        if adaptive:
            lo, hi = float(state.values.min()), float(state.values.max())
            du = flux.du_bound_over(lo, hi, _field_sups(flux, flat_geo.positions(t)))
            cur = replace(flux, lam=0.5 * du, du_bound=du)
        quality = quality0 if static else mesh_quality(mesh, flat_geo.positions(t))
        dt_cfl = cfl_dt(quality, cur, cfl_factor, T)
        dt = dt_cfl
        if T - t <= dt * (1 + 1e-12):
            dt = T - t
            t_next = T
        else:
            t_next = t + dt
        if static:
            a_now = a_next = areas
        else:
            a_now = areas
            fa0 = flat_geo.areas(t)
            while True:
                fa1 = flat_geo.areas(t_next)
                if np.max(np.abs(fa1 / fa0 - 1.0)) <= MAX_AREA_CHANGE or dt < 1e-14:
                    break
                dt *= 0.5
                t_next = t + dt
            a_next = geo.areas(t_next)
            lengths = geo.lengths(t)
            means = geo.means(t, t_next)
        ctx = StepContext(dt, a_now, a_next, lengths, means, cur.lam, dt_cfl, cell_stream)
        if stepper is not None:
            state = stepper(state, ctx, cur, geo, n + 1)
        elif scheme == "flat":
            state = step_flat(state, ctx, cur, n + 1)
        else:
            state = step_curved(state, ctx, cur, n + 1)
        state = CellField(state.values, t_next, mesh)
        t = t_next
        n += 1
        areas = a_next
        records.append(StepRecord(n, t, dt, float(np.dot(areas, state.values)),
                                  float(state.values.min()), float(state.values.max())))
        if callback:
            callback(n, state, geo.positions(t))
    result = RunResult(state, initial, records, areas)
    result._area0 = area0
    return result
