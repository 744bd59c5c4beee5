"""Measured convergence orders of geometric and flux approximation errors.

Each check evaluates a maximum error over a refinement family of meshes
and fits a log-log slope against the mesh width.  Maxima are taken over
deterministic sample points (quadrature nodes and vertices), and random
state pairs come from a seeded generator, so every report is reproducible.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .flux import FluxField
from .geometry import cell_geometry, edge_geometry, edge_points, interval_rule, triangle_rule
from .mesh import TriMesh, mesh_quality
from .motion import SurfaceMotion, positions_at
from .solver import curved_means_at, flat_means_at, left_opposite
from .sphere import UNIT_SPHERE

log = logging.getLogger(__name__)


def fit_order(h, e) -> float:
    """Least-squares slope of ``log e`` against ``log h``.

    Zero errors (exact cases) are excluded with a warning.
    """
    h = np.asarray(h, dtype=float)
    e = np.asarray(e, dtype=float)
    keep = e > 0
    if not np.all(keep):
        log.warning("excluding %d zero error(s) from the order fit", int((~keep).sum()))
    if keep.sum() < 2:
        raise ParameterError("need at least two non-zero errors to fit an order")
    return float(np.polyfit(np.log(h[keep]), np.log(e[keep]), 1)[0])


@dataclass
class OrderReport:
    """Per-level maxima of one error quantity and their fitted order."""

    name: str
    h: np.ndarray
    values: np.ndarray
    expected: float
    levels: list = field(default_factory=list)
    abscissa: str = "h"

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if len(self.h) < 3:
            raise ParameterError("an order report needs at least three levels")
        if np.any(np.diff(self.h) >= 0):
            raise ParameterError("mesh widths must be strictly decreasing")
        if not self.levels:
            self.levels = list(range(len(self.h)))

    @property
    def slope(self) -> float:
        if np.all(self.values == 0):
            return float("nan")
        return fit_order(self.h, self.values)

    def passed(self, lo=None, hi=None) -> bool:
        lo = self.expected - 0.15 if lo is None else lo
        hi = self.expected + 0.15 if hi is None else hi
        return bool(lo <= self.slope <= hi)

    def summary(self, lo=None, hi=None) -> str:
        verdict = "pass" if self.passed(lo, hi) else "FAIL"
        return f"{self.name}: slope={self.slope:.3f} expected={self.expected:g} {verdict}"

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["level", self.abscissa, "value"])
            for lev, h, v in zip(self.levels, self.h, self.values):
                w.writerow([lev, f"{h:.10g}", f"{v:.10g}"])
            fh.write(f"# {self.summary()}\n")


def _widths(meshes):
    return [mesh_quality(m).h for m in meshes]


def _levels(meshes):
    return [m.level for m in meshes]


# --------------------------------------------------------------------------
# per-mesh maxima


def cell_sample_points(mesh: TriMesh, positions=None):
    """Degree-5 quadrature nodes and corners of every cell, shape (M, 10, 3)."""
    x = mesh.vertices if positions is None else positions
    P = x[mesh.triangles]  # (M, 3, 3)
    lam = np.vstack([triangle_rule(5).nodes, np.eye(3)])
    return np.einsum("kc,mci->mki", lam, P)


def max_normal_deviation(mesh: TriMesh, oracle=UNIT_SPHERE, positions=None) -> float:
    """``max |nu(a(y)) - nu_K|`` over sample points ``y`` of every flat cell."""
    cg = cell_geometry(mesh, positions)
    y = cell_sample_points(mesh, positions)
    nu = oracle.normal(y)
    # orient the flat normal like the surface normal
    s = np.sign(np.einsum("mi,mi->m", cg.normal, nu[:, 0]))
    return float(np.max(np.linalg.norm(nu - (s[:, None] * cg.normal)[:, None, :], axis=-1)))


def max_surface_distance(mesh: TriMesh, oracle=UNIT_SPHERE, positions=None) -> float:
    """``max |d(y)|`` over sample points ``y`` of the flat cells."""
    return float(np.max(np.abs(oracle.signed_distance(cell_sample_points(mesh, positions)))))


def max_ratio_deviations(mesh: TriMesh, oracle=UNIT_SPHERE, positions=None):
    """``max ||e|/|e_bar| - 1|`` and ``max ||K|/|K_bar| - 1|``."""
    x = mesh.vertices if positions is None else positions
    a, b = x[mesh.edges[:, 0]], x[mesh.edges[:, 1]]
    flat_len = np.linalg.norm(b - a, axis=1)
    curved_len = oracle.edge_lengths(oracle.project(a), oracle.project(b))
    P0, P1, P2 = (oracle.project(p) for p in mesh.cell_points(x))
    flat_area = cell_geometry(mesh, x).area
    curved_area = oracle.cell_areas(P0, P1, P2)
    return (float(np.max(np.abs(curved_len / flat_len - 1.0))),
            float(np.max(np.abs(curved_area / flat_area - 1.0))))


def max_conormal_errors(mesh: TriMesh, oracle=UNIT_SPHERE, positions=None, order=5):
    """Maxima of ``|<mu_bar, t>|``, ``|<mu_bar, nu>|`` and ``|<mu_bar, mu> - 1|``.

    Sampled at the lifts ``a(x_bar)`` of edge quadrature nodes and edge
    endpoints; the fourth return value is the smallest ``<mu_bar, mu>``.
    """
    x = mesh.vertices if positions is None else positions
    eg = edge_geometry(mesh, x)
    mu_bar = eg.conormal
    a, b = x[mesh.edges[:, 0]], x[mesh.edges[:, 1]]
    rule = interval_rule(order)
    s = np.concatenate([[0.0], rule.nodes, [1.0]])
    xb = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
    xc = oracle.project(xb)
    pa, pb = oracle.project(a), oracle.project(b)
    r = oracle.project(x[left_opposite(mesh)])
    mu = oracle.edge_conormal(pa, pb, r, xc)
    t = oracle.edge_tangent(pa, pb, xc)
    nu = oracle.normal(xc)
    mu = np.broadcast_to(mu[:, None, :] if mu.ndim == 2 else mu, xc.shape)
    mb = mu_bar[:, None, :]
    tt = np.abs(np.sum(mb * t, axis=-1))
    tn = np.abs(np.sum(mb * nu, axis=-1))
    dot = np.sum(mb * mu, axis=-1)
    return float(tt.max()), float(tn.max()), float(np.abs(dot - 1.0).max()), float(dot.min())


def flux_parts(u, v, means, flux: FluxField, lam=None):
    """Central and viscous parts of the Lax-Friedrichs flux, kept separate."""
    lam = flux.lam if lam is None else lam
    central = 0.0
    for k, term in enumerate(flux.terms):
        phi = term.coefficient.phi
        central = central + 0.5 * (phi(u) + phi(v)) * means[..., k]
    return central, lam * (u - v)


def max_flux_difference(mesh: TriMesh, flux: FluxField, oracle=UNIT_SPHERE, box=(0.0, 1.0),
                        n_pairs=16, seed=0, edge_order=3) -> float:
    """``max |g_curved(u, v) - g_flat(u, v)|`` over edges and sampled states."""
    x = np.asarray(mesh.vertices)
    mc = curved_means_at(mesh, flux, x, oracle)
    mf = flat_means_at(mesh, flux, x, interval_rule(edge_order))
    rng = np.random.default_rng(seed)
    lo, hi = box
    pairs = np.vstack([rng.uniform(lo, hi, size=(n_pairs, 2)), [[lo, lo], [hi, hi], [lo, hi], [hi, lo]]])
    worst = 0.0
    for u, v in pairs:
        cc, dc = flux_parts(u, v, mc, flux)
        cf, df = flux_parts(u, v, mf, flux)
        diff = (cc - cf) + (dc - df)
        worst = max(worst, float(np.max(np.abs(diff))))
    return worst


def material_cell_areas(mesh: TriMesh, motion: SurfaceMotion, t, oracle=UNIT_SPHERE, eps=1e-4):
    """Areas of the images of the initial curved cells under the motion.

    The initial curved cell is parametrised over its flat chord triangle by
    radial projection and then moved; the area element comes from central
    differences of the composite map, integrated by the degree-5 rule on
    four sub-triangles.
    """
    P0, P1, P2 = mesh.cell_points()
    rule = triangle_rule(5)
    # barycentric nodes on four sub-triangles
    from .geometry import subdivide_barycentric

    sub = subdivide_barycentric(1)
    lam = np.einsum("kc,scd->skd", rule.nodes, sub).reshape(-1, 3)
    w = np.tile(rule.weights, len(sub)) / len(sub)
    e1, e2 = P1 - P0, P2 - P0

    def phi(s, r):
        xb = P0[:, None] + s[None, :, None] * e1[:, None] + r[None, :, None] * e2[:, None]
        y = oracle.project(xb)
        return y if t == 0 else motion.move(y.reshape(-1, 3), t).reshape(y.shape)

    s, r = lam[:, 1], lam[:, 2]
    ds = (phi(s + eps, r) - phi(s - eps, r)) / (2 * eps)
    dr = (phi(s, r + eps) - phi(s, r - eps)) / (2 * eps)
    # area of the parameter triangle is 1/2
    return 0.5 * np.einsum("q,mq->m", w, np.linalg.norm(np.cross(ds, dr), axis=-1))


def quotient_errors(mesh: TriMesh, motion: SurfaceMotion, times, oracle=UNIT_SPHERE):
    """Maxima over cells and steps of the two area-quotient errors.

    ``q1 = | |K_n|/|Kb_n| - |K_n+1|/|Kb_n+1| |`` and
    ``q2 = | (|Kb_n|/|Kb_n+1|) (|K_n+1|/|K_n|) - 1 |`` with ``K`` the moving
    curved cell and ``Kb`` the flat cell through the moved vertices.
    """
    times = np.asarray(times, dtype=float)
    q1 = q2 = 0.0
    prev = None
    for t in times:
        if motion.is_static and prev is not None:
            cur = prev
        else:
            flat = cell_geometry(mesh, positions_at(mesh, motion, t)).area
            curved = material_cell_areas(mesh, motion, t, oracle)
            cur = (curved, flat)
        if prev is not None:
            (c0, f0), (c1, f1) = prev, cur
            q1 = max(q1, float(np.max(np.abs(c0 / f0 - c1 / f1))))
            q2 = max(q2, float(np.max(np.abs((f0 / f1) * (c1 / c0) - 1.0))))
        prev = cur
    return q1, q2


# --------------------------------------------------------------------------
# reports over refinement families


def normal_deviation(meshes, oracle=UNIT_SPHERE) -> OrderReport:
    vals = [max_normal_deviation(m, oracle) for m in meshes]
    return OrderReport("normal deviation", _widths(meshes), vals, 1.0, _levels(meshes))


def surface_distance(meshes, oracle=UNIT_SPHERE) -> OrderReport:
    vals = [max_surface_distance(m, oracle) for m in meshes]
    return OrderReport("distance to surface", _widths(meshes), vals, 2.0, _levels(meshes))


def length_area_ratios(meshes, oracle=UNIT_SPHERE):
    vals = np.array([max_ratio_deviations(m, oracle) for m in meshes])
    h, lev = _widths(meshes), _levels(meshes)
    return (OrderReport("edge length ratio", h, vals[:, 0], 2.0, lev),
            OrderReport("cell area ratio", h, vals[:, 1], 2.0, lev))


def conormal_estimates(meshes, oracle=UNIT_SPHERE):
    vals = np.array([max_conormal_errors(m, oracle) for m in meshes])
    h, lev = _widths(meshes), _levels(meshes)
    return (OrderReport("conormal vs tangent", h, vals[:, 0], 2.0, lev),
            OrderReport("conormal vs normal", h, vals[:, 1], 1.0, lev),
            OrderReport("conormal vs curved conormal", h, vals[:, 2], 2.0, lev))


def flux_difference(meshes, flux: FluxField, oracle=UNIT_SPHERE, box=(0.0, 1.0), seed=0) -> OrderReport:
    vals = [max_flux_difference(m, flux, oracle, box, seed=seed) for m in meshes]
    return OrderReport(f"flux difference ({flux.kind}, lambda={flux.lam:g})",
                       _widths(meshes), vals, 2.0, _levels(meshes))


def quotient_lemma(meshes, motion: SurfaceMotion, dt_fixed, mesh_fixed: TriMesh, dts, oracle=UNIT_SPHERE):
    """Two one-dimensional sweeps of the area-quotient errors.

    Returns four reports: ``q1`` and ``q2`` against ``h`` at step
    ``dt_fixed``, then against ``dt`` on ``mesh_fixed``.  The time grid
    covers ``[0, motion.time_horizon]``.
    """
    T = motion.time_horizon

    def grid(dt):
        n = max(1, int(round(T / dt)))
        return np.linspace(0.0, T, n + 1)

    hv = np.array([quotient_errors(m, motion, grid(dt_fixed), oracle) for m in meshes])
    tv = np.array([quotient_errors(mesh_fixed, motion, grid(dt), oracle) for dt in dts])
    h, lev = _widths(meshes), _levels(meshes)
    dts = np.asarray(dts, dtype=float)
    return (OrderReport("area quotient q1 vs h", h, hv[:, 0], 1.0, lev),
            OrderReport("area quotient q2 vs h", h, hv[:, 1], 1.0, lev),
            OrderReport("area quotient q1 vs dt", dts, tv[:, 0], 1.0, list(range(len(dts))), "dt"),
            OrderReport("area quotient q2 vs dt", dts, tv[:, 1], 1.0, list(range(len(dts))), "dt"))
