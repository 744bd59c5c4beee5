"""Computable geometry of the polyhedral surface.

Everything here uses only vertex positions: flat areas and lengths, cell
normals, averaged edge conormals and affine quadrature on edges, cells and
time intervals.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .errors import GeometryError, ParameterError


def cross(a, b):
    """Cross product over the last axis; faster than ``np.cross`` for small rows."""
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


def _length(v):
    return np.sqrt(np.einsum("...i,...i->...", v, v))


def triangle_area(p0, p1, p2):
    """Area of the flat triangle(s) with the given corners (broadcasts)."""
    p0, p1, p2 = (np.asarray(p, dtype=float) for p in (p0, p1, p2))
    a = 0.5 * np.linalg.norm(np.cross(p1 - p0, p2 - p0), axis=-1)
    return float(a) if a.ndim == 0 else a


def _unit(v, what="vector"):
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n == 0):
        idx = int(np.flatnonzero(n.reshape(-1) == 0)[0])
        raise GeometryError(f"zero-length {what}", idx)
    return v / n


# --------------------------------------------------------------------------
# per-cell and per-edge quantities


@dataclass(frozen=True)
class CellGeometry:
    """Flat cell data for every cell of a mesh at one time."""

    area: np.ndarray
    normal: np.ndarray
    barycenter: np.ndarray
    diameter: np.ndarray


@dataclass(frozen=True)
class EdgeGeometry:
    """Flat edge data for every edge; conormals belong to the left cell.

    The right cell uses ``-conormal`` so fluxes cancel bit for bit.
    """

    length: np.ndarray
    midpoint: np.ndarray
    tangent: np.ndarray
    conormal: np.ndarray


class FlatEdgeGeom(NamedTuple):
    length: float
    midpoint: np.ndarray
    conormal_left: np.ndarray
    conormal_right: np.ndarray


def cell_geometry(mesh, positions=None) -> CellGeometry:
    p0, p1, p2 = mesh.cell_points(positions)
    c = cross(p1 - p0, p2 - p0)
    norm = _length(c)
    diam = np.max(
        np.stack(
            [
                _length(p1 - p0),
                _length(p2 - p1),
                _length(p0 - p2),
            ]
        ),
        axis=0,
    )
    bad = np.flatnonzero(norm <= 1e-14 * diam**2)
    if len(bad):
        raise GeometryError("zero-area cell", int(bad[0]))
    return CellGeometry(0.5 * norm, c / norm[:, None], (p0 + p1 + p2) / 3.0, diam)


def cell_normal(mesh, cell, positions=None):
    """Unit normal of one cell from the cross product in stored vertex order."""
    x = mesh.vertices if positions is None else positions
    p0, p1, p2 = x[mesh.triangles[cell]]
    c = np.cross(p1 - p0, p2 - p0)
    n = np.linalg.norm(c)
    if n <= 1e-14 * max(np.linalg.norm(p1 - p0), np.linalg.norm(p2 - p0)) ** 2:
        raise GeometryError("zero-area cell", int(cell))
    return c / n


def edge_geometry(mesh, positions=None, cells: CellGeometry | None = None) -> EdgeGeometry:
    """Lengths, midpoints and averaged conormals of all edges.

    The conormal of the left cell is the mean of ``nu_K x t`` and
    ``nu_Ke x t`` with the unit tangent ``t`` signed so that ``nu_K x t``
    points away from the barycenter of the left cell.  It is not
    renormalised.
    """
    x = mesh.vertices if positions is None else positions
    if cells is None:
        cells = cell_geometry(mesh, x)
    e = mesh.edges
    a, b = x[e[:, 0]], x[e[:, 1]]
    d = b - a
    length = _length(d)
    if np.any(length == 0):
        raise GeometryError("zero-length edge", int(np.flatnonzero(length == 0)[0]))
    t = d / length[:, None]
    mid = 0.5 * (a + b)
    nl = cells.normal[mesh.left]
    nr = cells.normal[mesh.right]
    cl = cross(nl, t)
    outward = np.einsum("ij,ij->i", cl, mid - cells.barycenter[mesh.left])
    s = np.where(outward >= 0, 1.0, -1.0)[:, None]
    t = s * t
    mu = 0.5 * (cross(nl, t) + cross(nr, t))
    return EdgeGeometry(length, mid, t, mu)


def averaged_conormal(mesh, edge, positions=None) -> FlatEdgeGeom:
    """Averaged conormal of a single edge, seen from its left cell."""
    x = mesh.vertices if positions is None else positions
    K, Ke = mesh.left[edge], mesh.right[edge]
    a, b = x[mesh.edges[edge]]
    nK = cell_normal(mesh, K, x)
    nKe = cell_normal(mesh, Ke, x)
    length = float(np.linalg.norm(b - a))
    if length == 0:
        raise GeometryError("zero-length edge", int(edge))
    t = (b - a) / length
    mid = 0.5 * (a + b)
    bary = x[mesh.triangles[K]].mean(axis=0)
    if np.dot(np.cross(nK, t), mid - bary) < 0:
        t = -t
    mu = 0.5 * (np.cross(nK, t) + np.cross(nKe, t))
    return FlatEdgeGeom(length, mid, mu, -mu)


# --------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureRule:
    """Reference rule with weights summing to one.

    ``nodes`` are interval coordinates in [0, 1] (shape ``(k,)``) or
    barycentric triples (shape ``(k, 3)``).  ``order`` is the polynomial
    degree integrated exactly.
    """

    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def __post_init__(self):
        if self.order < 1:
            raise ParameterError("quadrature order must be at least 1")


@lru_cache(maxsize=None)
def interval_rule(order: int = 3) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1] exact up to the requested degree."""
    if order < 1:
        raise ParameterError("quadrature order must be at least 1")
    k = (order + 2) // 2
    x, w = np.polynomial.legendre.leggauss(k)
    return QuadratureRule(0.5 * (x + 1.0), 0.5 * w, 2 * k - 1)


_TRI_RULES = {}


def _register_triangle_rules():
    _TRI_RULES[1] = (np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0]))
    _TRI_RULES[2] = (
        np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]),
        np.full(3, 1 / 3),
    )
    # Strang-Fix / Cowper 6-point, degree 4
    a, b = 0.445948490915965, 0.091576213509771
    wa, wb = 0.223381589678011, 0.109951743655322
    nodes4 = []
    w4 = []
    for p, wp in ((a, wa), (b, wb)):
        q = 1 - 2 * p
        nodes4 += [[p, p, q], [p, q, p], [q, p, p]]
        w4 += [wp] * 3
    _TRI_RULES[4] = (np.array(nodes4), np.array(w4))
    # Radon 7-point, degree 5
    s15 = np.sqrt(15.0)
    a1 = (6 - s15) / 21
    a2 = (6 + s15) / 21
    w1 = (155 - s15) / 1200
    w2 = (155 + s15) / 1200
    nodes5 = [[1 / 3, 1 / 3, 1 / 3]]
    w5 = [9 / 40]
    for p, wp in ((a1, w1), (a2, w2)):
        q = 1 - 2 * p
        nodes5 += [[p, p, q], [p, q, p], [q, p, p]]
        w5 += [wp] * 3
    _TRI_RULES[5] = (np.array(nodes5), np.array(w5))


_register_triangle_rules()


@lru_cache(maxsize=None)
def triangle_rule(order: int = 2) -> QuadratureRule:
    """Symmetric rule on the reference triangle exact up to ``order`` (<= 5)."""
    if order < 1:
        raise ParameterError("quadrature order must be at least 1")
    for p in sorted(_TRI_RULES):
        if p >= order:
            nodes, w = _TRI_RULES[p]
            return QuadratureRule(nodes, w / w.sum(), p)
    raise ParameterError(f"no triangle rule of order {order}")


def edge_points(rule: QuadratureRule, a, b):
    """Quadrature nodes on segment(s) ``a -> b``; shape ``(..., k, 3)``."""
    s = rule.nodes
    a = np.asarray(a, dtype=float)[..., None, :]
    b = np.asarray(b, dtype=float)[..., None, :]
    return a + s[:, None] * (b - a)


def cell_points(rule: QuadratureRule, p0, p1, p2):
    """Quadrature nodes on triangle(s); shape ``(..., k, 3)``."""
    lam = rule.nodes
    p0, p1, p2 = (np.asarray(p, dtype=float)[..., None, :] for p in (p0, p1, p2))
    return lam[:, 0, None] * p0 + lam[:, 1, None] * p1 + lam[:, 2, None] * p2


def quad_edge(rule: QuadratureRule, a, b, integrand) -> float:
    """Integral of ``integrand`` over the straight segment ``a -> b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    pts = edge_points(rule, a, b)
    vals = np.array([integrand(p) for p in pts])
    return float(np.linalg.norm(b - a) * np.dot(rule.weights, vals))


def quad_cell(rule: QuadratureRule, vertices, integrand) -> float:
    """Integral of ``integrand`` over the flat triangle with the given corners."""
    p0, p1, p2 = (np.asarray(v, dtype=float) for v in vertices)
    pts = cell_points(rule, p0, p1, p2)
    vals = np.array([integrand(p) for p in pts])
    return float(triangle_area(p0, p1, p2) * np.dot(rule.weights, vals))


def quad_time(rule: QuadratureRule, interval, integrand) -> float:
    """Integral of ``integrand(t)`` over ``interval = (t0, t1)``."""
    t0, t1 = interval
    ts = t0 + rule.nodes * (t1 - t0)
    vals = np.array([integrand(t) for t in ts])
    return float((t1 - t0) * np.dot(rule.weights, vals))


def subdivide_barycentric(depth: int):
    """Barycentric corners of the ``4**depth`` uniform sub-triangles.

    Returns an array of shape ``(4**depth, 3, 3)``: sub-triangle, corner,
    barycentric coordinate.
    """
    tris = np.eye(3)[None]
    for _ in range(depth):
        a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
        ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
        tris = np.concatenate(
            [
                np.stack([a, ab, ca], 1),
                np.stack([ab, b, bc], 1),
                np.stack([ca, bc, c], 1),
                np.stack([ab, bc, ca], 1),
            ]
        )
    return tris
