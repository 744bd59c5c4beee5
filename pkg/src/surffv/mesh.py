"""Closed triangulated surfaces with fixed topology.

A :class:`TriMesh` stores reference vertex positions (time ``t = 0``), the
triangles and an explicit edge list.  Only vertex positions change under a
surface motion; the connectivity is frozen at construction.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, GeometryError, ParameterError

log = logging.getLogger(__name__)

MAX_ICOSPHERE_LEVEL = 9


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TriMesh:
    """Triangle mesh of a closed orientable surface.

    Attributes
    ----------
    vertices : (N, 3) float array
        Reference positions.
    triangles : (M, 3) int array
        Consistently oriented vertex triples.
    edges : (E, 2) int array
        ``edges[e] = (a, b)`` where the left cell traverses ``a -> b``.
    left, right : (E,) int arrays
        Incident cells; the right cell traverses the edge ``b -> a``.
    cell_edges : (M, 3) int array
        Local edge ``j`` of cell ``K`` runs from ``triangles[K, j]`` to
        ``triangles[K, (j + 1) % 3]``.
    cell_edge_sign : (M, 3) float array
        ``+1`` if the cell is the left cell of that edge, ``-1`` otherwise.
    level : int
        Number of uniform refinements applied to the macro mesh.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    left: np.ndarray
    right: np.ndarray
    cell_edges: np.ndarray
    cell_edge_sign: np.ndarray
    level: int = 0
    _neighbors: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def n_cells(self) -> int:
        return len(self.triangles)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def neighbors(self) -> np.ndarray:
        """(M, 3) index of the cell across each local edge."""
        return self._neighbors

    def cell_points(self, positions=None):
        """Return the three corner arrays ``(P0, P1, P2)`` of all cells."""
        x = self.vertices if positions is None else positions
        t = self.triangles
        return x[t[:, 0]], x[t[:, 1]], x[t[:, 2]]

    def with_vertices(self, vertices) -> "TriMesh":
        """Same topology, new reference positions."""
        return TriMesh.from_triangles(vertices, self.triangles, level=self.level, orient=False)

    @classmethod
    def from_triangles(cls, vertices, triangles, level=0, orient=True) -> "TriMesh":
        """Build a mesh from raw arrays.

        With ``orient=True`` the triangle orientation is made consistent by a
        breadth-first sweep from cell 0 and flipped globally so that the
        enclosed signed volume is positive (outward normals).
        """
        vertices = np.asarray(vertices, dtype=float)
        triangles = np.asarray(triangles, dtype=np.int64).copy()
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise ParameterError("triangles must have shape (M, 3)")
        if orient:
            triangles = orient_consistently(triangles)
            if signed_volume(vertices, triangles) < 0:
                triangles = triangles[:, [0, 2, 1]]
        edges, left, right, cell_edges, cell_sign = _build_edges(triangles, len(vertices))
        nbr = np.where(cell_sign > 0, right[cell_edges], left[cell_edges])
        return cls(
            _readonly(vertices),
            _readonly(triangles),
            _readonly(edges),
            _readonly(left),
            _readonly(right),
            _readonly(cell_edges),
            _readonly(cell_sign),
            level,
            _readonly(nbr),
        )


def _half_edges(triangles):
    a = triangles.reshape(-1)
    b = np.roll(triangles, -1, axis=1).reshape(-1)
    return a, b


def _build_edges(triangles, n_vertices):
    m = len(triangles)
    a, b = _half_edges(triangles)
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    key = lo * n_vertices + hi
    order = np.argsort(key, kind="stable")
    ks = key[order]
    if len(ks) % 2 or not np.all(ks[0::2] == ks[1::2]):
        raise GeometryError("mesh is not closed: some edge lacks exactly two cells")
    if len(ks) > 2 and np.any(ks[2::2] == ks[1:-1:2]):
        raise GeometryError("non-manifold edge with more than two cells")
    h0 = order[0::2]
    h1 = order[1::2]
    # the left half-edge runs lo -> hi
    fwd0 = a[h0] < b[h0]
    fwd1 = a[h1] < b[h1]
    if np.any(fwd0 == fwd1):
        bad = int(h0[np.argmax(fwd0 == fwd1)] // 3)
        raise GeometryError("inconsistent triangle orientation", bad)
    left_h = np.where(fwd0, h0, h1)
    right_h = np.where(fwd0, h1, h0)
    n_e = len(h0)
    edges = np.stack([a[left_h], b[left_h]], axis=1)
    left = left_h // 3
    right = right_h // 3
    cell_edges = np.empty(3 * m, dtype=np.int64)
    cell_sign = np.empty(3 * m, dtype=float)
    eid = np.arange(n_e)
    cell_edges[left_h] = eid
    cell_edges[right_h] = eid
    cell_sign[left_h] = 1.0
    cell_sign[right_h] = -1.0
    return edges, left, right, cell_edges.reshape(m, 3), cell_sign.reshape(m, 3)


def orient_consistently(triangles):
    """Flip triangles so every edge is traversed in opposite directions.

    Breadth-first propagation from cell 0; raises :class:`GeometryError` for
    non-orientable input.
    """
    tri = np.array(triangles, dtype=np.int64, copy=True)
    m = len(tri)
    adjacency = {}
    for c in range(m):
        for j in range(3):
            u, v = tri[c, j], tri[c, (j + 1) % 3]
            adjacency.setdefault((min(u, v), max(u, v)), []).append(c)
    done = np.zeros(m, dtype=bool)
    for seed in range(m):
        if done[seed]:
            continue
        done[seed] = True
        queue = deque([seed])
        while queue:
            c = queue.popleft()
            for j in range(3):
                u, v = tri[c, j], tri[c, (j + 1) % 3]
                for d in adjacency[(min(u, v), max(u, v))]:
                    if d == c:
                        continue
                    # d must traverse v -> u
                    same = any(tri[d, k] == u and tri[d, (k + 1) % 3] == v for k in range(3))
                    if done[d]:
                        if same:
                            raise GeometryError("surface is not orientable", d)
                        continue
                    if same:
                        tri[d] = tri[d, [0, 2, 1]]
                    done[d] = True
                    queue.append(d)
    return tri


def signed_volume(vertices, triangles):
    p0, p1, p2 = (vertices[triangles[:, k]] for k in range(3))
    return float(np.einsum("ij,ij->i", p0, np.cross(p1, p2)).sum() / 6.0)


def check_structure(mesh: TriMesh) -> None:
    """Re-derive edges from the triangles and compare; raises on mismatch."""
    edges, left, right, _, _ = _build_edges(np.asarray(mesh.triangles), mesh.n_vertices)
    if len(edges) != mesh.n_edges:
        raise GeometryError("edge count mismatch")
    chi = mesh.n_vertices - mesh.n_edges + mesh.n_cells
    if chi % 2:
        raise GeometryError(f"odd Euler characteristic {chi}")


# --------------------------------------------------------------------------
# construction

def _icosahedron():
    r = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, r, 0], [1, r, 0], [-1, -r, 0], [1, -r, 0],
            [0, -1, r], [0, 1, r], [0, -1, -r], [0, 1, -r],
            [r, 0, -1], [r, 0, 1], [-r, 0, -1], [-r, 0, 1],
        ],
        dtype=float,
    )
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ]
    )
    return radial_projection(v), f


def radial_projection(x, radius=1.0):
    """Scale points onto the sphere of the given radius about the origin."""
    x = np.asarray(x, dtype=float)
    return radius * x / np.linalg.norm(x, axis=-1, keepdims=True)


def refine(mesh: TriMesh, project=None) -> TriMesh:
    """Split each triangle into four at the edge midpoints.

    ``project`` maps an (n, 3) array of new vertex positions onto the
    surface, e.g. :func:`radial_projection` for the unit sphere.
    """
    x = np.asarray(mesh.vertices)
    e = np.asarray(mesh.edges)
    mid = 0.5 * (x[e[:, 0]] + x[e[:, 1]])
    if project is not None:
        mid = project(mid)
    n = mesh.n_vertices
    t = np.asarray(mesh.triangles)
    m = n + np.asarray(mesh.cell_edges)  # midpoint of local edge j
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    mab, mbc, mca = m[:, 0], m[:, 1], m[:, 2]
    new = np.concatenate(
        [
            np.stack([a, mab, mca], 1),
            np.stack([mab, b, mbc], 1),
            np.stack([mca, mbc, c], 1),
            np.stack([mab, mbc, mca], 1),
        ]
    )
    return TriMesh.from_triangles(np.vstack([x, mid]), new, level=mesh.level + 1, orient=False)


def build_icosphere(level: int) -> TriMesh:
    """Unit icosphere refined ``level`` times (``20 * 4**level`` triangles)."""
    if level < 0:
        raise ParameterError("level must be non-negative")
    if level > MAX_ICOSPHERE_LEVEL:
        raise CapacityError(f"icosphere level {level} exceeds maximum {MAX_ICOSPHERE_LEVEL}")
    v, f = _icosahedron()
    mesh = TriMesh.from_triangles(v, f)
    for _ in range(level):
        mesh = refine(mesh, radial_projection)
    return mesh


def icosphere_family(levels):
    """Meshes for each requested level, built by successive refinement."""
    levels = sorted(levels)
    out = {}
    mesh = build_icosphere(levels[0])
    out[levels[0]] = mesh
    for lv in range(levels[0] + 1, levels[-1] + 1):
        if lv > MAX_ICOSPHERE_LEVEL:
            raise CapacityError(f"icosphere level {lv} exceeds maximum {MAX_ICOSPHERE_LEVEL}")
        mesh = refine(mesh, radial_projection)
        if lv in levels:
            out[lv] = mesh
    return [out[lv] for lv in levels]


def build_torus(major_radius: float, minor_radius: float, resolution=(64, 32)) -> TriMesh:
    """Structured torus about the x3-axis with vertices exactly on the surface."""
    R, r = float(major_radius), float(minor_radius)
    n, m = (int(k) for k in resolution)
    if not 0 < r < R:
        raise ParameterError("torus radii must satisfy 0 < minor < major")
    if n < 4 or m < 4:
        raise ParameterError("torus resolution must be at least 4 in each direction")
    theta = 2 * np.pi * np.arange(n) / n
    phi = 2 * np.pi * np.arange(m) / m
    T, P = np.meshgrid(theta, phi, indexing="ij")
    rho = R + r * np.cos(P)
    v = np.stack([rho * np.cos(T), rho * np.sin(T), r * np.sin(P)], axis=-1).reshape(-1, 3)
    i, j = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
    v00 = (i * m + j).ravel()
    v10 = (((i + 1) % n) * m + j).ravel()
    v01 = (i * m + (j + 1) % m).ravel()
    v11 = (((i + 1) % n) * m + (j + 1) % m).ravel()
    tri = np.concatenate([np.stack([v00, v10, v11], 1), np.stack([v00, v11, v01], 1)])
    return TriMesh.from_triangles(v, tri)


# --------------------------------------------------------------------------
# regularity

@dataclass(frozen=True)
class MeshQuality:
    """Regularity of a flat triangulation.

    ``alpha`` is the largest constant with ``alpha * h_K**2 <= |K|`` and
    ``alpha * |dK| <= h_K`` on every cell; ``h`` is the longest edge.
    """

    alpha: float
    h: float
    per_cell_diameters: np.ndarray
    per_cell_alpha: np.ndarray


def mesh_quality(mesh: TriMesh, positions=None) -> MeshQuality:
    p0, p1, p2 = mesh.cell_points(positions)
    l0 = np.linalg.norm(p1 - p0, axis=1)
    l1 = np.linalg.norm(p2 - p1, axis=1)
    l2 = np.linalg.norm(p0 - p2, axis=1)
    diam = np.maximum(np.maximum(l0, l1), l2)
    area = 0.5 * np.linalg.norm(np.cross(p1 - p0, p2 - p0), axis=1)
    bad = np.flatnonzero(area <= 1e-14 * np.maximum(diam, 1e-300) ** 2)
    if len(bad):
        raise GeometryError("degenerate triangle", int(bad[0]))
    a_cell = np.minimum(area / diam**2, diam / (l0 + l1 + l2))
    return MeshQuality(float(a_cell.min()), float(diam.max()), diam, a_cell)
