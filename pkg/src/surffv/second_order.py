"""Second-order flat scheme for stationary surfaces.

Cell-wise linear reconstruction in the plane of each flat cell, fitted by
least squares to the three edge neighbours, combined with Heun's two-stage
Runge-Kutta method.  Each stage is a first-order step with reconstructed
edge-midpoint traces in place of cell means, so conservation carries over.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedError
from .geometry import cell_geometry, edge_geometry
from .mesh import TriMesh
from .solver import CellField, StepContext, _check, _net_outflow, _update

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CellGradient:
    """Per-cell gradient in the plane of the cell, about its barycenter."""

    values: np.ndarray  # (M, 3)
    barycenter: np.ndarray  # (M, 3)


class LeastSquaresReconstruction:
    """Precomputed least-squares gradient weights of a fixed flat mesh.

    Parameters
    ----------
    mesh : TriMesh
    positions : array, optional
        Vertex positions; defaults to the mesh vertices.
    limit : bool
        Apply a Barth-Jespersen limiter so that the traces stay within the
        range of the cell and its neighbours.
    rcond : float
        Neighbourhoods whose normal matrix has a relative condition below
        this fall back to a zero gradient.
    """

    def __init__(self, mesh: TriMesh, positions=None, limit=False, rcond=1e-10):
        x = np.asarray(mesh.vertices if positions is None else positions, dtype=float)
        self.mesh = mesh
        self.limit = limit
        cg = cell_geometry(mesh, x)
        self.barycenter = cg.barycenter
        nu = cg.normal
        nbr = mesh.neighbors
        d = cg.barycenter[nbr] - cg.barycenter[:, None, :]  # (M, 3, 3)
        d = d - np.einsum("mji,mi->mj", d, nu)[..., None] * nu[:, None, :]
        # orthonormal basis of each cell plane
        e1 = x[mesh.triangles[:, 1]] - x[mesh.triangles[:, 0]]
        e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
        e2 = np.cross(nu, e1)
        D = np.stack([np.einsum("mji,mi->mj", d, e1), np.einsum("mji,mi->mj", d, e2)], axis=2)  # (M, 3, 2)
        N = np.einsum("mja,mjb->mab", D, D)
        sv = np.linalg.svd(N, compute_uv=False)
        bad = sv[:, -1] <= rcond * sv[:, 0]
        if np.any(bad):
            log.warning("rank-deficient neighbourhood in %d cells; using zero gradients", int(bad.sum()))
            N[bad] = np.eye(2)
        W = np.linalg.solve(N, np.transpose(D, (0, 2, 1)))  # (M, 2, 3)
        W[bad] = 0.0
        # gradient = B @ (u_nbr - u_K) with B mapping neighbour differences to 3D
        self.B = np.einsum("mai,mak->mik", np.stack([e1, e2], axis=1), W)  # (M, 3, 3)
        self.rank_deficient = bad
        # offsets from barycenters to edge midpoints, per side
        mid = edge_geometry(mesh, x, cg).midpoint
        self.offset_left = mid - cg.barycenter[mesh.left]
        self.offset_right = mid - cg.barycenter[mesh.right]
        # offsets to cell corners for the limiter
        self.corner_offset = x[mesh.triangles] - cg.barycenter[:, None, :]

    def gradients(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        du = values[self.mesh.neighbors] - values[:, None]
        g = np.einsum("mik,mk->mi", self.B, du)
        if self.limit:
            g = g * self._limiter(values, g)[:, None]
        return g

    def _limiter(self, values, g):
        nb = values[self.mesh.neighbors]
        hi = np.maximum(values, nb.max(axis=1))
        lo = np.minimum(values, nb.min(axis=1))
        delta = np.einsum("mci,mi->mc", self.corner_offset, g)
        with np.errstate(divide="ignore", invalid="ignore"):
            up = np.where(delta > 0, (hi - values)[:, None] / delta, np.inf)
            down = np.where(delta < 0, (lo - values)[:, None] / delta, np.inf)
        return np.clip(np.minimum(up, down).min(axis=1), 0.0, 1.0)

    def traces(self, values):
        """Reconstructed values at edge midpoints from the left and right cell."""
        values = np.asarray(values, dtype=float)
        g = self.gradients(values)
        m = self.mesh
        uL = values[m.left] + np.einsum("ei,ei->e", g[m.left], self.offset_left)
        uR = values[m.right] + np.einsum("ei,ei->e", g[m.right], self.offset_right)
        return uL, uR


def reconstruct(state: CellField, mesh: TriMesh | None = None, positions=None, limit=False) -> CellGradient:
    """Least-squares gradients of a cell field in the cell planes."""
    mesh = state.mesh if mesh is None else mesh
    rec = LeastSquaresReconstruction(mesh, positions, limit)
    return CellGradient(rec.gradients(state.values), rec.barycenter)


def _stage(values, ctx, flux, mesh, rec):
    traces = None if rec is None else rec.traces(values)
    return _update(values, ctx, _net_outflow(values, ctx, flux, mesh, traces))


def rk2_step(state: CellField, ctx: StepContext, flux, rec: LeastSquaresReconstruction | None, step=0) -> CellField:
    """Heun step ``u* = u + dt L(u)``, ``u_new = (u + u* + dt L(u*)) / 2``.

    With ``rec=None`` the first stage is the first-order flat step.
    """
    if not np.array_equal(ctx.areas_now, ctx.areas_next):
        raise UnsupportedError("the second-order scheme requires a stationary surface")
    u = state.values
    u1 = _stage(u, ctx, flux, state.mesh, rec)
    _check(u1, step)
    u2 = _stage(u1, ctx, flux, state.mesh, rec)
    values = 0.5 * (u + u2)
    _check(values, step)
    return CellField(values, state.time + ctx.dt, state.mesh)


def rk2_stepper(rec: LeastSquaresReconstruction | None):
    """Adapter for ``solver.run(stepper=...)``."""

    def stepper(state, ctx, flux, geometry, step):
        if geometry.scheme != "flat" or not geometry.motion.is_static:
            raise UnsupportedError("the second-order scheme supports only the flat scheme on static surfaces")
        return rk2_step(state, ctx, flux, rec, step)

    return stepper
