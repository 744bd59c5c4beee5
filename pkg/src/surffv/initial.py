"""Initial data and their cell means on flat and curved cells."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import cell_points, subdivide_barycentric, triangle_area, triangle_rule


@dataclass(frozen=True)
class HalfSpaceIndicator:
    """``inside_value`` where ``<x, normal> > offset``, ``outside_value`` elsewhere.

    Cell means of indicators are computed by exact clipping rather than by
    quadrature.
    """

    normal: tuple = (1.0, 0.0, 0.0)
    offset: float = 0.15
    inside_value: float = 1.0
    outside_value: float = 0.0

    def __call__(self, x):
        s = np.asarray(x, dtype=float) @ np.asarray(self.normal, dtype=float)
        return np.where(s > self.offset, self.inside_value, self.outside_value)


def flat_halfspace_fractions(P0, P1, P2, normal, offset):
    """Area fraction of each flat triangle with ``<x, normal> > offset``."""
    n = np.asarray(normal, dtype=float)
    s = np.stack([P @ n - offset for P in (P0, P1, P2)], axis=1)
    inside = s > 0
    k = inside.sum(axis=1)
    frac = (k == 3).astype(float)
    pts = np.stack([P0, P1, P2], axis=1)
    for c in np.flatnonzero((k == 1) | (k == 2)):
        # the lone vertex sits on one side; the cut off corner is a triangle
        lone = int(np.flatnonzero(inside[c] if k[c] == 1 else ~inside[c])[0])
        i, j = (lone + 1) % 3, (lone + 2) % 3
        si, sj, sl = s[c, i], s[c, j], s[c, lone]
        ti = sl / (sl - si)
        tj = sl / (sl - sj)
        corner = ti * tj  # area ratio of the clipped corner triangle
        frac[c] = corner if k[c] == 1 else 1.0 - corner
    return frac


def flat_cell_means(u0, P0, P1, P2, rule=None, depth=0):
    """``Q_K(u0) / |K|`` with ``u0`` evaluated at flat points.

    ``depth`` applies the rule on ``4**depth`` uniform sub-triangles.
    Half-space indicators are integrated exactly.
    """
    if isinstance(u0, HalfSpaceIndicator):
        frac = flat_halfspace_fractions(P0, P1, P2, u0.normal, u0.offset)
        return u0.outside_value + (u0.inside_value - u0.outside_value) * frac
    rule = triangle_rule(2) if rule is None else rule
    if depth == 0:
        x = cell_points(rule, P0, P1, P2)
        return u0(x) @ rule.weights
    sub = subdivide_barycentric(depth)
    lam = np.einsum("kc,scd->skd", rule.nodes, sub).reshape(-1, 3)
    w = np.tile(rule.weights, len(sub)) / len(sub)
    x = lam[:, 0, None] * P0[:, None] + lam[:, 1, None] * P1[:, None] + lam[:, 2, None] * P2[:, None]
    return u0(x) @ w


def constant(value):
    def u0(x):
        return np.full(np.shape(x)[:-1], float(value))

    return u0
