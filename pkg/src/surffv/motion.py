"""Prescribed surface motions in Lagrangian form.

A motion maps reference vertex positions (time 0) to positions at time
``t``; the mesh topology never changes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ParameterError
from .mesh import radial_projection
from .sphere import SphereSurface


@dataclass(frozen=True)
class SurfaceMotion:
    """Vertex trajectories ``x -> move(x, t)`` with ``move(x, 0) == x``.

    ``sphere`` is set when every ``Gamma(t)`` is a sphere, which makes the
    curved scheme available.  ``max_speed`` bounds vertex velocities.
    """

    move: Callable[[np.ndarray, float], np.ndarray]
    time_horizon: float
    max_speed: float = 0.0
    is_static: bool = False
    sphere: Optional[SphereSurface] = None
    name: str = ""

    def __call__(self, x, t):
        return self.move(x, t)


def positions_at(mesh, motion: SurfaceMotion, t: float):
    if not -1e-12 <= t <= motion.time_horizon * (1 + 1e-12) + 1e-12:
        raise ParameterError(f"time {t} outside [0, {motion.time_horizon}]")
    if motion.is_static or t == 0:
        return np.asarray(mesh.vertices)
    return motion.move(np.asarray(mesh.vertices), t)


def identity(T=1.0, sphere: Optional[SphereSurface] = None) -> SurfaceMotion:
    return SurfaceMotion(lambda x, t: np.asarray(x), T, 0.0, True, sphere, "identity")


def scaled_sphere(radius_fn: Callable[[float], float], T=1.0, max_speed=1.0) -> SurfaceMotion:
    """Uniform scaling of a sphere about the origin, ``x -> R(t)/R(0) x``."""
    r0 = float(radius_fn(0.0))

    def move(x, t):
        if t == 0:
            return np.asarray(x)
        return (radius_fn(t) / r0) * np.asarray(x)

    return SurfaceMotion(move, T, max_speed, False, SphereSurface(radius_fn=radius_fn), "scaled_sphere")


def _ramp(t):
    return 0.5 * (1.0 - np.cos(np.pi * min(t, 2.0) / 2.0))


def _squeeze(x, beta, gamma, sharpness=3.0):
    x = np.array(x, dtype=float, copy=True)
    x[..., 0] = x[..., 0] * (1.0 - beta * gamma * np.tanh(sharpness * x[..., 0]))
    return x


def torus_deformation(t, gamma=0.4):
    """Point map at time ``t``: compress ``x1 > 0``, stretch ``x1 < 0``.

    The deformation ramps up smoothly on [0, 2] and is frozen afterwards.
    """
    beta = _ramp(t)
    return lambda x: _squeeze(x, beta, gamma)


def deforming_torus(T=4.0, gamma=0.4) -> SurfaceMotion:
    def move(x, t):
        if t == 0:
            return np.asarray(x)
        return _squeeze(x, _ramp(t), gamma)

    # |d/dt x1| <= |x1| * gamma * |beta'| with |x1| <= 1.4 * (1 + gamma)
    speed = 1.4 * (1 + gamma) * gamma * np.pi / 4
    return SurfaceMotion(move, T, speed, False, None, "deforming_torus")


def squeezed_sphere(radius_fn: Callable[[float], float] = lambda t: 1.0 + 0.5 * t,
                    T=1.0, gamma=0.4, rate=1.0) -> SurfaceMotion:
    """Non-uniform motion keeping ``Gamma(t)`` a sphere of radius ``R(t)``.

    Vertices are squeezed along ``x1`` with strength ``gamma * rate * t``
    and pushed back radially, so cells change shape while the surface stays
    spherical and its exact geometry remains available.
    """
    r0 = float(radius_fn(0.0))

    def move(x, t):
        if t == 0:
            return np.asarray(x)
        beta = min(rate * t, 1.0)
        return radial_projection(_squeeze(np.asarray(x) / r0, beta, gamma), radius_fn(t))

    return SurfaceMotion(move, T, 2.0, False, SphereSurface(radius_fn=radius_fn), "squeezed_sphere")


def jacobian_determinant(move, x, t, eps=1e-6):
    """Central-difference Jacobian determinant of ``move(., t)`` at points ``x``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    J = np.empty(x.shape + (3,))
    for k in range(3):
        d = np.zeros(3)
        d[k] = eps
        J[..., k] = (move(x + d, t) - move(x - d, t)) / (2 * eps)
    return np.linalg.det(J)
