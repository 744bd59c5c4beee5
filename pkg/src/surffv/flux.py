"""Flux functions ``f(u, x, t)`` and the built-in test fluxes.

Every built-in flux is a finite sum ``sum_k phi_k(u) F_k(x)`` of a scalar
coefficient in the state times a vector field in space.  Keeping that
structure lets the solvers precompute the geometric factor of each term per
edge, and lets the curved scheme integrate fields that come with a stream
function ``h`` (``F = nu x grad h``) exactly from endpoint values.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ParameterError

TWO_PI = 2.0 * np.pi


def _norm(x):
    n = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise ParameterError("field undefined at the origin")
    return n


def field_V(x):
    """Rotation about the x3-axis, ``2 pi / |x| * (x2, -x1, 0)``."""
    x = np.asarray(x, dtype=float)
    n = _norm(x)
    out = np.stack([x[..., 1], -x[..., 0], np.zeros_like(x[..., 0])], axis=-1)
    return TWO_PI * out / n


def field_W(x):
    """Rotation about the x2-axis, ``2 pi / |x| * (-x3, 0, x1)``."""
    x = np.asarray(x, dtype=float)
    n = _norm(x)
    out = np.stack([-x[..., 2], np.zeros_like(x[..., 0]), x[..., 0]], axis=-1)
    return TWO_PI * out / n


def field_rot(x):
    """Unnormalised rotation ``(x2, -x1, 0)`` used on the torus."""
    x = np.asarray(x, dtype=float)
    return np.stack([x[..., 1], -x[..., 0], np.zeros_like(x[..., 0])], axis=-1)


def stream_V(x):
    return TWO_PI * np.asarray(x, dtype=float)[..., 2]


def stream_W(x):
    return TWO_PI * np.asarray(x, dtype=float)[..., 1]


@dataclass(frozen=True)
class StateFunction:
    """Scalar coefficient ``phi(u)`` with its derivative."""

    name: str
    phi: Callable
    dphi: Callable
    # sup |phi'| over [lo, hi]
    dphi_sup: Callable[[float, float], float]


ONE = StateFunction("1", lambda u: np.ones_like(np.asarray(u, dtype=float)),
                    lambda u: np.zeros_like(np.asarray(u, dtype=float)), lambda lo, hi: 0.0)
LINEAR = StateFunction("u", lambda u: np.asarray(u, dtype=float),
                       lambda u: np.ones_like(np.asarray(u, dtype=float)), lambda lo, hi: 1.0)
HALF_SQUARE = StateFunction("u^2/2", lambda u: 0.5 * np.asarray(u, dtype=float) ** 2,
                            lambda u: np.asarray(u, dtype=float),
                            lambda lo, hi: max(abs(lo), abs(hi)))


@dataclass(frozen=True)
class FluxTerm:
    """One summand ``phi(u) * F(x)``.

    ``field_sup`` bounds ``|F|`` on the working surface; ``stream`` is the
    optional stream function with ``F = nu x grad(stream)`` on the sphere.
    """

    coefficient: StateFunction
    field: Callable
    field_sup: float
    stream: Optional[Callable] = None


@dataclass(frozen=True)
class FluxField:
    """Flux ``f(u, x, t) = sum_k phi_k(u) F_k(x)`` plus Lax-Friedrichs data."""

    terms: Sequence[FluxTerm]
    lam: float
    du_bound: float
    state_range: tuple = (0.0, 1.0)
    kind: str = ""

    def eval(self, u, x, t=0.0):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        out = np.zeros(np.broadcast_shapes(u.shape, x.shape[:-1]) + (3,))
        for term in self.terms:
            out = out + np.asarray(term.coefficient.phi(u))[..., None] * term.field(x)
        return out

    def du(self, u, x, t=0.0):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        out = np.zeros(np.broadcast_shapes(u.shape, x.shape[:-1]) + (3,))
        for term in self.terms:
            out = out + np.asarray(term.coefficient.dphi(u))[..., None] * term.field(x)
        return out

    @property
    def has_stream(self) -> bool:
        return all(t.stream is not None for t in self.terms)

    @property
    def u_independent(self) -> bool:
        return all(t.coefficient is ONE for t in self.terms)

    def du_bound_over(self, lo, hi, field_sups=None) -> float:
        """``sum_k sup|phi_k'| sup|F_k|`` over the state interval ``[lo, hi]``."""
        sups = [t.field_sup for t in self.terms] if field_sups is None else field_sups
        return float(sum(t.coefficient.dphi_sup(lo, hi) * s for t, s in zip(self.terms, sups)))

    @property
    def lipschitz(self) -> float:
        """Lipschitz constant of the Lax-Friedrichs flux in each argument."""
        return self.lam + 0.5 * self.du_bound

    def with_lambda(self, lam) -> "FluxField":
        if lam < 0:
            raise ParameterError("lambda must be non-negative")
        return replace(self, lam=float(lam))


_KINDS = {
    "stationary_V": [(ONE, field_V, TWO_PI, stream_V)],
    "linear_W": [(LINEAR, field_W, TWO_PI, stream_W)],
    "linear_V": [(LINEAR, field_V, TWO_PI, stream_V)],
    "burgers_V": [(HALF_SQUARE, field_V, TWO_PI, stream_V)],
    "two_dim": [(LINEAR, field_V, TWO_PI, stream_V), (HALF_SQUARE, field_W, TWO_PI, stream_W)],
    # sup |(x2, -x1, 0)| on the undeformed torus R = 1, r = 0.4
    "torus_burgers": [(HALF_SQUARE, field_rot, 1.4, None)],
}

FLUX_KINDS = tuple(_KINDS)


def make_flux(kind: str, lambda_override: float | None = None, state_range=(0.0, 1.0),
              inflate: bool = False, field_sup: float | None = None) -> FluxField:
    """Build one of the built-in fluxes.

    ``du_bound`` is evaluated over ``state_range``; with ``inflate`` the
    range is widened by ``0.1 * width + 1e-6`` on both sides.  The
    viscosity defaults to ``du_bound / 2``.
    """
    if kind not in _KINDS:
        raise ParameterError(f"unknown flux kind {kind!r}; choose from {', '.join(_KINDS)}")
    terms = [FluxTerm(c, f, s if field_sup is None else field_sup, h) for c, f, s, h in _KINDS[kind]]
    lo, hi = (float(v) for v in state_range)
    if inflate:
        d = 0.1 * (hi - lo) + 1e-6
        lo, hi = lo - d, hi + d
    flux = FluxField(terms, 0.0, 0.0, (lo, hi), kind)
    du = flux.du_bound_over(lo, hi)
    lam = 0.5 * du if lambda_override is None else float(lambda_override)
    if lam < 0:
        raise ParameterError("lambda must be non-negative")
    return replace(flux, lam=lam, du_bound=du)
