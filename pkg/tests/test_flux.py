import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from surffv.errors import ParameterError
from surffv.flux import FLUX_KINDS, field_V, field_W, make_flux, stream_V, stream_W

rng = np.random.default_rng(5)
SPHERE_PTS = rng.normal(size=(500, 3))
SPHERE_PTS /= np.linalg.norm(SPHERE_PTS, axis=1, keepdims=True)


def test_field_values():
    assert np.allclose(field_V([1.0, 0, 0]), [0, -2 * np.pi, 0])
    assert np.allclose(field_W([1.0, 0, 0]), [0, 0, 2 * np.pi])
    with pytest.raises(ParameterError):
        field_V([0.0, 0, 0])


def test_fields_tangent():
    x = rng.normal(size=(200, 3)) * 3
    assert np.max(np.abs(np.einsum("ij,ij->i", field_V(x), x))) < 1e-13
    assert np.max(np.abs(np.einsum("ij,ij->i", field_W(x), x))) < 1e-13
    for kind in FLUX_KINDS:
        if kind == "torus_burgers":
            continue
        f = make_flux(kind)
        u = rng.uniform(-1, 2, size=len(SPHERE_PTS))
        v = f.eval(u, SPHERE_PTS)
        assert np.max(np.abs(np.einsum("ij,ij->i", v, SPHERE_PTS))) < 1e-13


def _grad(h, x, eps=1e-6):
    g = np.zeros_like(x)
    for k in range(3):
        d = np.zeros(3)
        d[k] = eps
        g[:, k] = (h(x + d) - h(x - d)) / (2 * eps)
    return g


def test_stream_representation():
    x = SPHERE_PTS
    assert np.max(np.abs(field_V(x) - np.cross(x, [0, 0, 2 * np.pi]))) < 1e-13
    assert np.max(np.abs(field_V(x) - np.cross(x, _grad(stream_V, x)))) < 1e-8
    assert np.max(np.abs(field_W(x) - np.cross(x, _grad(stream_W, x)))) < 1e-8


def test_fields_divergence_free():
    # surface divergence of nu x grad h vanishes; check the ambient divergence
    # of the 0-homogeneous extension, which equals it on the unit sphere
    x = SPHERE_PTS[:50]
    eps = 1e-5
    for F in (field_V, field_W):
        div = np.zeros(len(x))
        for k in range(3):
            d = np.zeros(3)
            d[k] = eps
            div += (F(x + d)[:, k] - F(x - d)[:, k]) / (2 * eps)
        assert np.max(np.abs(div)) < 1e-8


def test_make_flux_defaults():
    f = make_flux("stationary_V")
    assert f.lam == 0.0 and f.du_bound == 0.0 and f.u_independent
    f = make_flux("linear_W")
    assert f.du_bound == pytest.approx(2 * np.pi) and f.lam == pytest.approx(np.pi)
    f = make_flux("burgers_V")
    assert f.lam == pytest.approx(np.pi)
    f = make_flux("two_dim")
    assert f.du_bound == pytest.approx(4 * np.pi)
    f = make_flux("burgers_V", state_range=(-3.0, 2.0))
    assert f.du_bound == pytest.approx(6 * np.pi)
    assert make_flux("linear_W", lambda_override=1.0).lam == 1.0
    f = make_flux("linear_W", inflate=True)
    assert f.state_range[0] < 0 and f.state_range[1] > 1


def test_make_flux_errors():
    with pytest.raises(ParameterError):
        make_flux("nope")
    with pytest.raises(ParameterError):
        make_flux("linear_W", lambda_override=-1.0)
    with pytest.raises(ParameterError):
        make_flux("linear_W").with_lambda(-0.5)


def test_stream_availability():
    assert make_flux("two_dim").has_stream
    assert not make_flux("torus_burgers").has_stream


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(["linear_W", "burgers_V", "two_dim", "linear_V"]),
       st.floats(0, 1), st.floats(0, 1), st.integers(0, 499))
def test_lax_friedrichs_monotone(kind, u, v, i):
    from surffv.solver import numerical_flux

    f = make_flux(kind)
    x = SPHERE_PTS[i]
    mu = np.cross(x, SPHERE_PTS[(i + 1) % 500])
    mu /= np.linalg.norm(mu)
    means = np.array([t.field(x) @ mu for t in f.terms])
    eps = 1e-6
    g = lambda a, b: numerical_flux(a, b, means, f)
    assert (g(u + eps, v) - g(u - eps, v)) / (2 * eps) >= -1e-9
    assert (g(u, v + eps) - g(u, v - eps)) / (2 * eps) <= 1e-9
