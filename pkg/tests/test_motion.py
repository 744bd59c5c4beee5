import numpy as np
import pytest

from surffv.errors import ParameterError
from surffv.geometry import cell_geometry
from surffv.mesh import build_icosphere, build_torus
from surffv.motion import (
    deforming_torus, identity, jacobian_determinant, positions_at, scaled_sphere, squeezed_sphere,
    torus_deformation,
)


def test_identity_motion():
    m = build_icosphere(1)
    assert np.array_equal(positions_at(m, identity(1.0), 0.5), m.vertices)


def test_scaled_sphere_norms():
    m = build_icosphere(2)
    x = positions_at(m, scaled_sphere(lambda t: 1.0 + 0.5 * t), 1.0)
    assert np.allclose(np.linalg.norm(x, axis=1), 1.5, atol=1e-15)


def test_time_out_of_range():
    m = build_icosphere(0)
    with pytest.raises(ParameterError):
        positions_at(m, identity(1.0), 1.5)
    with pytest.raises(ParameterError):
        positions_at(m, identity(1.0), -0.1)


def test_torus_deformation_start_and_freeze():
    m = build_torus(1.0, 0.4, (16, 8))
    mo = deforming_torus()
    assert np.array_equal(positions_at(m, mo, 0.0), m.vertices)
    assert np.array_equal(positions_at(m, mo, 2.0), positions_at(m, mo, 4.0))
    assert np.array_equal(positions_at(m, mo, 3.1), positions_at(m, mo, 2.0))
    f = torus_deformation(1.0)
    assert np.allclose(f(m.vertices), positions_at(m, mo, 1.0))


def test_torus_compresses_right_and_stretches_left():
    m = build_torus(1.0, 0.4, (16, 8))
    x = positions_at(m, deforming_torus(), 2.0)
    right = m.vertices[:, 0] > 0.5
    left = m.vertices[:, 0] < -0.5
    assert np.all(np.abs(x[right, 0]) < np.abs(m.vertices[right, 0]))
    assert np.all(np.abs(x[left, 0]) > np.abs(m.vertices[left, 0]))


def test_torus_jacobian_positive_along_trajectories():
    m = build_torus(1.0, 0.4, (32, 16))
    mo = deforming_torus()
    for t in np.linspace(0, 4, 17):
        assert np.all(jacobian_determinant(mo.move, m.vertices, t) > 0)


@pytest.mark.parametrize("motion,T", [(deforming_torus(), 4.0), (squeezed_sphere(), 1.0),
                                      (scaled_sphere(lambda t: 1.0 + 0.5 * t), 1.0)])
def test_area_ratio_is_first_order_in_dt(motion, T):
    m = build_torus(1.0, 0.4, (32, 16)) if motion.sphere is None else build_icosphere(3)
    worst = []
    for dt in (0.04, 0.02, 0.01):
        w = 0.0
        for t in np.arange(0.0, T - dt + 1e-12, dt):
            a0 = cell_geometry(m, positions_at(m, motion, t)).area
            a1 = cell_geometry(m, positions_at(m, motion, min(t + dt, T))).area
            w = max(w, np.max(np.abs(a1 / a0 - 1.0)))
        worst.append(w)
    r = np.array(worst[:-1]) / np.array(worst[1:])
    assert np.all((r > 1.6) & (r < 2.4))


def test_squeezed_sphere_stays_on_sphere():
    m = build_icosphere(2)
    mo = squeezed_sphere()
    for t in (0.3, 1.0):
        x = positions_at(m, mo, t)
        assert np.allclose(np.linalg.norm(x, axis=1), mo.sphere.radius(t), atol=1e-14)
    assert np.array_equal(mo(m.vertices, 0.0), m.vertices)
