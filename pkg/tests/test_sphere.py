import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from surffv.errors import GeometryError, ToleranceError
from surffv.flux import field_V, stream_V
from surffv.mesh import build_icosphere
from surffv.sphere import (
    PlaneSurface, SphereSurface, UNIT_SPHERE, arc_length, cap_cell_fractions, cap_triangle_area,
    curved_cell_mean, curved_cell_means, curved_conormal, exact_edge_flux_average, spherical_triangle_area,
)
from surffv.initial import HalfSpaceIndicator

E1, E2, E3 = np.eye(3)


def girard_area(p0, p1, p2):
    """Spherical excess from the interior angles (independent of l'Huilier)."""
    P = [np.asarray(p, float) / np.linalg.norm(p) for p in (p0, p1, p2)]
    ang = 0.0
    for i in range(3):
        a, b, c = P[i], P[(i + 1) % 3], P[(i + 2) % 3]
        tb = b - np.dot(a, b) * a
        tc = c - np.dot(a, c) * a
        ang += np.arccos(np.clip(np.dot(tb, tc) / np.linalg.norm(tb) / np.linalg.norm(tc), -1, 1))
    return ang - np.pi


def test_projection_and_distance():
    s = UNIT_SPHERE
    assert np.allclose(s.project([2.0, 0, 0]), [1, 0, 0])
    p = np.array([0.6, 0.8, 0.0])
    assert np.allclose(s.project(p), p)
    assert s.signed_distance([0.5, 0, 0]) == -0.5
    assert s.signed_distance([2.0, 0, 0]) == 1.0
    assert s.signed_distance(p) == pytest.approx(0.0, abs=1e-16)
    with pytest.raises(GeometryError):
        s.project([0.0, 0, 0])


def test_closest_point_identity_random_shell():
    rng = np.random.default_rng(1)
    s = SphereSurface(lambda t: 1.5 + t, center=np.array([0.1, -0.2, 0.3]))
    d = rng.normal(size=(1000, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    for t in (0.0, 0.7):
        R = s.radius(t)
        x = s.center + d * rng.uniform(0.5 * R, 2 * R, size=(1000, 1))
        a = s.project(x, t)
        rec = a + s.signed_distance(x, t)[:, None] * s.normal(x, t)
        assert np.max(np.abs(rec - x)) < 1e-14 * 4
        assert s.curvature(t) == 1 / R


def test_octant_area_and_arc_length():
    assert spherical_triangle_area(E1, E2, E3) == pytest.approx(np.pi / 2, abs=1e-15)
    assert spherical_triangle_area(E1, E2, E3, 2.0) == pytest.approx(2 * np.pi, abs=1e-14)
    assert arc_length(E1, E2) == pytest.approx(np.pi / 2, abs=1e-15)
    assert arc_length(E1, E1) == 0.0


def test_area_matches_girard_on_random_triangles():
    rng = np.random.default_rng(2)
    for _ in range(50):
        P = rng.normal(size=(3, 3))
        P /= np.linalg.norm(P, axis=1, keepdims=True)
        assert spherical_triangle_area(*P) == pytest.approx(girard_area(*P), rel=1e-9, abs=1e-12)


def test_areas_partition_sphere():
    for lv in range(5):
        m = build_icosphere(lv)
        a = UNIT_SPHERE.cell_areas(*m.cell_points())
        assert abs(a.sum() - 4 * np.pi) < 1e-10


def test_antipodal_rejected():
    with pytest.raises(GeometryError):
        spherical_triangle_area(E1, -E1, E3)


def test_curved_conormal_octant():
    mu = curved_conormal(E1, E2, E3)
    assert np.allclose(mu, [0, 0, -1])
    assert abs(np.dot(mu, E1)) < 1e-14 and abs(np.dot(mu, E2)) < 1e-14
    assert np.allclose(curved_conormal(E1, E2, -E3), -mu)
    with pytest.raises(GeometryError):
        curved_conormal(E1, 2 * E1, E3)


def _arc_quadrature(field, p, q, mu, n=64):
    """Integral of <field, mu> along the great arc p -> q by Gauss-Legendre."""
    theta = arc_length(p, q)
    w = q - np.dot(p, q) * p
    w /= np.linalg.norm(w)
    x, wt = np.polynomial.legendre.leggauss(n)
    s = 0.5 * theta * (x + 1)
    pts = np.cos(s)[:, None] * p + np.sin(s)[:, None] * w
    return 0.5 * theta * np.dot(wt, field(pts) @ mu)


def test_exact_edge_flux_on_equator_is_zero():
    mu = curved_conormal(E1, E2, E3)
    assert exact_edge_flux_average(stream_V, E1, E2, mu) == 0.0


def test_exact_edge_flux_matches_arc_quadrature():
    mu = curved_conormal(E1, E3, E2)
    mean = exact_edge_flux_average(stream_V, E1, E3, mu)
    total = mean * arc_length(E1, E3)
    assert abs(abs(total) - 2 * np.pi) < 1e-13
    assert abs(total - _arc_quadrature(field_V, E1, E3, mu)) < 1e-12
    assert exact_edge_flux_average(stream_V, E1, E3, -mu) == -mean


def test_exact_edge_flux_random_arcs():
    rng = np.random.default_rng(3)
    for _ in range(20):
        p, q, r = rng.normal(size=(3, 3))
        p, q, r = (v / np.linalg.norm(v) for v in (p, q, r))
        mu = curved_conormal(p, q, r)
        ex = exact_edge_flux_average(stream_V, p, q, mu) * arc_length(p, q)
        assert abs(ex - _arc_quadrature(field_V, p, q, mu)) < 1e-12


def test_curved_cell_mean_constant_and_linear():
    assert curved_cell_mean(lambda x: np.full(x.shape[:-1], 3.5), (E1, E2, E3)) == pytest.approx(3.5, abs=1e-14)
    # independent oracle: integrate x3 over the octant in spherical coordinates
    val, _ = integrate.dblquad(lambda th, ph: np.cos(th) * np.sin(th), 0, np.pi / 2, 0, np.pi / 2)
    assert val == pytest.approx(np.pi / 4, abs=1e-12)
    assert curved_cell_mean(lambda x: x[..., 2], (E1, E2, E3), tol=1e-12) == pytest.approx(
        val / (np.pi / 2), abs=1e-10)


def test_curved_cell_mean_converges_on_level3_cells():
    m = build_icosphere(3)
    P0, P1, P2 = m.cell_points()
    u0 = lambda x: np.exp(x[..., 0]) * np.sin(3 * x[..., 1])
    means = curved_cell_means(u0, P0, P1, P2, tol=1e-10, max_depth=8)
    assert np.all(np.isfinite(means))
    # global integral against a tensor Gauss rule in spherical coordinates
    area = UNIT_SPHERE.cell_areas(P0, P1, P2)
    th, wth = np.polynomial.legendre.leggauss(80)
    th = 0.5 * np.pi * (th + 1)
    ph = np.linspace(0, 2 * np.pi, 160, endpoint=False)
    T, Ph = np.meshgrid(th, ph, indexing="ij")
    X = np.stack([np.sin(T) * np.cos(Ph), np.sin(T) * np.sin(Ph), np.cos(T)], -1)
    ref = 0.5 * np.pi * (2 * np.pi / 160) * np.sum(wth[:, None] * np.sin(T) * u0(X))
    assert abs(np.dot(area, means) - ref) < 1e-9


def test_curved_cell_mean_tolerance_error():
    rough = lambda x: np.sign(np.sin(200 * x[..., 0]))
    with pytest.raises(ToleranceError):
        curved_cell_means(rough, E1[None], E2[None], E3[None], tol=1e-14, max_depth=2)


def test_cap_area_special_cases():
    # whole octant inside a cap of offset 0 around (1,1,1)
    n = np.ones(3) / np.sqrt(3)
    assert cap_triangle_area(E1, E2, E3, n, 0.0) == pytest.approx(np.pi / 2, abs=1e-14)
    # small cap around the octant center lies entirely in the cell
    c = 0.99
    assert cap_triangle_area(E1, E2, E3, n, c) == pytest.approx(2 * np.pi * (1 - c), abs=1e-14)
    # hemisphere x3 > 0 cuts the octant nowhere: full cell; x1 > 0.5 clips it
    assert cap_triangle_area(E1, E2, E3, E3, -1e-9) == pytest.approx(np.pi / 2, abs=1e-12)
    assert cap_triangle_area(-E1, E2, E3, E1, 0.5) == 0.0


def test_cap_fractions_sum_to_cap_area():
    for lv in (1, 3):
        m = build_icosphere(lv)
        P0, P1, P2 = m.cell_points()
        area = UNIT_SPHERE.cell_areas(P0, P1, P2)
        for n, c in ((E1, 0.15), (np.array([0.3, -0.5, 0.8]) / np.linalg.norm([0.3, -0.5, 0.8]), -0.4),
                     (E3, 0.97)):
            frac = cap_cell_fractions(P0, P1, P2, n, c)
            assert np.all((frac >= -1e-14) & (frac <= 1 + 1e-14))
            assert abs(np.dot(frac, area) - 2 * np.pi * (1 - c)) < 1e-12


def test_cap_fraction_matches_monte_carlo():
    rng = np.random.default_rng(4)
    P = np.array([[0.9, 0.1, 0.3], [0.2, 0.95, 0.1], [0.1, 0.2, 0.97]])
    P /= np.linalg.norm(P, axis=1, keepdims=True)
    n, c = np.array([1.0, 0.2, 0.0]) / np.linalg.norm([1.0, 0.2, 0.0]), 0.5
    b = rng.dirichlet(np.ones(3), size=400_000)
    x = b @ P
    r = np.linalg.norm(x, axis=1)
    # area density of the radial map from the chord triangle
    nrm = np.cross(P[1] - P[0], P[2] - P[0])
    delta = abs(np.dot(nrm / np.linalg.norm(nrm), P[0]))
    w = delta / r**3
    inside = (x / r[:, None]) @ n > c
    mc = np.sum(w * inside) / np.sum(w)
    frac = cap_cell_fractions(P[:1], P[1:2], P[2:], n, c)[0]
    assert abs(frac - mc) < 5e-3


def test_indicator_curved_means_in_unit_interval():
    m = build_icosphere(2)
    means = curved_cell_means(HalfSpaceIndicator(), *m.cell_points())
    assert np.all((means >= 0) & (means <= 1))
    assert np.any((means > 0) & (means < 1))


def test_scaled_sphere_area_scaling():
    s = SphereSurface(lambda t: 1.0 + 0.5 * t)
    m = build_icosphere(2)
    P = m.cell_points()
    a0 = s.cell_areas(*P, t=0.0)
    a1 = s.cell_areas(*(1.5 * p for p in P), t=1.0)
    assert np.allclose(a1, 2.25 * a0, rtol=1e-13)


def test_plane_surface_null_case():
    pl = PlaneSurface()
    a, b, r = np.array([0.0, 0, 0]), np.array([1.0, 0, 0]), np.array([0.0, 1, 0])
    assert pl.edge_lengths(a[None], b[None])[0] == 1.0
    assert np.allclose(pl.edge_conormal(a[None], b[None], r[None]), [[0, -1, 0]])
    assert pl.cell_areas(a[None], b[None], r[None])[0] == 0.5


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=9, max_size=9))
def test_lhuilier_vs_girard_property(c):
    P = np.array(c).reshape(3, 3)
    n = np.linalg.norm(P, axis=1)
    if np.any(n < 1e-3):
        return
    P = P / n[:, None]
    if abs(np.linalg.det(P)) < 1e-3:
        return
    if np.min([np.dot(P[i], P[j]) for i in range(3) for j in range(i)]) < -0.999:
        return
    assert spherical_triangle_area(*P) == pytest.approx(girard_area(*P), rel=1e-8, abs=1e-10)
