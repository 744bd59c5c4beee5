import logging

import numpy as np
import pytest

from surffv.errors import UnsupportedError
from surffv.flux import FluxField, make_flux
from surffv.geometry import cell_geometry, edge_geometry, triangle_rule
from surffv.experiments import tp6_initial
from surffv.diagnostics import fit_order
from surffv.mesh import build_icosphere, icosphere_family, mesh_quality
from surffv.motion import scaled_sphere
from surffv.second_order import LeastSquaresReconstruction, reconstruct, rk2_step, rk2_stepper
from surffv.solver import CellField, Rules, StepContext, _Geometry, cfl_dt, init_flat, run, step_flat
from surffv.initial import constant
from surffv.motion import identity
from surffv.sphere import UNIT_SPHERE
from conftest import box_mesh


def _ctx(mesh, flux, dt):
    geo = _Geometry("flat", mesh, identity(1.0), flux, Rules(), None, None)
    a = geo.areas(0.0)
    return StepContext(dt, a, a, geo.lengths(0.0), geo.means(0.0, 0.0), flux.lam)


def test_constant_state_zero_gradient():
    m = build_icosphere(2)
    g = reconstruct(CellField(np.full(m.n_cells, 3.0), 0.0, m))
    assert np.max(np.abs(g.values)) < 1e-12


def test_gradient_in_cell_plane():
    m = build_icosphere(3)
    u = CellField(np.random.default_rng(0).normal(size=m.n_cells), 0.0, m)
    g = reconstruct(u)
    nu = cell_geometry(m).normal
    assert np.max(np.abs(np.einsum("ij,ij->i", g.values, nu))) < 1e-13


def test_affine_data_recovered_on_planar_patch():
    m = box_mesh(8)
    cg = cell_geometry(m)
    grad = np.array([0.7, -1.3, 0.0])
    u = CellField(2.0 + cg.barycenter @ grad, 0.0, m)
    g = reconstruct(u).values
    top = np.all(np.isclose(cg.normal, [0, 0, 1], atol=1e-14), axis=1)
    coplanar = np.array([np.all(top[m.neighbors[k]]) for k in range(m.n_cells)]) & top
    assert coplanar.sum() > 50
    assert np.max(np.abs(g[coplanar] - grad)) < 1e-12


def test_rank_deficient_neighbourhood_falls_back(caplog):
    m = build_icosphere(1)
    x = np.array(m.vertices)
    rec_ok = LeastSquaresReconstruction(m)
    assert not rec_ok.rank_deficient.any()
    # a strict conditioning threshold flags the anisotropic neighbourhoods
    with caplog.at_level(logging.WARNING):
        rec = LeastSquaresReconstruction(m, x, rcond=0.9)
    assert rec.rank_deficient.any()
    assert "zero gradients" in caplog.text
    g = rec.gradients(np.arange(m.n_cells, dtype=float))
    assert np.all(g[rec.rank_deficient] == 0)


def test_tp6_bump_traces_second_order():
    hs, es = [], []
    for m in icosphere_family(range(3, 7)):
        u = init_flat(m, tp6_initial, rule=triangle_rule(5), depth=1)
        uL, uR = LeastSquaresReconstruction(m).traces(u.values)
        exact = tp6_initial(edge_geometry(m).midpoint)
        es.append(max(np.abs(uL - exact).max(), np.abs(uR - exact).max()))
        hs.append(mesh_quality(m).h)
    # measured slope on levels 3-6 is 2.06
    assert 1.8 <= fit_order(hs, es) <= 2.3


def test_limiter_keeps_traces_in_neighbour_range():
    m = build_icosphere(3)
    rng = np.random.default_rng(3)
    u = rng.uniform(size=m.n_cells)
    rec = LeastSquaresReconstruction(m, limit=True)
    uL, uR = rec.traces(u)
    nb = np.concatenate([u[m.neighbors], u[:, None]], axis=1)
    lo, hi = nb.min(axis=1), nb.max(axis=1)
    assert np.all(uL >= lo[m.left] - 1e-14) and np.all(uL <= hi[m.left] + 1e-14)
    assert np.all(uR >= lo[m.right] - 1e-14) and np.all(uR <= hi[m.right] + 1e-14)


def test_rk2_identity_for_zero_flux():
    m = build_icosphere(2)
    f = FluxField([], 0.0, 0.0)
    u = CellField(np.random.default_rng(1).uniform(size=m.n_cells), 0.0, m)
    out = rk2_step(u, _ctx(m, f, 0.01), f, LeastSquaresReconstruction(m))
    assert np.array_equal(out.values, u.values)


def test_rk2_first_stage_is_first_order_step():
    m = build_icosphere(3)
    f = make_flux("two_dim")
    ctx = _ctx(m, f, cfl_dt(mesh_quality(m), f))
    u = CellField(np.random.default_rng(2).uniform(size=m.n_cells), 0.0, m)
    ref = step_flat(u, ctx, f).values
    # with the second stage frozen at the first-stage input the Heun step
    # reduces to averaging u with the Euler stage
    from surffv.second_order import _stage

    assert np.array_equal(_stage(u.values, ctx, f, m, None), ref)


def test_rk2_conserves_mass():
    m = build_icosphere(3)
    f = make_flux("linear_V")
    ctx = _ctx(m, f, cfl_dt(mesh_quality(m), f))
    u = CellField(init_flat(m, tp6_initial).values, 0.0, m)
    v = rk2_step(u, ctx, f, LeastSquaresReconstruction(m))
    assert abs(np.dot(ctx.areas_now, u.values) - np.dot(ctx.areas_next, v.values)) < 1e-15


def test_second_order_rejects_moving_surface():
    m = build_icosphere(1)
    mo = scaled_sphere(lambda t: 1.0 + t, 0.5)
    with pytest.raises(UnsupportedError):
        run("flat", m, mo, make_flux("linear_V"), constant(1.0), 0.5, sphere=mo.sphere,
            stepper=rk2_stepper(LeastSquaresReconstruction(m)))


def test_tp5_reconstruction_does_not_change_result():
    m = build_icosphere(3)
    f = make_flux("stationary_V")
    a = run("flat", m, None, f, constant(0.0), 1.0, sphere=UNIT_SPHERE,
            stepper=rk2_stepper(LeastSquaresReconstruction(m)))
    b = run("flat", m, None, f, constant(0.0), 1.0, sphere=UNIT_SPHERE, stepper=rk2_stepper(None))
    assert np.array_equal(a.field.values, b.field.values)
