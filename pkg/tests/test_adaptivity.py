import dataclasses
import math

import numpy as np
import pytest

from dgadapt.adaptivity import (
    AdaptConfig,
    AdaptivityError,
    initial_mesh_loop,
    make_initial_mesh,
    mark_cells,
    run_algorithm1,
)
from dgadapt.assembly import l2_project
from dgadapt.basis import get_basis
from dgadapt.fields import DofLayout
from dgadapt.mesh import QuadForest, uniform_refine
from dgadapt.problems import example1, example3
from dgadapt.stepping import assemble_system, backward_euler_step, make_slab


def short_example1(eps=1.0, T=1.0):
    return dataclasses.replace(example1(eps), T=T)


def test_config_validation():
    with pytest.raises(ValueError):
        AdaptConfig(n0=3)
    with pytest.raises(ValueError):
        AdaptConfig(ref_pct=0.0)
    with pytest.raises(ValueError):
        AdaptConfig(m=0.5)
    with pytest.raises(ValueError):
        AdaptConfig(stola=1.0, stolb=2.0)
    assert AdaptConfig(stola=1.0).stolb_eff == pytest.approx(0.2)


def test_mark_cells_count_and_tiebreak():
    ind = {10: 1.0, 11: 1.0, 12: 1.0, 13: 1.0}
    assert mark_cells(ind, 25.0, largest=True) == [10]
    assert mark_cells(ind, 50.0, largest=False) == [10, 11]
    ind = {5: 3.0, 6: 1.0, 7: 2.0}
    assert mark_cells(ind, 34.0, largest=True) == [5, 7]
    assert mark_cells(ind, 34.0, largest=False) == [6, 7]


def test_initial_loop_zero_data_returns_immediately():
    prob = short_example1()
    cfg = AdaptConfig(p=1, n0=4, initol=1e-12)
    mesh, u0, eta_sq = initial_mesh_loop(prob, cfg)
    # u0 = 0 for example 1, so eta_I = 0 on the starting mesh
    assert len(mesh.cells) == 16
    assert eta_sq < 1e-28


def test_initial_loop_infinite_tolerance_keeps_mesh():
    prob = example3(1e-2)
    cfg = AdaptConfig(p=1, n0=8, initol=math.inf)
    mesh, _, _ = initial_mesh_loop(prob, cfg)
    assert len(mesh.cells) == 64


def test_initial_loop_concentrates_near_gaussian():
    prob = example3(1e-2)
    cfg = AdaptConfig(p=1, n0=8, initol=0.05)
    mesh, _, eta_sq = initial_mesh_loop(prob, cfg)
    assert math.sqrt(eta_sq) <= 0.05
    r = mesh.cell_rects()
    cx = 0.5 * (r[:, 0] + r[:, 1])
    cy = 0.5 * (r[:, 2] + r[:, 3])
    lev = np.array(mesh.cell_levels())
    fine = lev > 3  # refined beyond the 8x8 start
    assert fine.sum() > 0
    near = np.hypot(cx - 0.5, cy - 0.5) < 0.4
    assert (fine & near).sum() / fine.sum() > 0.5


def test_initial_loop_cap():
    prob = example3(1e-3)
    cfg = AdaptConfig(p=1, n0=8, initol=1e-12)
    with pytest.raises(AdaptivityError):
        initial_mesh_loop(prob, cfg, max_iters=3)


def test_infinite_tolerances_bitwise_equal_plain_backward_euler():
    prob = short_example1()
    cfg = AdaptConfig(p=1, n0=4, n_steps=5)
    res = run_algorithm1(prob, cfg)

    mesh = uniform_refine(QuadForest(prob.domain).root_view(), 2)
    layout = DofLayout(mesh, 1)
    basis = get_basis(1)
    u = l2_project(layout, basis, lambda x, y: prob.u0(x, y))
    system = assemble_system(layout, basis, prob, prob.T / 5, cfg.gamma)
    t = 0.0
    for j in range(5):
        tau = min(prob.T / 5, prob.T - t)
        slab = make_slab(j, t, t + tau, u, mesh)
        backward_euler_step(slab, prob, cfg.gamma, cfg.solver, system=system)
        u = slab.u1
        t = slab.t1
    assert np.array_equal(res.u_final.coeffs, u.coeffs)
    # uniform schedule: Total DoFs = T * lambda
    lam = len(mesh.cells) * 4
    assert res.state.total_dofs == pytest.approx(prob.T * lam, rel=1e-12)


def test_schedule_sums_to_T():
    prob = short_example1()
    cfg = AdaptConfig(p=1, n0=4, n_steps=3, ttol=0.02)
    res = run_algorithm1(prob, cfg)
    assert sum(r.tau for r in res.state.records) == pytest.approx(prob.T,
                                                                 rel=1e-12)
    assert res.state.time == pytest.approx(prob.T, rel=1e-12)


def test_accepted_steps_meet_ttol():
    prob = short_example1()
    ttol = 0.01
    cfg = AdaptConfig(p=1, n0=4, n_steps=2, ttol=ttol)
    res = run_algorithm1(prob, cfg)
    assert any(r.halvings > 0 for r in res.state.records)
    for r in res.state.records:
        assert r.that <= ttol + 1e-14


def test_halving_floor_raises():
    prob = short_example1()
    cfg = AdaptConfig(p=1, n0=2, n_steps=1, ttol=1e-14)
    with pytest.raises(AdaptivityError):
        run_algorithm1(prob, cfg)


def test_temporal_layer_gets_smallest_steps():
    # the (1 - e^{-t}) start-up layer forces halvings near t = 0
    prob = short_example1(T=10.0)
    cfg = AdaptConfig(p=1, n0=4, n_steps=5, ttol=0.012)
    res = run_algorithm1(prob, cfg)
    taus = [r.tau for r in res.state.records]
    tmin = res.state.records[int(np.argmin(taus))].t0
    assert tmin <= 1.0
    assert len(taus) > 5


def test_mesh_change_rate_limited():
    prob = short_example1()
    m = 2.0
    cfg = AdaptConfig(p=2, n0=4, n_steps=8, stola=1e-9, m=m)
    res = run_algorithm1(prob, cfg)
    assert res.state.mesh_changes >= 1
    assert res.state.mesh_changes <= m * prob.T + 1e-12


def test_counter_blocks_gate_when_threshold_large():
    # m = 1 over T gives threshold = T: with an 8-step schedule the counter
    # can exceed it only on the final step
    prob = short_example1()
    cfg = AdaptConfig(p=1, n0=4, n_steps=8, stola=1e-9, m=1.0)
    res = run_algorithm1(prob, cfg)
    assert res.state.mesh_changes <= 1
    changed = [r.mesh_changed for r in res.state.records]
    assert not any(changed[:-1])


def test_coarsening_branch_reduces_cells():
    # huge stola: indicator falls below stolb and the gate only coarsens
    prob = short_example1()
    cfg = AdaptConfig(p=1, n0=8, n_steps=4, stola=1e9, stolb=1e8,
                      coar_pct=50.0, m=4.0)
    res = run_algorithm1(prob, cfg)
    assert res.state.mesh_changes >= 1
    assert len(res.mesh_final.cells) < 64


def test_step_records_consistent():
    prob = short_example1()
    cfg = AdaptConfig(p=2, n0=4, n_steps=4, track_error=True)
    res = run_algorithm1(prob, cfg)
    assert res.error is not None and res.error.slabs == 4
    for r in res.state.records:
        assert r.lam == r.n_cells * 9 or r.lam >= r.n_cells * 9
        assert r.s1 >= 0 and r.that >= 0
    totals = res.ledger.finalize()
    assert totals.eta > 0
    assert totals.eta >= res.error.error  # estimator reliability
