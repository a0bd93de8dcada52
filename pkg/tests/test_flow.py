import math

import numpy as np
import pytest

from bernoulli_fbp.classify import classify
from bernoulli_fbp.curves import circle, unit_circle
from bernoulli_fbp.errors import MuTooSmall, SignMismatch
from bernoulli_fbp.flow import (
    FlowOptions,
    branch_sweep,
    flow_step,
    imex_predict,
    run_flow,
    symbol_multipliers,
    symbol_preconditioner,
)
from bernoulli_fbp.operator import QSchedule, eval_F, newton_correct
from bernoulli_fbp.potential import AnnularDomain
from bernoulli_fbp.radial import critical, radial_branch_roots

R1_3 = radial_branch_roots(3.0, 2)[0].r
R2_3 = radial_branch_roots(3.0, 2)[1].r


def converged(r, schedule, N=128, t=0.0):
    dom = AnnularDomain.create(unit_circle(), circle(r), N, N)
    return newton_correct(eval_F(dom, schedule, t))


def test_flow_step_hyperbolic_shrinks():
    sched = QSchedule.affine(3.0, 1.0)
    st = converged(R1_3, sched)
    classify(st)
    st2 = flow_step(st, sched, 0.01, FlowOptions(case="A"))
    assert st2.curve.equivalent_radius() < st.curve.equivalent_radius()
    assert st2.converged and st2.t == pytest.approx(0.01)


def test_flow_step_elliptic_shrinks_backward():
    sched = QSchedule.affine(3.0, -1.0)
    st = converged(R2_3, sched)
    classify(st)
    st2 = flow_step(st, sched, 0.01, FlowOptions(case="B"))
    assert st2.curve.equivalent_radius() < st.curve.equivalent_radius()


def test_flow_step_static_schedule():
    sched = QSchedule.constant(3.0)
    st = converged(R2_3, sched)
    st2 = flow_step(st, sched, 0.01, FlowOptions())
    assert (
        abs(st2.curve.equivalent_radius() - st.curve.equivalent_radius()) < 1e-10
    )


def test_sign_mismatch_on_wrong_direction():
    sched = QSchedule.affine(3.0, -1.0)  # Q falling
    st = converged(R1_3, sched)  # hyperbolic state
    classify(st)
    with pytest.raises(SignMismatch):
        flow_step(st, sched, 0.01, FlowOptions(case="A"))


def test_case_kind_consistency_checked():
    sched = QSchedule.affine(3.0, 1.0)
    st = converged(R2_3, sched)  # elliptic state, case A declared
    classify(st)
    with pytest.raises(SignMismatch):
        run_flow(st, sched, 0.1, FlowOptions(case="A"))


def test_run_flow_case_A_short():
    sched = QSchedule.affine(3.0, 1.0)
    st = converged(R1_3, sched)
    traj = run_flow(st, sched, 0.1, FlowOptions(case="A"))
    target = radial_branch_roots(3.1, 2)[0].r
    assert traj.halt_reason == "completed"
    assert traj.terminal.curve.equivalent_radius() == pytest.approx(target, abs=1e-4)
    assert all(d["kind"] == "Hyperbolic" for d in traj.diagnostics)
    assert all(s.residual_norm < 1e-8 for s in traj.states)
    drifts = [d["drift"] for d in traj.diagnostics[1:]]
    assert max(drifts) < 1e-5
    assert all(a < b for a, b in zip(traj.times, traj.times[1:]))


def test_run_flow_case_B_short():
    sched = QSchedule.affine(3.0, -1.0)
    st = converged(R2_3, sched)
    traj = run_flow(st, sched, 0.1, FlowOptions(case="B"))
    target = radial_branch_roots(2.9, 2)[1].r
    assert traj.terminal.curve.equivalent_radius() == pytest.approx(target, abs=1e-4)
    radii = [s.curve.equivalent_radius() for s in traj.states]
    assert all(a > b for a, b in zip(radii, radii[1:]))


def test_first_order_predictor():
    sched = QSchedule.affine(3.0, 1.0)
    st = converged(R1_3, sched)
    target = radial_branch_roots(3.1, 2)[0].r
    errs = []
    for dt in (0.02, 0.01, 0.005):
        cur = st
        for _ in range(round(0.1 / dt)):
            cur = imex_predict(cur, sched, dt, FlowOptions())
        errs.append(abs(cur.curve.equivalent_radius() - target))
    for a, b in zip(errs, errs[1:]):
        assert 1.5 < a / b < 3.0


def test_projection_decouples_accuracy_from_dt():
    sched = QSchedule.affine(3.0, 1.0)
    st = converged(R1_3, sched)
    target = radial_branch_roots(3.1, 2)[0].r
    for dt in (0.05, 0.02):
        traj = run_flow(st, sched, 0.1, FlowOptions(case="A", dt0=dt, adaptive=False))
        assert traj.terminal.residual_norm < 1e-9
        assert abs(traj.terminal.curve.equivalent_radius() - target) < 1e-9


def test_parabolic_approach_halt():
    r2 = radial_branch_roots(2.75, 2)[1].r
    sched = QSchedule.affine(2.75, -1.0)
    st = converged(r2, sched)
    traj = run_flow(st, sched, 0.05, FlowOptions(case="B"))
    assert traj.halt_reason == "ParabolicApproach"
    t_fold = 2.75 - math.e
    assert traj.times[-1] < t_fold
    assert traj.times[-1] > t_fold - 2e-3
    r_star, _ = critical(2)
    assert abs(traj.terminal.curve.equivalent_radius() - r_star) < 2e-3


def test_branch_sweep_two_branches():
    rows = branch_sweep(
        unit_circle(), [2.8, 3.0, 3.5], [circle(0.15), circle(0.6)], N=128
    )
    assert len(rows) == 6
    by_q = {}
    for row in rows:
        by_q.setdefault(row["Q"], []).append(row)
    for q, pair in by_q.items():
        roots = radial_branch_roots(q, 2)
        kinds = {row["kind"] for row in pair}
        assert kinds == {"Hyperbolic", "Elliptic"}
        for row in pair:
            expected = roots[0].r if row["kind"] == "Hyperbolic" else roots[1].r
            assert row["equivalent_radius"] == pytest.approx(expected, abs=1e-6)
            assert row["status"] == "Converged"


def test_branch_sweep_below_critical():
    rows = branch_sweep(unit_circle(), [2.0], [circle(0.15), circle(0.6)], N=128)
    assert all(row["status"] == "NoConvergence" for row in rows)
    assert all(row["kind"] == "NoConvergence" for row in rows)


def test_branch_sweep_at_critical():
    rows = branch_sweep(unit_circle(), [math.e], [circle(0.37)], N=128)
    row = rows[0]
    assert row["status"] == "Converged"
    assert row["equivalent_radius"] == pytest.approx(math.exp(-1.0), abs=1e-5)
    assert any("DegeneracyWarning" in w for w in row.get("warnings", []))


def test_symbol_multiplier_table():
    m = symbol_multipliers(64, 1.0)
    assert m[0] == pytest.approx(1.0)
    assert m[4] == pytest.approx(17.0 / 5.0)
    assert m[64] / 64 == pytest.approx(1.0, abs=0.05)
    assert np.all(m > 0)


def test_symbol_preconditioner_fields():
    sched = QSchedule.affine(3.0, 1.0)
    st = converged(R1_3, sched)
    pre = symbol_preconditioner(st)
    w_min = float(np.min(st.robin_coefficient()))
    assert pre.mu == pytest.approx(-w_min + 1.0)
    assert pre.m1 > 0 and pre.m2 < 0
    assert pre.scale > 0
    assert len(pre.multipliers) == st.domain.N_in // 2 + 1


def test_symbol_preconditioner_mu_guard():
    sched = QSchedule.affine(3.0, 1.0)
    st = converged(R1_3, sched)
    with pytest.raises(MuTooSmall):
        symbol_preconditioner(st, mu=1.0)


def test_trajectory_save(tmp_path):
    sched = QSchedule.affine(3.0, 1.0)
    st = converged(R1_3, sched)
    traj = run_flow(st, sched, 0.02, FlowOptions(case="A"))
    traj.save(tmp_path)
    states = sorted((tmp_path / "states").glob("*.json"))
    assert len(states) == len(traj.times)
    header = (tmp_path / "diagnostics.csv").read_text().splitlines()[0]
    assert header.startswith("t,residual,drift,margin,kind,dt,m_0,m_1c,m_1s")
