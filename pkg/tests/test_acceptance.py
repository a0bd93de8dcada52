"""Acceptance suite: every criterion prints an explicit pass/fail line.

Run with `pytest -s tests/test_acceptance.py` to see the per-criterion
lines; each criterion is one test so the pytest report carries the same
information.
"""

import json
import math
import time

import numpy as np

from bernoulli_fbp.classify import classify
from bernoulli_fbp.cli import run_config
from bernoulli_fbp.curves import circle, perturbed_curve, unit_circle
from bernoulli_fbp.errors import SignMismatch
from bernoulli_fbp.flow import FlowOptions, branch_sweep, run_flow
from bernoulli_fbp.moments import harmonic_test_basis, max_quadrature_residual, moments
from bernoulli_fbp.operator import QSchedule, apply_linearization, eval_F, newton_correct
from bernoulli_fbp.potential import AnnularDomain, normal_derivative_inner, solve_capacitary
from bernoulli_fbp.radial import critical, radial_branch_roots, radial_linearized, radial_Q

TWO_PI = 2.0 * math.pi


def _report(num, ok, detail):
    print(f"\n[criterion {num:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {num}: {detail}"


def converged_state(curve, schedule, N=128, t=0.0, tol=1e-9):
    dom = AnnularDomain.create(unit_circle(), curve, N, N)
    return newton_correct(eval_F(dom, schedule, t), tol=tol)


def test_criterion_01_radial_dirichlet_accuracy():
    t0 = time.monotonic()
    dom = AnnularDomain.create(unit_circle(), circle(0.5), 128, 128)
    qu = normal_derivative_inner(solve_capacitary(dom))
    err = float(np.max(np.abs(qu - radial_Q(0.5))))
    elapsed = time.monotonic() - t0
    _report(
        1,
        err < 1e-8 and elapsed < 1.0,
        f"du/dnu max node error {err:.2e} (tol 1e-8), runtime {elapsed:.2f}s (< 1s)",
    )


def test_criterion_02_critical_constants():
    r2, q2 = critical(2)
    r3, q3 = critical(3)
    errs = (
        abs(r2 - math.exp(-1.0)),
        abs(q2 - math.e),
        abs(r3 - 0.5),
        abs(q3 - 4.0),
    )
    _report(
        2,
        max(errs) < 1e-12,
        f"critical(2)=({r2:.12f},{q2:.12f}) critical(3)=({r3},{q3}), max err {max(errs):.1e}",
    )


def test_criterion_03_two_branch_reproduction():
    t0 = time.monotonic()
    rows3 = branch_sweep(unit_circle(), [3.0], [circle(0.15), circle(0.6)], N=128)
    rows2 = branch_sweep(unit_circle(), [2.0], [circle(0.15), circle(0.6)], N=128)
    elapsed = time.monotonic() - t0

    roots = radial_branch_roots(3.0, 2)
    by_kind = {row["kind"]: row for row in rows3}
    ok = set(by_kind) == {"Hyperbolic", "Elliptic"}
    err1 = abs(by_kind["Hyperbolic"]["equivalent_radius"] - roots[0].r) if ok else 1.0
    err2 = abs(by_kind["Elliptic"]["equivalent_radius"] - roots[1].r) if ok else 1.0
    ok = ok and err1 < 1e-6 and err2 < 1e-6
    ok = ok and all(r["status"] == "NoConvergence" for r in rows2)
    ok = ok and elapsed < 30.0
    _report(
        3,
        ok,
        f"Q=3: r1 err {err1:.1e}, r2 err {err2:.1e}, kinds Hyperbolic/Elliptic; "
        f"Q=2: both NoConvergence; runtime {elapsed:.1f}s (< 30s)",
    )


def test_criterion_04_classification_closed_form():
    results = []
    for r in (0.5, 0.2):
        st = converged_state(circle(r), QSchedule.constant(radial_Q(r)))
        rec = classify(st)
        _, exact = radial_linearized(r)
        results.append(
            abs(rec.integral_p - exact) < 1e-6
            and rec.monotone
            and not rec.degenerate
        )
    # within 1e-3 of the fold: the degenerate/parabolic flag must fire
    r_star = math.exp(-1.0)
    dom = AnnularDomain.create(unit_circle(), circle(r_star), 128, 128)
    st = eval_F(dom, QSchedule.constant(math.e), 0.0)
    from dataclasses import replace

    st = replace(st, converged=True)
    rec_star = classify(st)
    fires = rec_star.degenerate and rec_star.kind == "Parabolic"
    _report(
        4,
        all(results) and fires,
        f"integral_p matches closed form at r=0.5, 0.2 (tol 1e-6), monotone and "
        f"non-degenerate; at r = e^-1 degenerate+Parabolic fires (margin "
        f"{rec_star.nondegeneracy_margin:.1e})",
    )


def test_criterion_05_foliation_flow_hyperbolic():
    t0 = time.monotonic()
    r1 = radial_branch_roots(3.0, 2)[0].r
    sched = QSchedule.affine(3.0, 1.0)
    st0 = converged_state(circle(r1), sched)
    traj = run_flow(st0, sched, 0.5, FlowOptions(case="A", dt0=0.01))
    elapsed = time.monotonic() - t0

    target = radial_branch_roots(3.5, 2)[0].r
    err = abs(traj.terminal.curve.equivalent_radius() - target)
    kinds_ok = all(d["kind"] == "Hyperbolic" for d in traj.diagnostics)
    resid_ok = all(s.residual_norm < 1e-8 for s in traj.states)
    drift = max(d["drift"] for d in traj.diagnostics[1:])
    _report(
        5,
        err < 1e-4 and kinds_ok and resid_ok and drift < 1e-5 and elapsed < 120.0,
        f"terminal radius err {err:.1e} (tol 1e-4), all Hyperbolic={kinds_ok}, "
        f"residuals < 1e-8={resid_ok}, max drift {drift:.2e} (< 1e-5), "
        f"runtime {elapsed:.0f}s (< 120s)",
    )


def test_criterion_06_foliation_flow_elliptic():
    r2 = radial_branch_roots(3.0, 2)[1].r
    sched = QSchedule.affine(3.0, -1.0)
    st0 = converged_state(circle(r2), sched)
    traj = run_flow(st0, sched, 0.2, FlowOptions(case="B", dt0=0.01))
    target = radial_branch_roots(2.8, 2)[1].r
    err = abs(traj.terminal.curve.equivalent_radius() - target)
    radii = [s.curve.equivalent_radius() for s in traj.states]
    shrinking = all(a > b for a, b in zip(radii, radii[1:]))
    _report(
        6,
        err < 1e-4 and shrinking,
        f"terminal radius err {err:.1e} (tol 1e-4), radius monotonically "
        f"decreasing={shrinking}",
    )


def test_criterion_07_one_sidedness(tmp_path):
    r1 = radial_branch_roots(3.0, 2)[0].r
    sched_down = QSchedule.affine(3.0, -1.0)
    st = converged_state(circle(r1), sched_down)
    classify(st)
    try:
        run_flow(st, sched_down, 0.1, FlowOptions(case="A"))
        library_ok, accepted = False, -1
    except SignMismatch:
        library_ok, accepted = True, 0

    cfg = tmp_path / "cfg.json"
    cfg.write_text(
        json.dumps(
            {
                "mode": "flow",
                "container": "unit_disk",
                "initial_curve": {"circle": r1},
                "schedule": {"type": "affine", "Q0": 3.0, "rate": -1.0},
                "flow": {"T": 0.1, "case": "A"},
            }
        )
    )
    exit_code = run_config(cfg, tmp_path / "run")
    summary = json.loads((tmp_path / "run" / "summary.json").read_text())
    cli_ok = exit_code == 2 and summary["error"]["type"] == "ConfigInvalid"
    _report(
        7,
        library_ok and cli_ok,
        f"SignMismatch with no accepted step={library_ok}; CLI rejects the config "
        f"before solving (exit 2, ConfigInvalid)={cli_ok}",
    )


def test_criterion_08_moment_certificates():
    basis = harmonic_test_basis(8)
    clean_worst = 0.0
    states = []
    for r, x_coeff in ((0.5, 0.0), (0.22, 0.0), (0.5, 0.02), (0.22, 0.02)):
        sched = (
            QSchedule.constant(radial_Q(r))
            if x_coeff == 0.0
            else QSchedule.affine(radial_Q(r), 0.0, (x_coeff, 0.0))
        )
        st = converged_state(circle(r), sched)
        states.append(st)
        mv = moments(st, basis)
        clean_worst = max(
            clean_worst,
            abs(mv.values[0] + TWO_PI),
            float(np.max(np.abs(mv.values[1:]))),
        )
    rng = np.random.default_rng(5)
    corrupted_best = np.inf
    for st in states[:2]:
        noise = perturbed_curve(
            st.curve, 1e-3 * rng.standard_normal(st.domain.N_in), max_degree=8
        )
        dom = AnnularDomain.create(unit_circle(), noise, 128, 128)
        st_c = eval_F(dom, st.schedule, st.t)
        mv = moments(st_c, basis)
        violation = max(
            abs(mv.values[0] + TWO_PI), float(np.max(np.abs(mv.values[1:])))
        )
        corrupted_best = min(corrupted_best, violation)
    _report(
        8,
        clean_worst < 1e-6 and corrupted_best > 1e-4,
        f"converged certificates within {clean_worst:.1e} (tol 1e-6); corrupted "
        f"states violate by at least {corrupted_best:.1e} (> 1e-4)",
    )


def test_criterion_09_linearization_correctness():
    st = converged_state(circle(0.5), QSchedule.constant(radial_Q(0.5)))
    g = st.domain.inner_samples
    rng = np.random.default_rng(42)
    orders = []
    for _ in range(5):
        coef = rng.standard_normal(7)
        d = np.full(g.N, coef[0])
        for k in (1, 2, 3):
            d += coef[k] * np.cos(k * g.theta) + coef[3 + k] * np.sin(k * g.theta)
        lin = apply_linearization(st, d)
        errs = []
        for h in (1e-4, 5e-5):
            dp = AnnularDomain.create(unit_circle(), perturbed_curve(st.curve, h * d), 128, 128)
            dm = AnnularDomain.create(unit_circle(), perturbed_curve(st.curve, -h * d), 128, 128)
            fd = (
                eval_F(dp, st.schedule, st.t).residual
                - eval_F(dm, st.schedule, st.t).residual
            ) / (2 * h)
            errs.append(float(np.max(np.abs(fd - lin))))
        orders.append(math.log2(errs[0] / errs[1]) if errs[1] > 1e-8 else np.inf)
    order_ok = all(o >= 1.9 for o in orders)

    roundtrip_worst = 0.0
    for _ in range(3):
        coef = rng.standard_normal(9)
        phi = np.full(g.N, coef[0])
        for k in (1, 2, 3, 4):
            phi += coef[k] * np.cos(k * g.theta) + coef[4 + k] * np.sin(k * g.theta)
        p, _ = st.domain.solver.robin_solve(st.robin_coefficient(), phi)
        back = apply_linearization(st, p / (st.q_values * g.metric))
        roundtrip_worst = max(roundtrip_worst, float(np.max(np.abs(back - phi))))
    _report(
        9,
        order_ok and roundtrip_worst < 1e-6,
        f"observed FD orders {['%.2f' % o for o in orders]} (>= 1.9); inverse "
        f"roundtrip within {roundtrip_worst:.1e} (tol 1e-6)",
    )


def test_criterion_10_nonradial_regression():
    t0 = time.monotonic()
    sched = QSchedule.affine(3.0, 1.0, (0.02, 0.0))
    seed = circle(radial_branch_roots(3.0, 2)[0].r)
    st0 = converged_state(seed, sched)
    traj = run_flow(st0, sched, 0.3, FlowOptions(case="A", dt0=0.01))
    elapsed = time.monotonic() - t0

    resid_ok = all(s.residual_norm < 1e-8 for s in traj.states)
    kinds_ok = all(d["kind"] == "Hyperbolic" for d in traj.diagnostics)
    quad_worst = max(max_quadrature_residual(s) for s in traj.states)
    completed = traj.halt_reason == "completed"
    _report(
        10,
        resid_ok and kinds_ok and quad_worst < 1e-6 and completed and elapsed < 300.0,
        f"trajectory completed={completed}, residuals < 1e-8={resid_ok}, all "
        f"Hyperbolic={kinds_ok}, max quadrature residual {quad_worst:.1e} "
        f"(< 1e-6), runtime {elapsed:.0f}s (< 300s)",
    )
