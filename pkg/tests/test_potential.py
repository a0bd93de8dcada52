import math

import numpy as np
import pytest
from scipy.linalg import lu_factor, lu_solve

from bernoulli_fbp.curves import circle, curve_from_fourier, unit_circle
from bernoulli_fbp.errors import (
    BoundaryTooClose,
    DegenerateOperator,
    OuterNotDisk,
    TooCloseToBoundary,
)
from bernoulli_fbp.potential import (
    AnnularDomain,
    evaluate_potential,
    greens_check,
    normal_derivative_inner,
    robin_margin,
    solve_capacitary,
    solve_robin,
)
from bernoulli_fbp.radial import radial_linearized, radial_Q

R_STAR = math.exp(-1.0)


def radial_domain(r, N=128):
    return AnnularDomain.create(unit_circle(), circle(r), N, N)


def test_separation_guard():
    with pytest.raises(BoundaryTooClose):
        AnnularDomain.create(unit_circle(), circle(0.99), 64, 64)
    with pytest.raises(BoundaryTooClose):
        AnnularDomain.create(circle(0.5), circle(0.6), 64, 64)


def test_capacitary_trace_residual():
    sol = solve_capacitary(radial_domain(0.5))
    assert sol.trace_residual < 1e-10


def test_radial_normal_derivative():
    for r in (0.5, R_STAR, 0.3):
        qu = normal_derivative_inner(solve_capacitary(radial_domain(r)))
        assert np.max(np.abs(qu - radial_Q(r))) < 1e-8
    assert radial_Q(0.5) == pytest.approx(2.885390, abs=1e-6)
    assert radial_Q(R_STAR) == pytest.approx(math.e, abs=1e-12)


def test_normal_derivative_positive_on_oval():
    inner = curve_from_fourier((0.05, 0.0), 0.45, cos=[0.02, 0.03], sin=[0.01])
    qu = normal_derivative_inner(solve_capacitary(AnnularDomain.create(unit_circle(), inner)))
    assert np.all(qu > 0)


def test_interior_value_radial():
    sol = solve_capacitary(radial_domain(0.5))
    pts = np.array([[0.7, 0.0], [0.0, 0.7], [-0.49497, 0.49497]])
    expected = np.log(np.hypot(pts[:, 0], pts[:, 1])) / np.log(0.5)
    assert np.max(np.abs(sol.evaluate(pts) - expected)) < 1e-8
    assert sol.evaluate(np.array([[0.7, 0.0]]))[0] == pytest.approx(0.51457, abs=1e-5)


def test_maximum_principle_interior():
    inner = curve_from_fourier((0.1, -0.05), 0.4, cos=[0.0, 0.04])
    sol = solve_capacitary(AnnularDomain.create(unit_circle(), inner, 128, 128))
    angles = np.linspace(0, 2 * np.pi, 12, endpoint=False)
    probes = np.stack([0.72 * np.cos(angles), 0.72 * np.sin(angles)], axis=-1)
    u = sol.evaluate(probes)
    assert np.all(u > 0.0) and np.all(u < 1.0)


def test_symmetric_domain_symmetry():
    # even cosine modes only: domain invariant under x -> -x
    inner = curve_from_fourier((0.0, 0.0), 0.45, cos=[0.0, 0.03, 0.0, 0.02])
    sol = solve_capacitary(AnnularDomain.create(unit_circle(), inner, 128, 128))
    pts = np.array([[0.7, 0.1], [0.3, 0.63], [0.58, -0.38]])
    assert np.max(np.abs(sol.evaluate(pts) - sol.evaluate(-pts))) < 1e-10


def test_too_close_to_boundary():
    sol = solve_capacitary(radial_domain(0.5, N=64))
    with pytest.raises(TooCloseToBoundary):
        evaluate_potential(sol, np.array([[0.99, 0.0]]))
    with pytest.raises(TooCloseToBoundary):
        evaluate_potential(sol, np.array([[0.3, 0.0]]))  # inside the hole


def test_flux_quantization():
    for r in (0.5, 0.25):
        dom = radial_domain(r)
        qu = normal_derivative_inner(solve_capacitary(dom))
        flux = np.sum(qu * dom.inner_samples.weights)
        assert flux == pytest.approx(2 * np.pi / abs(math.log(r)), abs=1e-8)


def test_flux_quantization_offset_curve():
    inner = curve_from_fourier((0.12, -0.08), 0.35, cos=[0.01, 0.02])
    dom = AnnularDomain.create(unit_circle(), inner, 128, 128)
    qu = normal_derivative_inner(solve_capacitary(dom))
    flux_in = np.sum(qu * dom.inner_samples.weights)
    # divergence theorem: flux through both boundaries balances
    dom2 = AnnularDomain.create(unit_circle(), inner, 192, 192)
    qu2 = normal_derivative_inner(solve_capacitary(dom2))
    flux_in2 = np.sum(qu2 * dom2.inner_samples.weights)
    assert flux_in == pytest.approx(flux_in2, abs=1e-9)


def test_grid_convergence_radial_floor():
    # concentric circles resolve exactly; every grid sits at the accuracy floor
    for N in (16, 32, 64, 128):
        qu = normal_derivative_inner(solve_capacitary(radial_domain(0.5, N)))
        assert np.max(np.abs(qu - radial_Q(0.5))) < 1e-11


def test_grid_convergence_offset_spectral():
    inner = circle(0.45, center=(0.2, 0.0))
    errs = []
    ref = None
    for N in (24, 48, 96, 192):
        dom = AnnularDomain.create(unit_circle(), inner, N, N)
        qu = normal_derivative_inner(solve_capacitary(dom))
        if N == 192:
            ref = qu
        errs.append(qu[0])
    diffs = [abs(e - ref[0]) for e in errs[:-1]]
    # doubling the grid gains at least four orders until the floor
    assert diffs[1] < max(1e-4 * diffs[0], 1e-11)
    assert diffs[2] < max(1e-4 * diffs[1], 1e-11)


def test_robin_radial_closed_form():
    for r in (0.5, 0.2):
        dom = radial_domain(r)
        w = np.full(dom.N_in, -1.0 / r)
        p = solve_robin(dom, w, np.ones(dom.N_in))
        expected, _ = radial_linearized(r)
        assert np.max(np.abs(p - expected)) < 1e-9


def test_robin_zero_rhs():
    dom = radial_domain(0.5)
    p = solve_robin(dom, np.full(dom.N_in, -2.0), np.zeros(dom.N_in))
    assert np.max(np.abs(p)) < 1e-12


def test_robin_degenerate_at_critical_radius():
    dom = radial_domain(R_STAR)
    w = np.full(dom.N_in, -1.0 / R_STAR)
    with pytest.raises(DegenerateOperator):
        solve_robin(dom, w, np.ones(dom.N_in))


def test_robin_margin_scale():
    assert robin_margin(radial_domain(0.5), np.full(128, -2.0)) > 1e-3
    m = robin_margin(radial_domain(R_STAR), np.full(128, -1.0 / R_STAR))
    assert m < 1e-12


def test_robin_solvability_improves_with_shift():
    dom = radial_domain(0.5, N=64)
    solver = dom.solver

    def trace_map_cond(mu):
        M = solver.robin_matrix(np.full(64, -2.0 + mu))
        lu = lu_factor(M)
        cols = []
        for j in range(64):
            rhs = np.zeros(129)
            rhs[64 + j] = 1.0
            cols.append(solver._inner_trace(lu_solve(lu, rhs)))
        return np.linalg.cond(np.array(cols).T)

    conds = [trace_map_cond(mu) for mu in (0.0, 1.0, 2.0, 4.0, 8.0)]
    assert all(a > b for a, b in zip(conds, conds[1:]))


def test_greens_check_radial():
    dom = radial_domain(0.5)
    Q = np.full(dom.N_in, radial_Q(0.5))
    assert greens_check(dom, Q) < 1e-7


def test_greens_check_non_solution():
    dom = radial_domain(0.5)
    d = greens_check(dom, np.full(dom.N_in, 3.5))
    assert d > 1e-3  # identity only holds at solutions


def test_greens_check_requires_disk():
    dom = AnnularDomain.create(circle(1.1), circle(0.5), 64, 64)
    with pytest.raises(OuterNotDisk):
        greens_check(dom, np.full(64, 2.0))


def test_greens_check_after_newton_on_perturbed_problem():
    # cross-validates the layer solver and the Green quadrature off the
    # radial family: converge a solution for spatially modulated data
    from bernoulli_fbp.operator import QSchedule, eval_F, newton_correct

    sched = QSchedule.affine(3.0, 0.0, (0.02, 0.0))
    dom = AnnularDomain.create(unit_circle(), circle(0.22), 128, 128)
    st = newton_correct(eval_F(dom, sched, 0.0))
    assert greens_check(st.domain, st.q_values, st.potential) < 1e-6


def test_offcenter_solve_selfconsistent():
    inner = curve_from_fourier((0.15, 0.1), 0.32, cos=[0.02], sin=[-0.01, 0.015])
    qs = []
    for N in (96, 192):
        dom = AnnularDomain.create(unit_circle(), inner, N, N)
        qs.append(normal_derivative_inner(solve_capacitary(dom)))
    assert np.max(np.abs(qs[0] - qs[1][::2])) < 1e-9
