"""Geometric evolution of the free boundary under a varying Q schedule.

Solution families obey the nonlocal flow V = -p/Q, where p solves the
linearized Robin problem with the schedule's time derivative as data and
V is the normal speed toward the enclosed region. In the radial-graph
parametrization this is dR/dt = p/(Q g). The principal part of the
linearized evolution acts per Fourier mode like the first-order symbol
(k^2 + 1)/(|k| + mu), so each step treats the velocity explicitly and a
scalar multiple of that symbol implicitly, then re-projects with the
Newton corrector; re-projection makes the stored states exact solutions
at their time stamps, with the step size only selecting how far along the
family each step travels.

Certificates monitored every step: the predictor's harmonic moments must
stay within the drift tolerance of their initial values (checked before
re-projection), the Robin response sign must match the declared flow
case, and the nondegeneracy margin must stay above the parabolic-approach
threshold; the run halts with a labeled terminal state when a fold is
reached.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .classify import classify
from .curves import BoundaryCurve, perturbed_curve
from .errors import (
    BoundaryTooClose,
    MuTooSmall,
    NoConvergence,
    NonStarShaped,
    ResolutionTooLow,
    SignMismatch,
    SolverError,
    StepSizeUnderflow,
)
from .moments import MomentVector, harmonic_test_basis, moments, origin_enclosed
from .operator import QSchedule, SolutionState, eval_F, newton_correct
from .potential import AnnularDomain

PARABOLIC_APPROACH_MARGIN = 1e-5
PARABOLIC_DETECT_MARGIN = 1e-3


@dataclass
class FlowOptions:
    case: str | None = None  # "A" (hyperbolic, Q rising) or "B" (elliptic, falling)
    dt0: float = 0.01
    dt_min: float = 1e-5
    dt_max: float = 0.05
    newton_tol: float = 1e-9
    newton_max_iter: int = 25
    drift_tol: float = 1e-5
    margin_stop: float = PARABOLIC_APPROACH_MARGIN
    margin_detect: float = PARABOLIC_DETECT_MARGIN
    moment_kmax: int = 8
    adaptive: bool = True
    grow_after: int = 5
    grow_factor: float = 1.25
    mu: float | None = None


@dataclass(frozen=True)
class SymbolPreconditioner:
    """Fourier multiplier table (k^2 + 1)/(|k| + mu) with its scale factors."""

    mu: float
    m1: float
    m2: float
    multipliers: np.ndarray  # modes k = 0 .. K

    @property
    def scale(self) -> float:
        # -m1 m2 > 0 whenever the flow case assumptions hold
        return max(-self.m1 * self.m2, 0.0)

    def implicit_factors(self, dt: float) -> np.ndarray:
        return 1.0 + dt * self.scale * self.multipliers


def symbol_multipliers(k_max: int, mu: float) -> np.ndarray:
    k = np.arange(k_max + 1, dtype=float)
    return (k**2 + 1.0) / (k + mu)


def default_mu(state: SolutionState) -> float:
    return max(0.0, -float(np.min(state.robin_coefficient()))) + 1.0


def symbol_preconditioner(
    state: SolutionState, mu: float | None = None
) -> SymbolPreconditioner:
    """Build the multiplier table for a state; mu defaults to the smallest
    shift making the Robin coefficient positive, plus one."""
    w = state.robin_coefficient()
    if mu is None:
        mu = default_mu(state)
    if float(np.min(w)) + mu <= 0.0:
        raise MuTooSmall(
            f"shift {mu} leaves the Robin coefficient at "
            f"{float(np.min(w)) + mu:.3g}; needs H + dQ,nu/Q + mu > 0"
        )
    si = state.domain.inner_samples
    m1 = float(np.mean(si.metric / state.q_values))
    phi = state.schedule.time_deriv(si.points, state.t)
    if np.max(np.abs(phi)) == 0.0:
        m2 = 0.0
    else:
        p, _ = state.domain.solver.robin_solve(w, phi)
        m2 = float(np.mean(p))
    return SymbolPreconditioner(
        mu=float(mu),
        m1=m1,
        m2=m2,
        multipliers=symbol_multipliers(si.N // 2, mu),
    )


def _check_case(state: SolutionState, case: str | None) -> None:
    if case is None:
        return
    record = state.classification
    if record is None:
        record = classify(state)
    wanted = {"A": "Hyperbolic", "B": "Elliptic"}[case]
    if record.kind != wanted or not record.monotone:
        raise SignMismatch(
            f"case ({case}) needs a monotone {wanted} state, got "
            f"{record.kind} (monotone={record.monotone})"
        )


def _velocity_response(state: SolutionState, opts: FlowOptions):
    """Robin response p to the schedule's time derivative, sign-checked."""
    si = state.domain.inner_samples
    phi = state.schedule.time_deriv(si.points, state.t)
    if np.max(np.abs(phi)) == 0.0:
        return np.zeros(si.N), phi
    p, _ = state.domain.solver.robin_solve(state.robin_coefficient(), phi)
    if opts.case is not None and np.max(p) >= 0.0:
        raise SignMismatch(
            f"declared case ({opts.case}) requires a negative Robin response; "
            f"max p = {np.max(p):.3g}"
        )
    return p, phi


def _predict_curve(state: SolutionState, p: np.ndarray, dt: float, opts: FlowOptions) -> BoundaryCurve:
    si = state.domain.inner_samples
    rdot = p / (state.q_values * si.metric)
    pre = symbol_preconditioner(state, opts.mu)
    spectrum = np.fft.rfft(rdot)
    spectrum /= pre.implicit_factors(dt)[: len(spectrum)]
    delta = dt * np.fft.irfft(spectrum, si.N)
    return perturbed_curve(state.curve, delta)


def imex_predict(
    state: SolutionState,
    schedule: QSchedule,
    dt: float,
    opts: FlowOptions | None = None,
) -> SolutionState:
    """Semi-implicit predictor only: explicit velocity, implicit symbol damping.

    The result is generally not converged; flow_step re-projects it.
    """
    opts = opts or FlowOptions()
    p, phi = _velocity_response(state, opts)
    if np.max(np.abs(phi)) == 0.0:
        # nothing moves; the state itself is the solution at t + dt
        return eval_F(state.domain, schedule, state.t + dt)
    curve = _predict_curve(state, p, dt, opts)
    domain = AnnularDomain.create(
        state.domain.outer, curve, state.domain.N_out, state.domain.N_in
    )
    return eval_F(domain, schedule, state.t + dt)


def flow_step(
    state: SolutionState,
    schedule: QSchedule,
    dt: float,
    opts: FlowOptions | None = None,
) -> SolutionState:
    """One semi-implicit step followed by Newton re-projection at t + dt."""
    predictor, corrected = _attempt_step(state, schedule, dt, opts or FlowOptions())
    return corrected


def _attempt_step(
    state: SolutionState, schedule: QSchedule, dt: float, opts: FlowOptions
) -> tuple[SolutionState, SolutionState]:
    if not state.converged:
        raise NoConvergence("flow steps must start from a converged state")
    _check_case(state, opts.case)
    predictor = imex_predict(state, schedule, dt, opts)
    if predictor.residual_norm < opts.newton_tol:
        return predictor, replace(predictor, converged=True)
    corrected = newton_correct(
        predictor, tol=opts.newton_tol, max_iter=opts.newton_max_iter
    )
    return predictor, corrected


@dataclass
class FlowTrajectory:
    times: list[float] = field(default_factory=list)
    states: list[SolutionState] = field(default_factory=list)
    diagnostics: list[dict] = field(default_factory=list)
    halt_reason: str = "completed"
    case: str | None = None

    def append(self, t: float, state: SolutionState, diag: dict) -> None:
        if self.times and t <= self.times[-1]:
            raise ValueError("trajectory time stamps must increase")
        self.times.append(t)
        self.states.append(state)
        self.diagnostics.append(diag)

    @property
    def terminal(self) -> SolutionState:
        return self.states[-1]

    def moment_labels(self) -> tuple[str, ...]:
        return tuple(h.label for h in harmonic_test_basis())

    def save(self, run_dir: str | Path) -> None:
        run_dir = Path(run_dir)
        (run_dir / "states").mkdir(parents=True, exist_ok=True)
        for i, (t, st, diag) in enumerate(
            zip(self.times, self.states, self.diagnostics)
        ):
            record = {
                "t": t,
                "curve": st.curve.to_dict(),
                "residual_norm": st.residual_norm,
                "warnings": list(st.warnings),
                "moments": diag.get("moments", {}),
                "classification": st.classification.to_dict()
                if st.classification
                else None,
            }
            (run_dir / "states" / f"{i:04d}.json").write_text(
                json.dumps(record, indent=1)
            )
        labels = self.moment_labels()
        with open(run_dir / "diagnostics.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["t", "residual", "drift", "margin", "kind", "dt", *labels]
            )
            for t, diag in zip(self.times, self.diagnostics):
                writer.writerow(
                    [
                        f"{t:.12g}",
                        f"{diag['residual']:.6e}",
                        f"{diag['drift']:.6e}",
                        f"{diag['margin']:.6e}",
                        diag["kind"],
                        f"{diag['dt']:.6g}",
                        *[f"{diag['moments'].get(lab, float('nan')):.9e}" for lab in labels],
                    ]
                )


def _state_moments(state: SolutionState, basis) -> MomentVector | None:
    out = state.domain.outer
    is_disk = (
        out.degree == 0
        and abs(out.a0 - 1.0) < 1e-12
        and abs(out.center[0]) < 1e-12
        and abs(out.center[1]) < 1e-12
    )
    if not is_disk or not origin_enclosed(state):
        return None
    return moments(state, basis)


def run_flow(
    state0: SolutionState,
    schedule: QSchedule,
    T: float,
    opts: FlowOptions | None = None,
) -> FlowTrajectory:
    """Trace the solution family on [0, T] with adaptive step control."""
    opts = opts or FlowOptions()
    if not state0.converged:
        state0 = newton_correct(state0, tol=opts.newton_tol, max_iter=opts.newton_max_iter)
    record0 = state0.classification or classify(state0)
    _check_case(state0, opts.case)

    basis = harmonic_test_basis(opts.moment_kmax)
    m_ref = _state_moments(state0, basis)

    traj = FlowTrajectory(case=opts.case)
    traj.append(
        state0.t,
        state0,
        {
            "residual": state0.residual_norm,
            "residual_step": state0.residual_norm,
            "drift": 0.0,
            "margin": record0.nondegeneracy_margin,
            "kind": record0.kind,
            "dt": 0.0,
            "moments": m_ref.as_dict() if m_ref else {},
        },
    )

    t_end = state0.t + T
    current = state0
    current_margin = record0.nondegeneracy_margin
    dt = min(opts.dt0, opts.dt_max)
    clean_steps = 0

    def shrink_or_stop(reason: str) -> bool:
        """Halve dt; on underflow distinguish a fold from a genuine stall."""
        nonlocal dt, clean_steps
        dt *= 0.5
        clean_steps = 0
        if dt >= opts.dt_min:
            return False
        if current_margin < opts.margin_detect:
            # family ends at a fold the corrector cannot cross
            traj.halt_reason = "ParabolicApproach"
            return True
        raise StepSizeUnderflow(
            f"step size {dt:.2e} below {opts.dt_min} at t = {current.t:.6f} ({reason})"
        )

    while current.t < t_end - 1e-12:
        dt = min(dt, t_end - current.t)
        try:
            predictor, corrected = _attempt_step(current, schedule, dt, opts)
        except (NoConvergence, NonStarShaped, ResolutionTooLow, BoundaryTooClose) as exc:
            if not opts.adaptive:
                raise
            if shrink_or_stop(type(exc).__name__):
                break
            continue

        m_pred = _state_moments(predictor, basis) if m_ref else None
        drift = m_pred.max_drift(m_ref) if m_pred else float("nan")
        if opts.adaptive and m_pred is not None and drift > opts.drift_tol:
            if shrink_or_stop(f"moment drift {drift:.2e}"):
                break
            continue

        record = classify(corrected)
        traj.append(
            corrected.t,
            corrected,
            {
                "residual": corrected.residual_norm,
                "residual_step": predictor.residual_norm,
                "drift": drift,
                "margin": record.nondegeneracy_margin,
                "kind": record.kind,
                "dt": dt,
                "moments": _state_moments(corrected, basis).as_dict()
                if m_ref
                else {},
            },
        )
        current = corrected
        current_margin = record.nondegeneracy_margin
        if record.nondegeneracy_margin < opts.margin_stop:
            traj.halt_reason = "ParabolicApproach"
            break
        clean_steps += 1
        if opts.adaptive and clean_steps >= opts.grow_after:
            dt = min(dt * opts.grow_factor, opts.dt_max)
            clean_steps = 0
    return traj


def branch_sweep(
    outer: BoundaryCurve,
    Q_values,
    seeds,
    schedule_factory=QSchedule.constant,
    N: int | None = None,
    tol: float = 1e-9,
    max_iter: int = 25,
) -> list[dict]:
    """Newton-correct every (Q, seed) pair and tabulate the outcomes.

    Rows with failed corrections are recorded as NoConvergence and the
    sweep continues. Seeds may be curves or previously converged states.
    """
    rows = []
    for Q in Q_values:
        schedule = schedule_factory(float(Q))
        for idx, seed in enumerate(seeds):
            curve = seed.curve if isinstance(seed, SolutionState) else seed
            row = {
                "Q": float(Q),
                "seed": idx,
                "status": "Converged",
                "area": float("nan"),
                "equivalent_radius": float("nan"),
                "kind": "NoConvergence",
                "margin": float("nan"),
            }
            try:
                domain = AnnularDomain.create(outer, curve, N, N)
                state = newton_correct(
                    eval_F(domain, schedule, 0.0), tol=tol, max_iter=max_iter
                )
                record = classify(state)
            except (NoConvergence, SolverError) as exc:
                row["status"] = type(exc).__name__
                rows.append(row)
                continue
            row["area"] = state.curve.enclosed_area()
            row["equivalent_radius"] = state.curve.equivalent_radius()
            row["kind"] = record.kind
            row["margin"] = record.nondegeneracy_margin
            if state.warnings:
                row["warnings"] = list(state.warnings)
            rows.append(row)
    return rows
