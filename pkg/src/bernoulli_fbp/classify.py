"""Type classification of converged free boundaries.

The linearized Robin problem with unit data phi = 1 probes how the
boundary responds to raising Q: a positive boundary integral of the
response p marks an expanding (elliptic) solution, a negative one a
shrinking (hyperbolic) solution, and a vanishing linearization a
parabolic fold. Monotone means p keeps one strict sign, so the response
is an ordered deformation. Non-degeneracy is measured as the normalized
smallest singular value of the discrete Robin system; below the
degeneracy threshold the system carries a kernel, the least-squares
response suppresses it, and the verdict is forced to Parabolic with the
record flagged untrusted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curves import integrate_boundary
from .errors import NoConvergence
from .operator import SolutionState

DEGENERACY_THRESHOLD = 1e-10
MONOTONE_REL_MARGIN = 1e-8
PARABOLIC_TOL_PER_LENGTH = 1e-6
LSTSQ_RCOND = 1e-8


@dataclass(frozen=True)
class ClassificationRecord:
    kind: str  # "Elliptic" | "Hyperbolic" | "Parabolic"
    integral_p: float
    monotone: bool
    nondegeneracy_margin: float
    criterion_ok: bool
    degenerate: bool
    p_trace: np.ndarray

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "integral_p": self.integral_p,
            "monotone": self.monotone,
            "nondegeneracy_margin": self.nondegeneracy_margin,
            "criterion_ok": self.criterion_ok,
            "degenerate": self.degenerate,
            "p_trace": [float(v) for v in self.p_trace],
        }


def _require_converged(state: SolutionState) -> None:
    if not state.converged:
        raise NoConvergence(
            f"classification requires a converged state "
            f"(residual {state.residual_norm:.3e})"
        )


def _robin_least_squares(state: SolutionState, rhs_field: np.ndarray):
    """Least-squares Robin solve; returns (p trace, normalized margin).

    When the system is degenerate the solve only determines p modulo the
    kernel, so the returned trace is the representative orthogonal (in the
    boundary measure) to the kernel's trace.
    """
    solver = state.domain.solver
    M = solver.robin_matrix(state.robin_coefficient())
    rhs = np.concatenate([np.zeros(solver.no), rhs_field, [0.0]])
    z, _, _, sv = np.linalg.lstsq(M, rhs, rcond=LSTSQ_RCOND)
    margin = float(sv[-1] / sv[0])
    p = solver._inner_trace(z)
    if margin < DEGENERACY_THRESHOLD:
        _, _, Vt = np.linalg.svd(M)
        kernel_trace = solver._inner_trace(Vt[-1])
        w = state.domain.inner_samples.weights
        norm2 = float(np.sum(kernel_trace**2 * w))
        if norm2 > 1e-20:
            p = p - (np.sum(p * kernel_trace * w) / norm2) * kernel_trace
    return p, margin


def classify(state: SolutionState, tau_par: float | None = None) -> ClassificationRecord:
    """Fill the elliptic/hyperbolic/parabolic record for a converged state."""
    _require_converged(state)
    si = state.domain.inner_samples
    if tau_par is None:
        tau_par = PARABOLIC_TOL_PER_LENGTH * si.length()

    p, margin = _robin_least_squares(state, np.ones(si.N))
    integral_p = integrate_boundary(si, p)

    degenerate = margin < DEGENERACY_THRESHOLD
    if degenerate:
        kind = "Parabolic"
    elif integral_p > tau_par:
        kind = "Elliptic"
    elif integral_p < -tau_par:
        kind = "Hyperbolic"
    else:
        kind = "Parabolic"

    strict = MONOTONE_REL_MARGIN * np.max(np.abs(p)) if np.any(p) else 0.0
    monotone = bool(np.all(p > strict) or np.all(p < -strict))

    ok, _ = acker_criterion(state)
    record = ClassificationRecord(
        kind=kind,
        integral_p=float(integral_p),
        monotone=monotone,
        nondegeneracy_margin=margin,
        criterion_ok=ok,
        degenerate=degenerate,
        p_trace=p,
    )
    state.classification = record
    return record


def nondegeneracy_margin(state: SolutionState) -> float:
    """Smallest over largest singular value of the discrete Robin system."""
    _require_converged(state)
    M = state.domain.solver.robin_matrix(state.robin_coefficient())
    sv = np.linalg.svd(M, compute_uv=False)
    return float(sv[-1] / sv[0])


def acker_criterion(state: SolutionState) -> tuple[bool, np.ndarray]:
    """Pointwise field H + Q + dQ,nu / Q; positivity is sufficient for an
    elliptic, monotone, non-degenerate boundary."""
    _require_converged(state)
    si = state.domain.inner_samples
    field = si.curvature + state.q_values + state.q_normal_deriv / state.q_values
    return bool(np.min(field) > 0.0), field
