"""Free-boundary residual, its linearization, and the Newton corrector.

A curve together with boundary data Q defines the residual
F = du/dnu - Q on the free boundary, where u is the capacitary potential
of the enclosed region in the container. Zeros of F are the free
boundaries sought. The Frechet derivative of F in the radial-graph
parametrization reads

    dF[dR] = H p + dp/dnu + (dQ/dnu) g dR + (R'/s^2) (dF/dtheta) dR,

with p harmonic, vanishing on the container and p = (du/dnu) g dR on the
free boundary; the last (tangential) term vanishes at solutions. At a
solution the derivative is inverted in closed form: solving the Robin
problem dp/dnu + (H + dQ,nu/Q) p = phi gives the radial update
dR = p / (Q g). Newton correction applies that inverse to the current
residual with step halving, which retains superlinear convergence near
solutions even though the tangential term is dropped off-solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .curves import BoundaryCurve, perturbed_curve
from .errors import (
    DegenerateOperator,
    NoConvergence,
    NonStarShaped,
    QNotPositive,
    ResolutionTooLow,
    SolverError,
)
from .potential import (
    AnnularDomain,
    PotentialSolution,
    robin_margin,
    solve_capacitary,
    spectral_dtheta_matrix,
)

NEWTON_TOL = 1e-9
NEWTON_MAX_ITER = 25
MAX_HALVINGS = 8
DEGENERACY_WARNING_MARGIN = 1e-5


class QSchedule:
    """Boundary data Q(x, t) with its spatial gradient and time derivative.

    The built-in forms cover constant data, data affine in time with an
    affine spatial modulation, and tabulated spatial data on a rectangular
    grid (bilinear, hence of low smoothness).
    """

    def __init__(
        self,
        value: Callable[[np.ndarray, float], np.ndarray],
        grad: Callable[[np.ndarray, float], np.ndarray],
        time_deriv: Callable[[np.ndarray, float], np.ndarray],
        smoothness: str = "analytic",
        descriptor: dict | None = None,
    ):
        self._value = value
        self._grad = grad
        self._time_deriv = time_deriv
        self.smoothness = smoothness
        self.descriptor = descriptor or {}

    def value(self, points: np.ndarray, t: float) -> np.ndarray:
        return self._value(np.atleast_2d(points), float(t))

    def grad(self, points: np.ndarray, t: float) -> np.ndarray:
        return self._grad(np.atleast_2d(points), float(t))

    def time_deriv(self, points: np.ndarray, t: float) -> np.ndarray:
        return self._time_deriv(np.atleast_2d(points), float(t))

    @staticmethod
    def constant(Q0: float) -> "QSchedule":
        if Q0 <= 0:
            raise QNotPositive(f"constant schedule needs Q > 0, got {Q0}")
        return QSchedule(
            lambda x, t: np.full(len(x), float(Q0)),
            lambda x, t: np.zeros_like(x),
            lambda x, t: np.zeros(len(x)),
            descriptor={"type": "constant", "Q": Q0},
        )

    @staticmethod
    def affine(
        Q0: float, rate: float = 0.0, x_coeff: tuple[float, float] = (0.0, 0.0)
    ) -> "QSchedule":
        """Q(x, t) = (Q0 + rate t) (1 + c1 x1 + c2 x2)."""
        c = np.asarray(x_coeff, dtype=float)

        def mod(x):
            return 1.0 + x @ c

        return QSchedule(
            lambda x, t: (Q0 + rate * t) * mod(x),
            lambda x, t: np.tile((Q0 + rate * t) * c, (len(x), 1)),
            lambda x, t: rate * mod(x),
            descriptor={
                "type": "affine",
                "Q0": Q0,
                "rate": rate,
                "x_coeff": list(map(float, c)),
            },
        )

    @staticmethod
    def table(
        x_grid: np.ndarray,
        y_grid: np.ndarray,
        values: np.ndarray,
        Q0: float = 1.0,
        rate: float = 0.0,
    ) -> "QSchedule":
        """Bilinear spatial table modulated affinely in time."""
        xg = np.asarray(x_grid, dtype=float)
        yg = np.asarray(y_grid, dtype=float)
        vals = np.asarray(values, dtype=float)
        if vals.shape != (len(xg), len(yg)):
            raise QNotPositive(
                f"table shape {vals.shape} does not match grid ({len(xg)}, {len(yg)})"
            )

        def locate(g, q):
            i = np.clip(np.searchsorted(g, q) - 1, 0, len(g) - 2)
            w = (q - g[i]) / (g[i + 1] - g[i])
            return i, np.clip(w, 0.0, 1.0)

        def interp(x):
            i, wx = locate(xg, x[:, 0])
            j, wy = locate(yg, x[:, 1])
            return (
                vals[i, j] * (1 - wx) * (1 - wy)
                + vals[i + 1, j] * wx * (1 - wy)
                + vals[i, j + 1] * (1 - wx) * wy
                + vals[i + 1, j + 1] * wx * wy
            )

        def interp_grad(x):
            i, wx = locate(xg, x[:, 0])
            j, wy = locate(yg, x[:, 1])
            dx = (
                (vals[i + 1, j] - vals[i, j]) * (1 - wy)
                + (vals[i + 1, j + 1] - vals[i, j + 1]) * wy
            ) / (xg[i + 1] - xg[i])
            dy = (
                (vals[i, j + 1] - vals[i, j]) * (1 - wx)
                + (vals[i + 1, j + 1] - vals[i + 1, j]) * wx
            ) / (yg[j + 1] - yg[j])
            return np.stack([dx, dy], axis=-1)

        return QSchedule(
            lambda x, t: (Q0 + rate * t) * interp(x),
            lambda x, t: (Q0 + rate * t) * interp_grad(x),
            lambda x, t: rate * interp(x),
            smoothness="bilinear",
            descriptor={"type": "table", "Q0": Q0, "rate": rate},
        )


@dataclass
class SolutionState:
    """A candidate or converged free boundary with all traces attached."""

    domain: AnnularDomain
    schedule: QSchedule
    t: float
    potential: PotentialSolution = field(repr=False)
    q_values: np.ndarray = field(repr=False, default=None)
    q_normal_deriv: np.ndarray = field(repr=False, default=None)
    residual: np.ndarray = field(repr=False, default=None)
    residual_norm: float = np.inf
    converged: bool = False
    classification: "object | None" = None
    warnings: tuple[str, ...] = ()

    @property
    def curve(self) -> BoundaryCurve:
        return self.domain.inner

    def robin_coefficient(self) -> np.ndarray:
        si = self.domain.inner_samples
        return si.curvature + self.q_normal_deriv / self.q_values

    def with_warning(self, message: str) -> "SolutionState":
        return replace(self, warnings=self.warnings + (message,))


def eval_F(domain: AnnularDomain, schedule: QSchedule, t: float = 0.0) -> SolutionState:
    """Residual du/dnu - Q of a candidate free boundary."""
    si = domain.inner_samples
    q = schedule.value(si.points, t)
    if np.any(q <= 0.0):
        raise QNotPositive(f"Q reaches {q.min():.3g} on the free boundary")
    sol = solve_capacitary(domain)
    grad_q = schedule.grad(si.points, t)
    dq_dnu = np.sum(grad_q * si.normals, axis=1)
    resid = sol.inner_normal_derivative - q
    return SolutionState(
        domain=domain,
        schedule=schedule,
        t=t,
        potential=sol,
        q_values=q,
        q_normal_deriv=dq_dnu,
        residual=resid,
        residual_norm=float(np.max(np.abs(resid))),
        converged=False,
    )


def apply_linearization(state: SolutionState, rho_dot: np.ndarray) -> np.ndarray:
    """Directional derivative of the residual along a radial perturbation."""
    si = state.domain.inner_samples
    rho_dot = np.asarray(rho_dot, dtype=float)
    if rho_dot.shape != (si.N,):
        raise ResolutionTooLow(
            f"perturbation sampled at {rho_dot.shape}, expected ({si.N},)"
        )
    q_u = state.potential.inner_normal_derivative
    p_data = q_u * si.metric * rho_dot
    p_sol = state.domain.solver.solve_dirichlet(
        np.zeros(state.domain.N_out), p_data
    )
    dp_dnu = p_sol.inner_normal_derivative
    H = si.curvature
    linear = H * p_data + dp_dnu + state.q_normal_deriv * si.metric * rho_dot
    # transport term from the moving parametrization; zero at solutions
    dF_dtheta = spectral_dtheta_matrix(si.N) @ state.residual
    radial_prime = state.curve.radius_prime(si.theta)
    linear += rho_dot * radial_prime * dF_dtheta / si.speed**2
    return linear


def newton_step_field(state: SolutionState) -> np.ndarray:
    """Radial update -p/(Q g) with p solving the Robin problem on the residual."""
    si = state.domain.inner_samples
    p_trace, _ = state.domain.solver.robin_solve(
        state.robin_coefficient(), state.residual
    )
    return -p_trace / (state.q_values * si.metric)


def newton_correct(
    state: SolutionState,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> SolutionState:
    """Drive the residual below tol by the damped quasi-Newton iteration."""
    if state.residual_norm < tol:
        return replace(state, converged=True)

    current = state
    for _ in range(max_iter):
        delta = newton_step_field(current)
        scale = 1.0
        trial = None
        for _ in range(MAX_HALVINGS + 1):
            try:
                curve = perturbed_curve(current.curve, scale * delta)
                domain = AnnularDomain.create(
                    current.domain.outer,
                    curve,
                    current.domain.N_out,
                    current.domain.N_in,
                )
                candidate = eval_F(domain, current.schedule, current.t)
            except (NonStarShaped, ResolutionTooLow, SolverError) as exc:
                if isinstance(exc, DegenerateOperator):
                    raise
                scale *= 0.5
                continue
            if candidate.residual_norm < current.residual_norm:
                trial = candidate
                break
            scale *= 0.5
        if trial is None:
            raise NoConvergence(
                f"residual stalled at {current.residual_norm:.3e} "
                f"after {MAX_HALVINGS} step halvings"
            )
        current = trial
        if current.residual_norm < tol:
            break
    if current.residual_norm >= tol:
        raise NoConvergence(
            f"residual {current.residual_norm:.3e} above {tol} after {max_iter} iterations"
        )
    current = replace(current, converged=True, warnings=state.warnings)
    margin = robin_margin(current.domain, current.robin_coefficient())
    if margin < DEGENERACY_WARNING_MARGIN:
        current = current.with_warning(
            f"DegeneracyWarning: nondegeneracy margin {margin:.2e} below "
            f"{DEGENERACY_WARNING_MARGIN}"
        )
    return current
