"""Nystrom boundary-integral solver for the Laplacian on an annular region.

The harmonic field between an outer container curve and an inner free
boundary is represented as

    u(x) = W_out[mu_o](x) + W_in[mu_i](x) + alpha log|x - c|,

double layers on both curves plus one logarithmic source at the inner
curve's center. The log term carries the circulation a double layer alone
cannot produce on a doubly connected region; the representation's
one-dimensional redundancy (constants in mu_i) is removed by the side
condition that mu_i integrates to zero. Quadrature is the periodic
trapezoid rule, with the curvature-limit diagonal for the double-layer
kernel and the Kussmaul-Martensen splitting for logarithmic kernels, so
all traces converge spectrally on smooth curves.

The hypersingular trace (normal derivative of the inner double layer on
its own curve) is evaluated through the arclength-derivative identity
T = d/ds o S o d/ds, which reduces it to a single-layer quadrature and
keeps the Dirichlet-to-Neumann map spectrally accurate. That map,
composed with a multiplication operator on the inner boundary, also
yields the discrete Robin solver used by the linearized problem.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .curves import BoundaryCurve, CurveSamples, default_nodes, sample_geometry
from .errors import (
    BoundaryTooClose,
    DegenerateOperator,
    OuterNotDisk,
    SingularSystem,
    TooCloseToBoundary,
)

SEPARATION_GUARD = 0.02
DEGENERACY_THRESHOLD = 1e-10

# The dense systems here are a few hundred rows; threaded BLAS loses far
# more to pool synchronization than it gains, so keep it single-threaded.
try:
    from threadpoolctl import threadpool_limits

    threadpool_limits(limits=1, user_api="blas")
except ImportError:  # pragma: no cover
    pass

_dtheta_cache: dict[int, np.ndarray] = {}
_logweight_cache: dict[int, np.ndarray] = {}


def spectral_dtheta_matrix(N: int) -> np.ndarray:
    """Dense d/dtheta matrix for 2pi-periodic trig interpolation (N even)."""
    if N not in _dtheta_cache:
        j = np.arange(N)
        diff = j[:, None] - j[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            D = 0.5 * (-1.0) ** diff / np.tan(np.pi * diff / N)
        np.fill_diagonal(D, 0.0)
        _dtheta_cache[N] = D
    return _dtheta_cache[N]


def log_quadrature_weights(N: int) -> np.ndarray:
    """Kussmaul-Martensen weights R_ij for the kernel log(4 sin^2((t_i-t_j)/2))."""
    if N not in _logweight_cache:
        n = N // 2
        d = 2.0 * np.pi * np.arange(N) / N
        m = np.arange(1, n)
        row = -(4.0 * np.pi / N) * np.cos(np.outer(d, m)) @ (1.0 / m)
        row -= (np.pi / n**2) * np.cos(n * d)
        idx = (np.arange(N)[:, None] - np.arange(N)[None, :]) % N
        _logweight_cache[N] = row[idx]
    return _logweight_cache[N]


def _double_layer_matrix(src: CurveSamples, targets: np.ndarray) -> np.ndarray:
    """Map nodal density on src to the potential at off-curve target points."""
    diff = targets[:, None, :] - src.points[None, :, :]
    r2 = np.sum(diff**2, axis=2)
    outward = -src.normals
    num = np.sum(diff * outward[None, :, :], axis=2)
    return (num / r2) * src.weights[None, :] / (2.0 * np.pi)


def _double_layer_self_matrix(src: CurveSamples) -> np.ndarray:
    """Principal-value double layer on the source curve itself.

    The kernel extends smoothly to the diagonal with limit -kappa/(4 pi),
    kappa the standard signed curvature (= -H here).
    """
    diff = src.points[:, None, :] - src.points[None, :, :]
    r2 = np.sum(diff**2, axis=2)
    np.fill_diagonal(r2, 1.0)
    outward = -src.normals
    num = np.sum(diff * outward[None, :, :], axis=2)
    M = (num / r2) * src.weights[None, :] / (2.0 * np.pi)
    np.fill_diagonal(M, src.curvature / (4.0 * np.pi) * src.weights)
    return M


def _gradient_blocks(src: CurveSamples, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cartesian gradient of the double layer at off-curve targets."""
    diff = targets[:, None, :] - src.points[None, :, :]
    r2 = np.sum(diff**2, axis=2)
    outward = -src.normals
    mdotd = np.sum(diff * outward[None, :, :], axis=2)
    common = src.weights[None, :] / (2.0 * np.pi)
    gx = (outward[None, :, 0] / r2 - 2.0 * mdotd * diff[:, :, 0] / r2**2) * common
    gy = (outward[None, :, 1] / r2 - 2.0 * mdotd * diff[:, :, 1] / r2**2) * common
    return gx, gy


def single_layer_self_matrix(src: CurveSamples) -> np.ndarray:
    """Spectrally accurate single layer S[sigma](x_i) on the source curve."""
    N = src.N
    R = log_quadrature_weights(N)
    diff = src.points[:, None, :] - src.points[None, :, :]
    dist = np.sqrt(np.sum(diff**2, axis=2))
    dtheta = src.theta[:, None] - src.theta[None, :]
    denom = 2.0 * np.abs(np.sin(0.5 * dtheta))
    with np.errstate(divide="ignore", invalid="ignore"):
        smooth = np.log(dist / denom)
    np.fill_diagonal(smooth, np.log(src.speed))
    M = -(0.5 * R + (2.0 * np.pi / N) * smooth) * src.speed[None, :] / (2.0 * np.pi)
    return M


def hypersingular_matrix(src: CurveSamples) -> np.ndarray:
    """Normal derivative of the curve's own double layer (both-sided limit).

    Uses T = D_s S D_s with D_s the arclength derivative; exact for the
    Laplace kernel and free of finite-part quadrature. The trigonometric
    differentiation matrix annihilates the Nyquist mode, which would leave
    a spurious null direction whenever the Robin trace term vanishes; a
    rank-one correction restores the mode with its circle eigenvalue
    -(N/2) / (2 s), exact on circles and acting only on unresolved noise
    for smooth densities.
    """
    Ds = spectral_dtheta_matrix(src.N) / src.speed[:, None]
    T = Ds @ single_layer_self_matrix(src) @ Ds
    alt = (-1.0) ** np.arange(src.N)
    c_nyq = -(src.N / 2) / (2.0 * float(np.mean(src.speed)))
    T += c_nyq * np.outer(alt, alt) / src.N
    return T


def _log_source(points: np.ndarray, center: np.ndarray) -> np.ndarray:
    return np.log(np.hypot(points[:, 0] - center[0], points[:, 1] - center[1]))


def _log_source_gradient(points: np.ndarray, center: np.ndarray) -> np.ndarray:
    diff = points - center[None, :]
    return diff / np.sum(diff**2, axis=1)[:, None]


@dataclass(frozen=True)
class AnnularDomain:
    """Container curve plus free-boundary curve with their collocation grids."""

    outer: BoundaryCurve
    inner: BoundaryCurve
    N_out: int
    N_in: int

    @staticmethod
    def create(
        outer: BoundaryCurve,
        inner: BoundaryCurve,
        N_out: int | None = None,
        N_in: int | None = None,
    ) -> "AnnularDomain":
        dom = AnnularDomain(
            outer,
            inner,
            N_out if N_out is not None else default_nodes(outer),
            N_in if N_in is not None else default_nodes(inner),
        )
        dom._validate()
        return dom

    @cached_property
    def outer_samples(self) -> CurveSamples:
        return sample_geometry(self.outer, self.N_out)

    @cached_property
    def inner_samples(self) -> CurveSamples:
        return sample_geometry(self.inner, self.N_in)

    def _validate(self) -> None:
        so, si = self.outer_samples, self.inner_samples
        # inner nodes must lie strictly inside the outer curve
        rel = si.points - np.array(self.outer.center)[None, :]
        dist = np.hypot(rel[:, 0], rel[:, 1])
        r_out = self.outer.radius(np.arctan2(rel[:, 1], rel[:, 0]))
        if np.any(dist >= r_out):
            raise BoundaryTooClose("inner curve not strictly inside the container")
        sep = np.min(
            np.sqrt(
                np.sum(
                    (so.points[:, None, :] - si.points[None, :, :]) ** 2, axis=2
                )
            )
        )
        if sep <= SEPARATION_GUARD:
            raise BoundaryTooClose(
                f"curve separation {sep:.4f} at or below guard {SEPARATION_GUARD}"
            )

    @cached_property
    def solver(self) -> "AnnulusSolver":
        return AnnulusSolver(self)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """True where a point lies inside the annular region."""
        points = np.atleast_2d(points)
        rel_o = points - np.array(self.outer.center)[None, :]
        inside_outer = np.hypot(rel_o[:, 0], rel_o[:, 1]) < self.outer.radius(
            np.arctan2(rel_o[:, 1], rel_o[:, 0])
        )
        rel_i = points - np.array(self.inner.center)[None, :]
        outside_inner = np.hypot(rel_i[:, 0], rel_i[:, 1]) > self.inner.radius(
            np.arctan2(rel_i[:, 1], rel_i[:, 0])
        )
        return inside_outer & outside_inner


class AnnulusSolver:
    """Assembled Nystrom blocks for one annular domain (immutable)."""

    def __init__(self, domain: AnnularDomain):
        self.domain = domain
        so = domain.outer_samples
        si = domain.inner_samples
        self.so, self.si = so, si
        self.center = np.array(domain.inner.center)

        self.D_oo = _double_layer_self_matrix(so)
        self.D_ii = _double_layer_self_matrix(si)
        self.D_io = _double_layer_matrix(so, si.points)  # outer density at inner nodes
        self.D_oi = _double_layer_matrix(si, so.points)  # inner density at outer nodes
        self.log_o = _log_source(so.points, self.center)
        self.log_i = _log_source(si.points, self.center)

        self.T_ii = hypersingular_matrix(si)
        gx, gy = _gradient_blocks(so, si.points)
        m_in = -si.normals  # outward of the inner curve
        self.G_io_m = gx * m_in[:, 0:1] + gy * m_in[:, 1:2]
        glog = _log_source_gradient(si.points, self.center)
        self.glog_m = np.sum(glog * m_in, axis=1)

        no, ni = so.N, si.N
        self.no, self.ni = no, ni
        # Dirichlet system: traces taken from inside the annulus
        M = np.zeros((no + ni + 1, no + ni + 1))
        M[:no, :no] = self.D_oo - 0.5 * np.eye(no)
        M[:no, no : no + ni] = self.D_oi
        M[:no, no + ni] = self.log_o
        M[no : no + ni, :no] = self.D_io
        M[no : no + ni, no : no + ni] = self.D_ii + 0.5 * np.eye(ni)
        M[no : no + ni, no + ni] = self.log_i
        M[no + ni, no : no + ni] = si.weights
        self.dirichlet_matrix = M

    @cached_property
    def dirichlet_lu(self):
        return _factor(self.dirichlet_matrix, "Dirichlet system")

    def solve_dirichlet(self, f_out: np.ndarray, f_in: np.ndarray) -> "PotentialSolution":
        rhs = np.concatenate([f_out, f_in, [0.0]])
        z = _lu_resolve(self.dirichlet_lu, self.dirichlet_matrix, rhs, "Dirichlet system")
        res = rhs - self.dirichlet_matrix @ z
        trace_residual = float(np.max(np.abs(res[: self.no + self.ni])))
        return PotentialSolution(
            self,
            mu_out=z[: self.no],
            mu_in=z[self.no : self.no + self.ni],
            alpha=float(z[self.no + self.ni]),
            f_out=np.array(f_out, dtype=float),
            f_in=np.array(f_in, dtype=float),
            trace_residual=trace_residual,
        )

    def robin_matrix(self, robin_coeff: np.ndarray) -> np.ndarray:
        """System for: harmonic p, p = 0 on the container, dp/dnu + w p = phi.

        dp/dnu = -dp/dm with m the inner curve's outward normal, so the
        inner rows are -(hypersingular + smooth gradients) + w * trace.
        """
        no, ni = self.no, self.ni
        w = np.asarray(robin_coeff, dtype=float)
        M = np.zeros((no + ni + 1, no + ni + 1))
        M[:no, :no] = self.D_oo - 0.5 * np.eye(no)
        M[:no, no : no + ni] = self.D_oi
        M[:no, no + ni] = self.log_o
        M[no : no + ni, :no] = -self.G_io_m + w[:, None] * self.D_io
        M[no : no + ni, no : no + ni] = -self.T_ii + w[:, None] * (
            self.D_ii + 0.5 * np.eye(ni)
        )
        M[no : no + ni, no + ni] = -self.glog_m + w * self.log_i
        M[no + ni, no : no + ni] = self.si.weights
        return M

    def robin_solve(
        self, robin_coeff: np.ndarray, rhs_field: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Return (p trace on the inner curve, density vector)."""
        M = self.robin_matrix(robin_coeff)
        lu = _factor(M, "Robin system")
        margin = _margin_estimate(M, lu)
        if margin < DEGENERACY_THRESHOLD:
            raise DegenerateOperator(
                f"Robin system margin {margin:.2e} below "
                f"{DEGENERACY_THRESHOLD}; free boundary is degenerate"
            )
        rhs = np.concatenate([np.zeros(self.no), rhs_field, [0.0]])
        z = _lu_resolve(lu, M, rhs, "Robin system")
        p_trace = self._inner_trace(z)
        return p_trace, z

    def _inner_trace(self, z: np.ndarray) -> np.ndarray:
        no, ni = self.no, self.ni
        mu_o, mu_i, alpha = z[:no], z[no : no + ni], z[no + ni]
        return (
            self.D_io @ mu_o
            + self.D_ii @ mu_i
            + 0.5 * mu_i
            + alpha * self.log_i
        )

    def inner_normal_derivative(self, z: np.ndarray) -> np.ndarray:
        """d/dnu on the inner curve (nu points out of the annulus, into A)."""
        no, ni = self.no, self.ni
        mu_o, mu_i, alpha = z[:no], z[no : no + ni], z[no + ni]
        ddm = self.T_ii @ mu_i + self.G_io_m @ mu_o + alpha * self.glog_m
        return -ddm


def _extreme_singular_values(M: np.ndarray) -> tuple[float, float]:
    sv = np.linalg.svd(M, compute_uv=False)
    return float(sv[-1]), float(sv[0])


def _factor(M: np.ndarray, context: str):
    try:
        lu = lu_factor(M)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"{context}: {exc}") from exc
    if not np.all(np.isfinite(lu[0])):
        raise SingularSystem(f"{context}: non-finite LU factor")
    return lu


def _lu_resolve(lu, M: np.ndarray, rhs: np.ndarray, context: str) -> np.ndarray:
    z = lu_solve(lu, rhs)
    # one step of iterative refinement keeps the residual near roundoff
    res = rhs - M @ z
    z = z + lu_solve(lu, res)
    res = rhs - M @ z
    scale = max(np.max(np.abs(rhs)), 1.0)
    if not np.all(np.isfinite(z)) or np.max(np.abs(res)) > 1e-9 * scale:
        raise SingularSystem(
            f"{context}: residual {np.max(np.abs(res)):.2e} after refinement"
        )
    return z


def _margin_estimate(M: np.ndarray, lu, iters: int = 8) -> float:
    """sigma_min / sigma_max estimate by power iteration on M^T M and its inverse."""
    rng = np.random.default_rng(12345)
    v = rng.standard_normal(M.shape[0])
    v /= np.linalg.norm(v)
    hi = 0.0
    for _ in range(iters):
        w = M.T @ (M @ v)
        hi = np.linalg.norm(w)
        v = w / hi
    v = rng.standard_normal(M.shape[0])
    v /= np.linalg.norm(v)
    lo_inv = 0.0
    for _ in range(iters):
        w = lu_solve(lu, lu_solve(lu, v), trans=1)
        lo_inv = np.linalg.norm(w)
        if not np.isfinite(lo_inv) or lo_inv == 0.0:
            return 0.0
        v = w / lo_inv
    return float(np.sqrt(1.0 / lo_inv) / np.sqrt(hi))


@dataclass(frozen=True)
class PotentialSolution:
    """Factorized layer representation of one Dirichlet solve."""

    solver: AnnulusSolver
    mu_out: np.ndarray
    mu_in: np.ndarray
    alpha: float
    f_out: np.ndarray
    f_in: np.ndarray
    trace_residual: float

    @property
    def domain(self) -> AnnularDomain:
        return self.solver.domain

    @cached_property
    def inner_normal_derivative(self) -> np.ndarray:
        z = np.concatenate([self.mu_out, self.mu_in, [self.alpha]])
        return self.solver.inner_normal_derivative(z)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Potential at interior points away from both boundaries."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        dom = self.domain
        if not np.all(dom.contains(points)):
            raise TooCloseToBoundary("evaluation point outside the annular region")
        for samples in (dom.outer_samples, dom.inner_samples):
            h = samples.length() / samples.N
            d = np.min(
                np.sqrt(
                    np.sum((points[:, None, :] - samples.points[None, :, :]) ** 2, axis=2)
                ),
                axis=1,
            )
            if np.any(d <= 5.0 * h):
                raise TooCloseToBoundary(
                    f"point within 5 grid spacings ({5 * h:.3g}) of a boundary"
                )
        u = _double_layer_matrix(dom.outer_samples, points) @ self.mu_out
        u += _double_layer_matrix(dom.inner_samples, points) @ self.mu_in
        u += self.alpha * _log_source(points, self.solver.center)
        return u


def solve_capacitary(domain: AnnularDomain) -> PotentialSolution:
    """Harmonic u with u = 0 on the container and u = 1 on the free boundary."""
    sol = domain.solver.solve_dirichlet(
        np.zeros(domain.N_out), np.ones(domain.N_in)
    )
    return sol


def solve_dirichlet_inner(domain: AnnularDomain, f_in: np.ndarray) -> PotentialSolution:
    """Harmonic field vanishing on the container with given inner trace."""
    return domain.solver.solve_dirichlet(np.zeros(domain.N_out), f_in)


def normal_derivative_inner(sol: PotentialSolution) -> np.ndarray:
    """du/dnu on the free boundary, nu oriented into the enclosed region."""
    return sol.inner_normal_derivative


def solve_robin(
    domain: AnnularDomain, robin_coeff: np.ndarray, rhs: np.ndarray
) -> np.ndarray:
    """Trace on the free boundary of the Robin problem dp/dnu + w p = rhs."""
    p, _ = domain.solver.robin_solve(robin_coeff, rhs)
    return p


def robin_margin(domain: AnnularDomain, robin_coeff: np.ndarray) -> float:
    """Smallest singular value of the Robin system over the largest."""
    sv_min, sv_max = _extreme_singular_values(domain.solver.robin_matrix(robin_coeff))
    return sv_min / sv_max


def evaluate_potential(sol: PotentialSolution, points: np.ndarray) -> np.ndarray:
    return sol.evaluate(points)


def disk_green_function(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Dirichlet Green's function of the unit disk, -Delta G = delta."""
    x = np.atleast_2d(x)[:, None, :]
    y = np.atleast_2d(y)[None, :, :]
    ynorm2 = np.sum(y**2, axis=2)
    ystar = y / ynorm2[:, :, None]
    d = np.sqrt(np.sum((x - y) ** 2, axis=2))
    dstar = np.sqrt(np.sum((x - ystar) ** 2, axis=2)) * np.sqrt(ynorm2)
    return (np.log(dstar) - np.log(d)) / (2.0 * np.pi)


def greens_check(
    domain: AnnularDomain, Q: np.ndarray, sol: PotentialSolution | None = None
) -> float:
    """Max discrepancy between the layer solution and the Green quadrature
    u(x) = int_boundary Q(y) G(x, y) dsigma(y), valid only for a unit-disk
    container. Near zero exactly when (curve, Q) solves the free boundary
    problem; returned without judgment otherwise.
    """
    out = domain.outer
    if (
        abs(out.a0 - 1.0) > 1e-12
        or out.degree > 0
        or abs(out.center[0]) > 1e-12
        or abs(out.center[1]) > 1e-12
    ):
        raise OuterNotDisk("Green-function cross-check requires the unit disk")
    if sol is None:
        sol = solve_capacitary(domain)
    si = domain.inner_samples
    # probe ring halfway between the two boundaries
    k = np.arange(16)
    angles = 2.0 * np.pi * k / 16
    inner_pts = si.curve.points(angles)
    rel = inner_pts - np.array(out.center)
    outer_pts = out.points(np.arctan2(rel[:, 1], rel[:, 0]))
    probes = 0.5 * (inner_pts + outer_pts)
    u_layers = sol.evaluate(probes)
    G = disk_green_function(probes, si.points)
    u_green = G @ (np.asarray(Q) * si.weights)
    return float(np.max(np.abs(u_layers - u_green)))
