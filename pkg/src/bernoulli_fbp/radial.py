"""Closed-form concentric solutions in the unit ball.

For a container equal to the unit ball, every solution is a concentric
ball of radius r and the normal derivative of the capacitary potential
on |x| = r is

    Q(r) = -1 / (r log r)              (n = 2)
    Q(r) = (n - 2) / (r (1 - r^(n-2)))  (n >= 3)

Q is convex on (0, 1) with a single interior minimum, so each value
Q > Q* is taken on a lower (hyperbolic) and an upper (elliptic) branch.
These formulas are the ground truth against which the boundary-integral
machinery is validated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateRadius, OutOfRange

_BISECT_TOL = 1e-6
_NEWTON_TOL = 1e-12


def _check_args(r: float, n: int) -> None:
    if n not in (2, 3):
        raise OutOfRange(f"dimension must be 2 or 3, got {n}")
    if not 0.0 < r < 1.0:
        raise OutOfRange(f"radius must lie in (0, 1), got {r}")


def radial_Q(r: float, n: int = 2) -> float:
    """Normal derivative of the capacitary potential of B_r in the unit ball."""
    _check_args(r, n)
    if n == 2:
        return -1.0 / (r * math.log(r))
    return (n - 2) / (r * (1.0 - r ** (n - 2)))


def radial_Q_prime(r: float, n: int = 2) -> float:
    """Derivative of radial_Q with respect to r (closed form)."""
    _check_args(r, n)
    if n == 2:
        return (1.0 + math.log(r)) / (r * math.log(r)) ** 2
    # n = 3: d/dr [1/(r - r^2)] = (2r - 1)/(r(1-r))^2
    return (2.0 * r - 1.0) / (r * (1.0 - r)) ** 2


def critical(n: int = 2) -> tuple[float, float]:
    """Radius and Q value of the parabolic fold: the minimum of radial_Q."""
    if n not in (2, 3):
        raise OutOfRange(f"dimension must be 2 or 3, got {n}")
    r_star = math.exp(-1.0) if n == 2 else (n - 1) ** (-1.0 / (n - 2))
    return r_star, radial_Q(r_star, n)


@dataclass(frozen=True)
class RadialBranchPoint:
    """One concentric solution: inner radius, Q value and branch tag."""

    n: int
    r: float
    Q: float
    branch: str  # "Lower" | "Upper" | "Critical"


def _refine_root(Q: float, n: int, lo: float, hi: float) -> float:
    # bracketed bisection to 1e-6, then Newton to 1e-12
    f = lambda r: radial_Q(r, n) - Q
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if flo * fm <= 0.0:
            hi = mid
        else:
            lo, flo = mid, fm
        if hi - lo < _BISECT_TOL:
            break
    r = 0.5 * (lo + hi)
    for _ in range(60):
        step = f(r) / radial_Q_prime(r, n)
        r -= step
        if abs(step) < _NEWTON_TOL:
            break
    return r


def radial_branch_roots(
    Q: float, n: int = 2
) -> tuple[RadialBranchPoint, RadialBranchPoint] | RadialBranchPoint | None:
    """Solve radial_Q(r, n) = Q.

    Returns a (Lower, Upper) pair for Q > Q*, the single Critical point at
    Q = Q* (within 1e-12), and None for Q < Q*.
    """
    if Q <= 0.0:
        raise OutOfRange(f"Q must be positive, got {Q}")
    r_star, q_star = critical(n)
    if Q < q_star - 1e-12:
        return None
    if abs(Q - q_star) <= 1e-12:
        return RadialBranchPoint(n, r_star, q_star, "Critical")

    # Q blows up at both endpoints, so brackets always exist.
    lo = r_star
    while radial_Q(lo, n) < Q:
        lo *= 0.5
    r1 = _refine_root(Q, n, lo, r_star)

    hi = 1.0 - 0.5 * (1.0 - r_star)
    while radial_Q(hi, n) < Q:
        hi = 1.0 - 0.5 * (1.0 - hi)
    r2 = _refine_root(Q, n, r_star, hi)

    return (
        RadialBranchPoint(n, r1, Q, "Lower"),
        RadialBranchPoint(n, r2, Q, "Upper"),
    )


def branch_of(r: float, n: int = 2) -> str:
    _check_args(r, n)
    r_star, _ = critical(n)
    if abs(r - r_star) < 1e-12:
        return "Critical"
    return "Lower" if r < r_star else "Upper"


def radial_linearized(r: float, n: int = 2, phi: float = 1.0) -> tuple[float, float]:
    """Boundary trace and boundary integral of the linearized Robin response.

    For the concentric configuration (n = 2) with constant data phi the
    response is p = c log|x| with c = -r phi / (1 + log r). Returns
    (p(r), 2 pi r p(r)). Undefined at the critical radius where the
    linearization is degenerate.
    """
    _check_args(r, n)
    if n != 2:
        raise OutOfRange("linearized closed form implemented for n = 2 only")
    log_r = math.log(r)
    if abs(1.0 + log_r) < 1e-12:
        raise DegenerateRadius(f"linearization degenerate at r = e^-1, got r = {r}")
    c = -r * phi / (1.0 + log_r)
    p_boundary = c * log_r
    return p_boundary, 2.0 * math.pi * r * p_boundary
