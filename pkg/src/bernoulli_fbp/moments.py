"""Harmonic moments and the quadrature-identity certificate.

For a unit-disk container, combining each harmonic polynomial with its
Kelvin transform gives test functions vanishing on the container wall:

    H_0  = log|x|,   H_k = (r^k - r^-k) {cos, sin}(k theta)   (k >= 1),

harmonic away from the origin. The weighted moments
m_k = int_boundary Q H_k dsigma are conserved along solution families, and
the quadrature identity int Q h = int dh/dnu over the free boundary (for
every admissible harmonic h) holds exactly at solutions, so both serve as
solver-independent certificates: for boundaries enclosing the origin the
monopole moment must equal -2 pi and all higher moments must vanish.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curves import integrate_boundary
from .errors import OriginNotEnclosed, OuterNotDisk
from .operator import SolutionState

DEFAULT_KMAX = 8


@dataclass(frozen=True)
class HarmonicTestFunction:
    """One member of the disk test basis: degree k and cos/sin parity."""

    degree: int
    parity: str  # "log" for the monopole, else "cos" | "sin"

    @property
    def label(self) -> str:
        if self.degree == 0:
            return "m_0"
        return f"m_{self.degree}{self.parity[0]}"

    def value(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        r = np.hypot(points[:, 0], points[:, 1])
        if self.degree == 0:
            return np.log(r)
        k = self.degree
        ang = k * np.arctan2(points[:, 1], points[:, 0])
        tri = np.cos(ang) if self.parity == "cos" else np.sin(ang)
        return (r**k - r ** (-k)) * tri

    def gradient(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        r = np.hypot(points[:, 0], points[:, 1])
        theta = np.arctan2(points[:, 1], points[:, 0])
        e_r = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        if self.degree == 0:
            return e_r / r[:, None]
        k = self.degree
        ang = k * theta
        tri = np.cos(ang) if self.parity == "cos" else np.sin(ang)
        dtri = -np.sin(ang) if self.parity == "cos" else np.cos(ang)
        e_t = np.stack([-np.sin(theta), np.cos(theta)], axis=-1)
        d_r = k * (r ** (k - 1) + r ** (-k - 1)) * tri
        d_t = (r ** (k - 1) - r ** (-k - 1)) * k * dtri
        return d_r[:, None] * e_r + d_t[:, None] * e_t


def harmonic_test_basis(k_max: int = DEFAULT_KMAX) -> list[HarmonicTestFunction]:
    """Monopole plus cos/sin pairs up to degree k_max (1 + 2 k_max members)."""
    basis = [HarmonicTestFunction(0, "log")]
    for k in range(1, k_max + 1):
        basis.append(HarmonicTestFunction(k, "cos"))
        basis.append(HarmonicTestFunction(k, "sin"))
    return basis


@dataclass(frozen=True)
class MomentVector:
    labels: tuple[str, ...]
    values: np.ndarray
    t: float

    def as_dict(self) -> dict[str, float]:
        return {lab: float(v) for lab, v in zip(self.labels, self.values)}

    def max_drift(self, other: "MomentVector") -> float:
        return float(np.max(np.abs(self.values - other.values)))


def _require_disk_container(state: SolutionState) -> None:
    out = state.domain.outer
    if (
        out.degree > 0
        or abs(out.a0 - 1.0) > 1e-12
        or abs(out.center[0]) > 1e-12
        or abs(out.center[1]) > 1e-12
    ):
        raise OuterNotDisk("the moment basis is specific to the unit-disk container")


def origin_enclosed(state: SolutionState) -> bool:
    c = np.array(state.curve.center)
    d = np.hypot(c[0], c[1])
    if d == 0.0:
        return True
    angle = np.arctan2(-c[1], -c[0])
    return d < float(state.curve.radius(np.array(angle)))


def moments(
    state: SolutionState, basis: list[HarmonicTestFunction] | None = None
) -> MomentVector:
    """Boundary quadrature of Q against every basis member."""
    _require_disk_container(state)
    if not origin_enclosed(state):
        raise OriginNotEnclosed("free boundary does not enclose the origin")
    if basis is None:
        basis = harmonic_test_basis()
    si = state.domain.inner_samples
    vals = np.array(
        [integrate_boundary(si, state.q_values * h.value(si.points)) for h in basis]
    )
    return MomentVector(tuple(h.label for h in basis), vals, state.t)


def quadrature_residual(state: SolutionState, h) -> float:
    """int Q h - int dh/dnu over the free boundary; zero iff a solution.

    Accepts any object exposing value(points) and gradient(points) that is
    harmonic near the annular region and vanishes on the container.
    """
    si = state.domain.inner_samples
    weighted = integrate_boundary(si, state.q_values * h.value(si.points))
    dh_dnu = np.sum(h.gradient(si.points) * si.normals, axis=1)
    flux = integrate_boundary(si, dh_dnu)
    return float(weighted - flux)


def max_quadrature_residual(
    state: SolutionState, basis: list[HarmonicTestFunction] | None = None
) -> float:
    if basis is None:
        basis = harmonic_test_basis()
    return max(abs(quadrature_residual(state, h)) for h in basis)
