"""Star-shaped closed curves given by a truncated Fourier radius series.

A curve is R(theta) = a0 + sum_k (a_k cos k theta + b_k sin k theta) about
a fixed center. All geometric fields (tangent speed, curvature, metric
factor) are evaluated analytically from the coefficients at equispaced
nodes, which keeps them exact for the represented curve.

Conventions used throughout the package:
  * the stored unit normal nu points toward the curve's center (it is the
    outer normal of the annular region lying outside the curve);
  * curvature H is the negative of the usual signed curvature of a convex
    counterclockwise curve, so H = -1/r on a circle of radius r;
  * the metric factor g = R / sqrt(R^2 + R'^2) converts a radial-graph
    rate dR/dt into the normal speed of the moving boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatch, NonStarShaped, ResolutionTooLow

DECAY_GUARD = 0.1  # trailing mode must stay below this fraction of a0


@dataclass(frozen=True)
class BoundaryCurve:
    center: tuple[float, float]
    a0: float
    cos_coeffs: tuple[float, ...] = ()
    sin_coeffs: tuple[float, ...] = ()

    @property
    def degree(self) -> int:
        return max(len(self.cos_coeffs), len(self.sin_coeffs))

    def _padded(self) -> tuple[np.ndarray, np.ndarray]:
        K = self.degree
        a = np.zeros(K)
        b = np.zeros(K)
        a[: len(self.cos_coeffs)] = self.cos_coeffs
        b[: len(self.sin_coeffs)] = self.sin_coeffs
        return a, b

    def radius(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        a, b = self._padded()
        r = np.full_like(theta, self.a0, dtype=float)
        for k in range(1, self.degree + 1):
            r += a[k - 1] * np.cos(k * theta) + b[k - 1] * np.sin(k * theta)
        return r

    def radius_prime(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        a, b = self._padded()
        r = np.zeros_like(theta, dtype=float)
        for k in range(1, self.degree + 1):
            r += k * (-a[k - 1] * np.sin(k * theta) + b[k - 1] * np.cos(k * theta))
        return r

    def radius_second(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        a, b = self._padded()
        r = np.zeros_like(theta, dtype=float)
        for k in range(1, self.degree + 1):
            r -= k * k * (a[k - 1] * np.cos(k * theta) + b[k - 1] * np.sin(k * theta))
        return r

    def points(self, theta: np.ndarray) -> np.ndarray:
        r = self.radius(theta)
        return np.stack(
            [self.center[0] + r * np.cos(theta), self.center[1] + r * np.sin(theta)],
            axis=-1,
        )

    def enclosed_area(self) -> float:
        """Area of the enclosed region, (1/2) integral of R^2 (exact)."""
        a, b = self._padded()
        return np.pi * self.a0**2 + 0.5 * np.pi * float(np.sum(a**2 + b**2))

    def equivalent_radius(self) -> float:
        return float(np.sqrt(self.enclosed_area() / np.pi))

    def translated(self, shift: tuple[float, float]) -> "BoundaryCurve":
        cx, cy = self.center
        return BoundaryCurve(
            (cx + shift[0], cy + shift[1]), self.a0, self.cos_coeffs, self.sin_coeffs
        )

    def to_dict(self) -> dict:
        return {
            "center": [self.center[0], self.center[1]],
            "a0": self.a0,
            "cos": list(self.cos_coeffs),
            "sin": list(self.sin_coeffs),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @staticmethod
    def from_dict(data: dict) -> "BoundaryCurve":
        return curve_from_fourier(
            tuple(data["center"]),
            data["a0"],
            cos=data.get("cos", ()),
            sin=data.get("sin", ()),
        )

    @staticmethod
    def from_json(text: str) -> "BoundaryCurve":
        return BoundaryCurve.from_dict(json.loads(text))


def curve_from_fourier(
    center: tuple[float, float],
    a0: float,
    cos: tuple[float, ...] | list[float] = (),
    sin: tuple[float, ...] | list[float] = (),
) -> BoundaryCurve:
    """Build a star-shaped curve, validating positivity and coefficient decay."""
    if not np.isfinite(a0) or a0 <= 0.0:
        raise NonStarShaped(f"mean radius a0 must be positive, got {a0}")
    cos = tuple(float(c) for c in cos)
    sin = tuple(float(s) for s in sin)
    if not all(np.isfinite(cos)) or not all(np.isfinite(sin)):
        raise NonStarShaped("non-finite Fourier coefficient")
    curve = BoundaryCurve(tuple(map(float, center)), float(a0), cos, sin)
    K = curve.degree
    probes = np.linspace(0.0, 2.0 * np.pi, max(4 * K, 16), endpoint=False)
    r = curve.radius(probes)
    if np.any(r <= 0.0):
        raise NonStarShaped(
            f"polar radius non-positive (min {r.min():.3g}); curve not star-shaped"
        )
    if K > 0:
        a, b = curve._padded()
        if abs(a[-1]) + abs(b[-1]) > DECAY_GUARD * a0:
            raise ResolutionTooLow(
                f"trailing Fourier mode |a_{K}|+|b_{K}| = {abs(a[-1]) + abs(b[-1]):.3g} "
                f"exceeds {DECAY_GUARD} * a0; curve is underresolved"
            )
    return curve


def circle(radius: float, center: tuple[float, float] = (0.0, 0.0)) -> BoundaryCurve:
    return curve_from_fourier(center, radius)


def unit_circle() -> BoundaryCurve:
    return circle(1.0)


def default_nodes(curve: BoundaryCurve) -> int:
    return max(64, 8 * curve.degree)


@dataclass(frozen=True)
class CurveSamples:
    """Geometry of one curve at N equispaced angular nodes."""

    curve: BoundaryCurve
    N: int
    theta: np.ndarray
    points: np.ndarray  # (N, 2)
    normals: np.ndarray  # (N, 2), oriented toward the curve's center
    tangents: np.ndarray  # (N, 2), unit, counterclockwise
    speed: np.ndarray  # |dx/dtheta|
    curvature: np.ndarray  # H, equals -1/r on a circle
    metric: np.ndarray  # g = R / sqrt(R^2 + R'^2)
    radius: np.ndarray = field(repr=False, default=None)

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights for integrals in arclength."""
        return self.speed * (2.0 * np.pi / self.N)

    def length(self) -> float:
        return float(np.sum(self.weights))


def sample_geometry(curve: BoundaryCurve, N: int | None = None) -> CurveSamples:
    """Evaluate position, normal, speed, curvature and metric at N nodes."""
    if N is None:
        N = default_nodes(curve)
    K = curve.degree
    if N % 2 != 0:
        raise ResolutionTooLow(f"node count must be even, got {N}")
    if N < max(4 * K, 4):
        raise ResolutionTooLow(f"node count {N} below 4K = {4 * K}")

    theta = 2.0 * np.pi * np.arange(N) / N
    R = curve.radius(theta)
    if np.any(R <= 0.0):
        raise NonStarShaped("polar radius non-positive at collocation nodes")
    Rp = curve.radius_prime(theta)
    Rpp = curve.radius_second(theta)

    ct, st = np.cos(theta), np.sin(theta)
    pts = np.stack([curve.center[0] + R * ct, curve.center[1] + R * st], axis=-1)
    # x' = R' e_r + R e_theta
    xp = np.stack([Rp * ct - R * st, Rp * st + R * ct], axis=-1)
    speed = np.sqrt(R**2 + Rp**2)
    tangents = xp / speed[:, None]
    # outward normal (y', -x')/s; stored normal points inward
    outward = np.stack([xp[:, 1], -xp[:, 0]], axis=-1) / speed[:, None]
    normals = -outward
    # standard signed curvature of the polar graph, positive for convex ccw
    kappa = (R**2 + 2.0 * Rp**2 - R * Rpp) / speed**3
    curvature = -kappa
    metric = R / speed
    return CurveSamples(
        curve, N, theta, pts, normals, tangents, speed, curvature, metric, R
    )


def metric_factor(curve: BoundaryCurve, N: int | None = None) -> np.ndarray:
    """Factor converting dR/dt to normal speed; identically 1 on circles."""
    return sample_geometry(curve, N).metric


def integrate_boundary(samples: CurveSamples, f: np.ndarray) -> float:
    """Periodic-trapezoid boundary integral of a nodal field."""
    f = np.asarray(f, dtype=float)
    if f.shape != (samples.N,):
        raise GridMismatch(f"field has shape {f.shape}, expected ({samples.N},)")
    return float(np.sum(f * samples.weights))


def field_to_coeffs(field_values: np.ndarray, K: int) -> tuple[float, np.ndarray, np.ndarray]:
    """Project a nodal field onto Fourier modes 0..K (truncation)."""
    N = len(field_values)
    spec = np.fft.rfft(field_values)
    a0 = spec[0].real / N
    kmax = min(K, N // 2 - 1)
    a = np.zeros(K)
    b = np.zeros(K)
    a[:kmax] = 2.0 * spec[1 : kmax + 1].real / N
    b[:kmax] = -2.0 * spec[1 : kmax + 1].imag / N
    return float(a0), a, b


def perturbed_curve(
    curve: BoundaryCurve, delta_R: np.ndarray, max_degree: int | None = None
) -> BoundaryCurve:
    """Add a nodal radius increment to the curve.

    The increment is projected onto Fourier modes up to max_degree, which
    defaults to the larger of the curve's own degree and one eighth of the
    sampling grid (the resolution budget N = 8K). Negligible trailing
    modes are trimmed so the degree only grows when the update carries
    genuine content there.
    """
    if max_degree is None:
        max_degree = max(curve.degree, len(delta_R) // 8)
    K = max(max_degree, 1)
    d0, da, db = field_to_coeffs(delta_R, K)
    a, b = curve._padded()
    a = np.concatenate([a, np.zeros(K - len(a))])[:K] + da
    b = np.concatenate([b, np.zeros(K - len(b))])[:K] + db
    tiny = 1e-13 * curve.a0
    keep = K
    while keep > 0 and abs(a[keep - 1]) + abs(b[keep - 1]) < tiny:
        keep -= 1
    return curve_from_fourier(
        curve.center, curve.a0 + d0, cos=a[:keep], sin=b[:keep]
    )
