"""Two-location triangulation of the emitter from a pair of DoA estimates.

Location 2 is expressed in location 1's frame as (d, varphi, vartheta); the
horizontal intersection of the two bearings fixes the range along the first
DoA, and the first DoA then lifts the fix to 3D. Only the first location's
polar angle enters the range formula; the second DoA's polar angle shows up
solely in the skew-ray residual.

With noisy angles the two 3D bearing rays do not intersect. The estimator is
kept as the exact planar formula (paper fidelity); the closest-approach gap
between the rays is reported as `residual_m` so callers can gauge how
inconsistent the two bearings were.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .beamform import DoaEstimate
from .errors import DegenerateBaseline, NegativeRange, ParallelBearings
from .geometry import sph_to_rect

__all__ = [
    "FixResult",
    "ErrorBreakdown",
    "localize",
    "error_metrics",
]

# Below this, the range denominator counts as vanished (bearings parallel).
PARALLEL_EPS = 1e-9


@dataclass(frozen=True)
class FixResult:
    """Emitter fix: local spherical w.r.t. location 1 plus the world point."""

    range_m: float
    phi: float  # polar angle of the first DoA (radians)
    theta: float  # azimuth of the first DoA (radians)
    world: np.ndarray  # location-1 world position + range * unit(doa1)
    residual_m: float  # closest-approach gap between the two bearing rays


class ErrorBreakdown(NamedTuple):
    """Signed per-axis errors and the derived 2D/3D error norms."""

    dx: float
    dy: float
    dz: float
    error_2d: float
    error_3d: float


def localize(
    doa1: DoaEstimate,
    doa2: DoaEstimate,
    rel: tuple[float, float, float],
    origin=None,
) -> FixResult:
    """Intersect the two bearings and return the emitter fix.

    `rel` = (d, varphi, vartheta) is location 2 in location 1's frame
    (baseline length, polar angle from vertical, azimuth). `origin` is
    location 1's world position (defaults to the origin), added to the local
    fix so `world` is directly comparable with a world-frame truth.

    The range along the first bearing:

        a = d sin(varphi) tan(vartheta - theta2)
            / [(tan(theta1 - vartheta) + tan(vartheta - theta2))
               * cos(theta1 - vartheta) * sin(phi1)]

    which reduces to the planar sine rule
    a sin(phi1) = d sin(varphi) sin(vartheta - theta2) / sin(theta1 - theta2):
    the horizontal triangle solved at location 1, scaled back through the
    first DoA's polar angle.
    """
    d, varphi, vartheta = float(rel[0]), float(rel[1]), float(rel[2])
    if d <= 0.0:
        raise DegenerateBaseline(f"baseline length must be positive, got {d}")

    a1 = doa1.theta - vartheta  # first bearing, measured from the baseline
    b2 = vartheta - doa2.theta  # baseline, measured from the second bearing
    denom = (math.tan(a1) + math.tan(b2)) * math.cos(a1) * math.sin(doa1.phi)
    if abs(denom) < PARALLEL_EPS:
        raise ParallelBearings(f"range denominator {denom:.3e} below {PARALLEL_EPS:.0e}")
    range_m = d * math.sin(varphi) * math.tan(b2) / denom
    if range_m <= 0.0:
        raise NegativeRange(f"bearings diverge: range {range_m:.3f} m")

    origin = np.zeros(3) if origin is None else np.asarray(origin, dtype=float)
    local = sph_to_rect(range_m, doa1.phi, doa1.theta)
    baseline = sph_to_rect(d, varphi, vartheta)
    residual = _ray_gap(np.zeros(3), _unit(doa1), baseline, _unit(doa2))
    return FixResult(
        range_m=float(range_m),
        phi=float(doa1.phi),
        theta=float(doa1.theta),
        world=origin + local,
        residual_m=float(residual),
    )


def error_metrics(fix: FixResult, truth_world) -> ErrorBreakdown:
    """Per-axis errors (fix minus truth) plus the horizontal (2D) and 3D norms."""
    delta = np.asarray(fix.world, dtype=float) - np.asarray(truth_world, dtype=float)
    dx, dy, dz = (float(v) for v in delta)
    e2d = math.hypot(dx, dy)
    return ErrorBreakdown(dx, dy, dz, e2d, math.sqrt(e2d * e2d + dz * dz))


def _unit(doa) -> np.ndarray:
    return sph_to_rect(1.0, doa.phi, doa.theta)


def _ray_gap(p1, u1, p2, u2) -> float:
    """Minimum distance between rays p1 + t*u1 and p2 + s*u2 (t, s >= 0).

    Unconstrained closest approach of the two lines, then parameters clamped
    to the forward half-lines with the free parameter re-optimized; adequate
    for a diagnostic (the gap is exact except when both clamps bind).
    """
    w0 = p1 - p2
    b = float(u1 @ u2)
    d1 = float(u1 @ w0)
    d2 = float(u2 @ w0)
    det = 1.0 - b * b
    if det < 1e-15:  # parallel rays
        t = max(0.0, -d1)
        s = max(0.0, d2 + t * b)
    else:
        t = (b * d2 - d1) / det
        s = (d2 - b * d1) / det
        if t < 0.0:
            t, s = 0.0, max(0.0, d2)
        if s < 0.0:
            s, t = 0.0, max(0.0, -d1)
    return float(np.linalg.norm(w0 + t * u1 - s * u2))
