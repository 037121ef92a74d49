"""Coordinate frames and far-field distance algebra shared by all modules.

One spherical convention is used everywhere (single source of truth):

    (r, A, B)  ->  x = r*sin(A)*cos(B),  y = r*sin(A)*sin(B),  z = r*cos(A)

so the first angle A (phi for steering directions, psi for reception points)
is measured from the frame's z axis and the second angle B (theta / zeta) is
the rotation about z from the x axis. The world frame is east-north-up with
z up; local hover frames are translated copies of it (no rotation).

Under this mapping the cosine of the angle gamma between a direction
(phi, theta) and a point bearing (psi, zeta) is

    cos(gamma) = sin(phi)*sin(psi)*cos(theta - zeta) + cos(phi)*cos(psi)

which is exactly the pattern inside the far-field distance expansion

    d_k(phi, theta) ~= a - d'_k(phi, theta),
    d'_k(phi, theta) = r_k * cos(gamma).

A direction has two representations, (phi, theta) and (-phi, theta +/- pi).
Reported estimates use the canonical chart theta in [-pi/2, pi/2], which
collapses mirror-image beampattern lobes to a single candidate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBaseline

TWO_PI = 2.0 * math.pi


def wrap_angle(a):
    """Wrap angle(s) to [-pi, pi). Works on scalars and arrays."""
    return (np.asarray(a) + math.pi) % TWO_PI - math.pi


@dataclass(frozen=True)
class LocalSpherical:
    """One reception-point position in its location's frame.

    r in meters, psi/zeta in radians ([-pi, pi), psi from the z axis).
    """

    r: float
    psi: float
    zeta: float

    def to_rect(self) -> np.ndarray:
        return sph_to_rect(self.r, self.psi, self.zeta)


@dataclass(frozen=True)
class SteeringDirection:
    """A look direction: phi from the z axis, theta about z, radians."""

    phi: float
    theta: float

    def unit(self) -> np.ndarray:
        return sph_to_rect(1.0, self.phi, self.theta)


def sph_to_rect(r, phi, theta) -> np.ndarray:
    """Spherical triple -> rectangular (x, y, z). Vectorizes over inputs."""
    sp = np.sin(phi)
    return np.stack(
        np.broadcast_arrays(r * sp * np.cos(theta), r * sp * np.sin(theta), r * np.cos(phi)),
        axis=-1,
    )


def rect_to_sph(vec) -> tuple[float, float, float]:
    """Rectangular -> (r, phi, theta) with phi in [0, pi], theta in [-pi, pi)."""
    x, y, z = float(vec[0]), float(vec[1]), float(vec[2])
    r = math.sqrt(x * x + y * y + z * z)
    if r == 0.0:
        return 0.0, 0.0, 0.0
    phi = math.acos(max(-1.0, min(1.0, z / r)))
    theta = math.atan2(y, x)
    if theta >= math.pi:  # keep the half-open interval
        theta -= TWO_PI
    return r, phi, theta


def canonicalize(phi: float, theta: float) -> tuple[float, float]:
    """Map (phi, theta) to the single cover phi in [0, pi], theta in [-pi, pi).

    Uses the identity u(phi, theta) == u(-phi, theta +/- pi). The standard
    cover has no seam inside the upper/lower hemispheres, so directions that
    are physical neighbours stay numerical neighbours (up to the theta wrap).
    """
    phi = float(wrap_angle(phi))
    theta = float(wrap_angle(theta))
    if phi < 0.0:
        phi, theta = -phi, float(wrap_angle(theta + math.pi))
    return phi, theta


def direction_between(origin, target) -> SteeringDirection:
    """Canonical direction of `target` as seen from `origin` (world rect coords)."""
    d = np.asarray(target, dtype=float) - np.asarray(origin, dtype=float)
    _, phi, theta = rect_to_sph(d)
    return SteeringDirection(*canonicalize(phi, theta))


def d_prime(point: LocalSpherical, direction: SteeringDirection) -> float:
    """Position-dependent part of the far-field distance.

    d'_k(phi, theta) = r * (sin(phi) sin(psi) cos(theta - zeta) + cos(phi) cos(psi));
    the absolute distance a - d'_k is never formed (the range a is unknown to
    the estimator).
    """
    return point.r * (
        math.sin(direction.phi) * math.sin(point.psi) * math.cos(direction.theta - point.zeta)
        + math.cos(direction.phi) * math.cos(point.psi)
    )


def steering_weight(point: LocalSpherical, direction: SteeringDirection, wavelength: float) -> complex:
    """Unit-modulus steering weight exp(j * 2*pi/lambda * d'_k)."""
    if wavelength <= 0:
        raise ValueError("wavelength must be positive")
    return complex(np.exp(1j * TWO_PI / wavelength * d_prime(point, direction)))


def relative_location(loc1_world, loc2_world) -> tuple[float, float, float]:
    """Spherical coordinates (d, varphi, vartheta) of location 2 in location 1's frame.

    Axes stay aligned to the world frame, so varphi is the baseline's polar
    angle from vertical and vartheta its horizontal azimuth.
    """
    delta = np.asarray(loc2_world, dtype=float) - np.asarray(loc1_world, dtype=float)
    d, varphi, vartheta = rect_to_sph(delta)
    if d == 0.0:
        raise DegenerateBaseline("locations coincide")
    return d, varphi, vartheta


# --- small angle utilities used by the estimators and reports ---------------


def wrap_deg(a):
    """Wrap degree difference(s) to (-180, 180]."""
    return -((-np.asarray(a) + 180.0) % 360.0 - 180.0)


def angle_error_deg(est_rad: float, true_rad: float) -> float:
    """Absolute wrapped difference in degrees between two angles in radians."""
    return float(abs(wrap_deg(math.degrees(est_rad) - math.degrees(true_rad))))


def direction_error_deg(est: SteeringDirection, true: SteeringDirection) -> float:
    """Great-circle separation in degrees between two directions."""
    c = float(np.clip(np.dot(est.unit(), true.unit()), -1.0, 1.0))
    return math.degrees(math.acos(c))
