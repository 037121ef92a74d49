"""Propagation and impairment models between the emitter and each reception point.

`propagate` applies, in order: the far-field carrier-phase rotation for the
reception point's position, multipath (Rayleigh FIR or two-ray ground
reflection), additive white Gaussian noise calibrated to a target SNR, and a
carrier-frequency-offset rotation across the whole buffer.

Propagation is narrowband: a position changes only the carrier phase, never
the sample timing. Fractional-sample delays carry time-of-flight information
that asynchronous single-channel captures cannot use anyway.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FarFieldViolation, InvalidSpec
from .geometry import LocalSpherical, SteeringDirection, d_prime, sph_to_rect
from .signalgen import IqTrace

MULTIPATH_NONE = "none"
MULTIPATH_RAYLEIGH = "rayleigh"
MULTIPATH_TWO_RAY = "tworay"
_MULTIPATH = (MULTIPATH_NONE, MULTIPATH_RAYLEIGH, MULTIPATH_TWO_RAY)


@dataclass(frozen=True)
class EmitterTruth:
    """Ground-truth emitter position in a location's frame (spherical)."""

    range_m: float
    phi: float  # angle from vertical (z axis)
    theta: float  # azimuth about z from east

    def position(self) -> np.ndarray:
        return sph_to_rect(self.range_m, self.phi, self.theta)

    def direction(self) -> SteeringDirection:
        return SteeringDirection(self.phi, self.theta)


@dataclass(frozen=True)
class ImpairmentConfig:
    """Channel impairments for one reception-point capture.

    snr_db=None disables noise. Distinct reception points must use distinct
    seeds (the caller derives them), otherwise they share noise realizations.
    ground_z is the ground-plane height in the same frame as the positions;
    it only matters for the two-ray model. align_jitter is the maximum
    alignment slip in whole samples (uniform in [-j, +j]); it impairs the
    alignment stage, so the experiment harness applies it, not `propagate`.
    """

    snr_db: float | None = None
    multipath: str = MULTIPATH_NONE
    cfo_hz: float = 0.0
    pos_error_sigma: float = 0.0
    align_jitter: int = 0
    seed: int = 0
    rayleigh_taps: int = 3
    reflection_coeff: float = -1.0
    ground_z: float = 0.0

    def validate(self) -> None:
        if self.multipath not in _MULTIPATH:
            raise InvalidSpec(f"unknown multipath model {self.multipath!r}")
        if self.snr_db is not None and not math.isfinite(self.snr_db):
            raise InvalidSpec("snr_db must be finite (or None for noiseless)")
        if self.pos_error_sigma < 0:
            raise InvalidSpec("pos_error_sigma must be >= 0")
        if self.align_jitter < 0:
            raise InvalidSpec("align_jitter must be >= 0")
        if self.rayleigh_taps < 1:
            raise InvalidSpec("rayleigh_taps must be >= 1")


def _rayleigh_fir(num_taps: int, rng: np.random.Generator) -> np.ndarray:
    """Complex Gaussian taps with exponentially decaying power, unit total mean power."""
    profile = np.exp(-np.arange(num_taps, dtype=float))
    profile /= profile.sum()
    scale = np.sqrt(profile / 2.0)
    return scale * (rng.standard_normal(num_taps) + 1j * rng.standard_normal(num_taps))


def _two_ray_gain(point_xyz: np.ndarray, emitter_xyz: np.ndarray, wavelength: float, gamma: float, ground_z: float) -> complex:
    """Direct path plus ground-bounce image path, as a flat complex gain."""
    h_rx = point_xyz[2] - ground_z
    h_tx = emitter_xyz[2] - ground_z
    if h_rx <= 0 or h_tx <= 0:
        raise InvalidSpec("two-ray model needs emitter and receiver above the ground plane")
    d_direct = float(np.linalg.norm(emitter_xyz - point_xyz))
    horiz = float(np.hypot(emitter_xyz[0] - point_xyz[0], emitter_xyz[1] - point_xyz[1]))
    d_reflect = math.hypot(horiz, h_tx + h_rx)
    extra_phase = 2.0 * math.pi / wavelength * (d_reflect - d_direct)
    return 1.0 + gamma * (d_direct / d_reflect) * complex(np.exp(1j * extra_phase))


def propagate(
    signature: IqTrace,
    point_position: LocalSpherical,
    truth: EmitterTruth,
    cfg: ImpairmentConfig,
) -> IqTrace:
    """Capture of `signature` at one reception point.

    Applies the position-dependent carrier phase exp(j*2*pi/lambda * d_k)
    with d_k = range - d'_k(phi, theta), then multipath, then AWGN at the
    target SNR (measured on the nonzero support of the pre-noise signal),
    then the CFO rotation exp(j*2*pi*cfo_hz*n/sample_rate) over the buffer.
    """
    cfg.validate()
    if truth.range_m <= 0:
        raise InvalidSpec("emitter range must be positive")
    if truth.range_m < 10.0 * point_position.r:
        raise FarFieldViolation(
            f"range {truth.range_m:.3f} m < 10 x point radius {point_position.r:.3f} m"
        )
    lam = signature.carrier_wavelength
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))

    d_k = truth.range_m - d_prime(point_position, truth.direction())
    y = signature.samples * np.exp(1j * 2.0 * math.pi / lam * d_k)

    if cfg.multipath == MULTIPATH_RAYLEIGH:
        taps = _rayleigh_fir(cfg.rayleigh_taps, rng)
        y = np.convolve(y, taps)[: len(y)]
    elif cfg.multipath == MULTIPATH_TWO_RAY:
        gain = _two_ray_gain(point_position.to_rect(), truth.position(), lam, cfg.reflection_coeff, cfg.ground_z)
        y = y * gain

    if cfg.snr_db is not None:
        support = np.abs(y) > 0
        sig_power = float(np.mean(np.abs(y[support]) ** 2)) if np.any(support) else 0.0
        noise_power = sig_power / 10.0 ** (cfg.snr_db / 10.0)
        sigma = math.sqrt(noise_power / 2.0)
        y = y + sigma * (rng.standard_normal(len(y)) + 1j * rng.standard_normal(len(y)))

    if cfg.cfo_hz != 0.0:
        n = np.arange(len(y))
        y = y * np.exp(1j * 2.0 * math.pi * cfg.cfo_hz * n / signature.sample_rate)

    return IqTrace(y, signature.sample_rate, lam)


def perturb_position(true_position, sigma: float, seed: int) -> np.ndarray:
    """Add independent zero-mean Gaussian error (std `sigma`) per rectangular axis."""
    if sigma < 0:
        raise InvalidSpec("sigma must be >= 0")
    pos = np.asarray(true_position, dtype=float)
    if sigma == 0.0:
        return pos.copy()
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    return pos + rng.normal(0.0, sigma, size=pos.shape)
