"""Shared builders for simulated reception-point sets used across test modules."""

import math

import numpy as np

from uavloc.align import ReceptionPoint
from uavloc.blinddetect import SignatureModel
from uavloc.channel import EmitterTruth
from uavloc.geometry import LocalSpherical, d_prime, rect_to_sph
from uavloc.signalgen import IqTrace, WaveformSpec, make_signature

WAVELENGTH = 0.125


def signature_and_model(pattern_width=16, repetitions=12, seed=1):
    sig = make_signature(
        WaveformSpec(pattern_width=pattern_width, repetitions=repetitions), seed=seed
    )
    model = SignatureModel(
        pattern=IqTrace(sig.samples[:pattern_width], sig.sample_rate, sig.carrier_wavelength),
        signature=sig,
        pattern_width=pattern_width,
        signature_width=len(sig),
        repetition_count=repetitions,
        start_index=0,
    )
    return sig, model


def scatter_in_sphere(rng, n, radius):
    """Uniformly distributed positions inside a sphere, as LocalSpherical."""
    pts = []
    for _ in range(n):
        r = radius * rng.uniform() ** (1.0 / 3.0)
        psi = math.acos(1.0 - 2.0 * rng.uniform())
        zeta = rng.uniform(-math.pi, math.pi)
        pts.append(LocalSpherical(float(r), float(psi), float(zeta)))
    return pts


def phasor_points(
    sig: IqTrace,
    truth: EmitterTruth,
    positions,
    pos_sigma: float = 0.0,
    phase_sigma: float = 0.0,
    rng=None,
):
    """Reception points whose aligned signals carry the exact propagation phase.

    pos_sigma adds Gaussian error to the *measured* positions only;
    phase_sigma adds independent phase noise to each point's signal.
    """
    rng = rng or np.random.default_rng(0)
    kappa = 2.0 * math.pi / sig.carrier_wavelength
    points = []
    for pos in positions:
        phase = kappa * (truth.range_m - d_prime(pos, truth.direction()))
        if phase_sigma > 0.0:
            phase += rng.normal(0.0, phase_sigma)
        aligned = IqTrace(sig.samples * np.exp(1j * phase), sig.sample_rate, sig.carrier_wavelength)
        measured = pos
        if pos_sigma > 0.0:
            xyz = pos.to_rect() + rng.normal(0.0, pos_sigma, 3)
            r, psi, zeta = rect_to_sph(xyz)
            measured = LocalSpherical(r, psi, zeta)
        points.append(ReceptionPoint(pos, measured, aligned))
    return points
