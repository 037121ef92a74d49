"""Alignment tests: lag oracle, phase preservation, CFO estimate/correction."""

import math

import numpy as np
import pytest

from uavloc.align import ReceptionPoint, align_capture, correct_cfo, estimate_cfo
from uavloc.blinddetect import SignatureModel
from uavloc.channel import EmitterTruth, ImpairmentConfig, propagate
from uavloc.errors import AlignmentFailed, DimensionMismatch, InsufficientRepetitions
from uavloc.geometry import LocalSpherical, d_prime, wrap_angle
from uavloc.signalgen import IqTrace, WaveformSpec, embed, make_signature

FS = 20e6


def _model(spec_kw=None, seed=1):
    spec = WaveformSpec(**(spec_kw or dict(pattern_width=16, repetitions=12)))
    sig = make_signature(spec, seed=seed)
    return sig, SignatureModel(
        pattern=IqTrace(sig.samples[: spec.pattern_width], sig.sample_rate, sig.carrier_wavelength),
        signature=sig,
        pattern_width=spec.pattern_width,
        signature_width=len(sig),
        repetition_count=spec.repetitions,
        start_index=0,
    )


def brute_force_lag(y, ref):
    """Exhaustive lag-search oracle."""
    best, best_mag = None, -1.0
    for lag in range(len(y) - len(ref) + 1):
        mag = abs(np.sum(y[lag : lag + len(ref)] * np.conj(ref)))
        if mag > best_mag:
            best, best_mag = lag, mag
    return best


def test_align_zero_offset_identity():
    sig, model = _model()
    y = embed(sig, 500, 0)
    lag, seg = align_capture(y, model)
    assert lag == 0
    assert np.array_equal(seg.samples, sig.samples)


def test_align_offset_and_phase_rotation():
    sig, model = _model()
    y = embed(sig, 500, 137)
    rotated = IqTrace(y.samples * np.exp(1j * math.pi / 3), FS, sig.carrier_wavelength)
    assert brute_force_lag(rotated.samples, sig.samples) == 137
    lag, seg = align_capture(rotated, model)
    assert lag == 137
    # Native phase preserved: the segment is exactly the rotated signature.
    assert np.allclose(seg.samples, np.exp(1j * math.pi / 3) * sig.samples, atol=1e-12)


def test_align_scale_invariant_lag():
    sig, model = _model()
    y = embed(sig, 500, 42)
    scaled = IqTrace(y.samples * (0.02 - 0.7j), FS, sig.carrier_wavelength)
    assert align_capture(scaled, model)[0] == 42


def test_align_fails_without_signature():
    _, model = _model()
    rng = np.random.default_rng(3)
    noise = (rng.standard_normal(500) + 1j * rng.standard_normal(500)) / math.sqrt(2)
    with pytest.raises(AlignmentFailed):
        align_capture(IqTrace(noise, FS, 0.125), model)


def test_align_rejects_short_capture():
    sig, model = _model()
    with pytest.raises(DimensionMismatch):
        align_capture(IqTrace(sig.samples[:50], FS, sig.carrier_wavelength), model)


def test_alignment_preserves_interpoint_phase():
    # The pipeline-critical invariant: after alignment, the phase between two
    # clean points equals the propagation phase difference.
    sig, model = _model()
    truth = EmitterTruth(range_m=300.0, phi=1.1, theta=-0.8)
    clean = ImpairmentConfig()
    rng = np.random.default_rng(4)
    for _ in range(50):
        pts = [
            LocalSpherical(float(rng.uniform(0, 1.5)), float(rng.uniform(0, math.pi)),
                           float(rng.uniform(-math.pi, math.pi)))
            for _ in range(2)
        ]
        segs = []
        for k, p in enumerate(pts):
            offset = int(rng.integers(0, 200))
            y = propagate(embed(sig, 600, offset), p, truth, clean)
            lag, seg = align_capture(y, model)
            assert lag == offset
            segs.append(seg)
        measured = np.angle(np.sum(segs[0].samples * np.conj(segs[1].samples)))
        expected = 2.0 * math.pi / sig.carrier_wavelength * (
            d_prime(pts[1], truth.direction()) - d_prime(pts[0], truth.direction())
        )
        assert abs(wrap_angle(measured - expected)) < 1e-6


def test_cfo_zero():
    sig, model = _model()
    assert abs(estimate_cfo(sig, model)) <= 1e-6 * FS / model.pattern_width


def test_cfo_recovery_clean_and_noisy():
    sig, model = _model()
    truth = EmitterTruth(range_m=100.0, phi=1.0, theta=0.0)
    origin = LocalSpherical(0, 0, 0)
    clean = propagate(sig, origin, truth, ImpairmentConfig(cfo_hz=10e3))
    assert estimate_cfo(clean, model) == pytest.approx(10e3, abs=50.0)

    # At 20 dB the error floor scales as fs/(2 pi W_p) * sqrt(noise/N); use a
    # long trace and a 4-sigma band around that prediction.
    long_sig, long_model = _model(dict(pattern_width=16, repetitions=2000))
    noisy = propagate(long_sig, origin, truth, ImpairmentConfig(cfo_hz=10e3, snr_db=20.0, seed=5))
    n_terms = len(long_sig) - 16
    sigma_f = FS / (2 * math.pi * 16) * math.sqrt(2 * 0.01 / n_terms)
    assert estimate_cfo(noisy, long_model) == pytest.approx(10e3, abs=4 * sigma_f)


def test_cfo_aliases_beyond_half_pattern_rate():
    sig, model = _model()
    full = FS / model.pattern_width  # unambiguous span is +/- full/2
    cfo = full / 2 + 50e3
    truth = EmitterTruth(range_m=100.0, phi=1.0, theta=0.0)
    rotated = propagate(sig, LocalSpherical(0, 0, 0), truth, ImpairmentConfig(cfo_hz=cfo))
    est = estimate_cfo(rotated, model)
    wrapped = (cfo + full / 2) % full - full / 2
    assert est == pytest.approx(wrapped, abs=1e-3)


def test_cfo_needs_two_repetitions():
    sig, model = _model()
    short = IqTrace(sig.samples[: model.pattern_width + 3], FS, sig.carrier_wavelength)
    with pytest.raises(InsufficientRepetitions):
        estimate_cfo(short, model)


def _point(signal):
    pos = LocalSpherical(0.5, 1.0, 0.0)
    return ReceptionPoint(pos, pos, signal)


def test_correct_cfo_round_trip():
    sig, model = _model()
    truth = EmitterTruth(range_m=100.0, phi=1.0, theta=0.0)
    rotated = propagate(sig, LocalSpherical(0, 0, 0), truth, ImpairmentConfig(cfo_hz=7e3))
    pts = [_point(rotated)]

    fixed = correct_cfo(pts, estimate_cfo(rotated, model))
    residual = estimate_cfo(fixed[0].aligned_signal, model)
    assert abs(residual) < 0.01 * 7e3

    # +f then -f restores the signal; positions are never touched.
    twice = correct_cfo(correct_cfo(pts, 7e3), -7e3)
    assert np.allclose(twice[0].aligned_signal.samples, rotated.samples, atol=1e-9)
    assert twice[0].position == pts[0].position

    assert correct_cfo(pts, 0.0)[0] is pts[0]
