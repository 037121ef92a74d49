"""Time alignment of asynchronous captures and carrier-frequency-offset repair.

Each hover position records the emitter independently, so captures share no
time base. Correlating each capture against the signature recovered at the
first position lines them up to the sample; the retained segment keeps its
native complex gain, because the inter-position carrier phase *is* the
measurement the beamformer consumes.

CFO is estimated once per location from the pattern-to-pattern phase drift
and the same correction is applied to every point of that location.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .blinddetect import SignatureModel
from .errors import AlignmentFailed, DimensionMismatch, InsufficientRepetitions
from .geometry import LocalSpherical
from .signalgen import IqTrace


@dataclass(frozen=True)
class ReceptionPoint:
    """One hover position: where the UAV really was, where it thinks it was,
    and the aligned signature-length capture segment taken there."""

    position: LocalSpherical
    measured_position: LocalSpherical
    aligned_signal: IqTrace


def align_capture(
    y_raw: IqTrace, sig: SignatureModel, corr_threshold: float = 0.5
) -> tuple[int, IqTrace]:
    """Find the signature inside a raw capture and cut the aligned segment.

    Returns (lag, segment) where lag maximizes the correlation magnitude
    against the signature (ties: lowest lag) and segment = y_raw[lag : lag +
    W_sig] with its complex gain untouched.
    """
    ref = sig.signature.samples
    if len(y_raw) < ref.size:
        raise DimensionMismatch(
            f"capture of {len(y_raw)} samples cannot contain a {ref.size}-sample signature"
        )
    corr = np.correlate(y_raw.samples, ref, mode="valid")
    mag = np.abs(corr)
    lag = int(np.argmax(mag))
    floor = corr_threshold * float(np.sum(np.abs(ref) ** 2))
    if mag[lag] < floor:
        raise AlignmentFailed(
            f"best correlation {mag[lag]:.3g} below {floor:.3g}; signature not present"
        )
    segment = IqTrace(
        y_raw.samples[lag : lag + ref.size].copy(), y_raw.sample_rate, y_raw.carrier_wavelength
    )
    return lag, segment


def estimate_cfo(y: IqTrace, sig: SignatureModel) -> float:
    """Carrier frequency offset in Hz from pattern-to-pattern phase drift.

    Averages y*[n] y[n + W_p] over the trace; the aggregate angle divided by
    the pattern duration is the offset. Unambiguous for |cfo| <
    sample_rate / (2 W_p); beyond that the estimate wraps.
    """
    w_p = sig.pattern_width
    if len(y) < 2 * w_p:
        raise InsufficientRepetitions(
            f"{len(y)} samples hold fewer than two {w_p}-sample patterns"
        )
    acc = np.sum(np.conj(y.samples[:-w_p]) * y.samples[w_p:])
    return float(np.angle(acc)) * y.sample_rate / (2.0 * math.pi * w_p)


def _derotate(trace: IqTrace, cfo_hz: float) -> IqTrace:
    n = np.arange(len(trace))
    rotated = trace.samples * np.exp(-1j * 2.0 * math.pi * cfo_hz * n / trace.sample_rate)
    return IqTrace(rotated, trace.sample_rate, trace.carrier_wavelength)


def correct_cfo(points: list[ReceptionPoint], cfo_hz: float) -> list[ReceptionPoint]:
    """De-rotate every point's aligned signal by the shared offset; positions untouched."""
    if cfo_hz == 0.0:
        return list(points)
    return [replace(p, aligned_signal=_derotate(p.aligned_signal, cfo_hz)) for p in points]
