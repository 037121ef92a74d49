"""Blind discovery of a repetitive signature inside a single capture.

Three stages:

1. An energy gate scans a sliding L-sample window and stops at the first
   index whose trailing window power crosses a threshold; that window is the
   anchor slice ``u``.
2. ``u`` is correlated against the whole capture. For a repetitive burst the
   correlation peaks repeat at the pattern period, so the two lowest peak
   indices delimit one pattern period.
3. The recovered pattern is correlated against the capture; every repetition
   shows up as a peak, and the lowest/highest peaks delimit the full
   signature.

Correlations are normalized by the reference slice's energy, which makes
every index decision invariant to a complex scaling of the capture.

The stage-2 slice is only guaranteed to be signal when the anchor window
sits inside the burst, i.e. the burst should outlast the gate window and
start at (or very near) the capture start. A long silent prefix followed by
a burst shorter than the window leaves the anchor astride the burst edge,
where the lowest correlation peaks index the silent side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidSpec,
    NoEnergyFound,
    NoPatternFound,
    NoSignatureFound,
)
from .signalgen import IqTrace


@dataclass(frozen=True)
class DetectorConfig:
    """Gate window length, energy threshold, and correlation threshold.

    energy_threshold=None picks half the strongest window's mean power, so
    the gate fires once the window is mostly inside the burst regardless of
    absolute capture power.
    """

    window_len: int = 200
    energy_threshold: float | None = None
    corr_threshold: float = 0.5

    def validate(self) -> None:
        if self.window_len < 2:
            raise InvalidSpec("window_len must be >= 2")
        if not 0.0 < self.corr_threshold <= 1.0:
            raise InvalidSpec("corr_threshold must be in (0, 1]")
        if self.energy_threshold is not None and self.energy_threshold <= 0:
            raise InvalidSpec("energy_threshold must be positive")


@dataclass
class SignatureModel:
    """Everything stage 3 learned about the embedded signature."""

    pattern: IqTrace
    signature: IqTrace
    pattern_width: int
    signature_width: int
    repetition_count: int
    start_index: int


def _window_means(power: np.ndarray, window: int) -> np.ndarray:
    """Mean power of every full trailing window; entry j ends at sample j+window-1."""
    return np.convolve(power, np.ones(window), mode="valid") / window


def _local_peaks(mag: np.ndarray, threshold: float, min_spacing: int) -> np.ndarray:
    """Indices of local maxima of `mag` at or above `threshold`.

    Peaks closer than `min_spacing` are thinned keeping the larger (ties:
    the lower index). Monotone shoulders around a peak are never maxima, so
    partial-overlap ramps do not produce spurious crossings.
    """
    left = np.empty_like(mag)
    right = np.empty_like(mag)
    left[0], left[1:] = -np.inf, mag[:-1]
    right[-1], right[:-1] = -np.inf, mag[1:]
    cand = np.flatnonzero((mag >= threshold) & (mag >= left) & (mag >= right))
    order = cand[np.argsort(-mag[cand], kind="stable")]
    kept: list[int] = []
    for idx in order:
        if all(abs(int(idx) - k) >= min_spacing for k in kept):
            kept.append(int(idx))
    return np.sort(np.asarray(kept, dtype=int))


def energy_gate(y1: IqTrace, cfg: DetectorConfig) -> tuple[int, IqTrace]:
    """First index whose trailing window power crosses the threshold.

    Returns (n_hat, u) where u is the window_len samples ending at n_hat
    inclusive.
    """
    cfg.validate()
    L = cfg.window_len
    if len(y1) < L:
        raise InvalidSpec(f"trace of {len(y1)} samples is shorter than the {L}-sample gate window")
    means = _window_means(np.abs(y1.samples) ** 2, L)
    threshold = cfg.energy_threshold
    if threshold is None:
        strongest = float(means.max())
        if strongest <= 0.0:
            raise NoEnergyFound("trace has no energy")
        threshold = 0.5 * strongest
    hits = np.flatnonzero(means >= threshold)
    if hits.size == 0:
        raise NoEnergyFound(f"no {L}-sample window reaches mean power {threshold:g}")
    start = int(hits[0])  # window covers [start, start + L)
    n_hat = start + L - 1
    u = IqTrace(y1.samples[start : start + L].copy(), y1.sample_rate, y1.carrier_wavelength)
    return n_hat, u


def find_pattern(y1: IqTrace, u: IqTrace, cfg: DetectorConfig) -> tuple[int, int, IqTrace]:
    """Locate one pattern period from the anchor-window correlation.

    Returns (m1, m2, pattern) where m1, m2 are the two lowest correlation
    peak indices and pattern = y1[m1:m2].
    """
    cfg.validate()
    if len(u) != cfg.window_len:
        raise DimensionMismatch(f"anchor window has {len(u)} samples, expected {cfg.window_len}")
    denom = float(np.sum(np.abs(u.samples) ** 2))
    if denom <= 0.0:
        raise NoPatternFound("anchor window has no energy")
    corr = np.abs(np.correlate(y1.samples, u.samples, mode="valid")) / denom
    peaks = _local_peaks(corr, cfg.corr_threshold, min_spacing=2)
    if peaks.size < 2:
        raise NoPatternFound(f"{peaks.size} correlation peak(s); a repeating pattern needs at least 2")
    m1, m2 = int(peaks[0]), int(peaks[1])
    pattern = IqTrace(y1.samples[m1:m2].copy(), y1.sample_rate, y1.carrier_wavelength)
    return m1, m2, pattern


def extract_signature(y1: IqTrace, pattern: IqTrace, cfg: DetectorConfig) -> SignatureModel:
    """Find every pattern repetition and cut the full signature.

    The repetitions are the correlation peaks of the pattern against the
    capture; the signature spans from the first peak to one pattern width
    past the last.
    """
    cfg.validate()
    w_p = len(pattern)
    denom = float(np.sum(np.abs(pattern.samples) ** 2))
    if denom <= 0.0:
        raise NoSignatureFound("pattern slice has no energy")
    if len(y1) < w_p:
        raise DimensionMismatch("capture shorter than the pattern")
    corr = np.abs(np.correlate(y1.samples, pattern.samples, mode="valid")) / denom
    peaks = _local_peaks(corr, cfg.corr_threshold, min_spacing=max(1, w_p // 2))
    if peaks.size < 2:
        raise NoSignatureFound(
            f"{peaks.size} pattern occurrence(s); a signature needs at least 2 repetitions"
        )
    m3, m4 = int(peaks[0]), int(peaks[-1])
    signature = IqTrace(y1.samples[m3 : m4 + w_p].copy(), y1.sample_rate, y1.carrier_wavelength)
    return SignatureModel(
        pattern=pattern,
        signature=signature,
        pattern_width=w_p,
        signature_width=m4 + w_p - m3,
        repetition_count=int(peaks.size),
        start_index=m3,
    )


def detect_signature(y1: IqTrace, cfg: DetectorConfig | None = None) -> SignatureModel:
    """Run the full three-stage chain on one capture."""
    cfg = cfg or DetectorConfig()
    _, u = energy_gate(y1, cfg)
    _, _, pattern = find_pattern(y1, u, cfg)
    return extract_signature(y1, pattern, cfg)
