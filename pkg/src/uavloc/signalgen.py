"""Surrogate emitter waveforms with repetitive signatures.

The detection pipeline only needs a pattern that repeats; it never demodulates.
Two constant-modulus surrogates cover the interesting regimes:

* ``repeated_symbol`` -- a seeded pseudo-random unit-circle symbol of
  ``pattern_width`` samples repeated ``repetitions`` times (preamble-like).
  When ``bandwidth`` is below ``sample_rate`` the random draws happen at the
  bandwidth rate and are zero-order-hold upsampled, which leaves the symbol
  correlated across neighbouring samples the way a band-limited capture is.
* ``chirp`` -- one linear up-chirp sweeping ``bandwidth`` per pattern,
  repeated (LoRa-like).

Both have exactly unit average power (every sample on the unit circle), so
correlation thresholds behave identically across seeds.

Raw IQ files are interleaved 32-bit little-endian floats (I then Q), no
header; sample rate and carrier wavelength travel in a ``.json`` sidecar.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidSpec, OutOfBounds

KIND_REPEATED_SYMBOL = "repeated_symbol"
KIND_CHIRP = "chirp"
_KINDS = (KIND_REPEATED_SYMBOL, KIND_CHIRP)


@dataclass(frozen=True)
class WaveformSpec:
    """Shape of the transmitted signature."""

    kind: str = KIND_REPEATED_SYMBOL
    pattern_width: int = 16
    repetitions: int = 10
    sample_rate: float = 20e6
    carrier_wavelength: float = 0.125
    bandwidth: float = 20e6

    def validate(self) -> None:
        if self.kind not in _KINDS:
            raise InvalidSpec(f"unknown waveform kind {self.kind!r}")
        if self.pattern_width < 2:
            raise InvalidSpec("pattern_width must be >= 2")
        if self.repetitions < 2:
            raise InvalidSpec("repetitions must be >= 2 (pattern must repeat)")
        if self.sample_rate <= 0 or self.carrier_wavelength <= 0:
            raise InvalidSpec("sample_rate and carrier_wavelength must be positive")
        if not 0 < self.bandwidth <= self.sample_rate:
            raise InvalidSpec("bandwidth must be in (0, sample_rate]")
        step = self.sample_rate / self.bandwidth
        if abs(step - round(step)) > 1e-9:
            raise InvalidSpec("sample_rate must be an integer multiple of bandwidth")
        if self.pattern_width % round(step) != 0:
            raise InvalidSpec("pattern_width must be divisible by sample_rate/bandwidth")


@dataclass
class IqTrace:
    """A finite complex baseband capture plus the metadata needed to steer it."""

    samples: np.ndarray
    sample_rate: float
    carrier_wavelength: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise InvalidSpec("trace must be a non-empty 1-D sample sequence")
        if not np.all(np.isfinite(self.samples)):
            raise InvalidSpec("trace contains non-finite samples")

    def __len__(self) -> int:
        return int(self.samples.size)


def _pattern(spec: WaveformSpec, seed: int) -> np.ndarray:
    """One pattern period of spec.pattern_width unit-circle samples."""
    if spec.kind == KIND_REPEATED_SYMBOL:
        hold = int(round(spec.sample_rate / spec.bandwidth))
        rng = np.random.default_rng(seed)
        phases = rng.uniform(-np.pi, np.pi, spec.pattern_width // hold)
        return np.repeat(np.exp(1j * phases), hold)
    # Linear up-chirp from -B/2 to +B/2 across one pattern; phase is the
    # integral of the instantaneous frequency.
    n = np.arange(spec.pattern_width)
    t = n / spec.sample_rate
    slope = spec.bandwidth * spec.sample_rate / spec.pattern_width
    phase = 2.0 * np.pi * (-0.5 * spec.bandwidth * t + 0.5 * slope * t * t)
    return np.exp(1j * phase)


def make_signature(spec: WaveformSpec, seed: int) -> IqTrace:
    """Build the full signature: the pattern repeated spec.repetitions times.

    Deterministic for a fixed (spec, seed); average power is exactly 1
    because every sample lies on the unit circle.
    """
    spec.validate()
    pattern = _pattern(spec, seed)
    samples = np.tile(pattern, spec.repetitions)
    return IqTrace(samples, spec.sample_rate, spec.carrier_wavelength)


def embed(signature: IqTrace, buffer_len: int, offset: int, seed: int = 0) -> IqTrace:
    """Place the signature into a silent buffer starting at `offset`.

    The result is zero outside [offset, offset + len(signature)).
    """
    n = len(signature)
    if offset < 0 or offset + n > buffer_len:
        raise OutOfBounds(f"signature of {n} samples at offset {offset} exceeds buffer of {buffer_len}")
    buf = np.zeros(buffer_len, dtype=np.complex128)
    buf[offset : offset + n] = signature.samples
    return IqTrace(buf, signature.sample_rate, signature.carrier_wavelength)


def write_iq(path, trace: IqTrace) -> None:
    """Write interleaved float32 little-endian I/Q plus a .json sidecar."""
    path = Path(path)
    inter = np.empty(2 * len(trace), dtype="<f4")
    inter[0::2] = trace.samples.real
    inter[1::2] = trace.samples.imag
    inter.tofile(path)
    meta = {
        "sample_rate": trace.sample_rate,
        "carrier_wavelength": trace.carrier_wavelength,
        "num_samples": len(trace),
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2) + "\n")


def read_iq(path) -> IqTrace:
    """Read a raw IQ file written by write_iq (sidecar supplies the metadata)."""
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    inter = np.fromfile(path, dtype="<f4")
    samples = inter[0::2].astype(np.float64) + 1j * inter[1::2].astype(np.float64)
    return IqTrace(samples, float(meta["sample_rate"]), float(meta["carrier_wavelength"]))
