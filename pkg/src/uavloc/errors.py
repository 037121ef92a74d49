"""Exception types raised across the pipeline.

Every stage failure is a distinct class so batch drivers can tag failed
trials without string matching.
"""


class UavlocError(Exception):
    """Base class for all library errors."""


class InvalidSpec(UavlocError):
    """Waveform or config violates its invariants."""


class OutOfBounds(UavlocError):
    """Embedding window does not fit the target buffer."""


class FarFieldViolation(UavlocError):
    """Emitter range too small relative to the hover sphere."""


class NoEnergyFound(UavlocError):
    """No window of the trace crosses the energy threshold."""


class NoPatternFound(UavlocError):
    """Fewer than two correlation crossings: no repetitive pattern."""


class NoSignatureFound(UavlocError):
    """Pattern correlation never crosses, or repeats fewer than twice."""


class AlignmentFailed(UavlocError):
    """Best correlation peak below the acceptance threshold."""


class InsufficientRepetitions(UavlocError):
    """Trace too short to compare two pattern repetitions."""


class DegenerateBaseline(UavlocError):
    """The two hover locations coincide."""


class EmptyArray(UavlocError):
    """No reception points supplied."""


class InvalidM(UavlocError):
    """Subset size outside the allowed range."""


class SubsetsExhausted(UavlocError):
    """All binom(N, M) distinct subsets already drawn."""


class EmptyCandidates(UavlocError):
    """Clustering requested on an empty candidate set."""


class ParallelBearings(UavlocError):
    """Bearing lines (near-)parallel: range denominator vanishes."""


class NegativeRange(UavlocError):
    """Bearing lines diverge: intersection behind the baseline."""


class DimensionMismatch(UavlocError):
    """Snapshot vectors of inconsistent length."""
