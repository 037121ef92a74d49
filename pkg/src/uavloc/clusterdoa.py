"""Subset-expansion DoA search with k-means refinement.

One beamforming sweep per random subset of the reception points yields one or
more candidate directions; only lobes within 3 dB of the ideal coherent
ceiling (P = 1) qualify, so low-coherence subsets contribute nothing.
Accumulated candidates are clustered with a wrapped-angle k-means and the
component-wise circular median of the tightest ("dominant") cluster is the
reported direction. The search exits early once the dominant radius drops
below a threshold.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .align import ReceptionPoint
from .beamform import (
    DOA_SOURCE_CLUSTERED,
    DOA_SOURCE_SINGLE_SWEEP,
    AngularGrid,
    Beampattern,
    DoaEstimate,
    sweep,
)
from .errors import (
    DimensionMismatch,
    EmptyCandidates,
    InvalidM,
    InvalidSpec,
    SubsetsExhausted,
)
from .geometry import SteeringDirection, canonicalize, wrap_angle
from .signalgen import IqTrace

# Candidates must reach -3 dB of the coherent ceiling |F|^2 = 1, not of the
# sweep's own peak: an incoherent subset peaks well below 0.5 everywhere and
# is silently discarded instead of polluting the candidate set.
_CANDIDATE_FLOOR = 0.5
_ENUMERATE_CAP = 4096  # below this, draw subsets from a shuffled enumeration
_KMEANS_MAX_ITER = 100


@dataclass(frozen=True)
class DoaSearchConfig:
    """Knobs of the subset-expansion search.

    `n_points`, when given, is cross-checked against the input; subset sizes
    run from n_points - 2 down to ceil(n_points / 2).
    """

    n_points: int | None = None
    max_iterations: int = 40
    radius_threshold_deg: float = 5.0
    cluster_count: int = 3
    seed: int = 0
    harvest_band: bool = False  # append every qualifying coarse cell, not just lobe maxima

    def validate(self) -> None:
        if self.max_iterations < 1:
            raise InvalidSpec("max_iterations must be >= 1")
        if self.radius_threshold_deg <= 0:
            raise InvalidSpec("radius_threshold_deg must be positive")
        if self.cluster_count < 1:
            raise InvalidSpec("cluster_count must be >= 1")
        if self.seed < 0:
            raise InvalidSpec("seed must be non-negative")


@dataclass(frozen=True)
class ClusterResult:
    """Wrapped k-means output over candidate (phi, theta) pairs."""

    centroids: np.ndarray  # (k, 2) radians
    assignments: np.ndarray  # (n,) cluster index per candidate
    objective: float  # sum of wrapped squared residuals, rad^2
    per_cluster: np.ndarray  # (k,) objective split by cluster
    counts: np.ndarray  # (k,) members per cluster
    dominant_index: int
    dominant_radius: float  # sqrt(per_cluster / counts) of the dominant cluster
    objective_history: list[float] = field(repr=False, default_factory=list)


@dataclass(frozen=True)
class IterationRecord:
    """One telemetry row: state after clustering at (subset_size, iteration)."""

    subset_size: int
    iteration: int
    dominant_radius: float
    dominant_count: int
    centroid_phi: float
    centroid_theta: float


@dataclass(frozen=True)
class DoaSearchResult:
    estimate: DoaEstimate
    telemetry: list[IterationRecord]
    candidates: np.ndarray  # (n, 2) accumulated qualifying directions
    best_radius: float


def subset_capacity(n_points: int, m: int) -> int:
    """Number of distinct m-subsets available; validates the m range."""
    if n_points < 4:
        raise InvalidM(f"need at least 4 points, got {n_points}")
    lo, hi = math.ceil(n_points / 2), n_points - 2
    if not lo <= m <= hi:
        raise InvalidM(f"subset size {m} outside [{lo}, {hi}] for {n_points} points")
    return math.comb(n_points, m)


def draw_subset(
    points: list[ReceptionPoint], m: int, iteration: int, seed: int
) -> list[ReceptionPoint]:
    """The `iteration`-th distinct random m-subset of `points`.

    The sequence is a function of (seed, m) alone, so the call is stateless:
    iteration i always names the same subset and no subset repeats within a
    (seed, m) stream.
    """
    cap = subset_capacity(len(points), m)
    if iteration < 1:
        raise InvalidSpec("iteration is 1-based")
    if iteration > cap:
        raise SubsetsExhausted(f"only {cap} distinct subsets of size {m} exist")
    rng = np.random.default_rng(np.random.SeedSequence([seed, m]))
    n = len(points)
    if cap <= _ENUMERATE_CAP:
        combos = list(itertools.combinations(range(n), m))
        idx = combos[int(rng.permutation(cap)[iteration - 1])]
    else:
        seen: set[tuple[int, ...]] = set()
        while True:
            idx = tuple(sorted(rng.choice(n, size=m, replace=False).tolist()))
            if idx not in seen:
                seen.add(idx)
                if len(seen) == iteration:
                    break
    return [points[i] for i in idx]


def _squared_distances(cands: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """(n, k) wrapped squared angular distance in the (phi, theta) plane."""
    d = wrap_angle(cands[:, None, :] - centroids[None, :, :])
    return np.sum(d * d, axis=2)


def _circular_mean(values: np.ndarray) -> float:
    return float(np.arctan2(np.sin(values).sum(), np.cos(values).sum()))


def _circular_median(values: np.ndarray) -> float:
    center = _circular_mean(values)
    return float(center + np.median(wrap_angle(values - center)))


def _seed_centroids(cands: np.ndarray, k: int) -> np.ndarray:
    """Farthest-point seeds starting from the first candidate.

    Candidates arrive strongest-lobe-first per sweep, so cluster 0 is pinned
    to the earliest, strongest direction; exact radius ties (coincident
    singletons) then resolve toward it instead of an arbitrary point.
    """
    n = len(cands)
    chosen = [0]
    while len(chosen) < min(k, n):
        d = _squared_distances(cands, cands[chosen]).min(axis=1)
        chosen.append(int(np.argmax(d)))
    seeds = cands[chosen]
    if len(chosen) < k:  # fewer candidates than clusters: repeat the last seed
        seeds = np.vstack([seeds, np.tile(seeds[-1], (k - len(chosen), 1))])
    return seeds.copy()


def cluster_directions(candidates: np.ndarray, k: int, seed: int = 0) -> ClusterResult:
    """Lloyd iterations with wrapped differences and circular-mean centroids.

    The dominant cluster has the smallest radius sqrt(objective_r / count_r)
    among clusters with at least two members; a singleton's radius is 0 by
    construction, so singletons are eligible only when no cluster has two
    (degenerate pools smaller than k are still served). Remaining ties prefer
    larger membership, then the lower cluster index. `seed` is accepted for
    interface stability; the seeding itself is deterministic.
    """
    cands = np.asarray(candidates, dtype=float)
    if cands.ndim != 2 or cands.shape[1] != 2:
        raise DimensionMismatch(f"candidates must be (n, 2), got {cands.shape}")
    n = len(cands)
    if n == 0:
        raise EmptyCandidates("no candidate directions to cluster")

    centroids = _seed_centroids(cands, k)
    history: list[float] = []
    state: tuple[np.ndarray, np.ndarray, float] | None = None
    for _ in range(_KMEANS_MAX_ITER):
        d2 = _squared_distances(cands, centroids)
        assign = np.argmin(d2, axis=1)
        objective = float(d2[np.arange(n), assign].sum())
        if state is not None and objective > state[2] + 1e-12:
            break  # circular means are not exact minimizers; never go uphill
        state = (assign, centroids.copy(), objective)
        history.append(objective)
        updated = centroids.copy()
        for r in range(k):
            members = cands[assign == r]
            if len(members):
                updated[r] = [_circular_mean(members[:, 0]), _circular_mean(members[:, 1])]
        if np.allclose(updated, centroids, atol=1e-12):
            break  # fixed point: re-assigning against these centroids changes nothing
        centroids = updated
    assign, centroids, _ = state

    d2 = _squared_distances(cands, centroids)
    per_cluster = np.zeros(k)
    counts = np.zeros(k, dtype=int)
    for r in range(k):
        sel = assign == r
        counts[r] = int(sel.sum())
        per_cluster[r] = float(d2[sel, r].sum())
    radii = np.where(counts > 0, np.sqrt(per_cluster / np.maximum(counts, 1)), np.inf)
    dominant = min(
        (r for r in range(k) if counts[r] > 0),
        key=lambda r: (counts[r] < 2, radii[r], -counts[r], r),
    )
    return ClusterResult(
        centroids=centroids,
        assignments=assign,
        objective=float(per_cluster.sum()),
        per_cluster=per_cluster,
        counts=counts,
        dominant_index=dominant,
        dominant_radius=float(radii[dominant]),
        objective_history=history,
    )


def _qualifying_directions(bp: Beampattern, harvest_band: bool) -> list[tuple[float, float]]:
    if harvest_band:
        mask = bp.values >= _CANDIDATE_FLOOR
        ii, jj = np.nonzero(mask)
        return [
            canonicalize(math.radians(bp.phi_deg[i]), math.radians(bp.theta_deg[j]))
            for i, j in zip(ii, jj)
        ]
    return [canonicalize(d.phi, d.theta) for d, v in bp.lobes if v >= _CANDIDATE_FLOOR]


def clustered_doa(
    points: list[ReceptionPoint],
    wavelength: float,
    cfg: DoaSearchConfig | None = None,
    grid: AngularGrid | None = None,
    reference: IqTrace | None = None,
) -> DoaSearchResult:
    """Subset-expansion search over all reception points of one location.

    Subset sizes run from n - 2 down to ceil(n / 2) with up to
    `max_iterations` random draws each; qualifying sweep lobes accumulate
    across the whole search. The smallest dominant radius seen so far decides
    both the early exit and which cluster the final median is taken from.
    """
    cfg = cfg or DoaSearchConfig()
    cfg.validate()
    n = len(points)
    if cfg.n_points is not None and cfg.n_points != n:
        raise DimensionMismatch(f"config says {cfg.n_points} points, got {n}")
    if n < 4:
        raise InvalidM(f"need at least 4 points, got {n}")
    reference = reference or points[0].aligned_signal

    pool: list[tuple[float, float]] = []
    telemetry: list[IterationRecord] = []
    best_radius = math.inf
    best_members: np.ndarray | None = None
    threshold = math.radians(cfg.radius_threshold_deg)
    done = False
    for m in range(n - 2, math.ceil(n / 2) - 1, -1):
        cap = math.comb(n, m)
        for it in range(1, min(cfg.max_iterations, cap) + 1):
            subset = draw_subset(points, m, it, cfg.seed)
            bp = sweep(subset, wavelength, grid=grid, reference=reference)
            pool.extend(_qualifying_directions(bp, cfg.harvest_band))
            if not pool:
                continue
            res = cluster_directions(np.array(pool), cfg.cluster_count, cfg.seed)
            cen = res.centroids[res.dominant_index]
            count = int(res.counts[res.dominant_index])
            telemetry.append(
                IterationRecord(m, it, res.dominant_radius, count, float(cen[0]), float(cen[1]))
            )
            # A lone candidate has radius 0 by construction; only a recurrence
            # (two or more members) may set the running best or end the search.
            if count >= 2 and res.dominant_radius < best_radius:
                best_radius = res.dominant_radius
                best_members = np.array(pool)[res.assignments == res.dominant_index]
            if best_radius < threshold:
                done = True
                break
        if done:
            break

    if best_members is None:
        if not pool:
            raise EmptyCandidates("no subset produced a lobe above the coherence floor")
        # Qualifying directions never recurred: fall back to the final
        # clustering's dominant members (possibly a single candidate).
        res = cluster_directions(np.array(pool), cfg.cluster_count, cfg.seed)
        best_radius = res.dominant_radius
        best_members = np.array(pool)[res.assignments == res.dominant_index]
    phi = _circular_median(best_members[:, 0])
    theta = _circular_median(best_members[:, 1])
    estimate = DoaEstimate.from_direction(SteeringDirection(phi, theta), DOA_SOURCE_CLUSTERED)
    return DoaSearchResult(
        estimate=estimate,
        telemetry=telemetry,
        candidates=np.array(pool) if pool else np.empty((0, 2)),
        best_radius=best_radius,
    )


def single_sweep_doa(
    points: list[ReceptionPoint],
    wavelength: float,
    grid: AngularGrid | None = None,
    reference: IqTrace | None = None,
) -> DoaEstimate:
    """Baseline: one full-array sweep, peak direction, no clustering."""
    bp = sweep(points, wavelength, grid=grid, reference=reference)
    return DoaEstimate.from_direction(bp.peak_dir, DOA_SOURCE_SINGLE_SWEEP)