"""Asynchronous distributed receiver beamforming over a spherical point cloud.

Each reception point contributes one complex phasor: the projection of its
aligned capture onto the reference signature, normalized to unit modulus
(only the carrier phase carries direction information). Steering multiplies
each phasor by the conjugate propagation phase its *measured* position
predicts for a candidate direction and averages; power peaks where predicted
and actual phases agree, i.e. toward the emitter. The common range phase is
a constant rotation and cancels in the magnitude.

The sweep covers the full double chart (both angles over 360 deg), so every
physical direction appears twice; candidate lobes are deduplicated by
great-circle separation, which also collapses the mirror copies.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .align import ReceptionPoint
from .errors import DimensionMismatch, EmptyArray, InvalidSpec
from .geometry import SteeringDirection, direction_error_deg, sph_to_rect
from .signalgen import IqTrace

DOA_SOURCE_SINGLE_SWEEP = "single_sweep"
DOA_SOURCE_CLUSTERED = "clustered"

_LOBE_FLOOR_DB = -7.0  # lobes carried between refinement levels
_MAX_LOBES = 24
_WINDOW_DEG = 6.0  # re-scan half-width around each carried lobe


@dataclass(frozen=True)
class AngularGrid:
    """Search-grid geometry: start resolutions and number of scan levels.

    Each level after the first halves both resolutions, so the default
    4 deg / 3 levels refines down to 1 deg.
    """

    az_resolution: float = 4.0
    el_resolution: float = 4.0
    refinement_levels: int = 3

    def validate(self) -> None:
        for res in (self.az_resolution, self.el_resolution):
            if res <= 0 or abs(360.0 / res - round(360.0 / res)) > 1e-9:
                raise InvalidSpec(f"resolution {res} deg must divide 360")
        if self.refinement_levels < 1:
            raise InvalidSpec("refinement_levels must be >= 1")

    def final_resolution(self) -> tuple[float, float]:
        f = 2.0 ** (self.refinement_levels - 1)
        return self.el_resolution / f, self.az_resolution / f


@dataclass(frozen=True)
class DoaEstimate:
    """A direction estimate on the single cover (phi in [0, pi])."""

    phi: float
    theta: float
    source: str

    @classmethod
    def from_direction(cls, direction: SteeringDirection, source: str) -> "DoaEstimate":
        from .geometry import canonicalize

        phi, theta = canonicalize(direction.phi, direction.theta)
        return cls(phi, theta, source)

    def direction(self) -> SteeringDirection:
        return SteeringDirection(self.phi, self.theta)


@dataclass
class Beampattern:
    """Dense first-level power map plus the refined lobe list."""

    grid: AngularGrid
    phi_deg: np.ndarray  # first-level axis, angle from vertical
    theta_deg: np.ndarray  # first-level axis, azimuth
    values: np.ndarray  # shape (len(phi_deg), len(theta_deg)), first level
    lobes: list[tuple[SteeringDirection, float]]  # refined, sorted by power
    peak_dir: SteeringDirection
    peak_value: float


def _phasors(points: list[ReceptionPoint], reference: IqTrace | None) -> np.ndarray:
    """Unit-modulus channel phasor per point (zero if the capture is orthogonal)."""
    if not points:
        raise EmptyArray("no reception points")
    ref = (reference or points[0].aligned_signal).samples
    denom = float(np.sum(np.abs(ref) ** 2))
    if denom <= 0.0:
        raise InvalidSpec("reference signature has no energy")
    g = np.empty(len(points), dtype=complex)
    for k, p in enumerate(points):
        y = p.aligned_signal.samples
        if y.size != ref.size:
            raise DimensionMismatch(
                f"point {k} aligned signal has {y.size} samples, reference has {ref.size}"
            )
        proj = np.sum(y * np.conj(ref)) / denom
        g[k] = proj / abs(proj) if abs(proj) > 0.0 else 0.0
    return g


def _measured_xyz(points: list[ReceptionPoint]) -> np.ndarray:
    return np.stack([p.measured_position.to_rect() for p in points])


def _pattern_values(
    xyz: np.ndarray, phasors: np.ndarray, wavelength: float, phi_deg, theta_deg
) -> np.ndarray:
    """P over the phi x theta grid; vectorized over cells and points."""
    phi = np.radians(np.asarray(phi_deg, dtype=float))
    theta = np.radians(np.asarray(theta_deg, dtype=float))
    sp, cp = np.sin(phi), np.cos(phi)
    st, ct = np.sin(theta), np.cos(theta)
    u = np.empty((phi.size, theta.size, 3))
    u[..., 0] = sp[:, None] * ct[None, :]
    u[..., 1] = sp[:, None] * st[None, :]
    u[..., 2] = cp[:, None]
    proj = np.einsum("ptc,kc->ptk", u, xyz)
    f = np.tensordot(np.exp(1j * (2.0 * math.pi / wavelength) * proj), phasors, axes=([2], [0]))
    f /= phasors.size
    return np.abs(f) ** 2


def array_factor(
    points: list[ReceptionPoint],
    direction: SteeringDirection,
    wavelength: float,
    reference: IqTrace | None = None,
) -> complex:
    """Steered average of the per-point phasors for one candidate direction."""
    g = _phasors(points, reference)
    xyz = _measured_xyz(points)
    proj = xyz @ direction.unit()
    return complex(np.mean(g * np.exp(1j * (2.0 * math.pi / wavelength) * proj)))


def _periodic_local_maxima(values: np.ndarray) -> np.ndarray:
    """Boolean mask of cells >= all four neighbours (both axes wrap)."""
    mask = np.ones_like(values, dtype=bool)
    for axis in (0, 1):
        for shift in (1, -1):
            mask &= values >= np.roll(values, shift, axis=axis)
    return mask


def _dedupe_candidates(cands, min_sep_deg: float) -> list[tuple[float, float, float]]:
    """Thin (phi_deg, theta_deg, val) triples by great-circle separation.

    Sorted by descending value (ties: lowest angles), so mirror-chart copies
    of one lobe collapse to a single entry.
    """
    cands = sorted(cands, key=lambda c: (-c[2], c[0], c[1]))
    kept: list[tuple[float, float, float]] = []
    for c in cands:
        d = SteeringDirection(math.radians(c[0]), math.radians(c[1]))
        if all(
            direction_error_deg(d, SteeringDirection(math.radians(k[0]), math.radians(k[1])))
            >= min_sep_deg
            for k in kept
        ):
            kept.append(c)
            if len(kept) >= _MAX_LOBES:
                break
    return kept


def sweep(
    points: list[ReceptionPoint],
    wavelength: float,
    grid: AngularGrid | None = None,
    reference: IqTrace | None = None,
) -> Beampattern:
    """Coarse-to-fine beampattern scan.

    A dense scan at the first-level resolution seeds candidate lobes; each
    subsequent level halves the resolution and re-scans only windows around
    the surviving lobes, keeping every lobe within 7 dB of the running peak.
    """
    grid = grid or AngularGrid()
    grid.validate()
    g = _phasors(points, reference)
    xyz = _measured_xyz(points)

    el_res, az_res = grid.el_resolution, grid.az_resolution
    phi_axis = -180.0 + el_res * np.arange(int(round(360.0 / el_res)))
    theta_axis = -180.0 + az_res * np.arange(int(round(360.0 / az_res)))
    dense = _pattern_values(xyz, g, wavelength, phi_axis, theta_axis)

    floor = 10.0 ** (_LOBE_FLOOR_DB / 10.0)
    mask = _periodic_local_maxima(dense) & (dense >= floor * dense.max())
    ii, jj = np.nonzero(mask)
    cands = [(float(phi_axis[i]), float(theta_axis[j]), float(dense[i, j])) for i, j in zip(ii, jj)]
    cands = _dedupe_candidates(cands, 1.5 * max(el_res, az_res))

    for _ in range(grid.refinement_levels - 1):
        el_res, az_res = el_res / 2.0, az_res / 2.0
        refined = []
        for phi0, theta0, _ in cands:
            phis = phi0 + np.arange(-_WINDOW_DEG, _WINDOW_DEG + el_res / 2, el_res)
            thetas = theta0 + np.arange(-_WINDOW_DEG, _WINDOW_DEG + az_res / 2, az_res)
            # Stay inside the scan domain: any peak beyond an edge has a
            # mirror copy inside it, seeded by the dense full-cover pass.
            phis = phis[(phis >= -180.0) & (phis < 180.0)]
            thetas = thetas[(thetas >= -180.0) & (thetas < 180.0)]
            win = _pattern_values(xyz, g, wavelength, phis, thetas)
            i, j = np.unravel_index(int(np.argmax(win)), win.shape)
            refined.append((float(phis[i]), float(thetas[j]), float(win[i, j])))
        best = max(r[2] for r in refined)
        refined = [r for r in refined if r[2] >= floor * best]
        cands = _dedupe_candidates(refined, 1.5 * max(el_res, az_res))

    lobes = [
        (SteeringDirection(math.radians(p), math.radians(t)), v) for p, t, v in cands
    ]
    peak_dir, peak_value = lobes[0]
    return Beampattern(
        grid=grid,
        phi_deg=phi_axis,
        theta_deg=theta_axis,
        values=dense,
        lobes=lobes,
        peak_dir=peak_dir,
        peak_value=peak_value,
    )


def harvest_lobes(bp: Beampattern) -> list[SteeringDirection]:
    """Directions of every lobe within 3 dB of the peak (peak included, unique)."""
    return [d for d, v in bp.lobes if v >= 0.5 * bp.peak_value]


def average_beampattern(n_points: int, sigma: float, wavelength: float, offset_angle: float) -> float:
    """Expected beampattern power at angular offset `offset_angle` from the
    true direction, for n_points with isotropic Gaussian position scatter of
    std `sigma` meters: floor 1/N plus a Gaussian main lobe."""
    if n_points < 1:
        raise InvalidSpec("n_points must be >= 1")
    if sigma < 0:
        raise InvalidSpec("sigma must be >= 0")
    arg = 4.0 * math.pi * math.sin(offset_angle / 2.0)
    lobe = math.exp(-(arg ** 2) * sigma ** 2 / (2.0 * wavelength ** 2))
    return 1.0 / n_points + (1.0 - 1.0 / n_points) * lobe ** 2


def write_beampattern_csv(bp: Beampattern, path) -> None:
    """Dense first-level map as phi_deg,theta_deg,P rows."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["phi_deg", "theta_deg", "P"])
        for i, p in enumerate(bp.phi_deg):
            for j, t in enumerate(bp.theta_deg):
                writer.writerow([f"{p:.2f}", f"{t:.2f}", f"{bp.values[i, j]:.9g}"])
