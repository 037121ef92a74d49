"""Subspace baseline DoA estimator over the same point cloud.

The sample covariance of per-point channel scalars is split into signal and
noise subspaces; the pseudospectrum peaks where the steering-weight vector
a(phi, theta) = [w_1 .. w_N] is orthogonal to the noise subspace.

Snapshot convention: each snapshot is the CONJUGATED matched-filter
projection per point. A capture's projection carries exp(-j*kappa*d'_k), the
steering weights carry exp(+j*kappa*d'_k); conjugating the projections puts
the snapshots on the steering-weight manifold, so the verbatim a(phi, theta)
above spans the signal subspace at the true direction. Snapshots are
generated by re-drawing noise on one fixed geometry (multi-instance capture).

The pseudospectrum is evaluated densely at the grid's base resolution;
coarse-to-fine refinement is the sweep's own speed/precision device and is
deliberately not grafted onto the baseline. That keeps the grid-cell count
fixed while the per-cell cost grows with the point count -- the scaling the
runtime benchmark measures -- and it is why the baseline quantizes harder
than the refined sweep under position error.

With a single source the pseudospectrum is a monotone transform of the
matched-filter beampattern (the signal eigenvector IS the conjugated phasor
vector, up to snapshot noise), so on a common grid the two argmaxes would
coincide; the resolution difference above is the honest gap between the
estimators as deployed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .align import ReceptionPoint
from .beamform import AngularGrid, Beampattern, DoaEstimate, _dedupe_candidates, _measured_xyz, _periodic_local_maxima
from .errors import DimensionMismatch, EmptyArray, InvalidSpec
from .geometry import SteeringDirection

DOA_SOURCE_MUSIC = "music"

_DENOM_FLOOR = 1e-12  # steering vector numerically inside the signal subspace


@dataclass(frozen=True)
class MusicConfig:
    """Subspace split and evaluation grid for the pseudospectrum."""

    num_sources: int = 1
    snapshots: int = 100
    grid: AngularGrid | None = None

    def validate(self, n_points: int) -> None:
        if self.num_sources < 1 or self.num_sources >= n_points:
            raise InvalidSpec(
                f"num_sources {self.num_sources} must be in [1, {n_points - 1}]"
            )
        if self.snapshots < n_points:
            raise InvalidSpec(
                f"{self.snapshots} snapshots < {n_points} points: noise subspace rank-deficient"
            )


def snapshots_from_projections(projections) -> np.ndarray:
    """Stack raw per-point projections into (snapshots, N) manifold snapshots.

    Applies the module's conjugation convention (see module docstring); accepts
    one vector or an iterable of equal-length vectors.
    """
    arr = np.atleast_2d(np.asarray(projections, dtype=complex))
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected (snapshots, N) shape, got {arr.shape}")
    return np.conj(arr)


def covariance(snapshot_vectors) -> np.ndarray:
    """Sample covariance (outer-product average) of the snapshot vectors."""
    x = np.asarray(snapshot_vectors, dtype=complex)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] == 0:
        raise DimensionMismatch(f"expected (snapshots, N) snapshots, got shape {x.shape}")
    if x.shape[0] == 0:
        raise EmptyArray("no snapshots")
    cov = (x.T @ np.conj(x)) / x.shape[0]
    return 0.5 * (cov + cov.conj().T)  # exactly Hermitian despite float order


def noise_subspace(cov: np.ndarray, num_sources: int) -> np.ndarray:
    """Eigenvectors of the N - num_sources smallest eigenvalues, as columns."""
    cov = np.asarray(cov, dtype=complex)
    n = cov.shape[0]
    if cov.shape != (n, n):
        raise DimensionMismatch(f"covariance must be square, got {cov.shape}")
    if not 1 <= num_sources < n:
        raise InvalidSpec(f"num_sources {num_sources} must be in [1, {n - 1}]")
    _, vectors = np.linalg.eigh(cov)  # ascending eigenvalues
    return vectors[:, : n - num_sources]


def music_spectrum(
    cov: np.ndarray,
    points: list[ReceptionPoint],
    wavelength: float,
    grid: AngularGrid | None = None,
    num_sources: int = 1,
) -> Beampattern:
    """Dense pseudospectrum P = 1 / |En^H a|^2 over the full double cover.

    The denominator is floored at 1e-12 (a steering vector lying numerically
    inside the signal subspace would otherwise divide by zero); the map is
    normalized to max 1. Axes are at the grid's base resolution -- see the
    module docstring for why the baseline does not refine.
    """
    grid = grid or AngularGrid()
    grid.validate()
    if not points:
        raise EmptyArray("no reception points")
    xyz = _measured_xyz(points)
    if np.asarray(cov).shape != (len(points), len(points)):
        raise DimensionMismatch(
            f"covariance {np.asarray(cov).shape} does not match {len(points)} points"
        )
    en = noise_subspace(cov, num_sources)

    el_res, az_res = grid.el_resolution, grid.az_resolution
    phi_axis = -180.0 + el_res * np.arange(int(round(360.0 / el_res)))
    theta_axis = -180.0 + az_res * np.arange(int(round(360.0 / az_res)))
    phi = np.radians(phi_axis)
    theta = np.radians(theta_axis)
    u = np.empty((phi.size, theta.size, 3))
    u[..., 0] = np.sin(phi)[:, None] * np.cos(theta)[None, :]
    u[..., 1] = np.sin(phi)[:, None] * np.sin(theta)[None, :]
    u[..., 2] = np.cos(phi)[:, None]
    proj = np.einsum("ptc,kc->ptk", u, xyz)
    a = np.exp(1j * (2.0 * math.pi / wavelength) * proj)
    q = np.abs(a.conj() @ en) ** 2
    denom = np.maximum(q.sum(axis=-1), _DENOM_FLOOR)
    values = 1.0 / denom
    values /= values.max()

    mask = _periodic_local_maxima(values) & (values >= 0.5 * values.max())
    ii, jj = np.nonzero(mask)
    cands = [
        (float(phi_axis[i]), float(theta_axis[j]), float(values[i, j]))
        for i, j in zip(ii, jj)
    ]
    cands = _dedupe_candidates(cands, 1.5 * max(el_res, az_res))
    lobes = [
        (SteeringDirection(math.radians(p), math.radians(t)), v) for p, t, v in cands
    ]
    peak_dir, peak_value = lobes[0]
    return Beampattern(
        grid=grid,
        phi_deg=phi_axis,
        theta_deg=theta_axis,
        values=values,
        lobes=lobes,
        peak_dir=peak_dir,
        peak_value=peak_value,
    )


def music_doa(
    cov: np.ndarray,
    points: list[ReceptionPoint],
    wavelength: float,
    grid: AngularGrid | None = None,
    num_sources: int = 1,
) -> DoaEstimate:
    """Pseudospectrum argmax as a canonical direction estimate."""
    bp = music_spectrum(cov, points, wavelength, grid=grid, num_sources=num_sources)
    return DoaEstimate.from_direction(bp.peak_dir, DOA_SOURCE_MUSIC)
