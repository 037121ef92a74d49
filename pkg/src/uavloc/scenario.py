"""End-to-end experiment harness over the four-stage pipeline.

A Scenario bundles the emitter waveform, the world geometry (emitter plus two
hover locations), per-capture impairments, and the DoA search knobs. Each
trial synthesizes fresh captures at N scattered points per location, blindly
detects the signature on the first capture, aligns everything against it,
estimates both DoAs with the clustered search, and triangulates the fix.

Determinism: trial i seeds a private generator with (scenario seed XOR i) and
consumes it in a fixed documented order (scatter, offsets, capture seeds,
alignment slips, measured-position seeds, search seeds), so a re-run with the
same config file and seed reproduces every artifact byte for byte. A failed
stage tags the trial and the batch continues.

Scenario files are flat INI text (configparser): sections [waveform],
[geometry], [impairments], [algorithm], [run]. Bundled presets live in the
package's ``presets/`` directory. The world ground plane for the two-ray
model is z = 0.
"""

from __future__ import annotations

import configparser
import csv
import math
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .align import ReceptionPoint, align_capture, correct_cfo, estimate_cfo
from .blinddetect import DetectorConfig, detect_signature
from .channel import EmitterTruth, ImpairmentConfig, perturb_position, propagate
from .clusterdoa import DoaSearchConfig, IterationRecord, clustered_doa
from .errors import AlignmentFailed, InvalidSpec, UavlocError
from .fix import error_metrics, localize
from .geometry import LocalSpherical, angle_error_deg, rect_to_sph, relative_location
from .signalgen import IqTrace, WaveformSpec, embed, make_signature

_SEED_CAP = 2**31  # derived sub-seeds stay valid non-negative int32


@dataclass(frozen=True)
class Scenario:
    """One complete experiment: geometry, waveform, impairments, search, trials."""

    waveform: WaveformSpec = WaveformSpec()
    emitter_world: tuple[float, float, float] = (10.0, 17.5, 0.5)
    locations: tuple[tuple[float, float, float], tuple[float, float, float]] = (
        (0.0, 0.0, 6.0),
        (20.0, 0.0, 6.0),
    )
    sphere_radius: float = 1.0
    vertical_radius: float | None = None  # None: full sphere; else z semi-axis
    n_points: int = 20
    impairments: ImpairmentConfig = ImpairmentConfig()
    algorithm: DoaSearchConfig = DoaSearchConfig()
    trials: int = 1
    seed: int = 0

    def validate(self) -> None:
        self.waveform.validate()
        self.impairments.validate()
        self.algorithm.validate()
        if self.sphere_radius <= 0:
            raise InvalidSpec("sphere_radius must be positive")
        if self.vertical_radius is not None and not 0 < self.vertical_radius <= self.sphere_radius:
            raise InvalidSpec("vertical_radius must be in (0, sphere_radius]")
        if self.n_points < 4:
            raise InvalidSpec("n_points must be >= 4")
        if self.algorithm.n_points is not None and self.algorithm.n_points != self.n_points:
            raise InvalidSpec(
                f"algorithm.n_points {self.algorithm.n_points} != n_points {self.n_points}"
            )
        if self.trials < 1:
            raise InvalidSpec("trials must be >= 1")
        if self.seed < 0:
            raise InvalidSpec("seed must be non-negative")
        if len(self.locations) != 2:
            raise InvalidSpec("exactly two hover locations required")
        a, b = (np.asarray(p, dtype=float) for p in self.locations)
        if np.array_equal(a, b):
            raise InvalidSpec("hover locations coincide")
        for loc in self.locations:
            rng_to_emitter = float(np.linalg.norm(np.asarray(self.emitter_world) - np.asarray(loc)))
            if rng_to_emitter < 10.0 * self.sphere_radius:
                raise InvalidSpec(
                    f"emitter {rng_to_emitter:.2f} m from a location breaks the "
                    f"far-field margin (need >= {10.0 * self.sphere_radius:.2f} m)"
                )


@dataclass(frozen=True)
class LocationOutcome:
    """DoA result at one hover location, plus the search telemetry."""

    true_phi: float
    true_theta: float
    est_phi: float
    est_theta: float
    az_error_deg: float
    el_error_deg: float
    iterations_used: int
    dominant_radius_deg: float
    telemetry: tuple[IterationRecord, ...] = field(repr=False, default=())


@dataclass(frozen=True)
class TrialRecord:
    """Flat per-trial results; failed stages leave later fields as None/NaN."""

    trial_id: int
    loc1: LocationOutcome | None = None
    loc2: LocationOutcome | None = None
    fix_world: tuple[float, float, float] | None = None
    e2d: float = math.nan
    e3d: float = math.nan
    wall_time_s: float = 0.0
    failure: str = ""


def scatter_positions(
    rng: np.random.Generator, n: int, radius: float, vertical_radius: float | None = None
) -> list[LocalSpherical]:
    """n positions uniform in the hover volume (cube-root radial for uniformity).

    vertical_radius < radius squashes the sphere into an oblate spheroid: a
    platform holding a lateral search pattern spreads far more horizontally
    than vertically, which costs elevation aperture.
    """
    pts = []
    scale = 1.0 if vertical_radius is None else vertical_radius / radius
    for _ in range(n):
        r = radius * rng.uniform() ** (1.0 / 3.0)
        psi = math.acos(1.0 - 2.0 * rng.uniform())
        zeta = rng.uniform(-math.pi, math.pi)
        if scale != 1.0:
            xyz = LocalSpherical(float(r), float(psi), float(zeta)).to_rect()
            xyz[2] *= scale
            r, psi, zeta = rect_to_sph(xyz)
        pts.append(LocalSpherical(float(r), float(psi), float(zeta)))
    return pts


def _sub_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(_SEED_CAP))


def _capture_location(s: Scenario, loc_index: int, rng: np.random.Generator):
    """Scatter points and synthesize one raw capture per point.

    The first capture of the first location anchors blind detection, whose
    contract wants the burst at (or very near) the capture start, so that one
    point records with zero lead-in; every other capture gets a random offset
    for the alignment stage to absorb.
    """
    loc = np.asarray(s.locations[loc_index], dtype=float)
    truth = EmitterTruth(*rect_to_sph(np.asarray(s.emitter_world, dtype=float) - loc))
    positions = scatter_positions(rng, s.n_points, s.sphere_radius, s.vertical_radius)
    w_p = s.waveform.pattern_width
    signature = make_signature(s.waveform, seed=s.seed)
    buffer_len = len(signature) + 2 * w_p
    offsets = rng.integers(0, w_p + 1, size=s.n_points)
    if loc_index == 0:
        offsets[0] = 0
    imps = replace(s.impairments, ground_z=-float(loc[2]))
    captures = []
    for k, pos in enumerate(positions):
        cfg = replace(imps, seed=_sub_seed(rng))
        captures.append(propagate(embed(signature, buffer_len, int(offsets[k])), pos, truth, cfg))
    return truth, positions, captures


def _align_location(s: Scenario, model, positions, captures, rng: np.random.Generator):
    """Cut aligned segments (with optional injected slip), attach measured positions.

    A capture whose correlation never clears the alignment floor (e.g. a point
    parked in a deep multipath null) is dropped rather than failing the trial;
    the subset search downstream absorbs a thinner array. Fewer than four
    survivors is unrecoverable and re-raises.
    """
    w = model.signature_width
    pts = []
    for pos, cap in zip(positions, captures):
        try:
            lag, segment = align_capture(cap, model)
        except AlignmentFailed:
            continue
        if s.impairments.align_jitter > 0:
            slip = int(rng.integers(-s.impairments.align_jitter, s.impairments.align_jitter + 1))
            start = min(max(lag + slip, 0), len(cap) - w)
            segment = IqTrace(
                cap.samples[start : start + w].copy(), cap.sample_rate, cap.carrier_wavelength
            )
        measured = perturb_position(pos.to_rect(), s.impairments.pos_error_sigma, _sub_seed(rng))
        pts.append(ReceptionPoint(pos, LocalSpherical(*rect_to_sph(measured)), segment))
    if len(pts) < 4:
        raise AlignmentFailed(f"only {len(pts)} of {len(positions)} captures aligned; need >= 4")
    cfo = estimate_cfo(pts[0].aligned_signal, model)
    return correct_cfo(pts, cfo)


def _location_outcome(truth: EmitterTruth, result) -> LocationOutcome:
    est = result.estimate
    return LocationOutcome(
        true_phi=truth.phi,
        true_theta=truth.theta,
        est_phi=est.phi,
        est_theta=est.theta,
        az_error_deg=angle_error_deg(est.theta, truth.theta),
        el_error_deg=angle_error_deg(est.phi, truth.phi),
        iterations_used=len(result.telemetry),
        dominant_radius_deg=math.degrees(result.best_radius)
        if math.isfinite(result.best_radius)
        else math.inf,
        telemetry=tuple(result.telemetry),
    )


def run_trial(s: Scenario, trial_id: int) -> TrialRecord:
    """One end-to-end trial; any stage failure tags the record and stops there."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(s.seed ^ trial_id)
    detector = DetectorConfig(window_len=max(8, len(make_signature(s.waveform, seed=s.seed)) // 2))
    record = TrialRecord(trial_id=trial_id)

    def done(rec: TrialRecord) -> TrialRecord:
        return replace(rec, wall_time_s=time.perf_counter() - t0)

    try:
        truth1, positions1, captures1 = _capture_location(s, 0, rng)
        truth2, positions2, captures2 = _capture_location(s, 1, rng)
    except UavlocError as e:
        return done(replace(record, failure=f"capture:{type(e).__name__}"))
    try:
        model = detect_signature(captures1[0], detector)
    except UavlocError as e:
        return done(replace(record, failure=f"detect:{type(e).__name__}"))
    try:
        points1 = _align_location(s, model, positions1, captures1, rng)
        points2 = _align_location(s, model, positions2, captures2, rng)
    except UavlocError as e:
        return done(replace(record, failure=f"align:{type(e).__name__}"))

    lam = s.waveform.carrier_wavelength
    try:
        # n_points=None: the search sizes subsets from the surviving points,
        # which alignment may have thinned below the configured count.
        res1 = clustered_doa(points1, lam, cfg=replace(s.algorithm, seed=_sub_seed(rng), n_points=None))
        res2 = clustered_doa(points2, lam, cfg=replace(s.algorithm, seed=_sub_seed(rng), n_points=None))
    except UavlocError as e:
        return done(replace(record, failure=f"doa:{type(e).__name__}"))
    record = replace(record, loc1=_location_outcome(truth1, res1), loc2=_location_outcome(truth2, res2))

    try:
        rel = relative_location(s.locations[0], s.locations[1])
        fix = localize(res1.estimate, res2.estimate, rel, origin=s.locations[0])
        eb = error_metrics(fix, s.emitter_world)
    except UavlocError as e:
        return done(replace(record, failure=f"fix:{type(e).__name__}"))
    return done(
        replace(
            record,
            fix_world=(float(fix.world[0]), float(fix.world[1]), float(fix.world[2])),
            e2d=eb.error_2d,
            e3d=eb.error_3d,
        )
    )


def run_scenario(s: Scenario) -> list[TrialRecord]:
    """All trials, in trial_id order (each trial is independently seeded)."""
    s.validate()
    return [run_trial(s, t) for t in range(s.trials)]


# --- scenario files ----------------------------------------------------------


def _get_vec(cp: configparser.ConfigParser, section: str, key: str, default=None):
    if not cp.has_option(section, key):
        if default is None:
            raise InvalidSpec(f"missing [{section}] {key}")
        return default
    parts = cp.get(section, key).replace(",", " ").split()
    if len(parts) != 3:
        raise InvalidSpec(f"[{section}] {key} must have three components")
    return tuple(float(p) for p in parts)


def scenario_from_config(cp: configparser.ConfigParser) -> Scenario:
    """Build and validate a Scenario from parsed INI text."""
    try:
        wf = WaveformSpec(
            kind=cp.get("waveform", "kind", fallback=WaveformSpec.kind),
            pattern_width=cp.getint("waveform", "pattern_width", fallback=WaveformSpec.pattern_width),
            repetitions=cp.getint("waveform", "repetitions", fallback=WaveformSpec.repetitions),
            sample_rate=cp.getfloat("waveform", "sample_rate", fallback=WaveformSpec.sample_rate),
            carrier_wavelength=cp.getfloat(
                "waveform", "carrier_wavelength", fallback=WaveformSpec.carrier_wavelength
            ),
            bandwidth=cp.getfloat("waveform", "bandwidth", fallback=WaveformSpec.bandwidth),
        )
        snr_raw = cp.get("impairments", "snr_db", fallback="none").strip().lower()
        imps = ImpairmentConfig(
            snr_db=None if snr_raw in ("none", "") else float(snr_raw),
            multipath=cp.get("impairments", "multipath", fallback="none"),
            cfo_hz=cp.getfloat("impairments", "cfo_hz", fallback=0.0),
            pos_error_sigma=cp.getfloat("impairments", "pos_error_sigma", fallback=0.0),
            align_jitter=cp.getint("impairments", "align_jitter", fallback=0),
            rayleigh_taps=cp.getint("impairments", "rayleigh_taps", fallback=3),
            reflection_coeff=cp.getfloat("impairments", "reflection_coeff", fallback=-1.0),
        )
        algo = DoaSearchConfig(
            max_iterations=cp.getint("algorithm", "max_iterations", fallback=DoaSearchConfig.max_iterations),
            radius_threshold_deg=cp.getfloat(
                "algorithm", "radius_threshold_deg", fallback=DoaSearchConfig.radius_threshold_deg
            ),
            cluster_count=cp.getint("algorithm", "cluster_count", fallback=DoaSearchConfig.cluster_count),
            harvest_band=cp.getboolean("algorithm", "harvest_band", fallback=DoaSearchConfig.harvest_band),
        )
        s = Scenario(
            waveform=wf,
            emitter_world=_get_vec(cp, "geometry", "emitter"),
            locations=(
                _get_vec(cp, "geometry", "location1"),
                _get_vec(cp, "geometry", "location2"),
            ),
            sphere_radius=cp.getfloat("geometry", "sphere_radius", fallback=1.0),
            vertical_radius=(
                None
                if cp.get("geometry", "vertical_radius", fallback="none").strip().lower()
                in ("none", "")
                else cp.getfloat("geometry", "vertical_radius")
            ),
            n_points=cp.getint("geometry", "n_points", fallback=20),
            impairments=imps,
            algorithm=algo,
            trials=cp.getint("run", "trials", fallback=1),
            seed=cp.getint("run", "seed", fallback=0),
        )
    except (configparser.Error, ValueError) as e:
        raise InvalidSpec(f"bad scenario config: {e}") from e
    s.validate()
    return s


def load_scenario(path) -> Scenario:
    cp = configparser.ConfigParser()
    read = cp.read(Path(path))
    if not read:
        raise InvalidSpec(f"cannot read scenario file {path}")
    return scenario_from_config(cp)


def available_presets() -> list[str]:
    """Names of the bundled scenario presets (without extension)."""
    root = resources.files("uavloc") / "presets"
    return sorted(p.name[: -len(".cfg")] for p in root.iterdir() if p.name.endswith(".cfg"))


def load_preset(name: str) -> Scenario:
    root = resources.files("uavloc") / "presets"
    target = root / f"{name}.cfg"
    if not target.is_file():
        raise InvalidSpec(f"unknown preset {name!r}; available: {', '.join(available_presets())}")
    cp = configparser.ConfigParser()
    cp.read_string(target.read_text())
    return scenario_from_config(cp)


# --- CSV emission ------------------------------------------------------------

RESULT_COLUMNS = [
    "trial_id",
    "true_phi1_deg", "true_theta1_deg", "est_phi1_deg", "est_theta1_deg",
    "az_err1_deg", "el_err1_deg", "iters1", "radius1_deg",
    "true_phi2_deg", "true_theta2_deg", "est_phi2_deg", "est_theta2_deg",
    "az_err2_deg", "el_err2_deg", "iters2", "radius2_deg",
    "fix_x_m", "fix_y_m", "fix_z_m", "e2d_m", "e3d_m",
    "failure", "wall_time_s",
]

TELEMETRY_COLUMNS = [
    "trial_id", "location", "subset_size", "iteration",
    "dominant_radius_deg", "dominant_count", "centroid_phi_deg", "centroid_theta_deg",
]


def _deg(x: float) -> str:
    return f"{math.degrees(x):.2f}"


def _loc_cells(loc: LocationOutcome | None) -> list[str]:
    if loc is None:
        return [""] * 8
    return [
        _deg(loc.true_phi), _deg(loc.true_theta), _deg(loc.est_phi), _deg(loc.est_theta),
        f"{loc.az_error_deg:.2f}", f"{loc.el_error_deg:.2f}",
        str(loc.iterations_used),
        f"{loc.dominant_radius_deg:.2f}" if math.isfinite(loc.dominant_radius_deg) else "inf",
    ]


def write_results_csv(records: list[TrialRecord], path) -> None:
    """One row per trial, sorted by trial_id; angles 0.01 deg, meters 1 mm.

    wall_time_s is the last column so determinism checks can strip it.
    """
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in sorted(records, key=lambda r: r.trial_id):
            fix_cells = (
                [f"{v:.3f}" for v in r.fix_world] if r.fix_world is not None else ["", "", ""]
            )
            err_cells = [
                f"{r.e2d:.3f}" if math.isfinite(r.e2d) else "",
                f"{r.e3d:.3f}" if math.isfinite(r.e3d) else "",
            ]
            w.writerow(
                [str(r.trial_id)]
                + _loc_cells(r.loc1)
                + _loc_cells(r.loc2)
                + fix_cells
                + err_cells
                + [r.failure, f"{r.wall_time_s:.6f}"]
            )


def write_telemetry_csv(records: list[TrialRecord], path) -> None:
    """Per-iteration search telemetry for both locations of every trial."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(TELEMETRY_COLUMNS)
        for r in sorted(records, key=lambda r: r.trial_id):
            for loc_idx, loc in ((1, r.loc1), (2, r.loc2)):
                if loc is None:
                    continue
                for it in loc.telemetry:
                    w.writerow(
                        [
                            str(r.trial_id),
                            str(loc_idx),
                            str(it.subset_size),
                            str(it.iteration),
                            f"{math.degrees(it.dominant_radius):.2f}",
                            str(it.dominant_count),
                            _deg(it.centroid_phi),
                            _deg(it.centroid_theta),
                        ]
                    )
