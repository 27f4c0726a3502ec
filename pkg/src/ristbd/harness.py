"""Monte Carlo orchestration: workspace construction, threshold calibration,
trials, the (gamma, n_scan) sweep, and result emission.

Reproducibility: every random draw comes from a generator keyed by
(master seed, phase tag, n_scan, trial, scan), so any trial is reproducible
in isolation and results do not depend on the worker count.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .comms import SE_PERCENTILES, se_percentiles, spectral_efficiency
from .config import SPEED_OF_LIGHT, ConfigError, ScenarioConfig, config_from_dict
from .detector import (PlotList, calibrate_plot_threshold, extract_plots,
                       peak_values)
from .errors import CalibrationError, SimulationError
from .radar_rx import (CorrelatorBank, RcsModel, ScanCube, TargetState,
                       calibrate_rcs, h0_cube_fast, reference_placement,
                       statistic_cube, synthesize_rx, target_geometry)
from .ris_opt import RisProfile, optimize_all_directions
from .scene import (ChannelSet, Geometry, build_channels, build_geometry,
                    direction_unit_vector, drop_user, user_channel)
from .tbd import (best_trajectory, calibrate_tbd_threshold, decide,
                  selected_plots, smooth_trajectory)
from .txwave import (BeamformerSet, comm_beamformer, draw_symbols,
                     matched_beamformers, transmit_signal)

__version__ = "0.1.0"

# RNG phase tags
_TAG_H1 = 1
_TAG_SE = 3
_TAG_PLOT_CAL = 4
_TAG_TBD_CAL = 5
_TAG_TBD_VAL = 6
_TAG_PLOT_VAL = 7

# Sensing fraction used for H0 calibration scans.  Under the no-target
# hypothesis the normalized statistic cube has the same joint law for any
# split, user channel, and RIS profile (the correlator output is a projection
# of isotropic noise onto unit vectors), so thresholds transfer exactly.
_H0_GAMMA = 0.5


def trial_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, *key)))


# -- numerology self-check -----------------------------------------------------

def numerology(cfg: ScenarioConfig) -> dict[str, float]:
    """Derived waveform resolutions and ambiguity limits."""
    t_sym = cfg.symbol_duration_s
    return {
        "range_resolution_m": SPEED_OF_LIGHT / (2.0 * cfg.n_sub * cfg.used_spacing_hz),
        "velocity_resolution_mps": SPEED_OF_LIGHT
        / (2.0 * cfg.n_sym * t_sym * cfg.carrier_hz),
        "cp_range_m": SPEED_OF_LIGHT * cfg.cyclic_prefix_s / 2.0,
        "unambiguous_range_m": SPEED_OF_LIGHT / (2.0 * cfg.used_spacing_hz),
        "unambiguous_velocity_mps": SPEED_OF_LIGHT / (4.0 * t_sym * cfg.carrier_hz),
    }


def check_numerology(cfg: ScenarioConfig) -> dict[str, float]:
    """Verify derived numerology against the configured anchors."""
    values = numerology(cfg)
    if cfg.numerology_refs is not None:
        refs = dict(zip(values.keys(), cfg.numerology_refs))
        for name, ref in refs.items():
            got = values[name]
            if abs(got - ref) > cfg.numerology_tol * ref:
                raise ConfigError(
                    f"numerology self-check failed: {name} = {got:.4g}, "
                    f"expected {ref} within {cfg.numerology_tol:.0%}"
                )
    return values


# -- workspace ------------------------------------------------------------------

@dataclass
class Workspace:
    """Scenario-wide immutable state shared by all trials."""

    cfg: ScenarioConfig
    geom: Geometry
    channels: ChannelSet          # user channel taken at the nominal drop point
    nominal_beams: BeamformerSet
    profiles: dict[float, list[RisProfile]]
    banks: dict[float, CorrelatorBank]
    rcs: RcsModel

    def bank(self, gamma: float) -> CorrelatorBank:
        try:
            return self.banks[float(gamma)]
        except KeyError:
            raise KeyError(
                f"no RIS profiles prepared for gamma = {gamma}; "
                f"available: {sorted(self.banks)}"
            ) from None

    def user_beams(self, user_position) -> BeamformerSet:
        h_c = user_channel(self.geom, user_position, self.channels.freqs)
        return BeamformerSet(f_c=comm_beamformer(h_c), f_s=self.nominal_beams.f_s)


def nominal_user(cfg: ScenarioConfig) -> np.ndarray:
    return np.array([
        0.5 * (cfg.user_x[0] + cfg.user_x[1]),
        0.5 * (cfg.user_y[0] + cfg.user_y[1]),
        0.5 * (cfg.user_z[0] + cfg.user_z[1]),
    ])


def build_workspace(cfg: ScenarioConfig, gammas=None) -> Workspace:
    """Build geometry, channels, per-gamma RIS profiles, and the RCS model.

    The profile cache is written once here, before any trial runs; gamma = 1
    is always included because the amplitude calibration anchors there.
    """
    check_numerology(cfg)
    geom = build_geometry(cfg)
    channels = build_channels(cfg, nominal_user(cfg), geom)
    beams = matched_beamformers(channels)
    wanted = sorted({1.0} | {float(g) for g in (gammas if gammas is not None else cfg.gamma_set)})
    profiles = {}
    banks = {}
    for g in wanted:
        profiles[g] = optimize_all_directions(cfg, channels, beams, g, geom.ris)
        banks[g] = CorrelatorBank(cfg, channels, profiles[g], geom.ris)
    ref_idx, _, _ = reference_placement(cfg)
    rcs = calibrate_rcs(cfg, channels, beams, geom.ris, profiles[1.0][ref_idx])
    return Workspace(cfg=cfg, geom=geom, channels=channels, nominal_beams=beams,
                     profiles=profiles, banks=banks, rcs=rcs)


# -- target and scan simulation --------------------------------------------------

def in_volume(cfg: ScenarioConfig, geom: Geometry, position) -> bool:
    rel = np.asarray(position, dtype=float) - geom.ris.center
    d = np.linalg.norm(rel)
    if not (cfg.range_min_m <= d <= cfg.range_max_m):
        return False
    y = rel @ geom.ris.boresight
    if y <= 0:
        return False
    az = math.atan2(rel @ geom.ris.h_axis, y)
    el = math.asin(np.clip((rel @ geom.ris.v_axis) / d, -1.0, 1.0))
    return (cfg.azimuth_interval_rad[0] <= az <= cfg.azimuth_interval_rad[1]
            and cfg.elevation_interval_rad[0] <= el <= cfg.elevation_interval_rad[1])


def draw_target(cfg: ScenarioConfig, geom: Geometry, rng: np.random.Generator,
                n_scan: int, max_tries: int = 10000) -> TargetState:
    """Constant-velocity target staying inside the volume over the whole window.

    The current-scan position is uniform over the (range, azimuth, elevation)
    box defining the inspected volume; speed is uniform on [0, v_max] with
    isotropic direction.  Draws that leave the volume at any illumination
    time are rejected.
    """
    t_ref = cfg.illumination_time(n_scan - 1, 0)
    times = np.array([
        cfg.illumination_time(s, i) for s in range(n_scan) for i in range(cfg.n_dir)
    ])
    for _ in range(max_tries):
        az = rng.uniform(*cfg.azimuth_interval_rad)
        el = rng.uniform(*cfg.elevation_interval_rad)
        r = rng.uniform(cfg.range_min_m, cfg.range_max_m)
        speed = rng.uniform(0.0, cfg.max_speed_mps)
        direction = rng.standard_normal(3)
        norm = np.linalg.norm(direction)
        if norm == 0:
            continue
        pos_ref = geom.ris.center + r * direction_unit_vector(geom.ris, az, el)
        velocity = speed * direction / norm
        origin = pos_ref - velocity * t_ref
        if all(in_volume(cfg, geom, origin + velocity * t) for t in times):
            return TargetState(position=origin, velocity=velocity)
    raise SimulationError("could not draw a target that stays in the volume")


def simulate_scan(cfg: ScenarioConfig, bank: CorrelatorBank, beams: BeamformerSet,
                  gamma: float, scan_index: int, rng: np.random.Generator,
                  target: TargetState | None = None) -> ScanCube:
    """One scan: sequential CPIs over all pointing directions."""
    cpis = []
    timestamps = np.array([
        cfg.illumination_time(scan_index, i) for i in range(cfg.n_dir)
    ])
    for i in range(cfg.n_dir):
        sym = draw_symbols(rng, gamma, cfg.n_sub, cfg.n_sym)
        p = transmit_signal(beams, sym, cfg.power_per_subcarrier_w)
        y = synthesize_rx(cfg, bank, i, p, rng, target=target, time_s=timestamps[i])
        cpis.append((y, p))
    return statistic_cube(bank, cpis, cfg.noise_var_sense_w, scan_index, timestamps)


def swerling_amplitude(rcs: RcsModel, geom: Geometry, target: TargetState,
                       time_s: float, rng: np.random.Generator) -> complex:
    """Per-scan complex amplitude draw from the radar-equation variance."""
    angles, dist = target_geometry(geom.ris, target.at(time_s))
    var = rcs.amplitude_variance(angles, dist)
    return math.sqrt(var / 2.0) * complex(rng.standard_normal(), rng.standard_normal())


# -- trials ----------------------------------------------------------------------

@dataclass
class TrialRecord:
    trial: int
    hypothesis: str
    gamma: float
    n_scan: int
    detected: bool
    gated: bool
    metric: float
    position_error_m: float
    est_position: tuple[float, float, float]
    true_position: tuple[float, float, float]
    plot_counts: tuple[int, ...]
    seed_key: tuple[int, ...]


def run_h1_trial(ws: Workspace, gamma: float, n_scan: int, trial: int,
                 plot_threshold: float, tbd_threshold: float) -> TrialRecord:
    """Full chain for one target-present trial."""
    cfg = ws.cfg
    bank = ws.bank(gamma)
    key = (cfg.seed, _TAG_H1, n_scan, trial)
    rng = trial_rng(*key)
    user = drop_user(cfg, rng)
    beams = ws.user_beams(user)
    target = draw_target(cfg, ws.geom, rng, n_scan)

    plot_lists: list[PlotList] = []
    for scan in range(n_scan):
        rng_scan = trial_rng(cfg.seed, _TAG_H1, n_scan, trial, scan)
        amp = swerling_amplitude(ws.rcs, ws.geom, target,
                                 cfg.illumination_time(scan, 0), rng_scan)
        scan_target = TargetState(position=target.position, velocity=target.velocity,
                                  amplitude=amp)
        cube = simulate_scan(cfg, bank, beams, gamma, scan, rng_scan, scan_target)
        plot_lists.append(extract_plots(cube, plot_threshold, cfg))

    trajectory = best_trajectory(plot_lists, ws.geom.ris, cfg.max_speed_mps,
                                 cfg.gate_slack)
    metric = trajectory.metric if trajectory is not None else math.nan
    detected = decide(None if trajectory is None else trajectory.metric, tbd_threshold)
    est = (math.nan,) * 3
    true = (math.nan,) * 3
    err = math.nan
    gated = False
    if detected:
        pos_sel, t_sel = selected_plots(trajectory, plot_lists, ws.geom.ris)
        estimate = smooth_trajectory(pos_sel, t_sel, cfg.smoothing_degree)
        truth = target.at(float(t_sel[-1]))
        err = float(np.linalg.norm(estimate - truth))
        gated = err <= cfg.gate_radius_m
        est = tuple(float(x) for x in estimate)
        true = tuple(float(x) for x in truth)
    return TrialRecord(trial=trial, hypothesis="H1", gamma=float(gamma),
                       n_scan=n_scan, detected=detected, gated=gated,
                       metric=float(metric), position_error_m=err,
                       est_position=est, true_position=true,
                       plot_counts=tuple(len(p) for p in plot_lists), seed_key=key)


def h0_scan_cube(ws: Workspace, scan_index: int, rng: np.random.Generator,
                 fast: bool) -> ScanCube:
    """One no-target scan, either synthesized end to end or drawn from the
    exact cube law (see radar_rx.h0_cube_fast)."""
    if fast:
        return h0_cube_fast(ws.bank(1.0), scan_index, rng)
    return simulate_scan(ws.cfg, ws.bank(1.0), ws.nominal_beams, _H0_GAMMA,
                         scan_index, rng, None)


def h0_scan_peaks(ws: Workspace, index: int, tag: int = _TAG_PLOT_CAL,
                  fast: bool = True) -> np.ndarray:
    """Local-maximum statistics of one independent no-target scan."""
    rng = trial_rng(ws.cfg.seed, tag, index)
    return peak_values(h0_scan_cube(ws, 0, rng, fast))


def h0_super_trial_metric(ws: Workspace, n_scan: int, trial: int,
                          plot_threshold: float, tag: int = _TAG_TBD_CAL,
                          fast: bool = True) -> float:
    """Best trajectory metric of one no-target super-trial (0 if no candidate)."""
    cfg = ws.cfg
    plot_lists = []
    for scan in range(n_scan):
        rng = trial_rng(cfg.seed, tag, n_scan, trial, scan)
        cube = h0_scan_cube(ws, scan, rng, fast)
        plot_lists.append(extract_plots(cube, plot_threshold, cfg))
    trajectory = best_trajectory(plot_lists, ws.geom.ris, cfg.max_speed_mps,
                                 cfg.gate_slack)
    return 0.0 if trajectory is None else trajectory.metric


# -- worker pool ------------------------------------------------------------------

_PAYLOAD = None


def _set_payload(payload):
    global _PAYLOAD
    _PAYLOAD = payload


def _task_h0_peaks(index: int):
    ws, tag, fast = _PAYLOAD
    return h0_scan_peaks(ws, index, tag, fast)


def _task_h0_metric(index: int):
    ws, n_scan, eta, tag, fast = _PAYLOAD
    return h0_super_trial_metric(ws, n_scan, index, eta, tag, fast)


def _task_h1(index: int):
    ws, gamma, n_scan, eta_plot, eta_tbd = _PAYLOAD
    try:
        return run_h1_trial(ws, gamma, n_scan, index, eta_plot, eta_tbd)
    except Exception as exc:  # noqa: BLE001 - failed trials are tallied by policy
        return (index, repr(exc))


def _pool_map(task, payload, count: int, workers: int, chunksize: int = 8) -> list:
    if workers <= 1:
        _set_payload(payload)
        try:
            return [task(i) for i in range(count)]
        finally:
            _set_payload(None)
    with ProcessPoolExecutor(max_workers=workers, initializer=_set_payload,
                             initargs=(payload,)) as pool:
        return list(pool.map(task, range(count), chunksize=chunksize))


# -- calibration --------------------------------------------------------------------

@dataclass
class Calibration:
    plot_threshold: float
    plot_rate: float
    plot_rate_ci95: float
    plot_cal_scans: int
    tbd_thresholds: dict[int, float]
    tbd_cal_trials: dict[int, int]
    p_fa: float
    rcs_m2: float

    def to_dict(self) -> dict:
        return {
            "plot_threshold": self.plot_threshold,
            "plot_rate": self.plot_rate,
            "plot_rate_ci95": self.plot_rate_ci95,
            "plot_cal_scans": self.plot_cal_scans,
            "tbd_thresholds": {str(k): v for k, v in self.tbd_thresholds.items()},
            "tbd_cal_trials": {str(k): v for k, v in self.tbd_cal_trials.items()},
            "p_fa": self.p_fa,
            "rcs_m2": self.rcs_m2,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Calibration":
        return cls(
            plot_threshold=data["plot_threshold"],
            plot_rate=data["plot_rate"],
            plot_rate_ci95=data["plot_rate_ci95"],
            plot_cal_scans=data["plot_cal_scans"],
            tbd_thresholds={int(k): v for k, v in data["tbd_thresholds"].items()},
            tbd_cal_trials={int(k): v for k, v in data["tbd_cal_trials"].items()},
            p_fa=data["p_fa"],
            rcs_m2=data["rcs_m2"],
        )


def calibrate_thresholds(ws: Workspace, n_scan_set=None, p_fa: float | None = None,
                         h0_scans: int | None = None, workers: int = 1,
                         fast_h0: bool = True) -> Calibration:
    """Monte Carlo calibration of the plot threshold and per-n_scan TBD thresholds."""
    cfg = ws.cfg
    n_scan_set = list(n_scan_set if n_scan_set is not None else cfg.n_scan_set)
    p_fa = cfg.p_fa if p_fa is None else p_fa
    h0_scans = cfg.h0_cal_scans if h0_scans is None else h0_scans
    if h0_scans < 2000:
        raise CalibrationError(f"h0_scans = {h0_scans} < 2000 gives an unreliable plot rate")

    peaks = _pool_map(_task_h0_peaks, (ws, _TAG_PLOT_CAL, fast_h0), h0_scans, workers)
    plot_cal = calibrate_plot_threshold(cfg, peaks)

    tbd_thresholds = {}
    tbd_trials = {}
    m = int(math.ceil(cfg.tbd_cal_factor / p_fa))
    for n_scan in n_scan_set:
        metrics = _pool_map(_task_h0_metric,
                            (ws, n_scan, plot_cal.threshold, _TAG_TBD_CAL, fast_h0),
                            m, workers)
        tbd_thresholds[n_scan] = calibrate_tbd_threshold(np.array(metrics), p_fa)
        tbd_trials[n_scan] = m
    return Calibration(plot_threshold=plot_cal.threshold,
                       plot_rate=plot_cal.achieved_rate,
                       plot_rate_ci95=plot_cal.rate_ci95,
                       plot_cal_scans=plot_cal.n_scans,
                       tbd_thresholds=tbd_thresholds, tbd_cal_trials=tbd_trials,
                       p_fa=p_fa, rcs_m2=ws.rcs.rcs_m2)


def validate_plot_rate(ws: Workspace, plot_threshold: float, n_scans: int,
                       workers: int = 1, fast_h0: bool = False) -> tuple[float, float]:
    """Plot rate on fresh H0 scans: (mean plots/scan, 95% CI half-width).

    Defaults to the fully synthesized chain so that fast-path calibrations
    are validated against the real receive path.
    """
    peaks = _pool_map(_task_h0_peaks, (ws, _TAG_PLOT_VAL, fast_h0), n_scans, workers)
    counts = np.array([np.count_nonzero(p >= plot_threshold) for p in peaks], float)
    return float(counts.mean()), float(1.96 * counts.std(ddof=1) / math.sqrt(n_scans))


def validate_tbd_fa(ws: Workspace, cal: Calibration, n_scan: int, trials: int,
                    workers: int = 1, fast_h0: bool = False) -> float:
    """False-alarm rate on fresh H0 super-trials at the calibrated threshold."""
    metrics = _pool_map(
        _task_h0_metric,
        (ws, n_scan, cal.plot_threshold, _TAG_TBD_VAL, fast_h0), trials, workers)
    eta = cal.tbd_thresholds[n_scan]
    return float(np.mean([decide(m if m > 0 else None, eta) for m in metrics]))


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion (well-calibrated at
    small rates, unlike the normal-approximation interval)."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = successes / trials
    denom = 1.0 + z**2 / trials
    center = (p + z**2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z**2 / (4 * trials**2)) / denom
    return center - half, center + half


# -- sweep ------------------------------------------------------------------------

@dataclass
class GridPoint:
    gamma: float
    n_scan: int
    p_d: float
    rmse_m: float
    trials: int
    detected: int
    gated: int


@dataclass
class SweepResult:
    gammas: list[float]
    n_scans: list[int]
    points: list[GridPoint]
    se_by_gamma: dict[float, dict[int, float]]   # gamma -> percentile -> SE
    records: list[TrialRecord]
    calibration: Calibration
    config: dict
    config_hash: str
    trials: int
    se_drops: int
    failures: list = field(default_factory=list)
    version: str = __version__

    def point(self, gamma: float, n_scan: int) -> GridPoint:
        for pt in self.points:
            if pt.gamma == gamma and pt.n_scan == n_scan:
                return pt
        raise KeyError((gamma, n_scan))

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "config": self.config,
            "config_hash": self.config_hash,
            "trials": self.trials,
            "se_drops": self.se_drops,
            "gammas": self.gammas,
            "n_scans": self.n_scans,
            "calibration": self.calibration.to_dict(),
            "points": [vars(pt) for pt in self.points],
            "se_by_gamma": {repr(g): {str(p): v for p, v in d.items()}
                            for g, d in self.se_by_gamma.items()},
            "failures": self.failures,
            "records": [
                {
                    "trial": r.trial, "hypothesis": r.hypothesis, "gamma": r.gamma,
                    "n_scan": r.n_scan, "detected": r.detected, "gated": r.gated,
                    "metric": r.metric, "position_error_m": r.position_error_m,
                    "est_position": list(r.est_position),
                    "true_position": list(r.true_position),
                    "plot_counts": list(r.plot_counts),
                    "seed_key": list(r.seed_key),
                }
                for r in self.records
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SweepResult":
        records = [
            TrialRecord(
                trial=r["trial"], hypothesis=r["hypothesis"], gamma=r["gamma"],
                n_scan=r["n_scan"], detected=r["detected"], gated=r["gated"],
                metric=r["metric"], position_error_m=r["position_error_m"],
                est_position=tuple(r["est_position"]),
                true_position=tuple(r["true_position"]),
                plot_counts=tuple(r["plot_counts"]),
                seed_key=tuple(r["seed_key"]),
            )
            for r in data["records"]
        ]
        return cls(
            gammas=data["gammas"], n_scans=data["n_scans"],
            points=[GridPoint(**pt) for pt in data["points"]],
            se_by_gamma={float(g): {int(p): v for p, v in d.items()}
                         for g, d in data["se_by_gamma"].items()},
            records=records,
            calibration=Calibration.from_dict(data["calibration"]),
            config=data["config"], config_hash=data["config_hash"],
            trials=data["trials"], se_drops=data["se_drops"],
            failures=data.get("failures", []), version=data.get("version", "unknown"),
        )


def evaluate_se(ws: Workspace, gammas, n_drops: int | None = None) -> dict[float, dict[int, float]]:
    """SE percentiles per gamma over a shared set of user drops."""
    cfg = ws.cfg
    n_drops = cfg.se_drops if n_drops is None else n_drops
    drops = [drop_user(cfg, trial_rng(cfg.seed, _TAG_SE, k)) for k in range(n_drops)]
    beams = [ws.user_beams(u) for u in drops]
    channels = [user_channel(ws.geom, u, ws.channels.freqs) for u in drops]
    out: dict[float, dict[int, float]] = {}
    for gamma in gammas:
        ses = np.empty(n_drops)
        for k in range(n_drops):
            sinr = user_sinr_from(channels[k], beams[k], gamma, cfg)
            ses[k] = spectral_efficiency(sinr, cfg)
        out[float(gamma)] = se_percentiles(ses)
    return out


def user_sinr_from(h_c: np.ndarray, beams: BeamformerSet, gamma, cfg: ScenarioConfig):
    g = np.broadcast_to(np.asarray(gamma, dtype=float), (h_c.shape[0],))
    sig = np.abs(np.einsum("qd,qd->q", np.conj(h_c), beams.f_c)) ** 2
    leak = np.abs(np.einsum("qd,qd->q", np.conj(h_c), beams.f_s)) ** 2
    return (1.0 - g) * sig / (g * leak + cfg.noise_var_comm_w / cfg.power_per_subcarrier_w)


def sweep(ws: Workspace, calibration: Calibration, gammas=None, n_scans=None,
          trials: int | None = None, workers: int = 1,
          se_drops: int | None = None) -> SweepResult:
    """Monte Carlo sweep over the (gamma, n_scan) grid."""
    cfg = ws.cfg
    gammas = [float(g) for g in (gammas if gammas is not None else cfg.gamma_set)]
    n_scans = list(n_scans if n_scans is not None else cfg.n_scan_set)
    trials = cfg.h1_trials if trials is None else trials
    for n in n_scans:
        if n not in calibration.tbd_thresholds:
            raise CalibrationError(f"no TBD threshold calibrated for n_scan = {n}")

    points: list[GridPoint] = []
    records: list[TrialRecord] = []
    failures: list = []
    for gamma in gammas:
        for n_scan in n_scans:
            payload = (ws, gamma, n_scan, calibration.plot_threshold,
                       calibration.tbd_thresholds[n_scan])
            results = _pool_map(_task_h1, payload, trials, workers)
            good = [r for r in results if isinstance(r, TrialRecord)]
            bad = [r for r in results if not isinstance(r, TrialRecord)]
            for idx, msg in bad:
                failures.append({"gamma": gamma, "n_scan": n_scan,
                                 "trial": idx, "error": msg})
            if len(bad) > 0.01 * trials:
                raise SimulationError(
                    f"{len(bad)}/{trials} trials failed at gamma={gamma}, "
                    f"n_scan={n_scan}: {bad[0][1]}"
                )
            gated = [r for r in good if r.gated]
            p_d = len(gated) / len(good) if good else math.nan
            if gated:
                rmse = float(np.sqrt(np.mean([r.position_error_m**2 for r in gated])))
            else:
                rmse = math.nan
            points.append(GridPoint(gamma=gamma, n_scan=n_scan, p_d=p_d,
                                    rmse_m=rmse, trials=len(good),
                                    detected=sum(r.detected for r in good),
                                    gated=len(gated)))
            records.extend(good)
    se = evaluate_se(ws, gammas, se_drops)
    return SweepResult(gammas=gammas, n_scans=n_scans, points=points,
                       se_by_gamma=se, records=records, calibration=calibration,
                       config=cfg.to_dict(), config_hash=cfg.content_hash(),
                       trials=trials,
                       se_drops=cfg.se_drops if se_drops is None else se_drops,
                       failures=failures)


# -- reporting ----------------------------------------------------------------------

def _fmt(x) -> str:
    return repr(float(x))


def save_results(result: SweepResult, path):
    Path(path).write_text(json.dumps(result.to_dict()))


def load_results(path) -> SweepResult:
    return SweepResult.from_dict(json.loads(Path(path).read_text()))


def report(result: SweepResult, out_dir, figures: bool = True) -> list[Path]:
    """Write per-metric CSVs, the run manifest, and (optionally) figures.

    Byte-identical for identical SweepResults: no timestamps or environment
    details are recorded.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []

    pd_path = out / "pd.csv"
    with pd_path.open("w", newline="") as fh:
        fh.write("gamma,n_scan,p_d,trials\n")
        for pt in result.points:
            fh.write(f"{_fmt(pt.gamma)},{pt.n_scan},{_fmt(pt.p_d)},{pt.trials}\n")
    paths.append(pd_path)

    rmse_path = out / "rmse.csv"
    with rmse_path.open("w", newline="") as fh:
        fh.write("gamma,n_scan,rmse_m,gated_detections\n")
        for pt in result.points:
            fh.write(f"{_fmt(pt.gamma)},{pt.n_scan},{_fmt(pt.rmse_m)},{pt.gated}\n")
    paths.append(rmse_path)

    se_path = out / "se.csv"
    with se_path.open("w", newline="") as fh:
        fh.write("gamma,percentile,se_bit_per_hz\n")
        for gamma in result.gammas:
            for pct in SE_PERCENTILES:
                fh.write(f"{_fmt(gamma)},{pct},{_fmt(result.se_by_gamma[gamma][pct])}\n")
    paths.append(se_path)

    trials_path = out / "trials.csv"
    with trials_path.open("w", newline="") as fh:
        fh.write("trial,n_scan,gamma,detected,metric,est_x,est_y,est_z,"
                 "true_x,true_y,true_z,position_error_m,gated,plot_counts\n")
        for r in result.records:
            counts = "|".join(str(c) for c in r.plot_counts)
            fh.write(
                f"{r.trial},{r.n_scan},{_fmt(r.gamma)},{int(r.detected)},"
                f"{_fmt(r.metric)},{_fmt(r.est_position[0])},{_fmt(r.est_position[1])},"
                f"{_fmt(r.est_position[2])},{_fmt(r.true_position[0])},"
                f"{_fmt(r.true_position[1])},{_fmt(r.true_position[2])},"
                f"{_fmt(r.position_error_m)},{int(r.gated)},{counts}\n"
            )
    paths.append(trials_path)

    manifest = {
        "version": result.version,
        "config": result.config,
        "config_hash": result.config_hash,
        "seed": result.config["seed"],
        "trials": result.trials,
        "se_drops": result.se_drops,
        "gammas": result.gammas,
        "n_scans": result.n_scans,
        "calibration": result.calibration.to_dict(),
        "numerology": numerology(config_from_dict(result.config)),
        "failures": result.failures,
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    paths.append(manifest_path)

    if figures:
        from .figures import render_sweep_figures

        paths.extend(render_sweep_figures(result, out))
    return paths


def load_manifest_config(path) -> ScenarioConfig:
    data = json.loads(Path(path).read_text())
    return config_from_dict(data["config"])
