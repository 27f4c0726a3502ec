"""Multi-peak detection on statistic cubes and plot-list formation.

A plot is a strict local maximum of a direction slice over its 8-connected
delay-Doppler neighborhood whose statistic reaches the plot threshold.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .config import ScenarioConfig
from .errors import CalibrationError
from .radar_rx import ScanCube

# Plot-list columns, mirroring the 5-column wire format.
COL_STAT, COL_RANGE, COL_AZ, COL_EL, COL_TIME = range(5)
CSV_HEADER = "statistic,range_m,az_rad,el_rad,time_s"


@dataclass(frozen=True)
class Plot:
    statistic: float
    range_m: float
    azimuth: float
    elevation: float
    time_s: float

    def as_row(self) -> np.ndarray:
        return np.array([self.statistic, self.range_m, self.azimuth,
                         self.elevation, self.time_s])


class PlotList:
    """Plots of one scan as a (n, 5) matrix, sorted by descending statistic."""

    def __init__(self, rows: np.ndarray | None = None):
        if rows is None or len(rows) == 0:
            self.rows = np.empty((0, 5))
        else:
            rows = np.atleast_2d(np.asarray(rows, dtype=float))
            order = np.lexsort((rows[:, COL_RANGE], rows[:, COL_TIME], -rows[:, COL_STAT]))
            self.rows = rows[order]

    def __len__(self) -> int:
        return self.rows.shape[0]

    def __iter__(self):
        for row in self.rows:
            yield Plot(*row)

    @property
    def statistics(self) -> np.ndarray:
        return self.rows[:, COL_STAT]

    @property
    def times(self) -> np.ndarray:
        return self.rows[:, COL_TIME]


def _local_max_mask(a: np.ndarray) -> np.ndarray:
    """Strict local maxima over the 8-connected neighborhood (edges padded -inf)."""
    padded = np.full((a.shape[0] + 2, a.shape[1] + 2), -np.inf)
    padded[1:-1, 1:-1] = a
    mask = np.ones(a.shape, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            mask &= a > padded[1 + di:1 + di + a.shape[0], 1 + dj:1 + dj + a.shape[1]]
    return mask


def peak_values(cube: ScanCube) -> np.ndarray:
    """Statistics of every local maximum in the cube (no threshold applied)."""
    out = []
    for i in range(cube.stats.shape[0]):
        a = cube.stats[i]
        out.append(a[_local_max_mask(a)])
    return np.concatenate(out) if out else np.empty(0)


def _interp_range(a: np.ndarray, j: int, d: int, ranges: np.ndarray) -> float:
    """3-point parabolic refinement of the peak range along the delay axis."""
    if j == 0 or j == a.shape[0] - 1:
        return float(ranges[j])
    y1, y2, y3 = a[j - 1, d], a[j, d], a[j + 1, d]
    denom = y1 - 2.0 * y2 + y3
    if denom == 0:
        return float(ranges[j])
    offset = np.clip(0.5 * (y1 - y3) / denom, -0.5, 0.5)
    return float(ranges[j] + offset * (ranges[1] - ranges[0]))


def extract_plots(cube: ScanCube, threshold: float, cfg: ScenarioConfig) -> PlotList:
    """All thresholded peaks of a scan, one plot per (direction, delay) cell."""
    ranges = cfg.range_grid()
    rows = []
    for i in range(cfg.n_dir):
        a = cube.stats[i]
        az, el = cfg.directions_rad[i]
        t = cube.timestamps[i]
        jj, dd = np.nonzero(_local_max_mask(a) & (a >= threshold))
        best_at_delay: dict[int, tuple[float, int]] = {}
        for j, d in zip(jj, dd):
            value = a[j, d]
            if j not in best_at_delay or value > best_at_delay[j][0]:
                best_at_delay[j] = (value, d)
        for j, (value, d) in best_at_delay.items():
            if cfg.parabolic_range_interp:
                rng_m = _interp_range(a, j, d, ranges)
            else:
                rng_m = float(ranges[j])
            rows.append([value, rng_m, az, el, t])
    return PlotList(np.array(rows) if rows else None)


@dataclass(frozen=True)
class PlotCalibration:
    threshold: float
    achieved_rate: float
    rate_ci95: float
    n_scans: int


def threshold_seed(cfg: ScenarioConfig, target_rate: float) -> float:
    """Order-statistics first guess from the per-bin exponential tail."""
    n_bins = cfg.n_delay * cfg.n_doppler
    return cfg.n_sub * cfg.n_sym * np.log(n_bins * cfg.n_dir / target_rate)


def calibrate_plot_threshold(cfg: ScenarioConfig, peaks_per_scan: list[np.ndarray],
                             target_rate: float | None = None,
                             rel_tol: float = 0.02) -> PlotCalibration:
    """Bisect the plot threshold against cached peak statistics from H0 scans.

    `peaks_per_scan` holds the local-maximum values of each simulated scan;
    the plot rate at a threshold is the mean number of peaks at or above it.
    """
    if target_rate is None:
        target_rate = cfg.plot_rate_target
    n_scans = len(peaks_per_scan)
    if n_scans < 1:
        raise CalibrationError("no H0 scans supplied")
    pooled = np.concatenate([np.asarray(p, dtype=float) for p in peaks_per_scan])
    if pooled.size == 0:
        raise CalibrationError("H0 scans produced no peaks")

    def rate(eta: float) -> float:
        return float(np.count_nonzero(pooled >= eta)) / n_scans

    lo = threshold_seed(cfg, target_rate) / 8.0
    hi = lo * 64.0
    for _ in range(8):
        if rate(lo) >= target_rate:
            break
        lo /= 4.0
    for _ in range(8):
        if rate(hi) <= target_rate:
            break
        hi *= 4.0
    if rate(lo) < target_rate or rate(hi) > target_rate:
        raise CalibrationError(
            f"threshold search interval does not bracket the target rate "
            f"(rate({lo:.3g}) = {rate(lo):.3g}, rate({hi:.3g}) = {rate(hi):.3g})"
        )
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if rate(mid) >= target_rate:
            lo = mid
        else:
            hi = mid
        if abs(rate(mid) - target_rate) <= rel_tol * target_rate:
            break
    eta = 0.5 * (lo + hi)
    achieved = min((rate(lo), lo), (rate(hi), hi), key=lambda t: abs(t[0] - target_rate))
    eta = achieved[1]
    if abs(achieved[0] - target_rate) > rel_tol * target_rate:
        raise CalibrationError(
            f"calibrated rate {achieved[0]:.3f} misses target {target_rate} "
            f"beyond {rel_tol:.0%}; increase the number of H0 scans"
        )
    counts = np.array([np.count_nonzero(np.asarray(p) >= eta) for p in peaks_per_scan],
                      dtype=float)
    ci = 1.96 * counts.std(ddof=1) / np.sqrt(n_scans) if n_scans > 1 else np.inf
    return PlotCalibration(threshold=float(eta), achieved_rate=float(counts.mean()),
                           rate_ci95=float(ci), n_scans=n_scans)


# -- CSV wire format -----------------------------------------------------------

def plotlist_to_csv(plots: PlotList) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for row in plots.rows:
        buf.write(",".join(repr(float(x)) for x in row) + "\n")
    return buf.getvalue()


def plotlist_from_csv(text: str) -> PlotList:
    lines = [ln for ln in text.strip().splitlines() if ln]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError("missing plot-list CSV header")
    rows = [[float(x) for x in ln.split(",")] for ln in lines[1:]]
    return PlotList(np.array(rows) if rows else None)
