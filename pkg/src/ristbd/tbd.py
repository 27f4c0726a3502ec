"""Multi-frame track-before-detect: trajectory search over plot-lists,
threshold test, and regression smoothing of the detected track."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detector import COL_AZ, COL_EL, COL_RANGE, COL_STAT, COL_TIME, PlotList
from .errors import CalibrationError
from .scene import PlanarArray, direction_unit_vector


@dataclass(frozen=True)
class Trajectory:
    """Per-scan plot selection (1-based rows, 0 = miss) and its metric."""

    xi: tuple[int, ...]
    metric: float


@dataclass(frozen=True)
class TbdDecision:
    detected: bool
    trajectory: Trajectory | None
    position: np.ndarray | None
    threshold: float


def plot_positions(plots: PlotList, ris: PlanarArray) -> np.ndarray:
    """Cartesian plot positions (n, 3) with the RIS as the spherical origin."""
    if len(plots) == 0:
        return np.empty((0, 3))
    units = direction_unit_vector(ris, plots.rows[:, COL_AZ], plots.rows[:, COL_EL])
    return ris.center + plots.rows[:, COL_RANGE][:, None] * units


def speed_gate(pos_a, time_a: float, pos_b, time_b: float, v_max: float,
               slack: float = 0.15) -> bool:
    """True iff the displacement is reachable at v_max within the slackened gate."""
    dt = time_b - time_a
    if dt <= 0:
        raise ValueError("plot timestamps must be strictly increasing")
    dist = float(np.linalg.norm(np.asarray(pos_b) - np.asarray(pos_a)))
    return dist <= v_max * dt * (1.0 + slack)


def best_trajectory(plot_lists: list[PlotList], ris: PlanarArray, v_max: float,
                    slack: float = 0.15) -> Trajectory | None:
    """Exact maximization of the trajectory metric by dynamic programming.

    States are (scan, plot row); a transition may skip scans (misses), gated
    on the actual elapsed time between the two plots.  Ties in the metric are
    broken towards the lexicographically smallest index vector.  Returns None
    when the current scan has no plots (no candidate trajectory).
    """
    n_scan = len(plot_lists)
    if n_scan == 0 or len(plot_lists[-1]) == 0:
        return None
    positions = [plot_positions(p, ris) for p in plot_lists]

    # values[i][k]: best accumulated metric of a gated trajectory ending at
    # plot k of scan i; prefixes[i][k]: its lexicographically smallest index
    # vector over scans 0..i.
    values: list[np.ndarray] = []
    prefixes: list[list[tuple[int, ...]]] = []
    for i, plots in enumerate(plot_lists):
        n_i = len(plots)
        vals = np.empty(n_i)
        pref: list[tuple[int, ...]] = []
        for k in range(n_i):
            stat = plots.rows[k, COL_STAT]
            best_val = stat
            best_prefix = (0,) * i + (k + 1,)
            for j in range(i):
                for m in range(len(plot_lists[j])):
                    if not speed_gate(positions[j][m], plot_lists[j].rows[m, COL_TIME],
                                      positions[i][k], plots.rows[k, COL_TIME],
                                      v_max, slack):
                        continue
                    cand_val = values[j][m] + stat
                    cand_prefix = prefixes[j][m] + (0,) * (i - j - 1) + (k + 1,)
                    if cand_val > best_val or (cand_val == best_val
                                               and cand_prefix < best_prefix):
                        best_val = cand_val
                        best_prefix = cand_prefix
            vals[k] = best_val
            pref.append(best_prefix)
        values.append(vals)
        prefixes.append(pref)

    final_vals = values[-1]
    best_k = 0
    for k in range(1, len(final_vals)):
        if final_vals[k] > final_vals[best_k] or (
            final_vals[k] == final_vals[best_k]
            and prefixes[-1][k] < prefixes[-1][best_k]
        ):
            best_k = k
    return Trajectory(xi=prefixes[-1][best_k], metric=float(final_vals[best_k]))


def decide(metric: float | None, threshold: float) -> bool:
    """Declare a target iff a candidate exists and its metric reaches the threshold."""
    return metric is not None and metric >= threshold


def calibrate_tbd_threshold(metric_samples: np.ndarray, p_fa: float,
                            min_factor: float = 50.0) -> float:
    """Empirical (1 - p_fa) quantile of the no-target trajectory metrics.

    Trials without a candidate trajectory must be included as zeros.
    """
    samples = np.asarray(metric_samples, dtype=float)
    if samples.size < min_factor / p_fa:
        raise CalibrationError(
            f"{samples.size} super-trials insufficient for p_fa = {p_fa:g}; "
            f"need at least {int(np.ceil(min_factor / p_fa))} "
            "(raise the trial count or use a coarser desk-scale p_fa)"
        )
    return float(np.quantile(samples, 1.0 - p_fa))


def selected_plots(trajectory: Trajectory, plot_lists: list[PlotList],
                   ris: PlanarArray) -> tuple[np.ndarray, np.ndarray]:
    """Cartesian positions and times of the plots selected by a trajectory."""
    pos = []
    times = []
    for i, k in enumerate(trajectory.xi):
        if k == 0:
            continue
        row = plot_lists[i].rows[k - 1]
        pl = PlotList(row[None, :])
        pos.append(plot_positions(pl, ris)[0])
        times.append(row[COL_TIME])
    return np.array(pos), np.array(times)


def smooth_trajectory(positions: np.ndarray, times: np.ndarray, degree: int,
                      eval_time: float | None = None) -> np.ndarray:
    """Least-squares polynomial fit per coordinate, evaluated at `eval_time`
    (default: the last plot time)."""
    positions = np.atleast_2d(positions)
    times = np.asarray(times, dtype=float)
    if len(times) == 0:
        raise ValueError("need at least one plot to smooth")
    if eval_time is None:
        eval_time = float(times[-1])
    if len(times) == 1:
        return positions[0].copy()
    deg = min(degree, len(times) - 1)
    t0 = times.mean()
    out = np.empty(3)
    for c in range(3):
        coeffs = np.polyfit(times - t0, positions[:, c], deg)
        out[c] = np.polyval(coeffs, eval_time - t0)
    return out
