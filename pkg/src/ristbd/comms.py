"""Downlink user performance: per-subcarrier SINR and spectral efficiency."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ScenarioConfig
from .scene import ChannelSet
from .txwave import BeamformerSet

SE_PERCENTILES = (5, 25, 50, 75, 95)


@dataclass(frozen=True)
class CommReport:
    sinr: np.ndarray        # (n_sub,) linear
    se_bit_per_hz: float
    gamma: float
    user_position: np.ndarray


def user_sinr(channels: ChannelSet, beams: BeamformerSet, gamma,
              power_w: float, noise_var_w: float) -> np.ndarray:
    """Per-subcarrier SINR with the sensing stream treated as interference."""
    g = np.broadcast_to(np.asarray(gamma, dtype=float), (channels.h_c.shape[0],))
    sig = np.abs(np.einsum("qd,qd->q", np.conj(channels.h_c), beams.f_c)) ** 2
    leak = np.abs(np.einsum("qd,qd->q", np.conj(channels.h_c), beams.f_s)) ** 2
    return (1.0 - g) * sig / (g * leak + noise_var_w / power_w)


def spectral_efficiency(sinr: np.ndarray, cfg: ScenarioConfig) -> float:
    """Achievable rate per occupied bandwidth under Gaussian signaling."""
    total = np.sum(np.log2(1.0 + np.asarray(sinr, dtype=float)))
    return float(total / (cfg.symbol_duration_s * cfg.n_sub * cfg.subcarrier_spacing_hz))


def comm_report(cfg: ScenarioConfig, channels: ChannelSet, beams: BeamformerSet,
                gamma: float, user_position) -> CommReport:
    sinr = user_sinr(channels, beams, gamma, cfg.power_per_subcarrier_w,
                     cfg.noise_var_comm_w)
    return CommReport(sinr=sinr, se_bit_per_hz=spectral_efficiency(sinr, cfg),
                      gamma=float(gamma), user_position=np.asarray(user_position))


def se_percentiles(se_values: np.ndarray, percentiles=SE_PERCENTILES) -> dict[int, float]:
    """Order-statistic percentiles with linear interpolation."""
    values = np.asarray(se_values, dtype=float)
    return {int(p): float(np.percentile(values, p)) for p in percentiles}
