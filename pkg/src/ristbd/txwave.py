"""Transmit side: channel-matched beamformers, random symbols, and the
per-subcarrier dual-stream transmit vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import ChannelSet


@dataclass(frozen=True)
class BeamformerSet:
    """Unit-norm communication and sensing beamformers per subcarrier."""

    f_c: np.ndarray  # (n_sub, d_tx)
    f_s: np.ndarray  # (n_sub, d_tx)


@dataclass(frozen=True)
class SymbolBlock:
    """One CPI of zero-mean symbols; power split by the sensing fraction."""

    x_c: np.ndarray    # (n_sub, n_sym)
    x_s: np.ndarray    # (n_sub, n_sym)
    gamma: np.ndarray  # (n_sub,)


def _fix_phase(vectors: np.ndarray) -> np.ndarray:
    """Rotate each vector so its first non-negligible entry is real-positive."""
    out = np.array(vectors)
    mags = np.abs(out)
    thresh = 1e-12 * mags.max(axis=-1, keepdims=True)
    first = np.argmax(mags > thresh, axis=-1)
    ref = np.take_along_axis(out, first[..., None], axis=-1)[..., 0]
    rot = np.exp(-1j * np.angle(ref))
    return out * rot[..., None]


def comm_beamformer(h_c: np.ndarray) -> np.ndarray:
    """Matched communication beamformer h/||h|| per subcarrier."""
    norms = np.linalg.norm(h_c, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero user channel vector")
    return h_c / norms


def sensing_beamformer(g_tx: np.ndarray) -> np.ndarray:
    """Dominant right-singular vector of the BS->RIS matrix per subcarrier."""
    if not np.all(np.isfinite(g_tx)):
        raise ValueError("non-finite channel matrix")
    _, s, vh = np.linalg.svd(g_tx)
    if np.any(s[..., 0] == 0):
        raise ValueError("zero forward channel matrix")
    return _fix_phase(vh[..., 0, :].conj())


def matched_beamformers(channels: ChannelSet) -> BeamformerSet:
    return BeamformerSet(f_c=comm_beamformer(channels.h_c), f_s=sensing_beamformer(channels.g_tx))


def _broadcast_gamma(gamma, n_sub: int) -> np.ndarray:
    g = np.broadcast_to(np.asarray(gamma, dtype=float), (n_sub,)).copy()
    if np.any((g < 0) | (g > 1)):
        raise ValueError("gamma must lie in [0, 1]")
    return g


def draw_symbols(rng: np.random.Generator, gamma, n_sub: int, n_sym: int) -> SymbolBlock:
    """I.i.d. circularly-symmetric Gaussian symbols with the configured split."""
    g = _broadcast_gamma(gamma, n_sub)
    shape = (n_sub, n_sym)
    unit = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    unit_s = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    x_c = np.sqrt((1.0 - g) / 2.0)[:, None] * unit
    x_s = np.sqrt(g / 2.0)[:, None] * unit_s
    return SymbolBlock(x_c=x_c, x_s=x_s, gamma=g)


def transmit_signal(beams: BeamformerSet, sym: SymbolBlock, power_w: float) -> np.ndarray:
    """Per-subcarrier transmit vectors, shape (n_sub, n_sym, d_tx)."""
    p = beams.f_c[:, None, :] * sym.x_c[:, :, None] + beams.f_s[:, None, :] * sym.x_s[:, :, None]
    return np.sqrt(power_w) * p
