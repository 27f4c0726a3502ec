"""Array geometry, steering vectors, element gains, and line-of-sight channels.

All arrays are planar grids with half-wavelength spacing at the carrier.
Azimuth is measured along the array's in-plane horizontal axis and elevation
along its vertical axis, both relative to boresight, with direction cosines
u = cos(el)sin(az) and v = sin(el).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SPEED_OF_LIGHT, ScenarioConfig


class GeometryError(ValueError):
    """Degenerate geometry (coincident elements, back-hemisphere angles)."""


@dataclass(frozen=True)
class Angles:
    azimuth: float
    elevation: float


@dataclass(frozen=True)
class PlanarArray:
    """Rectangular planar array; elements indexed row-major over (h, v)."""

    center: np.ndarray     # (3,)
    boresight: np.ndarray  # unit (3,)
    h_axis: np.ndarray     # unit (3,), in-plane horizontal
    v_axis: np.ndarray     # unit (3,), in-plane vertical
    n_h: int
    n_v: int
    spacing_m: float

    @property
    def num_elements(self) -> int:
        return self.n_h * self.n_v

    def local_offsets(self) -> np.ndarray:
        """(D, 2) in-plane element coordinates (h, v), centered on the array."""
        ih = np.arange(self.n_h) - (self.n_h - 1) / 2.0
        iv = np.arange(self.n_v) - (self.n_v - 1) / 2.0
        hh, vv = np.meshgrid(ih, iv, indexing="ij")
        return self.spacing_m * np.column_stack([hh.ravel(), vv.ravel()])

    def element_positions(self) -> np.ndarray:
        """(D, 3) global element positions."""
        off = self.local_offsets()
        return self.center + off[:, :1] * self.h_axis + off[:, 1:2] * self.v_axis

    def angles_of(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Azimuth, elevation, and distance of global points seen from the center.

        Raises GeometryError for points outside the front hemisphere.
        """
        return _angles_from(points - self.center, self.boresight, self.h_axis, self.v_axis)


def _angles_from(vecs, boresight, h_axis, v_axis):
    vecs = np.atleast_2d(np.asarray(vecs, dtype=float))
    d = np.linalg.norm(vecs, axis=-1)
    if np.any(d <= 0):
        raise GeometryError("zero distance between element pair")
    x = vecs @ h_axis
    y = vecs @ boresight
    z = vecs @ v_axis
    if np.any(y <= 0):
        raise GeometryError("direction outside front hemisphere")
    az = np.arctan2(x, y)
    el = np.arcsin(np.clip(z / d, -1.0, 1.0))
    return az, el, d


def _frame_axes(boresight: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal and vertical in-plane axes for a given boresight (z kept up)."""
    v_axis = np.array([0.0, 0.0, 1.0])
    h_axis = np.cross(v_axis, boresight)
    h_axis = h_axis / np.linalg.norm(h_axis)
    return h_axis, v_axis


def make_array(center, boresight, n_h, n_v, spacing_m) -> PlanarArray:
    boresight = np.asarray(boresight, dtype=float)
    boresight = boresight / np.linalg.norm(boresight)
    h_axis, v_axis = _frame_axes(boresight)
    return PlanarArray(
        center=np.asarray(center, dtype=float),
        boresight=boresight,
        h_axis=h_axis,
        v_axis=v_axis,
        n_h=int(n_h),
        n_v=int(n_v),
        spacing_m=float(spacing_m),
    )


@dataclass(frozen=True)
class Geometry:
    """All arrays of a scenario plus the user antenna orientation."""

    bs_tx: PlanarArray
    bs_rx: PlanarArray
    ris: PlanarArray
    user_boresight: np.ndarray

    def user_frame_axes(self):
        return _frame_axes(self.user_boresight)


def build_geometry(cfg: ScenarioConfig) -> Geometry:
    spacing = cfg.wavelength_m / 2.0
    bs_tx = make_array(cfg.bs_position, (0.0, -1.0, 0.0), *cfg.tx_shape, spacing)
    bs_rx = make_array(cfg.bs_position, (0.0, -1.0, 0.0), *cfg.rx_shape, spacing)
    ris = make_array(cfg.ris_position, (0.0, 1.0, 0.0), *cfg.ris_shape, spacing)
    return Geometry(bs_tx=bs_tx, bs_rx=bs_rx, ris=ris, user_boresight=np.array([0.0, 1.0, 0.0]))


# -- steering and gains ----------------------------------------------------

def direction_cosines(azimuth, elevation) -> tuple[np.ndarray, np.ndarray]:
    az = np.asarray(azimuth, dtype=float)
    el = np.asarray(elevation, dtype=float)
    return np.cos(el) * np.sin(az), np.sin(el)


def steering_vector(array: PlanarArray, angles: Angles, freq_hz) -> np.ndarray:
    """Unit-modulus steering vector(s) of a planar array towards `angles`.

    `freq_hz` may be a scalar or an array; the result has shape
    (..., num_elements) with one leading axis per frequency axis.
    """
    u, v = direction_cosines(angles.azimuth, angles.elevation)
    off = array.local_offsets()  # (D, 2)
    proj = off[:, 0] * u + off[:, 1] * v  # (D,)
    f = np.asarray(freq_hz, dtype=float)
    phase = 2.0 * np.pi * np.multiply.outer(f / SPEED_OF_LIGHT, proj)
    return np.exp(1j * phase)


def direction_unit_vector(array: PlanarArray, azimuth, elevation) -> np.ndarray:
    """Global unit vector(s) for angles given in the array's frame."""
    az = np.asarray(azimuth, dtype=float)
    el = np.asarray(elevation, dtype=float)
    u = np.cos(el) * np.sin(az)
    w = np.cos(el) * np.cos(az)
    v = np.sin(el)
    return (
        np.multiply.outer(u, array.h_axis)
        + np.multiply.outer(w, array.boresight)
        + np.multiply.outer(v, array.v_axis)
    )


def element_gain(angles: Angles) -> float:
    """Cosine-taper element power gain pi*cos(az)*cos(el), front hemisphere only."""
    return _gain(angles.azimuth, angles.elevation)


def _gain(az, el):
    az = np.asarray(az, dtype=float)
    el = np.asarray(el, dtype=float)
    if np.any(np.abs(az) > np.pi / 2) or np.any(np.abs(el) > np.pi / 2):
        raise GeometryError("gain undefined outside the front hemisphere")
    g = np.pi * np.cos(az) * np.cos(el)
    return np.maximum(g, 0.0)


# -- channels ---------------------------------------------------------------

@dataclass(frozen=True)
class ChannelSet:
    """Per-subcarrier LoS channels: BS->RIS, RIS->BS, and BS->user."""

    g_tx: np.ndarray   # (n_sub, d_ris, d_tx)
    g_rx: np.ndarray   # (n_sub, d_rx, d_ris)
    h_c: np.ndarray    # (n_sub, d_tx)
    freqs: np.ndarray  # (n_sub,)


def _pairwise_los(dep_array: PlanarArray, arr_array: PlanarArray, freqs: np.ndarray) -> np.ndarray:
    """LoS matrix between every element pair, shape (n_sub, D_arr, D_dep).

    Entry (q, i, j): departure from element j of `dep_array`, arrival at
    element i of `arr_array`, exact per-pair distance and angles.
    """
    dep_pos = dep_array.element_positions()  # (Dd, 3)
    arr_pos = arr_array.element_positions()  # (Da, 3)
    diff = arr_pos[:, None, :] - dep_pos[None, :, :]  # (Da, Dd, 3)
    dist = np.linalg.norm(diff, axis=-1)
    if np.any(dist <= 0):
        raise GeometryError("coincident elements between arrays")
    az_dep, el_dep, _ = _angles_from(
        diff.reshape(-1, 3), dep_array.boresight, dep_array.h_axis, dep_array.v_axis
    )
    az_arr, el_arr, _ = _angles_from(
        -diff.reshape(-1, 3), arr_array.boresight, arr_array.h_axis, arr_array.v_axis
    )
    gains = (_gain(az_dep, el_dep) * _gain(az_arr, el_arr)).reshape(dist.shape)
    amp = np.sqrt(gains) * SPEED_OF_LIGHT / (4.0 * np.pi * dist[None] * freqs[:, None, None])
    phase = np.exp(-2j * np.pi * dist[None] * freqs[:, None, None] / SPEED_OF_LIGHT)
    return amp * phase


def user_channel(geom: Geometry, user_position, freqs: np.ndarray) -> np.ndarray:
    """BS->user LoS channel per subcarrier, far-field, shape (n_sub, d_tx)."""
    user_position = np.asarray(user_position, dtype=float)
    az_dep, el_dep, d = geom.bs_tx.angles_of(user_position[None, :])
    h_axis, v_axis = geom.user_frame_axes()
    az_arr, el_arr, _ = _angles_from(
        (geom.bs_tx.center - user_position)[None, :], geom.user_boresight, h_axis, v_axis
    )
    gain = _gain(az_dep, el_dep)[0] * _gain(az_arr, el_arr)[0]
    d = d[0]
    amp = np.sqrt(gain) * SPEED_OF_LIGHT / (4.0 * np.pi * d * freqs)
    phase = np.exp(-2j * np.pi * d * freqs / SPEED_OF_LIGHT)
    steer = steering_vector(geom.bs_tx, Angles(az_dep[0], el_dep[0]), freqs)
    return (amp * phase)[:, None] * steer


def build_channels(cfg: ScenarioConfig, user_position, geom: Geometry | None = None) -> ChannelSet:
    """All channel matrices for one scenario instance and one user position."""
    if geom is None:
        geom = build_geometry(cfg)
    freqs = cfg.subcarrier_frequencies()
    g_tx = _pairwise_los(geom.bs_tx, geom.ris, freqs)
    g_rx = _pairwise_los(geom.ris, geom.bs_rx, freqs)
    h_c = user_channel(geom, user_position, freqs)
    return ChannelSet(g_tx=g_tx, g_rx=g_rx, h_c=h_c, freqs=freqs)


def drop_user(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """Uniform user position inside the configured cuboid."""
    lo = np.array([cfg.user_x[0], cfg.user_y[0], cfg.user_z[0]])
    hi = np.array([cfg.user_x[1], cfg.user_y[1], cfg.user_z[1]])
    return rng.uniform(lo, hi)
