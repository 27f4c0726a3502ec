import numpy as np
import pytest

from conftest import rng_for
from ristbd import scene
from ristbd.config import SPEED_OF_LIGHT, ScenarioConfig
from ristbd.scene import Angles, GeometryError


def test_steering_broadside_all_ones(geometry, cfg):
    for f in (cfg.carrier_hz, 2.9e9, 4.1e9):
        v = scene.steering_vector(geometry.ris, Angles(0.0, 0.0), f)
        assert np.allclose(v, 1.0)


def test_steering_unit_modulus_and_norm(geometry, cfg):
    rng = rng_for("steer-unit")
    for _ in range(50):
        ang = Angles(rng.uniform(-1.4, 1.4), rng.uniform(-1.4, 1.4))
        f = rng.uniform(2e9, 5e9)
        v = scene.steering_vector(geometry.ris, ang, f)
        assert np.allclose(np.abs(v), 1.0)
        assert np.isclose(np.sum(np.abs(v) ** 2), geometry.ris.num_elements)


def test_steering_two_element_phase_difference(cfg):
    # Half-wavelength pair at 30 deg azimuth: inter-element phase is
    # 2*pi*(d/lambda)*sin(30deg) = pi/2.
    arr = scene.make_array((0, 0, 0), (0, 1, 0), 2, 1, cfg.wavelength_m / 2)
    v = scene.steering_vector(arr, Angles(np.radians(30.0), 0.0), cfg.carrier_hz)
    dphi = np.angle(v[1] / v[0])
    assert np.isclose(dphi, np.pi / 2, atol=1e-12)


def test_element_gain_values():
    assert np.isclose(scene.element_gain(Angles(0.0, 0.0)), np.pi)
    assert np.isclose(scene.element_gain(Angles(np.pi / 2, 0.0)), 0.0)
    assert np.isclose(scene.element_gain(Angles(np.pi / 3, 0.0)), np.pi / 2)


def test_element_gain_rejects_back_hemisphere():
    with pytest.raises(GeometryError):
        scene.element_gain(Angles(np.pi / 2 + 0.1, 0.0))


def test_channel_entry_magnitude_formula(cfg, geometry, channels):
    # Spot-check the free-space construction for a sampled element pair.
    rng = rng_for("entry-mag")
    tx_pos = geometry.bs_tx.element_positions()
    ris_pos = geometry.ris.element_positions()
    for _ in range(10):
        q = rng.integers(cfg.n_sub)
        i = rng.integers(cfg.d_ris)
        j = rng.integers(cfg.d_tx)
        vec = ris_pos[i] - tx_pos[j]
        d = np.linalg.norm(vec)
        az_d, el_d, _ = scene._angles_from(vec[None], geometry.bs_tx.boresight,
                                           geometry.bs_tx.h_axis, geometry.bs_tx.v_axis)
        az_a, el_a, _ = scene._angles_from(-vec[None], geometry.ris.boresight,
                                           geometry.ris.h_axis, geometry.ris.v_axis)
        g = scene._gain(az_d, el_d)[0] * scene._gain(az_a, el_a)[0]
        f = channels.freqs[q]
        expected = np.sqrt(g) * SPEED_OF_LIGHT / (4 * np.pi * d * f)
        assert np.isclose(np.abs(channels.g_tx[q, i, j]), expected, rtol=1e-12)


def test_inverse_square_law(cfg):
    # Two single-element panels facing each other: doubling the separation
    # quarters the entry power.
    freqs = np.array([cfg.carrier_hz])
    a = scene.make_array((0, 0, 0), (0, 1, 0), 1, 1, cfg.wavelength_m / 2)
    b1 = scene.make_array((0, 5, 0), (0, -1, 0), 1, 1, cfg.wavelength_m / 2)
    b2 = scene.make_array((0, 10, 0), (0, -1, 0), 1, 1, cfg.wavelength_m / 2)
    e1 = scene._pairwise_los(a, b1, freqs)[0, 0, 0]
    e2 = scene._pairwise_los(a, b2, freqs)[0, 0, 0]
    assert np.isclose(np.abs(e1) ** 2 / np.abs(e2) ** 2, 4.0, rtol=1e-12)


def test_bs_ris_center_distance(cfg, geometry):
    d = np.linalg.norm(geometry.bs_tx.center - geometry.ris.center)
    assert np.isclose(d, np.hypot(1.5, 1.5), rtol=1e-12)
    assert np.isclose(d, 2.1213, atol=5e-4)


def test_channel_reciprocity(cfg, channels):
    # Swapping departure/arrival roles preserves entry magnitudes: the
    # forward BS->RIS and return RIS->BS matrices are transposes in magnitude
    # because the tx and rx panels share the same geometry.
    assert np.allclose(np.abs(channels.g_rx), np.abs(np.swapaxes(channels.g_tx, 1, 2)))


def test_channels_finite_nonzero(channels):
    for arr in (channels.g_tx, channels.g_rx, channels.h_c):
        assert np.all(np.isfinite(arr))
        assert np.all(np.abs(arr) > 0)
    assert np.all(np.diff(channels.freqs) > 0)
    assert np.allclose(np.diff(channels.freqs), 720e3)


def test_channel_build_is_pure(cfg, geometry):
    user = np.array([25.0, -33.0, 1.8])
    a = scene.build_channels(cfg, user, geometry)
    b = scene.build_channels(cfg, user, geometry)
    assert np.array_equal(a.g_tx, b.g_tx)
    assert np.array_equal(a.g_rx, b.g_rx)
    assert np.array_equal(a.h_c, b.h_c)


def test_degenerate_geometry_rejected(cfg):
    bad = ScenarioConfig(ris_position=cfg.bs_position)
    with pytest.raises(GeometryError):
        scene.build_channels(bad, np.array([30.0, -30.0, 1.75]))


def test_drop_user_bounds_and_mean(cfg):
    rng = rng_for("drop-user")
    draws = np.array([scene.drop_user(cfg, rng) for _ in range(100_000)])
    assert np.all(draws[:, 0] >= 20) and np.all(draws[:, 0] <= 40)
    assert np.all(draws[:, 1] >= -40) and np.all(draws[:, 1] <= -20)
    assert np.all(draws[:, 2] >= 1.5) and np.all(draws[:, 2] <= 2.0)
    mean = draws.mean(axis=0)
    expected = np.array([30.0, -30.0, 1.75])
    assert np.all(np.abs(mean - expected) <= 0.005 * np.abs(expected))


def test_drop_user_deterministic(cfg):
    a = scene.drop_user(cfg, np.random.default_rng(42))
    b = scene.drop_user(cfg, np.random.default_rng(42))
    assert np.array_equal(a, b)
