import numpy as np
import pytest

from conftest import rng_for
from ristbd import harness, scene, txwave
from ristbd.config import SPEED_OF_LIGHT
from ristbd.errors import CalibrationError
from ristbd.radar_rx import (CorrelatorBank, TargetState, calibrate_rcs,
                             correlator, cpi_slice, h0_cube_fast, load_cube,
                             phase_ramps, reference_placement, save_cube,
                             synthesize_rx, target_params)
from ristbd.ris_opt import beampattern
from ristbd.scene import direction_unit_vector
from ristbd.txwave import SymbolBlock, transmit_signal


def _on_grid_target(cfg, geometry, dir_idx, delay_idx, dopp_idx, amplitude=1e-6 + 0j):
    """Target whose state at the CPI of `dir_idx` sits exactly on the grid."""
    az, el = cfg.directions_rad[dir_idx]
    unit = direction_unit_vector(geometry.ris, az, el)
    r = cfg.range_grid()[delay_idx]
    nu = cfg.doppler_grid()[dopp_idx]
    rdot = nu * SPEED_OF_LIGHT / (2.0 * cfg.carrier_hz)
    velocity = rdot * unit  # radial: angles stay on the pointing ray
    t_cpi = cfg.illumination_time(0, dir_idx)
    position = geometry.ris.center + r * unit - velocity * t_cpi
    return TargetState(position=position, velocity=velocity, amplitude=amplitude), t_cpi


def _const_modulus_block(rng, cfg, n_sym=None):
    n_sym = cfg.n_sym if n_sym is None else n_sym
    phases = rng.uniform(0, 2 * np.pi, (cfg.n_sub, n_sym))
    return SymbolBlock(x_c=np.zeros((cfg.n_sub, n_sym), complex),
                       x_s=np.exp(1j * phases), gamma=np.ones(cfg.n_sub))


def test_target_kinematics_mapping(cfg, workspace):
    # Delay is the round trip 2d/c; Doppler is 2*(range rate)*f_o/c.
    geom = workspace.geom
    unit = direction_unit_vector(geom.ris, 0.1, 0.2)
    d = 140.0
    pos = geom.ris.center + d * unit
    v_radial = 25.0
    angles, dist, delay, doppler = target_params(geom.ris, pos, v_radial * unit,
                                                 cfg.carrier_hz)
    assert np.isclose(dist, d)
    assert np.isclose(angles.azimuth, 0.1) and np.isclose(angles.elevation, 0.2)
    assert np.isclose(delay, 2 * d / SPEED_OF_LIGHT)
    assert np.isclose(doppler, 2 * v_radial * cfg.carrier_hz / SPEED_OF_LIGHT)
    # A tangential component leaves the Doppler unchanged.
    tangent = np.cross(unit, geom.ris.v_axis)
    tangent /= np.linalg.norm(tangent)
    _, _, _, doppler2 = target_params(geom.ris, pos, v_radial * unit + 30 * tangent,
                                      cfg.carrier_hz)
    assert np.isclose(doppler2, doppler)


# -- amplitude calibration ------------------------------------------------------


def test_rcs_reproduces_nominal_snr(cfg, workspace):
    _, ref_angles, ref_range = reference_placement(cfg)
    var = workspace.rcs.amplitude_variance(ref_angles, ref_range)
    bp = beampattern(workspace.profiles[1.0][(cfg.n_dir - 1) // 2].omega, ref_angles,
                     workspace.channels, workspace.nominal_beams, 1.0, workspace.geom.ris)
    snr = cfg.n_sym * cfg.power_per_subcarrier_w * bp * var / cfg.noise_var_sense_w
    assert abs(10 * np.log10(snr) - cfg.nominal_snr_db) < 0.01


def test_rcs_distance_scaling(cfg, workspace):
    # Doubling the reference range (midpoint of the inspected interval)
    # multiplies the required cross-section by 2^4.
    ref_idx = (cfg.n_dir - 1) // 2
    base = workspace.rcs.rcs_m2
    far = cfg.replace(range_min_m=10.0, range_max_m=410.0)
    rcs_far = calibrate_rcs(far, workspace.channels, workspace.nominal_beams,
                            workspace.geom.ris, workspace.profiles[1.0][ref_idx])
    assert np.isclose(rcs_far.rcs_m2 / base, 16.0, rtol=1e-9)


def test_rcs_inverts_snr_equation(cfg, workspace):
    _, ref_angles, ref_range = reference_placement(cfg)
    ref_idx = (cfg.n_dir - 1) // 2
    bp = beampattern(workspace.profiles[1.0][ref_idx].omega, ref_angles,
                     workspace.channels, workspace.nominal_beams, 1.0,
                     workspace.geom.ris)
    expected = cfg.noise_var_sense_w * 10 ** (cfg.nominal_snr_db / 10) / (
        cfg.n_sym * cfg.power_per_subcarrier_w * bp)
    assert np.isclose(workspace.rcs.amplitude_variance(ref_angles, ref_range),
                      expected, rtol=1e-12)


def test_rcs_degenerate_beampattern_rejected(cfg, workspace):
    ref_idx = (cfg.n_dir - 1) // 2
    profile = workspace.profiles[1.0][ref_idx]
    zero_channels = scene.ChannelSet(
        g_tx=np.zeros_like(workspace.channels.g_tx),
        g_rx=np.zeros_like(workspace.channels.g_rx),
        h_c=np.ones_like(workspace.channels.h_c),
        freqs=workspace.channels.freqs,
    )
    with pytest.raises(CalibrationError):
        calibrate_rcs(cfg, zero_channels, workspace.nominal_beams,
                      workspace.geom.ris, profile)


# -- received signal -------------------------------------------------------------


def test_synthesize_h0_zero_noise_is_zero(cfg, workspace, beams):
    rng = rng_for("h0-zero")
    sym = txwave.draw_symbols(rng, 0.5, cfg.n_sub, cfg.n_sym)
    p = transmit_signal(beams, sym, cfg.power_per_subcarrier_w)
    y = synthesize_rx(cfg, workspace.bank(1.0), 0, p, rng, None, noise_var=0.0)
    assert np.all(y == 0)


def test_synthesize_matches_direct_cascade(cfg, workspace, beams):
    # Noiseless echo must equal the explicit matrix-product model with the
    # delay/Doppler phase ramps.
    rng = rng_for("direct-cascade")
    bank = workspace.bank(1.0)
    geom = workspace.geom
    target, t_cpi = _on_grid_target(cfg, geom, 1, 20, 6, amplitude=2e-6 - 1e-6j)
    sym = txwave.draw_symbols(rng, 1.0, cfg.n_sub, cfg.n_sym)
    p = transmit_signal(beams, sym, cfg.power_per_subcarrier_w)
    y = synthesize_rx(cfg, bank, 1, p, rng, target, time_s=t_cpi, noise_var=0.0)

    omega = workspace.profiles[1.0][1].omega
    angles, _, delay, doppler = target_params(geom.ris, target.at(t_cpi),
                                              target.velocity, cfg.carrier_hz)
    ramp_q, ramp_n = phase_ramps(cfg, delay, doppler)
    for q in (0, 13, cfg.n_sub - 1):
        t = scene.steering_vector(geom.ris, angles, cfg.subcarrier_frequencies()[q])
        cascade = np.outer(workspace.channels.g_rx[q] @ (omega * t),
                           (omega * t) @ workspace.channels.g_tx[q])
        for n in (0, 31, cfg.n_sym - 1):
            expected = (target.amplitude * ramp_q[q] * ramp_n[n] * cascade @ p[q, n])
            assert np.allclose(y[q, n], expected, rtol=1e-10)


def test_h0_per_bin_noise_power(cfg, workspace, beams):
    rng = rng_for("noise-power")
    bank = workspace.bank(1.0)
    sym = txwave.draw_symbols(rng, 0.5, cfg.n_sub, cfg.n_sym)
    p = transmit_signal(beams, sym, cfg.power_per_subcarrier_w)
    total, count = 0.0, 0
    for _ in range(50):
        y = synthesize_rx(cfg, bank, 0, p, rng, None)
        total += np.sum(np.abs(y) ** 2)
        count += cfg.n_sub * cfg.n_sym
    mean = total / count
    expected = cfg.d_rx * cfg.noise_var_sense_w
    assert abs(mean - expected) <= 0.01 * expected


# -- correlator -------------------------------------------------------------------


def test_correlator_unit_norm(cfg, workspace, beams):
    rng = rng_for("corr-norm")
    sym = txwave.draw_symbols(rng, 0.3, cfg.n_sub, cfg.n_sym)
    p = transmit_signal(beams, sym, cfg.power_per_subcarrier_w)
    bank = workspace.bank(1.0)
    for _ in range(20):
        q = rng.integers(cfg.n_sub)
        n = rng.integers(cfg.n_sym)
        u = correlator(cfg, bank, 2, 10, 4, int(q), int(n), p[q, n])
        assert np.isclose(np.linalg.norm(u), 1.0, atol=1e-12)


def test_correlator_zero_symbol_skipped(cfg, workspace):
    bank = workspace.bank(1.0)
    u = correlator(cfg, bank, 0, 0, 0, 0, 0, np.zeros(cfg.d_tx, complex))
    assert np.all(u == 0)


def test_matched_terms_share_amplitude_phase(cfg, workspace, beams):
    # On-grid noiseless target: every correlator term carries arg(alpha).
    rng = rng_for("matched-phase")
    bank = workspace.bank(1.0)
    dir_idx, j, d = 2, 30, 4
    target, t_cpi = _on_grid_target(cfg, workspace.geom, dir_idx, j, d,
                                    amplitude=3e-6 * np.exp(0.7j))
    sym = txwave.draw_symbols(rng, 1.0, cfg.n_sub, cfg.n_sym)
    p = transmit_signal(beams, sym, cfg.power_per_subcarrier_w)
    y = synthesize_rx(cfg, bank, dir_idx, p, rng, target, time_s=t_cpi, noise_var=0.0)
    for q in (0, 9, 31):
        for n in (0, 40):
            u = correlator(cfg, bank, dir_idx, j, d, q, n, p[q, n])
            term = np.vdot(u, y[q, n])
            assert np.isclose(np.angle(term), 0.7, atol=1e-8)


def test_doppler_mismatch_follows_dirichlet_rolloff(cfg, workspace):
    # Closed-form oracle: an n-term coherent sum mismatched by delta_nu
    # rolls off by |sin(pi delta N T) / (N sin(pi delta T))|.
    rng = rng_for("dirichlet")
    bank = workspace.bank(1.0)
    dir_idx, j, d = 3, 25, 4
    target, t_cpi = _on_grid_target(cfg, workspace.geom, dir_idx, j, d)
    sym = _const_modulus_block(rng, cfg)
    p = transmit_signal(workspace.nominal_beams, sym, cfg.power_per_subcarrier_w)
    y = synthesize_rx(cfg, bank, dir_idx, p, rng, target, time_s=t_cpi, noise_var=0.0)
    stats = cpi_slice(bank, dir_idx, y, p, cfg.noise_var_sense_w)
    delta = cfg.doppler_grid()[d + 1] - cfg.doppler_grid()[d]
    t_sym = cfg.symbol_duration_s
    n = cfg.n_sym
    oracle = abs(np.sin(np.pi * delta * n * t_sym)
                 / (n * np.sin(np.pi * delta * t_sym)))
    measured = np.sqrt(stats[j, d + 1] / stats[j, d])
    assert np.isclose(measured, oracle, rtol=1e-9)


def test_statistic_cube_matches_explicit_correlator_sum(cfg, workspace, beams):
    rng = rng_for("cube-vs-direct")
    bank = workspace.bank(1.0)
    sym = txwave.draw_symbols(rng, 0.4, cfg.n_sub, cfg.n_sym)
    p = transmit_signal(beams, sym, cfg.power_per_subcarrier_w)
    y = synthesize_rx(cfg, bank, 0, p, rng, None)
    stats = cpi_slice(bank, 0, y, p, cfg.noise_var_sense_w)
    for (j, d) in ((0, 0), (17, 5)):
        acc = 0.0 + 0.0j
        for q in range(cfg.n_sub):
            for n in range(cfg.n_sym):
                u = correlator(cfg, bank, 0, j, d, q, n, p[q, n])
                acc += np.vdot(u, y[q, n])
        direct = np.abs(acc) ** 2 / cfg.noise_var_sense_w
        assert np.isclose(stats[j, d], direct, rtol=1e-9)


# -- cube law and invariances -------------------------------------------------------


def test_h0_normalized_statistic_is_unit_exponential(cfg, workspace):
    rng = rng_for("h0-law")
    vals = []
    for k in range(60):
        cube = h0_cube_fast(workspace.bank(1.0), 0, rng)
        vals.append(cube.stats.ravel())
    v = np.concatenate(vals) / (cfg.n_sub * cfg.n_sym)
    assert abs(v.mean() - 1.0) <= 0.02
    from scipy.stats import kstest

    stat = kstest(v, "expon").statistic
    assert stat < 0.015


def test_fast_and_full_h0_paths_agree_in_law(cfg, workspace):
    # Quantiles of the normalized statistic from the synthesized chain match
    # the direct correlator-input sampler.
    full = np.concatenate([
        harness.h0_scan_cube(workspace, 0, rng_for(f"full-{k}"), fast=False).stats.ravel()
        for k in range(12)
    ]) / (cfg.n_sub * cfg.n_sym)
    fast = np.concatenate([
        harness.h0_scan_cube(workspace, 0, rng_for(f"fast-{k}"), fast=True).stats.ravel()
        for k in range(12)
    ]) / (cfg.n_sub * cfg.n_sym)
    for q in (0.25, 0.5, 0.9, 0.99):
        a, b = np.quantile(full, q), np.quantile(fast, q)
        assert abs(a - b) <= 0.08 * max(a, b)


def test_cube_scale_invariance(cfg, workspace, beams):
    rng = rng_for("scale-inv")
    bank = workspace.bank(1.0)
    sym = txwave.draw_symbols(rng, 0.6, cfg.n_sub, cfg.n_sym)
    p = transmit_signal(beams, sym, cfg.power_per_subcarrier_w)
    y = synthesize_rx(cfg, bank, 0, p, rng, None)
    base = cpi_slice(bank, 0, y, p, cfg.noise_var_sense_w)
    c = 3.7 - 1.2j
    scaled = cpi_slice(bank, 0, c * y, p, abs(c) ** 2 * cfg.noise_var_sense_w)
    assert np.allclose(scaled, base, rtol=1e-12)


def test_peak_grows_linearly_with_cpi_length(cfg, workspace):
    # Coherent integration: the noise-normalized peak doubles with n_sym.
    rng = rng_for("nsym-growth")
    geom = workspace.geom
    dir_idx, j, d_mid = 0, 12, cfg.n_doppler // 2  # zero Doppler stays on-grid
    peaks = {}
    for n_sym in (16, 32, 64):
        sub = cfg.replace(n_sym=n_sym)
        bank = CorrelatorBank(sub, workspace.channels, workspace.profiles[1.0],
                              geom.ris)
        target, t_cpi = _on_grid_target(sub, geom, dir_idx, j, d_mid)
        sym = _const_modulus_block(rng, sub)
        p = transmit_signal(workspace.nominal_beams, sym, sub.power_per_subcarrier_w)
        y = synthesize_rx(sub, bank, dir_idx, p, rng, target, time_s=t_cpi,
                          noise_var=0.0)
        stats = cpi_slice(bank, dir_idx, y, p, sub.noise_var_sense_w)
        peaks[n_sym] = stats[j, d_mid] / (sub.n_sub * n_sym)
    assert np.isclose(peaks[32] / peaks[16], 2.0, rtol=1e-9)
    assert np.isclose(peaks[64] / peaks[16], 4.0, rtol=1e-9)


def test_noiseless_peak_value_formula(cfg, workspace):
    rng = rng_for("peak-formula")
    bank = workspace.bank(1.0)
    dir_idx, j, d = 4, 40, 4
    alpha = 5e-7 * np.exp(-0.3j)
    target, t_cpi = _on_grid_target(cfg, workspace.geom, dir_idx, j, d, alpha)
    sym = _const_modulus_block(rng, cfg)
    p = transmit_signal(workspace.nominal_beams, sym, cfg.power_per_subcarrier_w)
    y = synthesize_rx(cfg, bank, dir_idx, p, rng, target, time_s=t_cpi, noise_var=0.0)
    stats = cpi_slice(bank, dir_idx, y, p, cfg.noise_var_sense_w)
    s_mag = np.abs(np.einsum("qd,qnd->qn", bank.tx_row[dir_idx], p))
    expected = (np.abs(alpha) * np.sum(bank.rx_norm[dir_idx][:, None] * s_mag)) ** 2
    expected /= cfg.noise_var_sense_w
    assert np.isclose(stats[j, d], expected, rtol=1e-9)


def test_noiseless_on_grid_argmax(cfg, workspace):
    rng = rng_for("argmax-unit")
    for _ in range(10):
        i = int(rng.integers(cfg.n_dir))
        j = int(rng.integers(cfg.n_delay))
        d = int(rng.integers(cfg.n_doppler))
        target, _ = _on_grid_target(cfg, workspace.geom, i, j, d)
        noiseless = cfg.replace(noise_var_sense_w=cfg.noise_var_sense_w * 1e-30)
        cube = harness.simulate_scan(noiseless, workspace.bank(1.0),
                                     workspace.nominal_beams, 1.0, 0,
                                     np.random.default_rng(0), target)
        assert np.unravel_index(np.argmax(cube.stats), cube.stats.shape) == (i, j, d)


def test_cube_dump_roundtrip(tmp_path, cfg, workspace):
    rng = rng_for("cube-io")
    cube = h0_cube_fast(workspace.bank(1.0), 3, rng)
    path = tmp_path / "scan.cube"
    save_cube(cube, workspace.bank(1.0), path)
    loaded, grids = load_cube(path)
    assert loaded.scan_index == 3
    assert np.array_equal(loaded.stats, cube.stats)
    assert np.array_equal(loaded.timestamps, cube.timestamps)
    assert np.array_equal(grids["delay"], workspace.bank(1.0).delay_grid)
    assert np.array_equal(grids["doppler"], workspace.bank(1.0).doppler_grid)
    with pytest.raises(ValueError):
        bad = tmp_path / "bad.cube"
        bad.write_bytes(b"NOTACUBE" + b"\x00" * 64)
        load_cube(bad)
