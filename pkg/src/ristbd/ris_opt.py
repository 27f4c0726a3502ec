"""Two-way beampattern evaluation and per-direction RIS phase optimization.

The optimizer is a cyclic coordinate ascent over element phases: with all
other elements fixed, the objective as a function of one element's phase is
C0 + Re(C1 e^{i phi}) + Re(C2 e^{2i phi}), which is evaluated in closed form
on a dense phase grid and refined by a golden-section search.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .scene import Angles, ChannelSet, PlanarArray, steering_vector
from .txwave import BeamformerSet

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class OptimizationError(RuntimeError):
    """Non-finite objective or a broken ascent step."""


@dataclass(frozen=True)
class RisProfile:
    """Unit-modulus RIS response; phases stored, magnitudes implicit."""

    phases: np.ndarray          # (d_ris,) radians
    direction: Angles
    gamma: float
    objective: float = np.nan

    @property
    def omega(self) -> np.ndarray:
        return np.exp(1j * self.phases)


@dataclass
class AscentTrace:
    """Objective value after every single-coordinate update."""

    values: list = field(default_factory=list)


def _direction_terms(ris: PlanarArray, angles: Angles, channels: ChannelSet,
                     beams: BeamformerSet):
    """Per-subcarrier building blocks of the beampattern towards `angles`.

    Returns (cvec, svec, rmat): cvec[q] and svec[q] are the transmit-side
    vectors whose dot product with omega gives the comm/sensing scalars,
    rmat[q] is the receive-side matrix applied to omega.
    """
    t = steering_vector(ris, angles, channels.freqs)      # (n_sub, d_ris)
    cvec = np.einsum("qm,qmd,qd->qm", t, channels.g_tx, beams.f_c)
    svec = np.einsum("qm,qmd,qd->qm", t, channels.g_tx, beams.f_s)
    rmat = channels.g_rx * t[:, None, :]                  # (n_sub, d_rx, d_ris)
    return cvec, svec, rmat


def beampattern_q(omega: np.ndarray, angles: Angles, channels: ChannelSet,
                  beams: BeamformerSet, gamma_q: float, q: int,
                  ris: PlanarArray) -> float:
    """Two-way power beampattern on one subcarrier."""
    t = steering_vector(ris, angles, channels.freqs[q])
    tx = (omega * t) @ channels.g_tx[q]                   # (d_tx,)
    rx = channels.g_rx[q] @ (omega * t)                   # (d_rx,)
    comm = np.abs(tx @ beams.f_c[q]) ** 2
    sens = np.abs(tx @ beams.f_s[q]) ** 2
    return float(((1.0 - gamma_q) * comm + gamma_q * sens) * np.sum(np.abs(rx) ** 2))


def beampattern(omega: np.ndarray, angles: Angles, channels: ChannelSet,
                beams: BeamformerSet, gamma: float, ris: PlanarArray) -> float:
    """Two-way beampattern summed over the used subcarriers."""
    cvec, svec, rmat = _direction_terms(ris, angles, channels, beams)
    return _objective(omega, cvec, svec, rmat, gamma)


def _objective(omega, cvec, svec, rmat, gamma):
    tc = cvec @ omega
    ts = svec @ omega
    rx = rmat @ omega
    per_q = ((1.0 - gamma) * np.abs(tc) ** 2 + gamma * np.abs(ts) ** 2) * np.sum(
        np.abs(rx) ** 2, axis=-1
    )
    return float(np.sum(per_q))


def _init_phases(svec: np.ndarray, d_ris: int, rng: np.random.Generator) -> np.ndarray:
    """Phase-conjugate start aligning the sensing scalar at the center subcarrier."""
    mid = svec.shape[0] // 2
    entries = svec[mid]
    phases = -np.angle(entries)
    weak = np.abs(entries) <= 1e-15 * np.abs(entries).max(initial=0.0)
    if np.all(weak):
        return rng.uniform(0.0, 2.0 * np.pi, size=d_ris)
    if np.any(weak):
        phases[weak] = rng.uniform(0.0, 2.0 * np.pi, size=int(weak.sum()))
    return phases


def _phase_poly(phi, c0, c1, c2):
    return c0 + np.real(c1 * np.exp(1j * phi)) + np.real(c2 * np.exp(2j * phi))


def _golden_refine(c0, c1, c2, lo, hi, iters=40):
    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1 = _phase_poly(x1, c0, c1, c2)
    f2 = _phase_poly(x2, c0, c1, c2)
    for _ in range(iters):
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = _phase_poly(x2, c0, c1, c2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = _phase_poly(x1, c0, c1, c2)
    return (x1, f1) if f1 >= f2 else (x2, f2)


def optimize_ris(direction: Angles, channels: ChannelSet, beams: BeamformerSet,
                 gamma: float, ris: PlanarArray, phase_grid: int = 256,
                 tol: float = 1e-4, max_sweeps: int = 50, seed: int = 0,
                 trace: AscentTrace | None = None,
                 init: np.ndarray | None = None) -> RisProfile:
    """Coordinate-ascent maximization of the beampattern towards `direction`.

    Starts from the phase-conjugate heuristic unless `init` phases are given.
    Each single-coordinate update is accepted only if it does not decrease
    the objective, so the ascent is monotone by construction; a violation of
    the recomputed objective beyond numerical tolerance raises.
    """
    cvec, svec, rmat = _direction_terms(ris, direction, channels, beams)
    d_ris = cvec.shape[1]
    rng = np.random.default_rng(seed)
    if init is not None:
        phases = np.array(init, dtype=float)
        if phases.shape != (d_ris,):
            raise ValueError("init phases must have one entry per RIS element")
    else:
        phases = _init_phases(svec, d_ris, rng)
    omega = np.exp(1j * phases)

    grid = np.linspace(0.0, 2.0 * np.pi, phase_grid, endpoint=False)
    phasors = np.exp(1j * grid)
    phasors2 = np.exp(2j * grid)
    rnorm2 = np.sum(np.abs(rmat) ** 2, axis=1)  # (n_sub, d_ris)

    tc = cvec @ omega
    ts = svec @ omega
    rx = rmat @ omega                           # (n_sub, d_rx)
    current = _objective(omega, cvec, svec, rmat, gamma)
    if not np.isfinite(current):
        raise OptimizationError("non-finite beampattern objective")
    if trace is not None:
        trace.values.append(current)

    step = grid[1] - grid[0]
    for _ in range(max_sweeps):
        sweep_start = current
        for m in range(d_ris):
            cm = cvec[:, m]
            sm = svec[:, m]
            rm = rmat[:, :, m]
            k1 = tc - omega[m] * cm
            k2 = ts - omega[m] * sm
            w = rx - omega[m] * rm
            t1 = (1.0 - gamma) * (np.abs(k1) ** 2 + np.abs(cm) ** 2) + gamma * (
                np.abs(k2) ** 2 + np.abs(sm) ** 2
            )
            u1 = 2.0 * ((1.0 - gamma) * np.conj(k1) * cm + gamma * np.conj(k2) * sm)
            t2 = np.sum(np.abs(w) ** 2, axis=-1) + rnorm2[:, m]
            u2 = 2.0 * np.einsum("qr,qr->q", np.conj(w), rm)
            c0 = float(np.sum(t1 * t2) + 0.5 * np.sum(np.real(u1 * np.conj(u2))))
            c1 = complex(np.sum(t1 * u2 + t2 * u1))
            c2 = complex(0.5 * np.sum(u1 * u2))

            values = c0 + np.real(c1 * phasors) + np.real(c2 * phasors2)
            best = int(np.argmax(values))
            cand_phi, cand_val = _golden_refine(
                c0, c1, c2, grid[best] - step, grid[best] + step
            )
            if values[best] > cand_val:
                cand_phi, cand_val = grid[best], values[best]
            here = _phase_poly(phases[m], c0, c1, c2)
            if cand_val >= here:
                phases[m] = cand_phi % (2.0 * np.pi)
                omega_m = np.exp(1j * phases[m])
                omega[m] = omega_m
                tc = k1 + omega_m * cm
                ts = k2 + omega_m * sm
                rx = w + omega_m * rm
                new = cand_val
            else:
                new = here
            if not np.isfinite(new):
                raise OptimizationError("non-finite beampattern objective")
            if new < current * (1.0 - 1e-9) - 1e-30:
                raise OptimizationError(
                    f"coordinate update decreased the objective: {current} -> {new}"
                )
            current = new
            if trace is not None:
                trace.values.append(current)
        # Refresh accumulated products to bound floating-point drift.
        tc = cvec @ omega
        ts = svec @ omega
        rx = rmat @ omega
        current = _objective(omega, cvec, svec, rmat, gamma)
        if sweep_start > 0 and (current - sweep_start) < tol * sweep_start:
            break

    return RisProfile(phases=phases, direction=direction, gamma=float(gamma),
                      objective=current)


def optimize_all_directions(cfg, channels: ChannelSet, beams: BeamformerSet,
                            gamma: float, ris: PlanarArray) -> list[RisProfile]:
    """One optimized profile per configured pointing direction."""
    return [
        optimize_ris(Angles(az, el), channels, beams, gamma, ris,
                     phase_grid=cfg.ris_phase_grid, tol=cfg.ris_tol,
                     max_sweeps=cfg.ris_max_sweeps, seed=cfg.seed)
        for az, el in cfg.directions_rad
    ]


# -- profile persistence ------------------------------------------------------

def save_profiles(profiles: list[RisProfile], path: str | Path):
    data = {
        "profiles": [
            {
                "direction": i,
                "azimuth_rad": float(p.direction.azimuth),
                "elevation_rad": float(p.direction.elevation),
                "gamma": p.gamma,
                "objective": float(p.objective),
                "phases_rad": [float(x) for x in p.phases],
            }
            for i, p in enumerate(profiles)
        ]
    }
    Path(path).write_text(yaml.safe_dump(data, sort_keys=False))


def load_profiles(path: str | Path) -> list[RisProfile]:
    data = yaml.safe_load(Path(path).read_text())
    out = []
    for entry in data["profiles"]:
        out.append(
            RisProfile(
                phases=np.array(entry["phases_rad"], dtype=float),
                direction=Angles(entry["azimuth_rad"], entry["elevation_rad"]),
                gamma=float(entry["gamma"]),
                objective=float(entry.get("objective", np.nan)),
            )
        )
    return out
