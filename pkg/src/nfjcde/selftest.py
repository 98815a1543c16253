"""Fast invariant checks runnable without a test framework (``nfjcde selftest``)."""

from __future__ import annotations

import itertools
import time

import numpy as np

from .config import load_config
from .dictionary import build_dictionary, build_polar_grid
from .geometry import (ArrayGeometry, array_response, beam_transform, energy_bin_count,
                       generate_channel, inverse_beam_transform, los_beam_amplitude)
from .harness import ExperimentSpec, records_to_csv, run_sweep
from .initial import somp
from .jcde import gaussian_divide, qam_denoise
from .signals import Constellation


def _unit_modulus():
    geom = ArrayGeometry.from_carrier(64, 100.0)
    a = array_response(geom, np.linspace(-1.5, 1.5, 7), np.linspace(0.5, 50, 7))
    assert np.max(np.abs(np.abs(a) - 1)) < 1e-12


def _unitary_dft():
    geom = ArrayGeometry.from_carrier(64, 100.0)
    ch = generate_channel(geom, 4, 3, seed=1)
    H = ch.H_spatial
    assert abs(np.linalg.norm(beam_transform(H)) / np.linalg.norm(H) - 1) < 1e-10
    assert np.linalg.norm(inverse_beam_transform(beam_transform(H)) - H) < 1e-10 * np.linalg.norm(H)


def _leakage():
    geom = ArrayGeometry.from_carrier(200, 100.0)
    counts = [energy_bin_count(los_beam_amplitude(geom, 0.0, r)) for r in (3, 5, 7, np.inf)]
    assert counts[0] >= counts[1] >= counts[2] > counts[3]


def _qam_moments():
    rng = np.random.default_rng(0)
    const = Constellation(16)
    xq = rng.normal(size=5) + 1j * rng.normal(size=5)
    v = rng.uniform(0.05, 2, size=5)
    m, var = qam_denoise(xq, v, const)
    w = np.exp(-np.abs(const.points - xq[:, None]) ** 2 / v[:, None])
    w /= w.sum(1, keepdims=True)
    m_ref = w @ const.points
    v_ref = w @ np.abs(const.points) ** 2 - np.abs(m_ref) ** 2
    assert np.max(np.abs(m - m_ref)) < 1e-12 and np.max(np.abs(var - v_ref)) < 1e-12


def _ep_round_trip():
    rng = np.random.default_rng(1)
    m1, m2 = rng.normal(size=4) + 1j * rng.normal(size=4), rng.normal(size=4) + 0j
    v1, v2 = rng.uniform(0.5, 2, 4), rng.uniform(0.5, 2, 4)
    v = 1 / (1 / v1 + 1 / v2)
    m = v * (m1 / v1 + m2 / v2)
    back, vb, ok = gaussian_divide(m, v, m2, v2)
    assert ok.all() and np.max(np.abs(back - m1)) < 1e-9 and np.max(np.abs(vb - v1)) < 1e-9


def _somp_subset_oracle():
    geom = ArrayGeometry.from_carrier(16, 100.0)
    D = build_dictionary(geom, build_polar_grid(geom, 16, 3, 0.6, (-60, 60)))
    rng = np.random.default_rng(2)
    for _ in range(10):
        sup = rng.choice(D.M, 2, replace=False)
        Y = D.atoms[:, sup] @ (rng.normal(size=(2, 3)) + 1j * rng.normal(size=(2, 3)))
        got = set(somp(Y, D, 2).support.tolist())
        best = min(itertools.combinations(range(D.M), 2),
                   key=lambda s: np.linalg.norm(
                       Y - D.atoms[:, s] @ np.linalg.lstsq(D.atoms[:, s], Y, rcond=None)[0]))
        assert got == set(best)


def _sweep_determinism():
    cfg = load_config(overrides={
        "system.N": 16, "system.U": 2, "frame.Kp": 2, "frame.Kd": 4, "frame.Q": 4,
        "channel.Lu": 1, "grid.G_theta": 16, "grid.G_r": 2, "init.L_hat": 4, "jcde.T": 2,
        "jcde.C": 2, "sweep.values": "10,20", "sweep.methods": "ls,proposed-initial,jcde",
        "trials": 2})
    spec = ExperimentSpec.from_config(cfg)
    assert records_to_csv(run_sweep(spec, workers=1)) == records_to_csv(run_sweep(spec, workers=1))


CHECKS = [
    ("array response has unit modulus", _unit_modulus),
    ("beam transform is unitary", _unitary_dft),
    ("near-field beam leakage", _leakage),
    ("QAM denoiser moments", _qam_moments),
    ("EP division round trip", _ep_round_trip),
    ("SOMP equals best-subset LS", _somp_subset_oracle),
    ("sweep CSV is deterministic", _sweep_determinism),
]


def run_selftest(stream=print) -> bool:
    ok = True
    for name, fn in CHECKS:
        t0 = time.perf_counter()
        try:
            fn()
            status = "PASS"
        except AssertionError:
            status, ok = "FAIL", False
        stream(f"{status}  {name}  ({time.perf_counter() - t0:.2f} s)")
    return ok
