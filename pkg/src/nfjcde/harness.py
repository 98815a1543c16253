"""Monte Carlo sweeps over SNR, pilot length or sub-array size.

Each trial draws one channel, one data block and one noise block from
streams seeded by ``(seed, trial)``, so every sweep point and every method
sees the same realisations. The initial estimate is computed once per trial
and shared by the methods that start from it. Trials are independent and
may run in a process pool (``NFJCDE_WORKERS``); results are reduced in
trial order so the output does not depend on the pool size.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from .config import Config, parse_range, sweep_key
from .dictionary import build_dictionary, build_polar_grid
from .flops import FlopCounter, initial_flops, jcde_flops
from .geometry import ArrayGeometry, beam_transform, generate_channel
from .initial import estimate_initial, ls_baseline, psomp_baseline
from .jcde import JcdeConfig, JcdeDiverged, run_jcde
from .metrics import ber, genie_csi_detector, lmmse_detect, nmse
from .signals import Constellation, design_pilots, draw_data, transmit

CSV_SCHEMA = 1
CSV_HEADER = ("method", "sweep_value", "nmse_db", "ber", "flops", "diverged", "trials",
              "nmse_db_median", "ber_median")
INITIAL_METHODS = ("proposed-initial", "lmmse-initial", "jcde", "genie-data")


@dataclass
class ExperimentSpec:
    """A sweep: base configuration, axis, values, methods, trials and seed."""

    config: Config
    axis: str
    values: list
    methods: list
    trials: int
    seed: int

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.methods:
            raise ValueError("method list is empty")
        sweep_key(self.axis)

    @classmethod
    def from_config(cls, cfg: Config) -> "ExperimentSpec":
        return cls(cfg, cfg["sweep.axis"], cfg.sweep_values, cfg.methods, cfg["trials"],
                   cfg["seed"])


@dataclass
class MetricsRecord:
    method: str
    sweep_value: float
    nmse_db: float
    ber: float
    flops: float
    diverged: int
    trials: int
    nmse_db_median: float
    ber_median: float
    wall_time: float = 0.0


@dataclass
class TrialResult:
    nmse_db: dict = field(default_factory=dict)
    ber: dict = field(default_factory=dict)
    flops: dict = field(default_factory=dict)
    diverged: dict = field(default_factory=dict)


def jcde_config(cfg: Config) -> JcdeConfig:
    return JcdeConfig(
        T=cfg["jcde.T"], damping=cfg["jcde.damping"], C=cfg["jcde.C"],
        Gbar_theta=cfg["jcde.Gbar_theta"], Gbar_r=cfg["jcde.Gbar_r"],
        sigma_theta_first=cfg["jcde.sigma_theta_first"],
        sigma_theta_last=cfg["jcde.sigma_theta_last"],
        sigma_r_first=cfg["jcde.sigma_r_first"], sigma_r_last=cfg["jcde.sigma_r_last"],
        sigma_e0=cfg["jcde.sigma_e0"] or None, reinforce=cfg["jcde.reinforce"])


def psomp_budget(cfg: Config) -> int:
    """Per-UE atom budget of P-SOMP; ``init.L_hat_u = 0`` shares ``L_hat`` evenly."""
    return cfg["init.L_hat_u"] or max(1, -(-cfg["init.L_hat"] // cfg["system.U"]))


def geometry(cfg: Config) -> ArrayGeometry:
    return ArrayGeometry.from_carrier(cfg["system.N"], cfg["system.fc_ghz"])


@lru_cache(maxsize=8)
def _dictionary(N, fc_ghz, G_theta, G_r, gamma, theta_deg):
    geom = ArrayGeometry.from_carrier(N, fc_ghz)
    grid = build_polar_grid(geom, G_theta, G_r, gamma, parse_range(theta_deg))
    return build_dictionary(geom, grid)


def dictionary(cfg: Config):
    return _dictionary(cfg["system.N"], cfg["system.fc_ghz"], cfg["grid.G_theta"],
                       cfg["grid.G_r"], cfg["grid.gamma_coh"], cfg["grid.theta_deg"])


@lru_cache(maxsize=16)
def _pilots(U, K_p, seed, mode):
    return design_pilots(U, K_p, seed=seed, mode=mode)


def pilots(cfg: Config) -> np.ndarray:
    """Pilot block, fixed per ``(seed, U, K_p)`` across trials."""
    return _pilots(cfg["system.U"], cfg["frame.Kp"], cfg["seed"], cfg["pilot.mode"])


def trial_streams(seed: int, trial: int) -> list[np.random.Generator]:
    """Channel, data and noise generators for one trial."""
    ss = np.random.SeedSequence([seed, trial])
    return [np.random.default_rng(s) for s in ss.spawn(3)]


def run_trial(cfg: Config, methods, trial: int) -> TrialResult:
    """One realisation through every requested method."""
    geom = geometry(cfg)
    U, K_p, K_d = cfg["system.U"], cfg["frame.Kp"], cfg["frame.Kd"]
    const = Constellation(cfg["frame.Q"])
    X_p = pilots(cfg)
    rng_ch, rng_data, rng_noise = trial_streams(cfg["seed"], trial)
    ch = generate_channel(geom, U, cfg["channel.Lu"], cfg.range("channel.theta_deg"),
                          cfg.range("channel.r_m"), cfg["channel.Kf_db"], seed=rng_ch,
                          nlos_normalization=cfg["channel.nlos_norm"])
    X_d, idx = draw_data(U, K_d, const, seed=rng_data)
    X = np.hstack([X_p, X_d])
    sig = transmit(ch.H_spatial, X, cfg["snr_db"], seed=rng_noise)
    Y_p = sig.Y_spatial[:, :K_p]
    jc = jcde_config(cfg)
    out = TrialResult()

    def record(m, nmse_db=np.nan, ber_val=np.nan, flops=np.nan):
        out.nmse_db[m], out.ber[m], out.flops[m] = nmse_db, ber_val, float(flops)
        out.diverged[m] = 0

    init = None
    init_counter = FlopCounter()
    if set(methods) & set(INITIAL_METHODS):
        init = estimate_initial(Y_p, X_p, dictionary(cfg), geom, cfg["init.L_hat"],
                                counter=init_counter)
        S0 = beam_transform(init.H0_spatial)

    for m in methods:
        try:
            if m == "ls":
                H = ls_baseline(Y_p, X_p)
                record(m, nmse(ch.H_spatial, H),
                       flops=initial_flops("ls", N=geom.N, U=U, K_p=K_p, M=0, L_hat=0))
            elif m == "psomp":
                c = FlopCounter()
                est = psomp_baseline(Y_p, X_p, dictionary(cfg), geom, psomp_budget(cfg), c)
                record(m, nmse(ch.H_spatial, est.H0_spatial), flops=c.total)
            elif m == "proposed-initial":
                record(m, nmse(ch.H_spatial, init.H0_spatial), flops=init_counter.total)
            elif m == "lmmse-initial":
                Xh = lmmse_detect(sig.Y_beam[:, K_p:], S0, sig.noise_var, const.avg_energy)
                f = jcde_flops("lmmse", N=geom.N, U=U, K_p=K_p, K_d=K_d, Q=const.order, T=1,
                               N_c=geom.N, L_hat_u=1, Gbar_theta=1, Gbar_r=1)
                record(m, nmse(ch.H_spatial, init.H0_spatial), ber(idx, Xh, const),
                       init_counter.total + f)
            elif m == "jcde":
                c = FlopCounter()
                paths = [(p.theta, p.r, p.z) for p in init.path_set.per_ue]
                res = run_jcde(sig.Y_beam, X_p, K_d, S0, paths, const, sig.noise_var, geom,
                               jc, counter=c)
                record(m, nmse(ch.H_beam, res.H_beam), ber(idx, res.X_hat[:, K_p:], const),
                       init_counter.total + c.total)
            elif m == "genie-csi":
                c = FlopCounter()
                Xh = genie_csi_detector(sig.Y_beam, ch.H_beam, X_p, K_d, const,
                                        sig.noise_var, geom, jc, counter=c)
                record(m, ber_val=ber(idx, Xh, const), flops=c.total)
            elif m == "genie-data":
                c = FlopCounter()
                paths = [(p.theta, p.r, p.z) for p in init.path_set.per_ue]
                res = run_jcde(sig.Y_beam, X_p, K_d, S0, paths, const, sig.noise_var, geom,
                               jc, X_true=X, genie="data", counter=c)
                record(m, nmse(ch.H_beam, res.H_beam), flops=c.total)
            else:
                raise ValueError(f"unknown method {m!r}")
        except (JcdeDiverged, np.linalg.LinAlgError, FloatingPointError):
            record(m)
            out.diverged[m] = 1
    return out


def _run_item(args):
    cfg, methods, trial = args
    return run_trial(cfg, methods, trial)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("NFJCDE_WORKERS", "1")))
    except ValueError:
        return 1


def _aggregate(method, value, results, wall) -> MetricsRecord:
    nm = np.array([r.nmse_db[method] for r in results], dtype=float)
    bb = np.array([r.ber[method] for r in results], dtype=float)
    ff = np.array([r.flops[method] for r in results], dtype=float)
    dv = np.array([r.diverged[method] for r in results], dtype=bool)
    ok = ~dv

    def mean(a):
        a = a[ok & np.isfinite(a)]
        return float(np.mean(a)) if a.size else float("nan")

    def median(a):
        a = a[ok & np.isfinite(a)]
        return float(np.median(a)) if a.size else float("nan")

    lin = 10 ** (nm / 10)
    m_lin = mean(lin)
    nmse_mean = float(10 * np.log10(m_lin)) if m_lin > 0 else float("nan")
    return MetricsRecord(method, float(value), nmse_mean, mean(bb), mean(ff), int(dv.sum()),
                         len(results), median(nm), median(bb), wall)


def run_sweep(spec: ExperimentSpec, workers: int | None = None) -> list[MetricsRecord]:
    """Run every trial at every sweep point; one record per (method, point)."""
    workers = workers or _workers()
    records = []
    for value in spec.values:
        cfg = Config(spec.config)
        cfg["trials"], cfg["seed"] = spec.trials, spec.seed
        cfg = cfg.at(spec.axis, value)
        items = [(cfg, tuple(spec.methods), t) for t in range(spec.trials)]
        t0 = time.perf_counter()
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                results = list(pool.map(_run_item, items))
        else:
            results = [_run_item(it) for it in items]
        wall = time.perf_counter() - t0
        records += [_aggregate(m, value, results, wall) for m in spec.methods]
    return records


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if np.isnan(x):
        return "nan"
    return format(x, ".10g")


def records_to_csv(records: list[MetricsRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        d = asdict(r)
        w.writerow([d["method"]] + [_fmt(d[k]) for k in CSV_HEADER[1:]])
    return buf.getvalue()


def write_results(records: list[MetricsRecord], spec: ExperimentSpec, csv_path,
                  manifest_path=None, extra: dict | None = None) -> None:
    """Write the CSV and a JSON manifest holding everything needed to re-run it."""
    from . import __version__

    with open(csv_path, "w", newline="", encoding="utf-8") as f:
        f.write(records_to_csv(records))
    if manifest_path is None:
        return
    manifest = {
        "version": __version__,
        "csv_schema": CSV_SCHEMA,
        "seed": spec.seed,
        "config": dict(spec.config),
        "sweep": {"axis": spec.axis, "values": list(spec.values), "methods": list(spec.methods),
                  "trials": spec.trials},
        "wall_time_s": {f"{r.method}@{_fmt(r.sweep_value)}": r.wall_time for r in records},
    }
    manifest.update(extra or {})
    with open(manifest_path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def flops_account(cfg: Config) -> dict[str, float]:
    """Closed-form cost of every method at the configuration ``cfg``."""
    N, U, K_p, K_d = cfg["system.N"], cfg["system.U"], cfg["frame.Kp"], cfg["frame.Kd"]
    M = cfg["grid.G_theta"] * cfg["grid.G_r"]
    L_hat = cfg["init.L_hat"]
    L_u = max(1, round(L_hat / U))
    init = initial_flops("proposed-initial", N=N, U=U, K_p=K_p, M=M, L_hat=L_hat)
    common = dict(N=N, U=U, K_p=K_p, K_d=K_d, Q=cfg["frame.Q"], T=cfg["jcde.T"],
                  N_c=N // cfg["jcde.C"], L_hat_u=L_u, Gbar_theta=cfg["jcde.Gbar_theta"],
                  Gbar_r=cfg["jcde.Gbar_r"])
    return {
        "ls": initial_flops("ls", N=N, U=U, K_p=K_p, M=M, L_hat=L_hat),
        "psomp": initial_flops("psomp", N=N, U=U, K_p=K_p, M=M, L_hat=psomp_budget(cfg)),
        "proposed-initial": init,
        "lmmse-initial": init + jcde_flops("lmmse", **common),
        "jcde": init + jcde_flops("jcde", **common),
        "bigabp": init + jcde_flops("bigabp", **common),
    }
