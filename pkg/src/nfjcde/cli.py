"""``nfjcde`` command line.

Usage::

    nfjcde initial-ce [--config FILE] [--sweep AXIS A:B:S] [--out PATH] [--key=value ...]
    nfjcde jcde       [--config FILE] [--sweep AXIS A:B:S] [--out PATH] [--key=value ...]
    nfjcde leakage-demo [--r 3,5,7,inf] [--theta-deg 0] [--out PATH]
    nfjcde selftest

Any configuration key can be overridden as ``--system.N=64`` or
``--system.N 64``. Sweeps write ``PATH`` (CSV) and ``PATH`` with a
``.manifest.json`` suffix. Exit codes: 0 success, 1 selftest failure,
2 bad arguments or IO failure, 3 a sweep point where every trial diverged.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import DEFAULTS, ConfigError, load_config, parse_text
from .geometry import ArrayGeometry, energy_bin_count, los_beam_amplitude

PRESETS = {
    "initial-ce": {"sweep.methods": "ls,psomp,proposed-initial"},
    "jcde": {"sweep.methods": "proposed-initial,lmmse-initial,jcde,genie-csi,genie-data"},
}


def _split_overrides(tokens: list[str]) -> dict[str, str]:
    """``--key=value`` / ``--key value`` pairs, plus ``--sweep AXIS VALUES``."""
    out: dict[str, str] = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if key == "sweep":
            if i + 2 >= len(tokens):
                raise ConfigError("--sweep needs AXIS and VALUES")
            out["sweep.axis"], out["sweep.values"] = tokens[i + 1], tokens[i + 2]
            i += 3
            continue
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise ConfigError(f"--{key} needs a value")
            value = tokens[i + 1]
            i += 2
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = value
    return out


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nfjcde", description=__doc__.split("\n")[0],
                                allow_abbrev=False)
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("initial-ce", "initial channel estimation sweep"),
                           ("jcde", "joint channel and data estimation sweep")):
        s = sub.add_parser(name, help=helptext, allow_abbrev=False)
        s.add_argument("--config", type=Path, help="key = value file")
        s.add_argument("--out", type=Path, default=Path(f"{name}.csv"), help="CSV path")
    s = sub.add_parser("leakage-demo", help="beam-domain amplitude of a LoS path")
    s.add_argument("--r", default="3,5,7,inf", help="comma list of distances in m")
    s.add_argument("--theta-deg", type=float, default=0.0)
    s.add_argument("--N", type=int, default=200)
    s.add_argument("--fc-ghz", type=float, default=100.0)
    s.add_argument("--out", type=Path, default=Path("leakage.csv"))
    sub.add_parser("selftest", help="run the built-in invariant checks")
    return p


def _run_sweep(args, extra: list[str]) -> int:
    from .harness import ExperimentSpec, run_sweep, write_results

    overrides = dict(PRESETS[args.command])
    if args.config is not None:
        overrides.update(parse_text(args.config.read_text()))
    overrides.update(_split_overrides(extra))
    cfg = load_config(overrides=overrides)
    spec = ExperimentSpec.from_config(cfg)
    records = run_sweep(spec)
    manifest = args.out.with_suffix(".manifest.json")
    write_results(records, spec, args.out, manifest, {"command": args.command})
    print(f"wrote {args.out} ({len(records)} rows) and {manifest}")
    bad = [r for r in records if r.diverged == r.trials]
    for r in bad:
        print(f"all {r.trials} trials diverged: {r.method} at {r.sweep_value:g}",
              file=sys.stderr)
    return 3 if bad else 0


def _run_leakage(args) -> int:
    geom = ArrayGeometry.from_carrier(args.N, args.fc_ghz)
    rs = [float(v) for v in args.r.split(",") if v.strip()]
    theta = np.deg2rad(args.theta_deg)
    amps = [los_beam_amplitude(geom, theta, r) for r in rs]
    header = "bin," + ",".join(f"r={r:g}" for r in rs)
    rows = [header] + [f"{n}," + ",".join(format(a[n], ".10g") for a in amps)
                       for n in range(geom.N)]
    args.out.write_text("\n".join(rows) + "\n")
    for r, a in zip(rs, amps):
        print(f"r = {r:g} m: {energy_bin_count(a)} beam bin(s) hold 95% of the energy")
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args, extra = _build_parser().parse_known_args(argv)
    try:
        if args.command in PRESETS:
            return _run_sweep(args, extra)
        if extra:
            raise ConfigError(f"unexpected arguments {' '.join(extra)}")
        if args.command == "leakage-demo":
            return _run_leakage(args)
        from .selftest import run_selftest

        return 0 if run_selftest() else 1
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
