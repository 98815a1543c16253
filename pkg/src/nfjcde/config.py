"""Flat ``key=value`` experiment configuration.

Every knob is a dotted key with a typed default. Files hold one
``key = value`` per line with ``#`` comments; command-line overrides are
applied on top of the file. Unknown keys and out-of-range values raise
``ConfigError`` with a message naming the key.
"""

from __future__ import annotations

import math
from pathlib import Path

METHODS = ("ls", "psomp", "proposed-initial", "lmmse-initial", "jcde", "genie-csi",
           "genie-data")
SWEEP_ALIASES = {"snr": "snr_db", "kp": "frame.Kp", "nc": "jcde.Nc"}

DEFAULTS: dict[str, object] = {
    "system.N": 200,
    "system.U": 50,
    "system.fc_ghz": 100.0,
    "frame.Kp": 25,
    "frame.Kd": 100,
    "frame.Q": 64,
    "pilot.mode": "harmonic",
    "channel.Lu": 3,
    "channel.Kf_db": 10.0,
    "channel.theta_deg": "-60,60",
    "channel.r_m": "1,10",
    "channel.nlos_norm": "per_ue",
    "grid.G_theta": 395,
    "grid.G_r": 7,
    "grid.gamma_coh": 0.6,
    "grid.theta_deg": "-90,90",
    "init.L_hat": 250,
    "init.L_hat_u": 0,
    "jcde.T": 30,
    "jcde.damping": 0.5,
    "jcde.C": 4,
    "jcde.Gbar_theta": 5,
    "jcde.Gbar_r": 5,
    "jcde.sigma_theta_first": 5.0,
    "jcde.sigma_theta_last": 0.1,
    "jcde.sigma_r_first": 5.0,
    "jcde.sigma_r_last": 1.0,
    "jcde.sigma_e0": 0.0,
    "jcde.reinforce": True,
    "snr_db": 26.0,
    "sweep.axis": "snr",
    "sweep.values": "-10:30:5",
    "sweep.methods": "ls,psomp,proposed-initial",
    "trials": 10,
    "seed": 0,
}


class ConfigError(ValueError):
    """Invalid configuration key or value."""


def _coerce(key: str, value) -> object:
    default = DEFAULTS[key]
    if isinstance(value, type(default)) and not (isinstance(default, int)
                                                 and isinstance(value, bool)):
        return value
    text = str(value).strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            f = float(text)
            if not f.is_integer():
                raise ValueError(text)
            return int(f)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {type(default).__name__}") from None
    return text


def parse_range(text: str) -> tuple[float, float]:
    """``"lo,hi"`` -> ``(lo, hi)``."""
    parts = [p for p in str(text).replace(":", ",").split(",") if p.strip()]
    if len(parts) != 2:
        raise ConfigError(f"expected 'lo,hi', got {text!r}")
    return float(parts[0]), float(parts[1])


def parse_values(text: str) -> list[float]:
    """Sweep values as ``a:b:s`` (inclusive of ``b``) or a comma list."""
    text = str(text).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"sweep range must be a:b:s, got {text!r}")
        a, b, s = map(float, parts)
        if s <= 0 or b < a:
            raise ConfigError(f"empty sweep range {text!r}")
        n = int(math.floor((b - a) / s + 1e-9)) + 1
        return [a + i * s for i in range(n)]
    vals = [float(v) for v in text.split(",") if v.strip()]
    if not vals:
        raise ConfigError("sweep.values is empty")
    return vals


def sweep_key(axis: str) -> str:
    key = SWEEP_ALIASES.get(axis.lower(), axis)
    if key != "jcde.Nc" and key not in DEFAULTS:
        raise ConfigError(f"unknown sweep axis {axis!r}")
    return key


class Config(dict):
    """Validated flat configuration; build with ``load_config``."""

    def range(self, key: str) -> tuple[float, float]:
        return parse_range(self[key])

    @property
    def methods(self) -> list[str]:
        return [m.strip() for m in self["sweep.methods"].split(",") if m.strip()]

    @property
    def sweep_values(self) -> list[float]:
        return parse_values(self["sweep.values"])

    def at(self, axis: str, value: float) -> "Config":
        """Copy with the sweep axis set to ``value``."""
        key = sweep_key(axis)
        out = Config(self)
        if key == "jcde.Nc":
            N_c = int(round(value))
            if N_c < 1 or out["system.N"] % N_c:
                raise ConfigError(f"N_c={value} must divide N={out['system.N']}")
            out["jcde.C"] = out["system.N"] // N_c
        else:
            out[key] = _coerce(key, value)
        validate(out)
        return out

    def to_text(self) -> str:
        return "".join(f"{k} = {_format(self[k])}\n" for k in DEFAULTS)


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def validate(cfg: dict) -> None:
    """Range checks; raises ``ConfigError`` on the first violation."""
    N, U = cfg["system.N"], cfg["system.U"]
    Kp, Kd = cfg["frame.Kp"], cfg["frame.Kd"]
    _check(N >= 2, "system.N must be >= 2")
    _check(U >= 1, "system.U must be >= 1")
    _check(cfg["system.fc_ghz"] > 0, "system.fc_ghz must be positive")
    _check(Kp >= 1, "frame.Kp must be >= 1")
    _check(Kd >= 0, "frame.Kd must be >= 0")
    _check(cfg["frame.Q"] in (4, 16, 64, 256), "frame.Q must be one of 4, 16, 64, 256")
    _check(cfg["pilot.mode"] in ("harmonic", "random", "orthogonal"),
           "pilot.mode must be harmonic, random or orthogonal")
    _check(cfg["channel.Lu"] >= 1, "channel.Lu must be >= 1")
    t_lo, t_hi = parse_range(cfg["channel.theta_deg"])
    _check(-90 <= t_lo < t_hi <= 90, "channel.theta_deg must satisfy -90 <= lo < hi <= 90")
    r_lo, r_hi = parse_range(cfg["channel.r_m"])
    _check(0 < r_lo <= r_hi and math.isfinite(r_hi), "channel.r_m must satisfy 0 < lo <= hi")
    _check(cfg["channel.nlos_norm"] in ("per_ue", "total"),
           "channel.nlos_norm must be per_ue or total")
    _check(cfg["grid.G_theta"] >= 1 and cfg["grid.G_r"] >= 1, "grid sizes must be >= 1")
    _check(0 < cfg["grid.gamma_coh"] < 1, "grid.gamma_coh must lie in (0, 1)")
    g_lo, g_hi = parse_range(cfg["grid.theta_deg"])
    _check(-90 <= g_lo < g_hi <= 90, "grid.theta_deg must satisfy -90 <= lo < hi <= 90")
    M = cfg["grid.G_theta"] * cfg["grid.G_r"]
    _check(1 <= cfg["init.L_hat"] <= M, f"init.L_hat must lie in [1, {M}]")
    _check(cfg["init.L_hat_u"] >= 0, "init.L_hat_u must be >= 0 (0 selects the default)")
    _check(cfg["jcde.T"] >= 1, "jcde.T must be >= 1")
    _check(0 < cfg["jcde.damping"] <= 1, "jcde.damping must lie in (0, 1]")
    C = cfg["jcde.C"]
    _check(C >= 1 and N % C == 0, f"jcde.C={C} must divide system.N={N}")
    _check(cfg["jcde.Gbar_theta"] >= 1 and cfg["jcde.Gbar_r"] >= 1,
           "refinement grid sizes must be >= 1")
    for k in ("jcde.sigma_theta_first", "jcde.sigma_theta_last", "jcde.sigma_r_first",
              "jcde.sigma_r_last", "jcde.sigma_e0"):
        _check(cfg[k] >= 0, f"{k} must be >= 0")
    _check(cfg["trials"] >= 1, "trials must be >= 1")
    _check(cfg["seed"] >= 0, "seed must be >= 0")
    methods = [m.strip() for m in cfg["sweep.methods"].split(",") if m.strip()]
    _check(len(methods) > 0, "sweep.methods is empty")
    for m in methods:
        _check(m in METHODS, f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    if Kd == 0:
        _check(not set(methods) - {"ls", "psomp", "proposed-initial"},
               "data-aided methods need frame.Kd >= 1")
    sweep_key(cfg["sweep.axis"])
    parse_values(cfg["sweep.values"])


def parse_text(text: str) -> dict[str, str]:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> Config:
    """Defaults, then the file at ``path``, then ``overrides``."""
    raw: dict = {}
    if path is not None:
        raw.update(parse_text(Path(path).read_text()))
    raw.update(overrides or {})
    cfg = Config(DEFAULTS)
    for k, v in raw.items():
        if k not in DEFAULTS:
            raise ConfigError(f"unknown config key {k!r}")
        cfg[k] = _coerce(k, v)
    validate(cfg)
    return cfg
