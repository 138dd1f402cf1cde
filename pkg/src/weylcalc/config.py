"""Experiment configuration: JSON file, defaults, validation and hashing."""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .metric import METRICS, WEIGHTS

N_MIN, N_MAX = 64, 2048

DEFAULTS = {
    "grid": {"L_x": 8.0, "L_xi": None, "N_x": 256},
    "metric": "shubin",
    "weights": {"M": "japanese", "M1": "one"},
    "tolerances": {"rank_tol": None, "residual_tol": 1e-5},
    "seed": 42,
    "out": "reports",
    "fast_delta": False,
    "truncations": [128, 256, 512],
}

_NESTED = ("grid", "weights", "tolerances")


def _pow2(n) -> bool:
    return isinstance(n, int) and not isinstance(n, bool) and n > 0 and n & (n - 1) == 0


def _num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


@dataclass(frozen=True)
class Config:
    L_x: float = 8.0
    L_xi: float | None = None
    N_x: int = 256
    metric: str = "shubin"
    M: str = "japanese"
    M1: str = "one"
    rank_tol: float | None = None
    residual_tol: float = 1e-5
    seed: int = 42
    out: str = "reports"
    fast_delta: bool = False
    truncations: tuple = (128, 256, 512)

    def to_dict(self) -> dict:
        return {
            "grid": {"L_x": self.L_x, "L_xi": self.L_xi, "N_x": self.N_x},
            "metric": self.metric,
            "weights": {"M": self.M, "M1": self.M1},
            "tolerances": {"rank_tol": self.rank_tol, "residual_tol": self.residual_tol},
            "seed": self.seed,
            "out": self.out,
            "fast_delta": self.fast_delta,
            "truncations": list(self.truncations),
        }

    def replace(self, **kw) -> "Config":
        d = self.to_dict()
        for k, v in kw.items():
            if v is None:
                continue
            if k in ("L_x", "L_xi", "N_x"):
                d["grid"][k] = v
            elif k in ("M", "M1"):
                d["weights"][k] = v
            elif k in ("rank_tol", "residual_tol"):
                d["tolerances"][k] = v
            else:
                d[k] = v
        return from_dict(d)


def normalize(raw: dict) -> dict:
    """Defaults filled in; unknown keys rejected at every level."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    out = copy.deepcopy(DEFAULTS)
    for key, val in raw.items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown configuration key {key!r}")
        if key in _NESTED:
            if not isinstance(val, dict):
                raise ConfigError(f"{key}: expected an object")
            for sub, sv in val.items():
                if sub not in DEFAULTS[key]:
                    raise ConfigError(f"unknown configuration key {key}.{sub!r}")
                out[key][sub] = sv
        else:
            out[key] = val
    _validate(out)
    g = out["grid"]
    g["L_x"] = float(g["L_x"])
    if g["L_xi"] is not None:
        g["L_xi"] = float(g["L_xi"])
    t = out["tolerances"]
    t["residual_tol"] = float(t["residual_tol"])
    if t["rank_tol"] is not None:
        t["rank_tol"] = float(t["rank_tol"])
    out["truncations"] = list(out["truncations"])
    return out


def _validate(d: dict) -> None:
    g = d["grid"]
    if not _pow2(g["N_x"]) or not N_MIN <= g["N_x"] <= N_MAX:
        raise ConfigError(f"grid.N_x: must be a power of two in [{N_MIN}, {N_MAX}], got {g['N_x']!r}")
    if not _num(g["L_x"]) or g["L_x"] <= 0:
        raise ConfigError(f"grid.L_x: must be a positive number, got {g['L_x']!r}")
    if g["L_xi"] is not None and (not _num(g["L_xi"]) or g["L_xi"] <= 0):
        raise ConfigError(f"grid.L_xi: must be null or a positive number, got {g['L_xi']!r}")
    if d["metric"] not in METRICS:
        raise ConfigError(f"metric: unknown id {d['metric']!r}; known: {sorted(METRICS)}")
    for k in ("M", "M1"):
        if d["weights"][k] not in WEIGHTS:
            raise ConfigError(f"weights.{k}: unknown id {d['weights'][k]!r}; known: {sorted(WEIGHTS)}")
    t = d["tolerances"]
    if not _num(t["residual_tol"]) or t["residual_tol"] <= 0:
        raise ConfigError(f"tolerances.residual_tol: must be positive, got {t['residual_tol']!r}")
    if t["rank_tol"] is not None and (not _num(t["rank_tol"]) or t["rank_tol"] <= 0):
        raise ConfigError(f"tolerances.rank_tol: must be null or positive, got {t['rank_tol']!r}")
    s = d["seed"]
    if not isinstance(s, int) or isinstance(s, bool) or not 0 <= s < 2 ** 64:
        raise ConfigError(f"seed: must be an unsigned 64-bit integer, got {s!r}")
    if not isinstance(d["out"], str) or not d["out"]:
        raise ConfigError("out: must be a non-empty string")
    if not isinstance(d["fast_delta"], bool):
        raise ConfigError("fast_delta: must be true or false")
    tr = d["truncations"]
    if not isinstance(tr, list) or not tr or any(not _pow2(n) or not N_MIN <= n <= N_MAX for n in tr):
        raise ConfigError(f"truncations: must be a non-empty list of powers of two in "
                          f"[{N_MIN}, {N_MAX}], got {tr!r}")


def from_dict(raw: dict) -> Config:
    d = normalize(raw)
    return Config(L_x=d["grid"]["L_x"], L_xi=d["grid"]["L_xi"], N_x=d["grid"]["N_x"],
                  metric=d["metric"], M=d["weights"]["M"], M1=d["weights"]["M1"],
                  rank_tol=d["tolerances"]["rank_tol"],
                  residual_tol=d["tolerances"]["residual_tol"], seed=d["seed"], out=d["out"],
                  fast_delta=d["fast_delta"], truncations=tuple(d["truncations"]))


def load_config(path) -> Config:
    """Read a JSON config; an empty file yields all defaults."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{p}: cannot read configuration ({exc.strerror})") from None
    if not text.strip():
        return Config()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return from_dict(raw)


def serialize(cfg: Config) -> str:
    return json.dumps(cfg.to_dict(), sort_keys=True, indent=2)


def config_hash(cfg: Config) -> str:
    """sha256 over the canonical JSON form; the output directory is excluded."""
    d = cfg.to_dict()
    d.pop("out")
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()
