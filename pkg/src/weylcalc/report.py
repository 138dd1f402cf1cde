"""Report envelopes, JSON/CSV writers and the output-directory lock."""
from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import os
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError

EXIT_PASS, EXIT_USAGE, EXIT_FAIL, EXIT_INCONCLUSIVE = 0, 1, 2, 3
STATUS = {EXIT_PASS: "pass", EXIT_FAIL: "fail", EXIT_INCONCLUSIVE: "inconclusive"}
LOCK_NAME = ".weylcalc.lock"


def to_jsonable(obj):
    """Plain JSON types; non-finite floats become the strings "inf", "-inf", "nan"."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, complex):
        return {"re": to_jsonable(obj.real), "im": to_jsonable(obj.imag)}
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2)


@dataclass
class ReportEnvelope:
    command: str
    config_hash: str
    body: dict
    exit_code: int
    timestamp: str = ""
    tool: str = "weylcalc"
    version: str = __version__

    def __post_init__(self):
        if not self.timestamp:
            self.timestamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")

    @property
    def status(self) -> str:
        return STATUS.get(self.exit_code, "error")

    def to_dict(self) -> dict:
        return {"tool": self.tool, "version": self.version, "config_hash": self.config_hash,
                "command": self.command, "timestamp": self.timestamp,
                "body": self.body, "summary": {"status": self.status, "exit_code": self.exit_code}}

    def body_json(self) -> str:
        return dumps(self.body)


def write_json(path: Path, obj) -> Path:
    path.write_text(dumps(obj) + "\n", encoding="utf-8")
    return path


def write_csv(path: Path, header: list, rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return path


def sigma_rows(tables: dict):
    """(truncation, k, sigma) rows, k 1-based."""
    for N in sorted(tables):
        for k, s in enumerate(tables[N], start=1):
            yield N, k, float(s)


@contextmanager
def locked(out_dir: Path):
    """Exclusive lockfile in the output directory for the duration of a command."""
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(f"output directory {out_dir} is locked by another run ({lock})") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield out_dir
    finally:
        try:
            lock.unlink()
        except FileNotFoundError:
            pass
