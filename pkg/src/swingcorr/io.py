"""File formats: time-series CSV, response CSV, flat config files, run manifests."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .simulate import TimeSeries


class FormatError(ValueError):
    pass


def _fmt_time(t: float) -> str:
    s = f"{t:.6f}"
    return "0.000000" if s == "-0.000000" else s


def _fmt_val(v: float) -> str:
    return f"{v:.8e}"


def sanitize(label: str) -> str:
    """``gen:2:freq`` -> ``gen_2_freq`` (ids never contain ``_``)."""
    return label.replace(":", "_")


def unsanitize(name: str) -> str:
    return name.replace("_", ":")


def write_timeseries(path, ts: TimeSeries) -> Path:
    path = Path(path)
    lines = [f"time,{ts.label}"]
    lines += [f"{_fmt_time(t)},{_fmt_val(v)}" for t, v in zip(ts.times, ts.samples)]
    path.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
    return path


def read_timeseries(path) -> TimeSeries:
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) != 2 or rows[0][0] != "time":
        raise FormatError(f"{path}: expected header 'time,<channel>'")
    try:
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if len(data) < 2:
        raise FormatError(f"{path}: need at least two samples")
    step = np.diff(data[:, 0])
    ts = float(np.round(step.mean(), 9))
    if np.abs(step - ts).max() > 2e-6:
        raise FormatError(f"{path}: time column is not uniformly sampled")
    return TimeSeries(rows[0][1], ts, data[:, 1], float(data[0, 0]))


def response_filename(source: str, target: str, kind: str) -> str:
    src = source.split(":")[1] if ":" in source else source
    return f"src-{src}__{sanitize(target)}__{kind}.csv"


def parse_response_filename(name: str) -> tuple[str, str, str]:
    stem = name[:-4] if name.endswith(".csv") else name
    parts = stem.split("__")
    if len(parts) != 3 or not parts[0].startswith("src-"):
        raise FormatError(f"not a response file name: {name}")
    return f"gen:{parts[0][4:]}", unsanitize(parts[1]), parts[2]


def write_response(path, lags, values, physical=None) -> Path:
    path = Path(path)
    header = "lag,value" + (",physical" if physical is not None else "")
    lines = [header]
    for i, (t, v) in enumerate(zip(lags, values)):
        row = f"{_fmt_time(t)},{_fmt_val(v)}"
        if physical is not None:
            row += f",{_fmt_val(physical[i])}"
        lines.append(row)
    path.write_bytes(("\n".join(lines) + "\n").encode("utf-8"))
    return path


def read_response(path):
    """Return ``(lags, values, physical_or_None)``."""
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["lag", "value"]:
        raise FormatError(f"{path}: expected header 'lag,value[,physical]'")
    try:
        data = np.array([[float(x) for x in r] for r in rows[1:]])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    phys = data[:, 2] if len(rows[0]) == 3 else None
    return data[:, 0], data[:, 1], phys


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment; keys use ``-`` or ``_``."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise FormatError(f"{path}:{lineno}: empty key")
        out[key.replace("-", "_")] = val
    return out


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def write_manifest(path, config: dict, files) -> Path:
    path = Path(path)
    doc = {"config": config, "config_hash": config_hash(config), "files": sorted(files)}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n",
                    encoding="utf-8")
    return path
