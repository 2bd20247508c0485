"""CSV and manifest writers.

Every number is written with 17 significant digits in exponent form so that
identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    if math.isnan(v):
        return "nan"
    return f"{v:.16e}"


def write_csv(path: Path | str, header: Sequence[str],
              rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def read_csv(path: Path | str) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) if v else np.nan for v in r]
                              for r in rows[1:]])


def write_spectrum(spectrum, directory: Path | str) -> list[Path]:
    d = Path(directory)
    energies = write_csv(d / "energies.csv", ["index", "energy"],
                         ((k + 1, e) for k, e in enumerate(spectrum.energies)))
    header = ["x"] + [f"phi_{k + 1}" for k in range(spectrum.size)]
    states = write_csv(d / "states.csv", header,
                       (np.concatenate(([x], row)) for x, row in
                        zip(spectrum.x, spectrum.states)))
    return [energies, states]


def write_curve(curve, path: Path | str) -> Path:
    return write_csv(path, ["dT", "da_eff", "a_tilde", "leak"],
                     ((p.dT, p.da_eff, p.a_tilde, p.leak) for p in curve.points))


def write_record(result, dT: float, path: Path | str) -> Path:
    return write_csv(path, ["k", "t_k", "a_k", "da_eff_k"],
                     ((k, k * dT, a, d) for k, (a, d) in
                      enumerate(zip(result.results, result.da_eff))))


def write_trace(trace, path: Path | str) -> Path:
    rows = []
    for k, (s, leak) in enumerate(zip(trace.spreads, trace.leaks)):
        a = trace.results[k - 1] if k else float("nan")
        rows.append((k, a, s, leak))
    return write_csv(path, ["k", "a1_k", "indirect_spread_k", "leak_k"], rows)


def write_lg_trials(result, path: Path | str) -> Path:
    header = ["trial", "q1", "q2", "q3", "q1_skip", "q3_skip"]
    rows = (
        (i, int(q[0]), int(q[1]), int(q[2]), int(s[0]), int(s[1]))
        for i, (q, s) in enumerate(zip(result.q, result.q13)))
    return write_csv(path, header, rows)


def file_digest(path: Path | str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def write_json_atomic(data: dict, path: Path | str) -> Path:
    """Write JSON through a temporary file and an atomic rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path
