"""Seeded run output and the versioned per-run CSV format."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
CSV_HEADER = [f"schema={SCHEMA_VERSION}", "run_id", "seed", "t", "instant_regret",
              "cum_regret", "diag_json"]


def canonical_json(obj) -> str:
    """Sorted keys, no whitespace, floats in shortest round-trip form."""
    return json.dumps(_normalize(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def _normalize(obj):
    if isinstance(obj, dict):
        return {str(k): _normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_normalize(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        if value.is_integer() and abs(value) < 2 ** 53:
            return int(value)
        if not math.isfinite(value):
            return repr(value)
        return value
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _normalize(obj.tolist())
    return obj


def fingerprint(config) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()[:16]


@dataclass
class RunRecord:
    run_id: str
    fingerprint: str
    seed: int
    t: list = field(default_factory=list)
    instant_regret: list = field(default_factory=list)
    cum_regret: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    status: str = "complete"
    error: str | None = None
    summary: dict = field(default_factory=dict)

    def append(self, t: int, instant: float, diag: dict | None = None) -> None:
        prev = self.cum_regret[-1] if self.cum_regret else 0.0
        self.t.append(int(t))
        self.instant_regret.append(float(instant))
        self.cum_regret.append(prev + float(instant))
        self.diagnostics.append(diag or {})

    @property
    def final_regret(self) -> float:
        return self.cum_regret[-1] if self.cum_regret else 0.0

    def cum_array(self) -> np.ndarray:
        return np.asarray(self.cum_regret, dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for t, inst, cum, diag in zip(self.t, self.instant_regret, self.cum_regret,
                                      self.diagnostics):
            writer.writerow([SCHEMA_VERSION, self.run_id, self.seed, t, repr(inst), repr(cum),
                             canonical_json(diag)])
        return buf.getvalue()

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv())
        return path


def read_csv(path) -> RunRecord:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    rec = RunRecord(run_id=rows[0][1], fingerprint="", seed=int(rows[0][2]))
    for row in rows:
        rec.t.append(int(row[3]))
        rec.instant_regret.append(float(row[4]))
        rec.cum_regret.append(float(row[5]))
        rec.diagnostics.append(json.loads(row[6]))
    return rec
