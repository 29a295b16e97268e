"""Append-only JSON-lines run store."""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from chordlab.errors import StoreCorrupt

METRICS = ("accuracy", "perplexity", "similarity")
DEFAULT_STORE = "runs.jsonl"
_CROCKFORD = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"
_write_lock = threading.Lock()


def new_ulid(timestamp_ms=None):
    """26-character ULID: 48-bit millisecond time + 80 random bits, Crockford base32."""
    ts = int(time.time() * 1000) if timestamp_ms is None else int(timestamp_ms)
    value = (ts << 80) | int.from_bytes(os.urandom(10), "big")
    chars = []
    for _ in range(26):
        chars.append(_CROCKFORD[value & 31])
        value >>= 5
    return "".join(reversed(chars))


@dataclass
class RunRecord:
    kind: str
    hyperparams: dict
    folds: list
    seed: int
    k: int
    dataset: str = "corpus"
    status: str = "ok"
    run_id: str = field(default_factory=new_ulid)
    mean: dict = field(default_factory=dict)
    std: dict = field(default_factory=dict)
    wall_time: float = 0.0
    checkpoints: list = field(default_factory=list)
    trial: int | None = None
    error: str | None = None

    def aggregate(self):
        """Fill ``mean``/``std`` from the per-fold metrics."""
        ok = [f for f in self.folds if f.get("status", "ok") == "ok"]
        self.mean, self.std = {}, {}
        if ok:
            for m in METRICS:
                vals = np.array([f[m] for f in ok], dtype=np.float64)
                self.mean[m] = float(np.mean(vals))
                self.std[m] = float(np.std(vals))
        if len(ok) != len(self.folds) or len(self.folds) != self.k:
            self.status = "failed"
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)


def default_store_path():
    return Path(os.environ.get("CHORDLAB_STORE", DEFAULT_STORE))


def record_run(record, store_path=None):
    """Append ``record`` as one line to the store (created if missing)."""
    path = Path(store_path) if store_path is not None else default_store_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    line = json.dumps(record.to_dict(), sort_keys=True)
    with _write_lock, open(path, "a", encoding="utf-8") as fh:
        fh.write(line + "\n")
        fh.flush()
    return path


def list_runs(store_path=None, kind=None, dataset=None, status=None):
    """Read records back, optionally filtered by model kind, dataset tag or status."""
    path = Path(store_path) if store_path is not None else default_store_path()
    if not path.exists():
        return []
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = RunRecord.from_dict(json.loads(line))
            except (json.JSONDecodeError, TypeError) as exc:
                raise StoreCorrupt(f"{path}: malformed record ({exc})", lineno) from None
            if kind is not None and rec.kind != kind:
                continue
            if dataset is not None and rec.dataset != dataset:
                continue
            if status is not None and rec.status != status:
                continue
            out.append(rec)
    return out
