"""Replicate scheduling, deterministic merging and checkpointing.

Replicates are pure functions of (master seed, replicate index); the stream
seed for index i is the injective pair (master_seed << 64) | i.  Statistics
are merged over a fixed pairwise tree in index order, so the result is
bit-identical for any worker count.
"""

from __future__ import annotations

import os
import struct
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import RwrpError, ValidationError

_RECORD = struct.Struct("<Qd")
_RECORD_CRC = struct.Struct("<QdI")


def stream_seed(master_seed: int, index: int) -> int:
    """Injective (master seed, replicate index) -> stream seed."""
    if master_seed < 0 or index < 0:
        raise ValidationError("master seed and replicate index must be nonnegative")
    return (master_seed << 64) | index


def default_workers() -> int:
    env = os.environ.get("RWRP_DEFAULT_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"RWRP_DEFAULT_WORKERS={env!r} is not an integer")
    return 1


@dataclass(frozen=True)
class RunPlan:
    experiment_id: str
    estimator: str
    replicates: int
    master_seed: int
    workers: int | None = None
    checkpoint_every: int = 0
    checkpoint_path: str | None = None


@dataclass
class StreamingStats:
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    min: float = np.inf
    max: float = -np.inf

    @classmethod
    def from_value(cls, x: float) -> "StreamingStats":
        return cls(count=1, mean=float(x), m2=0.0, min=float(x), max=float(x))

    def merge(self, other: "StreamingStats") -> "StreamingStats":
        if self.count == 0:
            return other
        if other.count == 0:
            return self
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        m2 = self.m2 + other.m2 + delta * delta * (self.count * other.count / n)
        return StreamingStats(
            count=n, mean=mean, m2=m2, min=min(self.min, other.min), max=max(self.max, other.max)
        )

    @property
    def variance(self) -> float:
        if self.count < 2:
            return 0.0
        return self.m2 / (self.count - 1)

    @property
    def std_error_of_mean(self) -> float:
        if self.count < 2:
            return 0.0
        return float(np.sqrt(self.variance / self.count))


def tree_stats(values) -> StreamingStats:
    """Merge per-replicate values over a fixed pairwise tree in index order."""
    layer = [StreamingStats.from_value(v) for v in np.asarray(values, dtype=np.float64)]
    if not layer:
        return StreamingStats()
    while len(layer) > 1:
        nxt = []
        for i in range(0, len(layer) - 1, 2):
            nxt.append(layer[i].merge(layer[i + 1]))
        if len(layer) % 2:
            nxt.append(layer[-1])
        layer = nxt
    return layer[0]


def tree_sum(values) -> float:
    """Pairwise sum in fixed index order (deterministic merge of weights)."""
    arr = np.array(values, dtype=np.float64)  # copy: the reduction is in place
    n = arr.size
    if n == 0:
        return 0.0
    while n > 1:
        half = n // 2
        arr[:half] = arr[:half] + arr[half : 2 * half]
        if n % 2:
            arr[half] = arr[2 * half]
            n = half + 1
        else:
            n = half
    return float(arr[0])


def _write_checkpoint(path, records):
    with open(path, "ab") as fh:
        for index, value in records:
            payload = _RECORD.pack(index, value)
            fh.write(payload + struct.pack("<I", zlib.crc32(payload)))


def load_checkpoint(path) -> dict:
    """Read back (index, value) records, skipping a torn tail record."""
    done = {}
    if not path or not os.path.exists(path):
        return done
    with open(path, "rb") as fh:
        data = fh.read()
    off = 0
    while off + _RECORD_CRC.size <= len(data):
        index, value, crc = _RECORD_CRC.unpack_from(data, off)
        if zlib.crc32(data[off : off + _RECORD.size]) != crc:
            break
        done[index] = value
        off += _RECORD_CRC.size
    return done


def run(plan: RunPlan, task) -> StreamingStats:
    """Evaluate task(index, stream_seed) for every replicate and merge.

    Raises with the replicate index and stream seed on task failure so the
    replicate can be replayed in isolation.
    """
    if plan.replicates < 1:
        raise ValidationError("replicate count must be >= 1")
    values = np.full(plan.replicates, np.nan)
    done = load_checkpoint(plan.checkpoint_path) if plan.checkpoint_path else {}
    pending = []
    for i in range(plan.replicates):
        if i in done:
            values[i] = done[i]
        else:
            pending.append(i)

    def evaluate(i):
        seed = stream_seed(plan.master_seed, i)
        try:
            return i, float(task(i, seed))
        except Exception as exc:
            raise RwrpError(
                f"replicate {i} (stream seed {seed}) of {plan.experiment_id!r} failed: {exc}"
            ) from exc

    workers = plan.workers or default_workers()
    fresh = []
    if workers <= 1 or len(pending) <= 1:
        results = map(evaluate, pending)
    else:
        pool = ThreadPoolExecutor(max_workers=workers)
        results = pool.map(evaluate, pending)
    buffer = []
    for i, value in results:
        values[i] = value
        buffer.append((i, value))
        fresh.append(i)
        if plan.checkpoint_path and plan.checkpoint_every and len(buffer) >= plan.checkpoint_every:
            _write_checkpoint(plan.checkpoint_path, buffer)
            buffer = []
    if plan.checkpoint_path and buffer:
        _write_checkpoint(plan.checkpoint_path, buffer)
    if workers > 1 and len(pending) > 1:
        pool.shutdown()
    return tree_stats(values)
