"""Local multi-worker MapReduce runtime.

A job is map -> shuffle -> reduce over an in-process worker pool. The engine
enforces the MapReduce contract: user functions communicate only through the
shuffle, the broadcast store, and accumulators; no reducer starts before all
mappers finish. Output is deterministic for any worker count: map emissions
are collected in task order, shuffle groups are sorted by key, and values
within a group are sorted by their serialized form before reduction.

Shuffle volume is measured by really serializing every mapper-emitted record
(pickle protocol 5), so byte counts are comparable across shard strategies.
"""

from __future__ import annotations

import pickle
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from operator import itemgetter
from typing import Any, Callable, Iterable, NamedTuple

__all__ = [
    "KeyedRecord",
    "JobSpec",
    "JobMetrics",
    "Accumulator",
    "BroadcastStore",
    "JobError",
    "BroadcastError",
    "run_job",
    "chain",
    "broadcast",
    "current_worker",
    "serialize_record",
    "METRICS_CSV_HEADER",
]


class KeyedRecord(NamedTuple):
    key: Any
    value: Any


class JobError(RuntimeError):
    """A user function raised; carries the stage and the failing key/record."""

    def __init__(self, stage, key, cause):
        super().__init__(f"{stage} failed on key {key!r}: {cause!r}")
        self.stage = stage
        self.key = key
        self.cause = cause


class BroadcastError(RuntimeError):
    pass


class Accumulator:
    """Thread-safe counter for user functions to report scalar work."""

    def __init__(self):
        self._n = 0
        self._lock = threading.Lock()

    def add(self, n=1):
        with self._lock:
            self._n += int(n)

    @property
    def value(self):
        return self._n


class BroadcastStore:
    """Write-once named payloads visible identically to every worker.

    A name may be written once per epoch; new_epoch() starts the next
    iteration's epoch and allows the same name to be replaced, which is how
    per-iteration re-broadcast works. clear(name) drops a payload entirely.
    """

    def __init__(self):
        self._values = {}
        self._written_this_epoch = set()
        self._epoch = 0
        self._lock = threading.Lock()

    @property
    def epoch(self):
        return self._epoch

    def put(self, name, payload):
        with self._lock:
            if name in self._written_this_epoch:
                raise BroadcastError(f"name {name!r} already broadcast in epoch {self._epoch}")
            self._written_this_epoch.add(name)
            self._values[name] = payload

    def get(self, name):
        try:
            return self._values[name]
        except KeyError:
            raise BroadcastError(f"no broadcast payload named {name!r}") from None

    def clear(self, name):
        with self._lock:
            self._values.pop(name, None)
            self._written_this_epoch.discard(name)

    def new_epoch(self):
        with self._lock:
            self._epoch += 1
            self._written_this_epoch.clear()


def broadcast(store: BroadcastStore, name, payload) -> None:
    """Publish a read-only payload to all workers under a unique name."""
    store.put(name, payload)


@dataclass
class JobSpec:
    """One map-shuffle-reduce stage.

    mapper(record) and reducer(key, values) must be deterministic pure
    functions returning iterables of (key, value) pairs; shard_fn places each
    key group on a worker in [0, workers). map_affinity optionally pins input
    records to the worker where they already reside (modeling data locality
    from a previous stage); by default input is split into contiguous chunks.
    """

    mapper: Callable[[Any], Iterable[tuple]]
    reducer: Callable[[Any, list], Iterable[tuple]]
    shard_fn: Callable[[Any], int]
    workers: int = 1
    name: str = "job"
    ops: Accumulator | None = None
    map_affinity: Callable[[Any], int] | None = None
    # Run tasks on real threads only when their work is coarse enough to
    # amortize GIL handoffs; False executes tasks one at a time with the same
    # worker placement, metrics, and output. reduce_parallel overrides the
    # choice for the reduce phase (None inherits), since a job may have chunky
    # map tasks but fine-grained reducers.
    parallel: bool = True
    reduce_parallel: bool | None = None


@dataclass
class JobMetrics:
    """Measured per-stage quantities; timings in milliseconds."""

    stage: str
    workers: int
    shuffle_bytes: int = 0
    cross_worker_bytes: int = 0
    records_per_worker: list = field(default_factory=list)
    map_ms: float = 0.0
    shuffle_ms: float = 0.0
    reduce_ms: float = 0.0
    scalar_ops: int = 0

    def to_csv_row(self):
        return (f"{self.stage},{self.shuffle_bytes},{self.map_ms:.3f},"
                f"{self.shuffle_ms:.3f},{self.reduce_ms:.3f},{self.scalar_ops},{self.workers}")


METRICS_CSV_HEADER = "stage,shuffle_bytes,map_ms,shuffle_ms,reduce_ms,scalar_ops,workers"

_worker_ctx = threading.local()


def current_worker():
    """Index of the worker running the current map/reduce task, else None."""
    return getattr(_worker_ctx, "worker", None)


def serialize_record(key, value) -> bytes:
    """The instrumented shuffle serializer; shuffle_bytes sums its output sizes."""
    return pickle.dumps((key, value), protocol=5)


def _map_task(worker, chunk, mapper, stage):
    _worker_ctx.worker = worker
    out = []
    append = out.append
    try:
        for rec in chunk:
            try:
                emitted = mapper(rec)
            except Exception as exc:
                raise JobError(f"{stage}/map", rec, exc) from exc
            if emitted:
                for key, value in emitted:
                    append((serialize_record(key, value), key, value))
    finally:
        _worker_ctx.worker = None
    return out


def _reduce_task(worker, keys, groups, reducer, stage):
    _worker_ctx.worker = worker
    results = {}
    try:
        for key in keys:
            try:
                out = list(reducer(key, groups[key]))
            except Exception as exc:
                raise JobError(f"{stage}/reduce", key, exc) from exc
            results[key] = out
    finally:
        _worker_ctx.worker = None
    return results


def _run_tasks(task_fn, n_workers, args_per_worker, parallel):
    if n_workers == 1 or not parallel:
        return [task_fn(w, *args_per_worker[w]) for w in range(n_workers)]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        futures = [pool.submit(task_fn, w, *args_per_worker[w]) for w in range(n_workers)]
        return [f.result() for f in futures]


def run_job(spec: JobSpec, records) -> tuple[list[KeyedRecord], JobMetrics]:
    """Execute one job; returns key-sorted output and stage metrics.

    The output equals the sequential reference semantics (map everything,
    group by key, reduce each group in key order) for every worker count.
    """
    if spec.workers < 1:
        raise ValueError("workers must be >= 1")
    records = records if isinstance(records, list) else list(records)
    nw = spec.workers
    ops_before = spec.ops.value if spec.ops is not None else 0

    t0 = time.perf_counter()
    if spec.map_affinity is not None:
        chunks = [[] for _ in range(nw)]
        for rec in records:
            w = spec.map_affinity(rec)
            if not 0 <= w < nw:
                raise JobError(f"{spec.name}/map", rec, ValueError(f"affinity {w} outside 0..{nw - 1}"))
            chunks[w].append(rec)
    else:
        bounds = [len(records) * w // nw for w in range(nw + 1)]
        chunks = [records[bounds[w]:bounds[w + 1]] for w in range(nw)]
    map_out = _run_tasks(_map_task, nw, [(chunks[w], spec.mapper, spec.name) for w in range(nw)],
                         spec.parallel)
    t1 = time.perf_counter()

    # Shuffle: group by key, tracking bytes and which records change workers.
    groups: dict[Any, list] = {}
    shuffle_bytes = 0
    for src_worker, out in enumerate(map_out):
        for blob, key, value in out:
            shuffle_bytes += len(blob)
            bucket = groups.get(key)
            if bucket is None:
                bucket = groups[key] = []
            bucket.append((blob, src_worker, value))
    ordered_keys = sorted(groups)
    cross_worker_bytes = 0
    worker_keys = [[] for _ in range(nw)]
    records_per_worker = [0] * nw
    for key in ordered_keys:
        dest = spec.shard_fn(key)
        if not 0 <= dest < nw:
            raise JobError(f"{spec.name}/shuffle", key, ValueError(f"shard {dest} outside 0..{nw - 1}"))
        worker_keys[dest].append(key)
        bucket = groups[key]
        records_per_worker[dest] += len(bucket)
        bucket.sort(key=itemgetter(0))
        cross_worker_bytes += sum(len(blob) for blob, src, _ in bucket if src != dest)
        groups[key] = [value for _, _, value in bucket]
    t2 = time.perf_counter()

    reduce_out = _run_tasks(
        _reduce_task, nw,
        [(worker_keys[w], groups, spec.reducer, spec.name) for w in range(nw)],
        spec.parallel if spec.reduce_parallel is None else spec.reduce_parallel)
    by_key = {}
    for part in reduce_out:
        by_key.update(part)
    output = [KeyedRecord(k, v) for key in ordered_keys for k, v in by_key[key]]
    t3 = time.perf_counter()

    metrics = JobMetrics(
        stage=spec.name,
        workers=nw,
        shuffle_bytes=shuffle_bytes,
        cross_worker_bytes=cross_worker_bytes,
        records_per_worker=records_per_worker,
        map_ms=(t1 - t0) * 1e3,
        shuffle_ms=(t2 - t1) * 1e3,
        reduce_ms=(t3 - t2) * 1e3,
        scalar_ops=(spec.ops.value - ops_before) if spec.ops is not None else 0,
    )
    return output, metrics


def chain(jobs, records) -> tuple[list[KeyedRecord], list[JobMetrics]]:
    """Run jobs in sequence, feeding each job's output to the next."""
    jobs = list(jobs)
    if not jobs:
        raise ValueError("chain requires at least one job")
    metrics = []
    out = records
    for spec in jobs:
        out, m = run_job(spec, out)
        metrics.append(m)
    return out, metrics
