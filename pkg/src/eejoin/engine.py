"""A tiny deterministic map/shuffle/reduce runtime.

Jobs run locally (optionally on a thread pool) but are scheduled so that
every observable output — records, counters, metrics — is a pure function
of the job spec.  Task splits are round-robin, the partitioner is a fixed
64-bit FNV-1a hash, reducers sort their partition by record bytes before
grouping, and final output order is ascending by group key.  Work is
accounted in abstract busy units rather than wall time so runs are
comparable across machines and worker counts.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

from .formats import DataFormatError, read_kv, write_kv

METRICS_HEADER = "ee-metrics v1"

#: (key, value) byte pair — everything crossing a job boundary is bytes
KeyedRecord = tuple[bytes, bytes]

MapFn = Callable[[object, Counter], Iterable[KeyedRecord]]
ReduceFn = Callable[[bytes, list[bytes], Counter], Iterable[KeyedRecord]]

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a; the shuffle partitioner and other stable hashes."""
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def partition_for(key: bytes, num_reducers: int) -> int:
    return fnv1a64(key) % num_reducers


def sort_cost(n: int) -> int:
    """Modeled comparison count for sorting ``n`` records: n * ceil(log2 n)."""
    if n <= 1:
        return 0
    return n * math.ceil(math.log2(n))


class JobError(RuntimeError):
    """A map or reduce task failed; carries the task kind and index."""

    def __init__(self, kind: str, index: int, cause: BaseException):
        super().__init__(f"{kind} task {index} failed: {cause}")
        self.kind = kind
        self.index = index
        self.cause = cause


class HotGroupError(RuntimeError):
    """A single reduce key collected more values than the configured cap."""

    def __init__(self, key: bytes, size: int, cap: int):
        super().__init__(
            f"reduce group for key {key!r} has {size} values, cap is {cap}"
        )
        self.key = key
        self.size = size
        self.cap = cap


@dataclass
class JobSpec:
    name: str
    map_fn: MapFn
    inputs: Sequence[object]
    reduce_fn: ReduceFn | None = None
    num_mappers: int = 1
    num_reducers: int = 1
    workers: int | None = None
    max_group_size: int | None = None

    def __post_init__(self) -> None:
        if self.num_mappers < 1:
            raise ValueError("a job needs at least one map task")
        if self.reduce_fn is not None and self.num_reducers < 1:
            raise ValueError("a reduce job needs at least one reduce task")


@dataclass
class JobMetrics:
    name: str
    map_busy: list[int]
    reduce_busy: list[int]
    shuffled_records: int
    sort_comparisons: int
    counters: Counter = field(default_factory=Counter)

    @property
    def wall_clock(self) -> int:
        """Critical-path units: slowest map task plus slowest reduce task."""
        clock = max(self.map_busy, default=0)
        if self.reduce_busy:
            clock += max(self.reduce_busy)
        return clock

    @property
    def total_work(self) -> int:
        return sum(self.map_busy) + sum(self.reduce_busy)

    @property
    def map_skew(self) -> Fraction:
        return measure_skew(self.map_busy)

    @property
    def reduce_skew(self) -> Fraction:
        return measure_skew(self.reduce_busy)


def measure_skew(busy: Sequence[int]) -> Fraction:
    """Max-over-mean load ratio; 1 means perfectly even, 1 for empty input."""
    total = sum(busy)
    if not busy or total == 0:
        return Fraction(1)
    return Fraction(max(busy) * len(busy), total)


def _run_map_task(
    index: int, items: Sequence[object], map_fn: MapFn
) -> tuple[list[tuple[int, KeyedRecord]], int, Counter]:
    counters: Counter = Counter()
    out: list[tuple[int, KeyedRecord]] = []
    busy = 0
    for input_index, item in items:
        busy += 1
        try:
            for rec in map_fn(item, counters):
                out.append((input_index, rec))
                busy += 1
        except Exception as exc:
            raise JobError("map", index, exc) from exc
    return out, busy, counters


def _run_reduce_task(
    index: int,
    records: list[KeyedRecord],
    reduce_fn: ReduceFn,
    max_group_size: int | None,
) -> tuple[list[tuple[bytes, int, KeyedRecord]], int, int, Counter]:
    counters: Counter = Counter()
    records.sort()  # by (key, value) bytes: arrival order can never leak out
    comparisons = sort_cost(len(records))
    busy = len(records) + comparisons
    out: list[tuple[bytes, int, KeyedRecord]] = []
    i = 0
    n = len(records)
    while i < n:
        key = records[i][0]
        j = i
        values: list[bytes] = []
        while j < n and records[j][0] == key:
            values.append(records[j][1])
            j += 1
        if max_group_size is not None and len(values) > max_group_size:
            raise JobError(
                "reduce", index, HotGroupError(key, len(values), max_group_size)
            )
        try:
            for seq, rec in enumerate(reduce_fn(key, values, counters)):
                out.append((key, seq, rec))
                busy += 1
        except JobError:
            raise
        except Exception as exc:
            raise JobError("reduce", index, exc) from exc
        i = j
    return out, busy, comparisons, counters


def run_job(spec: JobSpec) -> tuple[list[KeyedRecord], JobMetrics]:
    """Execute ``spec``; returns (records, metrics), identical for any
    mapper/reducer/worker count up to task-level accounting."""
    indexed = list(enumerate(spec.inputs))
    map_slices = [indexed[i :: spec.num_mappers] for i in range(spec.num_mappers)]

    def run_all(fn, args_list):
        if spec.workers is not None and spec.workers > 1 and len(args_list) > 1:
            with ThreadPoolExecutor(max_workers=spec.workers) as pool:
                return list(pool.map(lambda a: fn(*a), args_list))
        return [fn(*a) for a in args_list]

    map_results = run_all(
        _run_map_task, [(i, chunk, spec.map_fn) for i, chunk in enumerate(map_slices)]
    )
    map_busy = [busy for _, busy, _ in map_results]
    counters: Counter = Counter()
    for _, _, c in map_results:
        counters.update(c)

    if spec.reduce_fn is None:
        tagged = [rec for out, _, _ in map_results for rec in out]
        tagged.sort(key=lambda t: t[0])
        metrics = JobMetrics(spec.name, map_busy, [], 0, 0, counters)
        return [rec for _, rec in tagged], metrics

    partitions: list[list[KeyedRecord]] = [[] for _ in range(spec.num_reducers)]
    shuffled = 0
    route: dict[bytes, list[KeyedRecord]] = {}  # keys repeat; hash each once
    for out, _, _ in map_results:
        for _, rec in out:
            dest = route.get(rec[0])
            if dest is None:
                dest = partitions[partition_for(rec[0], spec.num_reducers)]
                route[rec[0]] = dest
            dest.append(rec)
            shuffled += 1

    reduce_results = run_all(
        _run_reduce_task,
        [
            (j, part, spec.reduce_fn, spec.max_group_size)
            for j, part in enumerate(partitions)
        ],
    )
    reduce_busy = [busy for _, busy, _, _ in reduce_results]
    comparisons = sum(comp for _, _, comp, _ in reduce_results)
    for _, _, _, c in reduce_results:
        counters.update(c)

    merged = [entry for out, _, _, _ in reduce_results for entry in out]
    merged.sort(key=lambda t: (t[0], t[1]))
    metrics = JobMetrics(spec.name, map_busy, reduce_busy, shuffled, comparisons, counters)
    return [rec for _, _, rec in merged], metrics


def write_metrics(path, metrics: JobMetrics) -> None:
    pairs: list[tuple[str, str]] = [
        ("name", metrics.name),
        ("mapTasks", str(len(metrics.map_busy))),
        ("reduceTasks", str(len(metrics.reduce_busy))),
        ("mapBusy", ",".join(str(b) for b in metrics.map_busy)),
        ("reduceBusy", ",".join(str(b) for b in metrics.reduce_busy)),
        ("wallClock", str(metrics.wall_clock)),
        ("totalWork", str(metrics.total_work)),
        ("shuffledRecords", str(metrics.shuffled_records)),
        ("sortComparisons", str(metrics.sort_comparisons)),
    ]
    for name in sorted(metrics.counters):
        pairs.append((f"counter:{name}", str(metrics.counters[name])))
    write_kv(path, METRICS_HEADER, pairs)


def read_metrics(path) -> JobMetrics:
    meta: dict[str, str] = {}
    counters: Counter = Counter()
    for key, value in read_kv(path, METRICS_HEADER):
        if key.startswith("counter:"):
            counters[key[len("counter:") :]] = int(value)
        else:
            meta[key] = value
    try:
        def busy_list(text: str) -> list[int]:
            return [int(b) for b in text.split(",") if b]

        return JobMetrics(
            name=meta["name"],
            map_busy=busy_list(meta["mapBusy"]),
            reduce_busy=busy_list(meta["reduceBusy"]),
            shuffled_records=int(meta["shuffledRecords"]),
            sort_comparisons=int(meta["sortComparisons"]),
            counters=counters,
        )
    except (KeyError, ValueError) as exc:
        raise DataFormatError(path, None, f"bad metrics file: {exc}") from exc


def resolve_workers(requested: int | None, env: dict | None = None) -> int:
    """Worker count: explicit flag, then EE_WORKERS, then 1 (serial)."""
    import os

    if requested is not None:
        if requested < 1:
            raise ValueError("worker count must be at least 1")
        return requested
    raw = (env if env is not None else os.environ).get("EE_WORKERS")
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError as exc:
        raise ValueError(f"EE_WORKERS must be an integer, got {raw!r}") from exc
    if value < 1:
        raise ValueError("EE_WORKERS must be at least 1")
    return value
