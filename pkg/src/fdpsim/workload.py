"""Request streams: synthetic Zipf key-value workloads and CSV trace replay."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from itertools import islice
from pathlib import Path
from typing import IO, Iterable, Iterator, NamedTuple

import numpy as np

log = logging.getLogger(__name__)

MAX_TABLE_ENTRIES = 50_000_000
_CHUNK = 1 << 15


class Op(str, Enum):
    GET = "GET"
    SET = "SET"
    DELETE = "DELETE"


class CacheRequest(NamedTuple):
    op: Op
    key: int
    value_size_bytes: int


class WorkloadError(ValueError):
    pass


@dataclass(frozen=True)
class LogUniform:
    lo: int
    hi: int

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.lo == self.hi:
            return np.full(n, self.lo, dtype=np.int64)
        u = rng.uniform(np.log(self.lo), np.log(self.hi), n)
        return np.clip(np.rint(np.exp(u)), self.lo, self.hi).astype(np.int64)

    @property
    def min(self) -> int:
        return self.lo

    @property
    def max(self) -> int:
        return self.hi


@dataclass(frozen=True)
class Discrete:
    sizes: tuple[int, ...]
    weights: tuple[float, ...] | None = None

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        p = None
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            p = w / w.sum()
        return rng.choice(np.asarray(self.sizes, dtype=np.int64), size=n, p=p)

    @property
    def min(self) -> int:
        return min(self.sizes)

    @property
    def max(self) -> int:
        return max(self.sizes)


SizeDist = LogUniform | Discrete


def size_dist_from(obj) -> SizeDist:
    if isinstance(obj, (LogUniform, Discrete)):
        return obj
    if isinstance(obj, dict):
        if "sizes" in obj:
            w = obj.get("weights")
            return Discrete(tuple(obj["sizes"]), None if w is None else tuple(w))
        return LogUniform(int(obj["lo"]), int(obj["hi"]))
    lo, hi = obj
    return LogUniform(int(lo), int(hi))


@dataclass(frozen=True)
class SyntheticSpec:
    num_keys: int = 1_000_000
    zipf_alpha: float = 0.9
    get_fraction: float = 0.8
    small_size_dist: SizeDist = LogUniform(100, 2000)
    large_size_dist: SizeDist = LogUniform(4096, 256 * 1024)
    small_object_op_fraction: float = 0.9
    total_ops: int | None = None  # None: unbounded
    seed: int = 0
    # share of num_keys in the small class; defaults to small_object_op_fraction
    small_key_fraction: float | None = None
    small_item_threshold: int = 2048
    strip_gets: bool = False

    def __post_init__(self):
        for name in ("small_size_dist", "large_size_dist"):
            object.__setattr__(self, name, size_dist_from(getattr(self, name)))

    def validate(self) -> None:
        for name in ("get_fraction", "small_object_op_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise WorkloadError(f"{name} must lie in [0, 1]")
        if self.zipf_alpha < 0:
            raise WorkloadError("zipf_alpha must be >= 0")
        if self.num_keys <= 0:
            raise WorkloadError("num_keys must be positive")
        if self.num_keys > MAX_TABLE_ENTRIES:
            raise WorkloadError(
                f"num_keys={self.num_keys} needs a popularity table larger than "
                f"{MAX_TABLE_ENTRIES} entries; use a smaller desk-scale key space"
            )
        if self.small_size_dist.min <= 0 or self.large_size_dist.min <= 0:
            raise WorkloadError("sizes must be positive")
        if self.small_size_dist.max > self.small_item_threshold:
            raise WorkloadError("small sizes must not exceed the small-item threshold")
        if self.large_size_dist.min <= self.small_item_threshold:
            raise WorkloadError("large sizes must exceed the small-item threshold")

    @property
    def num_small_keys(self) -> int:
        frac = self.small_object_op_fraction if self.small_key_fraction is None else self.small_key_fraction
        n = int(round(self.num_keys * frac))
        if frac > 0 and n == 0:
            n = 1
        if frac < 1 and n == self.num_keys:
            n -= 1
        return n

    def with_overrides(self, **kw) -> "SyntheticSpec":
        for k in ("small_size_dist", "large_size_dist"):
            if k in kw:
                kw[k] = size_dist_from(kw[k])
        return replace(self, **kw)


class ZipfSampler:
    """Inverse-CDF sampling of ranks 0..n-1 with P(rank r) proportional to (r+1)^-alpha."""

    def __init__(self, n: int, alpha: float):
        if n > MAX_TABLE_ENTRIES:
            raise WorkloadError(f"Zipf table of {n} entries is too large")
        self.n = n
        self.alpha = alpha
        if alpha == 0:
            self.cdf = None
        else:
            w = np.arange(1, n + 1, dtype=np.float64) ** -alpha
            cdf = np.cumsum(w)
            self.cdf = cdf / cdf[-1]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.cdf is None:
            return rng.integers(0, self.n, size)
        idx = np.searchsorted(self.cdf, rng.random(size), side="right")
        return np.minimum(idx, self.n - 1)


def gen_synthetic(spec: SyntheticSpec) -> Iterator[CacheRequest]:
    """Deterministic request stream for ``spec``; each key keeps one size for its lifetime."""
    spec.validate()
    rng_sizes = np.random.default_rng([spec.seed, 1])
    rng = np.random.default_rng([spec.seed, 2])
    n_small = spec.num_small_keys
    n_large = spec.num_keys - n_small
    small_sizes = spec.small_size_dist.sample(rng_sizes, n_small) if n_small else None
    large_sizes = spec.large_size_dist.sample(rng_sizes, n_large) if n_large else None
    zs = ZipfSampler(n_small, spec.zipf_alpha) if n_small else None
    zl = ZipfSampler(n_large, spec.zipf_alpha) if n_large else None
    f_small = spec.small_object_op_fraction if n_large else 1.0
    if not n_small:
        f_small = 0.0
    get_frac = 0.0 if spec.strip_gets else spec.get_fraction

    remaining = spec.total_ops
    GET, SET = Op.GET, Op.SET
    while remaining is None or remaining > 0:
        n = _CHUNK if remaining is None else min(_CHUNK, remaining)
        is_small = rng.random(n) < f_small
        is_get = rng.random(n) < spec.get_fraction
        keys = np.empty(n, dtype=np.int64)
        sizes = np.empty(n, dtype=np.int64)
        ns = int(is_small.sum())
        if ns:
            r = zs.sample(rng, ns)
            keys[is_small] = r
            sizes[is_small] = small_sizes[r]
        if n - ns:
            r = zl.sample(rng, n - ns)
            keys[~is_small] = r + n_small
            sizes[~is_small] = large_sizes[r]
        if get_frac == 0.0:
            keep = ~is_get if spec.strip_gets else np.ones(n, dtype=bool)
            for k, s in zip(keys[keep].tolist(), sizes[keep].tolist()):
                yield CacheRequest(SET, k, s)
        else:
            for g, k, s in zip(is_get.tolist(), keys.tolist(), sizes.tolist()):
                yield CacheRequest(GET, k, 0) if g else CacheRequest(SET, k, s)
        if remaining is not None:
            remaining -= n


def key_size_table(spec: SyntheticSpec) -> tuple[int, np.ndarray]:
    """(num_small_keys, size per key id) exactly as gen_synthetic draws them."""
    rng_sizes = np.random.default_rng([spec.seed, 1])
    n_small = spec.num_small_keys
    parts = []
    if n_small:
        parts.append(spec.small_size_dist.sample(rng_sizes, n_small))
    if spec.num_keys - n_small:
        parts.append(spec.large_size_dist.sample(rng_sizes, spec.num_keys - n_small))
    return n_small, np.concatenate(parts)


def strip_gets(stream: Iterable[CacheRequest]) -> Iterator[CacheRequest]:
    for req in stream:
        if req.op is not Op.GET:
            yield req


PROFILES: dict[str, SyntheticSpec] = {
    # read-intensive, GET:SET = 4:1
    "kv-cache": SyntheticSpec(get_fraction=0.8, zipf_alpha=0.9, small_object_op_fraction=0.92),
    # the same stream with its GETs removed
    "kv-cache-wo": SyntheticSpec(get_fraction=0.8, zipf_alpha=0.9, small_object_op_fraction=0.92, strip_gets=True),
    # write-intensive, SET:GET = 4:1
    "twitter-c12": SyntheticSpec(get_fraction=0.2, zipf_alpha=0.8, small_object_op_fraction=0.92),
    # appendix-model regime: uniform keys, SETs only
    "uniform-soc": SyntheticSpec(get_fraction=0.0, zipf_alpha=0.0, small_object_op_fraction=0.92),
}


def profile(name: str, **overrides) -> SyntheticSpec:
    try:
        base = PROFILES[name]
    except KeyError:
        raise WorkloadError(f"unknown workload profile {name!r}; known: {sorted(PROFILES)}") from None
    return base.with_overrides(**overrides) if overrides else base


# -- trace replay -----------------------------------------------------------


@dataclass
class TraceStats:
    rows: int = 0
    malformed: int = 0
    comments: int = 0
    unsupported_ops: dict[str, int] = field(default_factory=dict)


class TraceError(ValueError):
    pass


_OPS = {"GET": Op.GET, "SET": Op.SET, "DELETE": Op.DELETE}


def _parse_row(line: str) -> CacheRequest | None:
    parts = line.split(",")
    if len(parts) != 3:
        return None
    op = _OPS.get(parts[0].strip().upper())
    if op is None:
        return None
    try:
        key = int(parts[1])
        size = int(parts[2])
    except ValueError:
        return None
    if key < 0 or key >= 1 << 64 or size < 0:
        return None
    if op is Op.SET and size == 0:
        return None
    return CacheRequest(op, key, size)


def parse_trace(
    source: str | Path | IO[str] | Iterable[str],
    stats: TraceStats | None = None,
    max_malformed_fraction: float = 0.10,
    min_rows_for_abort: int = 20,
) -> Iterator[CacheRequest]:
    """Yield requests from ``OP,KEY,SIZE`` lines, skipping and counting bad rows.

    Aborts with :class:`TraceError` once more than ``max_malformed_fraction``
    of the rows seen are malformed (checked after ``min_rows_for_abort`` rows
    and again at end of input).
    """
    stats = stats if stats is not None else TraceStats()
    if isinstance(source, (str, Path)):
        try:
            fh = open(source, encoding="utf-8")
        except OSError as exc:
            raise TraceError(f"cannot read trace {source}: {exc}") from exc
        close = True
    else:
        fh, close = source, False
    try:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                stats.comments += 1
                continue
            stats.rows += 1
            req = _parse_row(line)
            if req is None:
                stats.malformed += 1
                op = line.split(",", 1)[0].strip().upper()
                if op and op not in _OPS:
                    stats.unsupported_ops[op] = stats.unsupported_ops.get(op, 0) + 1
                if stats.rows >= min_rows_for_abort and stats.malformed > max_malformed_fraction * stats.rows:
                    raise TraceError(
                        f"{stats.malformed} of {stats.rows} trace rows malformed "
                        f"(> {max_malformed_fraction:.0%}); unsupported ops: {stats.unsupported_ops}"
                    )
                continue
            yield req
        if stats.rows and stats.malformed > max_malformed_fraction * stats.rows:
            raise TraceError(f"{stats.malformed} of {stats.rows} trace rows malformed")
        if stats.malformed:
            log.warning("skipped %d malformed trace rows of %d", stats.malformed, stats.rows)
    finally:
        if close:
            fh.close()


def write_trace(stream: Iterable[CacheRequest], fh: IO[str]) -> int:
    n = 0
    for req in stream:
        fh.write(f"{req.op.value},{req.key},{req.value_size_bytes}\n")
        n += 1
    return n


def take(stream: Iterable[CacheRequest], n: int) -> list[CacheRequest]:
    return list(islice(stream, n))
