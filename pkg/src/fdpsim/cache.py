"""Hybrid DRAM + flash cache: LRU DRAM in front of a set-associative SOC and a FIFO log LOC.

Flash writes are issued to a :class:`~fdpsim.ftl.Device` through placement
handles, one for the SOC and one for the LOC when segregated, or a single
default handle otherwise.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from enum import Enum

from fdpsim.ftl import Device, MiB
from fdpsim.placement import PlacementAllocator, PlacementHandle
from fdpsim.workload import CacheRequest, Op

ITEM_HEADER_BYTES = 8
_MASK64 = (1 << 64) - 1


class CacheConfigError(ValueError):
    pass


def mix64(key: int, seed: int = 0) -> int:
    """splitmix64 finaliser: a fixed, seedable 64-bit avalanche hash."""
    z = (key + 0x9E3779B97F4A7C15 * (seed + 1)) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass
class HybridCacheConfig:
    dram_bytes: int
    flash_bytes: int
    soc_fraction: float = 0.04
    bucket_bytes: int = 4096
    region_bytes: int = 16 * MiB
    small_item_threshold_bytes: int = 2048
    lba_base: int = 0
    segregate: bool = True
    hash_seed: int = 0

    def layout(self, page_size: int) -> tuple[int, int]:
        """(soc_bytes, loc_bytes); the SOC absorbs rounding so the LOC is region-aligned."""
        if not 0.0 < self.soc_fraction < 1.0:
            raise CacheConfigError("soc_fraction must lie in (0, 1)")
        if self.bucket_bytes != page_size:
            raise CacheConfigError("bucket_bytes must equal the device page size")
        if self.region_bytes % page_size:
            raise CacheConfigError("region_bytes must be a multiple of the page size")
        if self.flash_bytes % page_size:
            raise CacheConfigError("flash_bytes must be a multiple of the page size")
        if self.small_item_threshold_bytes + ITEM_HEADER_BYTES > self.bucket_bytes:
            raise CacheConfigError("small items must fit in one bucket")
        loc = int((1.0 - self.soc_fraction) * self.flash_bytes) // self.region_bytes * self.region_bytes
        soc = self.flash_bytes - loc
        if soc < self.bucket_bytes:
            raise CacheConfigError("SOC is smaller than one bucket")
        return soc, loc


@dataclass
class CacheMetrics:
    gets: int = 0
    sets: int = 0
    deletes: int = 0
    dram_hits: int = 0
    nvm_hits: int = 0
    misses: int = 0
    app_bytes: int = 0
    flash_bytes_written: int = 0
    soc_app_bytes: int = 0
    soc_bytes_written: int = 0
    loc_app_bytes: int = 0
    loc_bytes_written: int = 0
    direct_flash_admissions: int = 0
    skipped_ops: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alwa"] = alwa(self) if self.app_bytes else None
        d["dram_hit_ratio"] = self.dram_hits / self.gets if self.gets else None
        d["nvm_hit_ratio"] = self.nvm_hits / self.gets if self.gets else None
        return d


def alwa(metrics: CacheMetrics) -> float:
    if metrics.app_bytes <= 0:
        raise ZeroDivisionError("ALWA is undefined before any item reaches flash")
    return metrics.flash_bytes_written / metrics.app_bytes


class HitClass(str, Enum):
    DRAM = "dram-hit"
    NVM = "nvm-hit"
    MISS = "miss"


@dataclass
class AdmitOutcome:
    tier: str
    evictions_to_flash: list[int] = field(default_factory=list)


class HybridCache:
    def __init__(self, cfg: HybridCacheConfig, device: Device, allocator: PlacementAllocator):
        page = device.page_size
        self.cfg = cfg
        self.device = device
        soc_bytes, loc_bytes = cfg.layout(page)
        self.soc_bytes, self.loc_bytes = soc_bytes, loc_bytes
        if cfg.lba_base < 0 or cfg.lba_base + cfg.flash_bytes // page > device.usable_pages:
            raise CacheConfigError("cache partition exceeds device usable capacity")
        device.reserve(cfg.lba_base, cfg.flash_bytes // page)

        if cfg.segregate:
            self.soc_handle: PlacementHandle = allocator.allocate(True)
            self.loc_handle: PlacementHandle = allocator.allocate(True)
        else:
            self.soc_handle = self.loc_handle = allocator.allocate(False)
        self.soc_pid = allocator.resolve(self.soc_handle)
        self.loc_pid = allocator.resolve(self.loc_handle)
        self.handle_degraded = cfg.segregate and (self.soc_handle.is_default or self.loc_handle.is_default)

        self.metrics = CacheMetrics()
        self.dram: OrderedDict[int, int] = OrderedDict()
        self.dram_used = 0
        self._clean: set[int] = set()  # promoted from flash, unmodified since

        self.num_buckets = soc_bytes // cfg.bucket_bytes
        self.soc_lba = cfg.lba_base
        self._buckets: dict[int, dict[int, int]] = {}
        self._bucket_used: dict[int, int] = {}
        self.soc_index: dict[int, int] = {}

        self.region_pages = cfg.region_bytes // page
        self.num_regions = loc_bytes // cfg.region_bytes
        self.loc_lba = cfg.lba_base + soc_bytes // page
        self.loc_index: dict[int, tuple[int, int, int]] = {}
        self._region_keys: list[list[int]] = [[] for _ in range(self.num_regions)]
        self.open_region = 0
        self.region_fill = 0
        self.loc_wraps = 0
        self.loc_flushes = 0

    # -- public operations --------------------------------------------------

    def bucket_of(self, key: int) -> int:
        return mix64(key, self.cfg.hash_seed) % self.num_buckets

    def apply(self, req: CacheRequest):
        op = req.op
        if op is Op.GET:
            return self.get(req.key)
        if op is Op.SET:
            return self.set(req.key, req.value_size_bytes)
        if op is Op.DELETE:
            return self.delete(req.key)
        self.metrics.skipped_ops += 1
        return None

    def set(self, key: int, size: int) -> AdmitOutcome:
        if size <= 0:
            raise ValueError("SET size must be positive")
        self.metrics.sets += 1
        if size > self.cfg.dram_bytes:
            # too large for DRAM: straight to flash
            if key in self.dram:
                self.dram_used -= self.dram.pop(key)
                self._clean.discard(key)
            self.metrics.direct_flash_admissions += 1
            self._admit(key, size)
            return AdmitOutcome("flash", [key])
        dram = self.dram
        old = dram.get(key)
        if old is None:
            dram[key] = size
            self.dram_used += size
        else:
            dram.move_to_end(key)
            dram[key] = size
            self.dram_used += size - old
            self._clean.discard(key)
        evicted = self._evict_overflow()
        return AdmitOutcome("dram", evicted)

    def get(self, key: int) -> HitClass:
        m = self.metrics
        m.gets += 1
        dram = self.dram
        if key in dram:
            dram.move_to_end(key)
            m.dram_hits += 1
            return HitClass.DRAM
        size = None
        b = self.soc_index.get(key)
        if b is not None:
            size = self._buckets[b][key]
        else:
            loc = self.loc_index.get(key)
            if loc is not None:
                size = loc[2]
        if size is None:
            m.misses += 1
            return HitClass.MISS
        m.nvm_hits += 1
        if size <= self.cfg.dram_bytes:
            dram[key] = size
            self.dram_used += size
            self._clean.add(key)
            self._evict_overflow()
        return HitClass.NVM

    def delete(self, key: int) -> bool:
        self.metrics.deletes += 1
        found = False
        if key in self.dram:
            self.dram_used -= self.dram.pop(key)
            self._clean.discard(key)
            found = True
        b = self.soc_index.pop(key, None)
        if b is not None:
            self._bucket_used[b] -= self._buckets[b].pop(key) + ITEM_HEADER_BYTES
            self._write_bucket(b)
            found = True
        if self.loc_index.pop(key, None) is not None:
            found = True
        return found

    def contains_flash(self, key: int) -> bool:
        return key in self.soc_index or key in self.loc_index

    # -- DRAM tier --------------------------------------------------------------

    def _evict_overflow(self) -> list[int]:
        out = []
        dram = self.dram
        limit = self.cfg.dram_bytes
        while self.dram_used > limit:
            k, s = dram.popitem(last=False)
            self.dram_used -= s
            out.append(k)
            if k in self._clean:
                self._clean.discard(k)
                if k in self.soc_index or k in self.loc_index:
                    continue
            self._admit(k, s)
        return out

    def _admit(self, key: int, size: int) -> None:
        if size <= self.cfg.small_item_threshold_bytes:
            self.soc_insert(key, size)
        else:
            self.loc_insert(key, size)

    # -- small object cache ---------------------------------------------------------

    def soc_insert(self, key: int, size: int) -> None:
        b = mix64(key, self.cfg.hash_seed) % self.num_buckets
        items = self._buckets.get(b)
        if items is None:
            items = self._buckets[b] = {}
            used = 0
        else:
            used = self._bucket_used[b]
            old = items.pop(key, None)
            if old is not None:
                used -= old + ITEM_HEADER_BYTES
        items[key] = size
        used += size + ITEM_HEADER_BYTES
        index = self.soc_index
        index[key] = b
        cap = self.cfg.bucket_bytes
        while used > cap:
            # dicts keep insertion order: the first key is the oldest
            k = next(iter(items))
            used -= items.pop(k) + ITEM_HEADER_BYTES
            del index[k]
        self._bucket_used[b] = used
        m = self.metrics
        m.app_bytes += size
        m.soc_app_bytes += size
        m.flash_bytes_written += cap
        m.soc_bytes_written += cap
        self.device.write_page(self.soc_pid, self.soc_lba + b)

    def _write_bucket(self, b: int) -> None:
        self.device.write_page(self.soc_pid, self.soc_lba + b)
        m = self.metrics
        m.flash_bytes_written += self.cfg.bucket_bytes
        m.soc_bytes_written += self.cfg.bucket_bytes

    def bucket_items(self, b: int) -> list[tuple[int, int]]:
        return list(self._buckets.get(b, {}).items())

    # -- large object cache ---------------------------------------------------------

    def loc_insert(self, key: int, size: int) -> None:
        need = size + ITEM_HEADER_BYTES
        if need > self.cfg.region_bytes:
            raise ValueError(f"item of {size} B does not fit a {self.cfg.region_bytes} B region")
        if self.region_fill + need > self.cfg.region_bytes:
            self._flush_region()
        r = self.open_region
        if self.region_fill == 0 and self._region_keys[r]:
            self._reclaim_region(r)
        self.loc_index[key] = (r, self.region_fill, size)
        self._region_keys[r].append(key)
        self.region_fill += need
        m = self.metrics
        m.app_bytes += size
        m.loc_app_bytes += size
        if self.region_fill == self.cfg.region_bytes:
            self._flush_region()

    def _flush_region(self) -> None:
        r = self.open_region
        self.device.write(self.loc_pid, self.loc_lba + r * self.region_pages, self.region_pages)
        m = self.metrics
        m.flash_bytes_written += self.cfg.region_bytes
        m.loc_bytes_written += self.cfg.region_bytes
        self.loc_flushes += 1
        nxt = r + 1
        if nxt == self.num_regions:
            nxt = 0
            self.loc_wraps += 1
        self.open_region = nxt
        self.region_fill = 0

    def _reclaim_region(self, r: int) -> None:
        # the oldest region is reused: whatever it still indexes is evicted
        index = self.loc_index
        for k in self._region_keys[r]:
            e = index.get(k)
            if e is not None and e[0] == r:
                del index[k]
        self._region_keys[r] = []

    def handle_audit(self) -> dict:
        return {
            "soc_handle": self.soc_handle.handle_id,
            "loc_handle": self.loc_handle.handle_id,
            "soc_pid": None if self.soc_pid is None else list(self.soc_pid),
            "loc_pid": None if self.loc_pid is None else list(self.loc_pid),
            "degraded_to_default": self.handle_degraded,
        }


def cache_new(cfg: HybridCacheConfig, device: Device, allocator: PlacementAllocator) -> HybridCache:
    return HybridCache(cfg, device, allocator)
