"""Page-granular simulator of an FDP-capable SSD.

Reclaim units (RUs) are the unit of both placement and garbage collection.
Each reclaim unit handle (RUH) appends host writes into its own open RU;
greedy GC reclaims the closed RU with the fewest valid pages. Only LBA
identity and validity are tracked, never payloads.

State lives in flat numpy arrays so that sequential runs (LOC region
flushes, GC relocation) are vectorised while single-page writes stay on a
cheap scalar path.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import IO, NamedTuple

import numpy as np

from fdpsim.placement import PlacementIdentifier

FREE, OPEN, CLOSED = 0, 1, 2
_STATE_NAMES = {FREE: "free", OPEN: "open", CLOSED: "closed"}

KiB = 1024
MiB = 1024 * KiB
GiB = 1024 * MiB


class FtlError(Exception):
    pass


class ConfigError(FtlError, ValueError):
    pass


class AddressError(FtlError, IndexError):
    pass


class UnknownHandleError(FtlError, LookupError):
    pass


class GcError(FtlError, RuntimeError):
    """GC cannot make progress: not enough overprovisioning for the live data."""


class UndefinedDlwaError(FtlError, ZeroDivisionError):
    pass


class RuhType(str, Enum):
    INITIALLY_ISOLATED = "initially-isolated"
    PERSISTENTLY_ISOLATED = "persistently-isolated"


@dataclass
class DeviceConfig:
    page_size_bytes: int = 4096
    ru_size_bytes: int = 4 * MiB
    usable_capacity_bytes: int = 8 * GiB
    op_fraction: float = 0.07
    num_ruhs: int = 8
    ruh_type: RuhType = RuhType.INITIALLY_ISOLATED
    num_rgs: int = 1
    fdp_enabled: bool = True
    gc_trigger_free_rus: int | None = None  # None -> num_ruhs + 2
    rng_seed: int = 0

    def __post_init__(self):
        self.ruh_type = RuhType(self.ruh_type)
        if self.gc_trigger_free_rus is None:
            self.gc_trigger_free_rus = self.num_ruhs + 2

    @property
    def pages_per_ru(self) -> int:
        return self.ru_size_bytes // self.page_size_bytes

    @property
    def usable_pages(self) -> int:
        return self.usable_capacity_bytes // self.page_size_bytes

    @property
    def physical_rus(self) -> int:
        raw = self.usable_capacity_bytes / (1.0 - self.op_fraction) / self.ru_size_bytes
        # tolerate float noise such as 512 / (2/3) = 768.0000000001
        n = math.ceil(raw - 1e-9)
        return -(-n // self.num_rgs) * self.num_rgs

    @property
    def physical_capacity_bytes(self) -> int:
        return self.physical_rus * self.ru_size_bytes

    @property
    def active_ruhs(self) -> int:
        return self.num_ruhs if self.fdp_enabled else 1

    def validate(self) -> None:
        for name in ("page_size_bytes", "ru_size_bytes", "num_rgs", "gc_trigger_free_rus"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.num_ruhs <= 0:
            raise ConfigError("num_ruhs must be positive")
        if self.usable_capacity_bytes <= 0:
            raise ConfigError("usable_capacity_bytes must be positive")
        if self.ru_size_bytes % self.page_size_bytes:
            raise ConfigError("ru_size_bytes must be a multiple of page_size_bytes")
        if self.usable_capacity_bytes % self.page_size_bytes:
            raise ConfigError("usable_capacity_bytes must be a multiple of page_size_bytes")
        if not 0.0 <= self.op_fraction < 1.0:
            raise ConfigError("op_fraction must lie in [0, 1)")
        per_rg = self.physical_rus // self.num_rgs
        # one open RU per active handle plus the GC destination, above the reserve
        if per_rg <= self.active_ruhs + self.gc_trigger_free_rus:
            raise ConfigError(
                f"{per_rg} RUs per reclaim group cannot hold {self.active_ruhs} open RUs "
                f"plus a GC reserve of {self.gc_trigger_free_rus}"
            )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ruh_type"] = self.ruh_type.value
        return d


@dataclass
class DlwaCounters:
    host_bytes_written: int = 0
    nand_bytes_written: int = 0
    relocated_bytes: int = 0
    relocation_events: int = 0
    gc_victim_count: int = 0
    ru_overfill_events: int = 0
    deallocated_bytes: int = 0

    def copy(self) -> "DlwaCounters":
        return DlwaCounters(**asdict(self))

    def to_dict(self) -> dict:
        return asdict(self)


def dlwa(counters: DlwaCounters) -> float:
    """NAND bytes over host bytes."""
    if counters.host_bytes_written <= 0:
        raise UndefinedDlwaError("DLWA is undefined before the first host write")
    return counters.nand_bytes_written / counters.host_bytes_written


class Event(NamedTuple):
    seq: int
    event_type: str  # media-relocated | ru-overfill | gc-triggered
    ru_id: int
    pages_moved: int
    dest_ru: int
    free_rus: int
    ruh: int = -1


EVENT_CSV_COLUMNS = ("seq", "event_type", "ru_id", "pages_moved", "dest_ru", "free_rus")


class PageLocation(NamedTuple):
    ru_id: int
    page_index: int


class WriteReceipt(NamedTuple):
    pages_written: int
    overfills: int
    relocations_triggered: int


class IntervalRecord(NamedTuple):
    host_bytes: int
    nand_bytes: int
    dlwa: float


@dataclass
class ReclaimUnit:
    """Read-only view of one RU, built on demand by :meth:`Device.reclaim_unit`."""

    ru_id: int
    state: str
    owner_ruh: int | None
    write_pointer: int
    page_lbas: list[int | None]
    valid_count: int
    intermixed: bool
    sources: frozenset = field(default_factory=frozenset)


class Device:
    def __init__(self, config: DeviceConfig):
        config.validate()
        self.config = config
        self.page_size = config.page_size_bytes
        self.ppr = config.pages_per_ru
        self.n_ru = config.physical_rus
        self.usable_pages = config.usable_pages
        self.rus_per_rg = self.n_ru // config.num_rgs
        self.trigger = config.gc_trigger_free_rus
        self.persistent = config.ruh_type is RuhType.PERSISTENTLY_ISOLATED

        self.l2p = np.full(self.usable_pages, -1, dtype=np.int64)
        self.p2l = np.full(self.n_ru * self.ppr, -1, dtype=np.int64)
        self.origin = np.full(self.n_ru * self.ppr, -1, dtype=np.int16)
        self.valid = np.zeros(self.n_ru, dtype=np.int64)
        self.state = np.zeros(self.n_ru, dtype=np.int8)
        self.rg_of_ru = np.arange(self.n_ru) // self.rus_per_rg
        self.wp = [0] * self.n_ru
        self.owner: list[int | None] = [None] * self.n_ru
        self.sources: list[set] = [set() for _ in range(self.n_ru)]
        self.intermixed = [False] * self.n_ru
        self.was_gc_dest = [False] * self.n_ru

        self.free_pools = [
            deque(range(rg * self.rus_per_rg, (rg + 1) * self.rus_per_rg))
            for rg in range(config.num_rgs)
        ]
        self.open_ru: dict[tuple[int, int], int] = {}
        self.last_full: dict[tuple[int, int], int] = {}
        self.gc_dest: dict[tuple, int] = {}

        self.counters = DlwaCounters()
        self.host_pages_by_ruh: dict[int, int] = {}
        self.relocated_pages_by_ruh: dict[int, int] = {}
        self.events: list[Event] = []
        self._snap_host = 0
        self._snap_nand = 0
        self.reserved: list[tuple[int, int]] = []

    # -- handles ----------------------------------------------------------

    def _stream(self, handle: PlacementIdentifier | None) -> tuple[int, int]:
        if handle is None or not self.config.fdp_enabled:
            return (0, 0)
        rg, ruh = handle
        if not (0 <= rg < self.config.num_rgs and 0 <= ruh < self.config.num_ruhs):
            raise UnknownHandleError(f"no placement identifier {tuple(handle)} on this device")
        return (rg, ruh)

    def _check_range(self, lba_first: int, page_count: int) -> None:
        if page_count < 0 or lba_first < 0 or lba_first + page_count > self.usable_pages:
            raise AddressError(
                f"LBA range [{lba_first}, {lba_first + page_count}) outside [0, {self.usable_pages})"
            )

    def reserve(self, lba_first: int, page_count: int) -> None:
        """Claim an LBA partition for one cache instance; partitions may not overlap."""
        self._check_range(lba_first, page_count)
        end = lba_first + page_count
        for a, b in self.reserved:
            if lba_first < b and a < end:
                raise ConfigError(f"LBA partition [{lba_first}, {end}) overlaps [{a}, {b})")
        self.reserved.append((lba_first, end))

    # -- host operations --------------------------------------------------

    def write(self, handle: PlacementIdentifier | None, lba_first: int, page_count: int = 1) -> WriteReceipt:
        self._check_range(lba_first, page_count)
        stream = self._stream(handle)
        ruh = stream[1]
        overfills = 0
        events_before = self.counters.relocation_events
        lba = lba_first
        remaining = page_count
        ppr = self.ppr
        while remaining:
            ru = self.open_ru.get(stream, -1)
            if ru < 0:
                ru, rolled = self._open_for(stream)
                overfills += rolled
            wp = self.wp[ru]
            n = min(remaining, ppr - wp)
            if n == 1:
                self._program_one(ru, wp, lba, ruh)
            else:
                self._program_run(ru, wp, lba, n, ruh)
            if wp + n == ppr:
                self._close(ru)
                del self.open_ru[stream]
                self.last_full[stream] = ru
            lba += n
            remaining -= n
        self.counters.host_bytes_written += page_count * self.page_size
        self.counters.nand_bytes_written += page_count * self.page_size
        self.host_pages_by_ruh[ruh] = self.host_pages_by_ruh.get(ruh, 0) + page_count
        return WriteReceipt(page_count, overfills, self.counters.relocation_events - events_before)

    def write_page(self, handle: PlacementIdentifier | None, lba: int) -> None:
        """Single-page ``write`` without the receipt; the SOC bucket path."""
        if not 0 <= lba < self.usable_pages:
            raise AddressError(f"LBA {lba} outside [0, {self.usable_pages})")
        stream = self._stream(handle)
        ru = self.open_ru.get(stream, -1)
        if ru < 0:
            ru = self._open_for(stream)[0]
        wp = self.wp[ru]
        ruh = stream[1]
        self._program_one(ru, wp, lba, ruh)
        if wp + 1 == self.ppr:
            self._close(ru)
            del self.open_ru[stream]
            self.last_full[stream] = ru
        c = self.counters
        c.host_bytes_written += self.page_size
        c.nand_bytes_written += self.page_size
        self.host_pages_by_ruh[ruh] = self.host_pages_by_ruh.get(ruh, 0) + 1

    def _program_one(self, ru: int, wp: int, lba: int, ruh: int) -> None:
        old = int(self.l2p[lba])
        if old >= 0:
            self.p2l[old] = -1
            self.valid[old // self.ppr] -= 1
        p = ru * self.ppr + wp
        self.l2p[lba] = p
        self.p2l[p] = lba
        self.origin[p] = ruh
        self.valid[ru] += 1
        self.wp[ru] = wp + 1

    def _program_run(self, ru: int, wp: int, lba: int, n: int, ruh: int) -> None:
        sl = slice(lba, lba + n)
        old = self.l2p[sl]
        stale = old[old >= 0]
        if stale.size:
            self.p2l[stale] = -1
            rus, counts = np.unique(stale // self.ppr, return_counts=True)
            self.valid[rus] -= counts
        start = ru * self.ppr + wp
        self.l2p[sl] = np.arange(start, start + n)
        self.p2l[start:start + n] = np.arange(lba, lba + n)
        self.origin[start:start + n] = ruh
        self.valid[ru] += n
        self.wp[ru] = wp + n

    def _open_for(self, stream: tuple[int, int]) -> tuple[int, int]:
        rg, ruh = stream
        if len(self.free_pools[rg]) < self.trigger:
            self._log("gc-triggered", -1, 0, -1, len(self.free_pools[rg]))
            self.run_gc(rg)
        ru = self._take_free(rg)
        self.state[ru] = OPEN
        self.owner[ru] = ruh
        self.sources[ru].add(ruh)
        self.open_ru[stream] = ru
        prev = self.last_full.pop(stream, None)
        if prev is None:
            return ru, 0
        self.counters.ru_overfill_events += 1
        self._log("ru-overfill", prev, 0, ru, len(self.free_pools[rg]), ruh)
        return ru, 1

    def _take_free(self, rg: int) -> int:
        pool = self.free_pools[rg]
        if not pool:
            raise GcError(f"reclaim group {rg} has no free reclaim units left")
        return pool.popleft()

    def _close(self, ru: int) -> None:
        self.state[ru] = CLOSED

    def _detach(self, ru: int) -> None:
        for table in (self.open_ru, self.gc_dest):
            for key in [k for k, v in table.items() if v == ru]:
                del table[key]

    def _erase(self, ru: int) -> None:
        base = ru * self.ppr
        self.p2l[base:base + self.ppr] = -1
        self.origin[base:base + self.ppr] = -1
        self.valid[ru] = 0
        self.wp[ru] = 0
        self.state[ru] = FREE
        self.owner[ru] = None
        self.sources[ru] = set()
        self.intermixed[ru] = False
        self.was_gc_dest[ru] = False
        self.free_pools[self.rg_of_ru[ru]].append(ru)

    def deallocate(self, lba_first: int, page_count: int = 1) -> int:
        self._check_range(lba_first, page_count)
        sl = slice(lba_first, lba_first + page_count)
        old = self.l2p[sl]
        stale = old[old >= 0]
        if not stale.size:
            return 0
        self.p2l[stale] = -1
        rus, counts = np.unique(stale // self.ppr, return_counts=True)
        self.valid[rus] -= counts
        self.l2p[sl] = -1
        # trim reclaims every emptied RU, including ones emptied earlier by overwrites
        # and open RUs, which are detached from their handle
        for ru in np.flatnonzero((self.state != FREE) & (self.valid == 0)).tolist():
            if self.state[ru] == OPEN:
                self._detach(ru)
            self._erase(ru)
        self.counters.deallocated_bytes += int(stale.size) * self.page_size
        return int(stale.size)

    def read(self, lba: int) -> PageLocation | None:
        self._check_range(lba, 1)
        p = int(self.l2p[lba])
        if p < 0:
            return None
        return PageLocation(p // self.ppr, p % self.ppr)

    def ru_remaining(self, handle: PlacementIdentifier | None) -> int:
        stream = self._stream(handle)
        ru = self.open_ru.get(stream, -1)
        if ru < 0:
            return self.config.ru_size_bytes
        return (self.ppr - self.wp[ru]) * self.page_size

    # -- garbage collection -----------------------------------------------

    def free_ru_count(self, rg: int = 0) -> int:
        return len(self.free_pools[rg])

    def run_gc(self, rg: int = 0, target_free: int | None = None) -> list[Event]:
        """Greedy GC until the free pool holds ``target_free`` RUs (default: the trigger).

        Victim is the closed RU with the fewest valid pages, lowest id on ties.
        """
        target = self.trigger if target_free is None else target_free
        pool = self.free_pools[rg]
        out = []
        in_rg = self.rg_of_ru == rg
        sentinel = self.ppr + 1
        while len(pool) < target:
            cand = (self.state == CLOSED) & in_rg
            masked = np.where(cand, self.valid, sentinel)
            victim = int(masked.argmin())
            vcount = int(masked[victim])
            if vcount == sentinel:
                raise GcError(f"no GC candidate in reclaim group {rg}")
            if vcount >= self.ppr:
                raise GcError(
                    f"every closed RU in reclaim group {rg} is fully valid; "
                    "device overprovisioning is insufficient"
                )
            out.append(self._relocate(victim, rg))
        return out

    def _dest_key(self, victim: int, rg: int) -> tuple:
        if self.persistent:
            return (rg, self.owner[victim])
        return (rg, None)

    def _relocate(self, victim: int, rg: int) -> Event:
        ppr = self.ppr
        base = victim * ppr
        page_lbas = self.p2l[base:base + ppr]
        idx = np.flatnonzero(page_lbas >= 0)
        lbas = page_lbas[idx].copy()
        src = self.origin[base + idx].copy()
        moved = int(idx.size)
        key = self._dest_key(victim, rg)
        first_dest = -1
        done = 0
        while done < moved:
            dest = self.gc_dest.get(key, -1)
            if dest < 0:
                dest = self._take_free(rg)
                self.state[dest] = OPEN
                self.owner[dest] = key[1]
                self.was_gc_dest[dest] = True
                self.gc_dest[key] = dest
            if first_dest < 0:
                first_dest = dest
            wp = self.wp[dest]
            n = min(moved - done, ppr - wp)
            chunk_lbas = lbas[done:done + n]
            chunk_src = src[done:done + n]
            start = dest * ppr + wp
            newp = np.arange(start, start + n)
            self.l2p[chunk_lbas] = newp
            self.p2l[start:start + n] = chunk_lbas
            self.origin[start:start + n] = chunk_src
            self.valid[dest] += n
            self.wp[dest] = wp + n
            srcs = self.sources[dest]
            srcs.update(np.unique(chunk_src).tolist())
            if len(srcs) > 1:
                self.intermixed[dest] = True
            if wp + n == ppr:
                self._close(dest)
                del self.gc_dest[key]
            done += n
        if moved:
            for ruh, cnt in zip(*np.unique(src, return_counts=True)):
                ruh = int(ruh)
                self.relocated_pages_by_ruh[ruh] = self.relocated_pages_by_ruh.get(ruh, 0) + int(cnt)
        self.valid[victim] -= moved
        self._erase(victim)
        c = self.counters
        c.gc_victim_count += 1
        c.relocated_bytes += moved * self.page_size
        c.nand_bytes_written += moved * self.page_size
        if moved:
            c.relocation_events += 1
        return self._log("media-relocated", victim, moved, first_dest, len(self.free_pools[rg]))

    # -- accounting -------------------------------------------------------

    def _log(self, kind: str, ru: int, moved: int, dest: int, free: int, ruh: int = -1) -> Event:
        ev = Event(len(self.events), kind, ru, moved, dest, free, ruh)
        self.events.append(ev)
        return ev

    def snapshot_interval(self) -> IntervalRecord:
        host = self.counters.host_bytes_written - self._snap_host
        nand = self.counters.nand_bytes_written - self._snap_nand
        self._snap_host = self.counters.host_bytes_written
        self._snap_nand = self.counters.nand_bytes_written
        return IntervalRecord(host, nand, nand / host if host else 1.0)

    def dlwa(self) -> float:
        return dlwa(self.counters)

    def handle_dlwa(self, ruh: int) -> float:
        """DLWA of the data originally written through one handle."""
        host = self.host_pages_by_ruh.get(ruh, 0)
        if host == 0:
            raise UndefinedDlwaError(f"handle {ruh} has not written anything")
        return (host + self.relocated_pages_by_ruh.get(ruh, 0)) / host

    def mapped_count(self) -> int:
        return int(np.count_nonzero(self.l2p >= 0))

    def reclaim_unit(self, ru: int) -> ReclaimUnit:
        base = ru * self.ppr
        lbas = self.p2l[base:base + self.ppr].tolist()
        return ReclaimUnit(
            ru_id=ru,
            state=_STATE_NAMES[int(self.state[ru])],
            owner_ruh=self.owner[ru],
            write_pointer=self.wp[ru],
            page_lbas=[x if x >= 0 else None for x in lbas],
            valid_count=int(self.valid[ru]),
            intermixed=self.intermixed[ru],
            sources=frozenset(self.sources[ru]),
        )

    def mapping(self) -> dict[int, tuple[int, int]]:
        lbas = np.flatnonzero(self.l2p >= 0)
        phys = self.l2p[lbas]
        return {int(l): (int(p) // self.ppr, int(p) % self.ppr) for l, p in zip(lbas, phys)}

    def check_invariants(self) -> None:
        """Full consistency scan; raises AssertionError describing the first violation."""
        ppr = self.ppr
        live = np.flatnonzero(self.p2l >= 0)
        per_ru = np.bincount(live // ppr, minlength=self.n_ru)
        assert np.array_equal(per_ru, self.valid), "valid_count disagrees with page scan"
        mapped = np.flatnonzero(self.l2p >= 0)
        assert mapped.size == live.size, "mapped LBAs != valid pages"
        assert np.array_equal(self.p2l[self.l2p[mapped]], mapped), "mapping not bijective"
        wp = np.asarray(self.wp)
        free = self.state == FREE
        assert not np.any(free & ((wp != 0) | (self.valid != 0))), "free RU with data"
        c = self.counters
        assert c.nand_bytes_written == c.host_bytes_written + c.relocated_bytes
        moved_events = [e for e in self.events if e.event_type == "media-relocated"]
        assert c.relocation_events == sum(1 for e in moved_events if e.pages_moved >= 1)
        assert c.relocated_bytes == sum(e.pages_moved for e in moved_events) * self.page_size
        in_use = np.flatnonzero(~free).tolist()
        for ru in in_use:
            srcs = self.sources[ru]
            if self.persistent or not self.was_gc_dest[ru]:
                assert len(srcs) <= 1, f"RU {ru} mixes handles {srcs}"
            if self.intermixed[ru]:
                assert self.was_gc_dest[ru], f"RU {ru} intermixed without relocation"
        for ru in self.open_ru.values():
            assert self.state[ru] == OPEN
        for ru in self.gc_dest.values():
            assert self.state[ru] == OPEN

    def export_events_csv(self, fh: IO[str]) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_CSV_COLUMNS)
        for e in self.events:
            w.writerow(e[:6])


def device_new(config: DeviceConfig) -> Device:
    return Device(config)
