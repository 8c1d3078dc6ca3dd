"""Placement handles and the allocator that maps them to FDP placement identifiers.

Consumers (cache engines) only ever hold a :class:`PlacementHandle`. The
allocator translates it into a ``PlacementIdentifier`` (reclaim group,
reclaim unit handle) when the device supports FDP, or into ``None`` -- the
default, no-preference placement -- when it does not or when the pool is
exhausted.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple, Protocol


class PlacementIdentifier(NamedTuple):
    rg_id: int
    ruh_id: int


class DeviceCaps(Protocol):
    fdp_enabled: bool
    num_ruhs: int
    num_rgs: int


class ForeignHandleError(LookupError):
    """Handle was not issued by this allocator."""


_allocator_ids = itertools.count()


@dataclass(frozen=True)
class PlacementHandle:
    handle_id: int
    is_default: bool
    owner: int = field(repr=False, compare=True)


@dataclass
class PlacementAllocator:
    fdp_enabled: bool
    num_ruhs: int
    num_rgs: int
    free_pids: list[PlacementIdentifier] = field(default_factory=list)
    issued: dict[int, PlacementIdentifier | None] = field(default_factory=dict)
    _uid: int = field(default_factory=lambda: next(_allocator_ids), repr=False)

    @classmethod
    def for_device(cls, caps: DeviceCaps) -> "PlacementAllocator":
        return allocator_new(caps)

    @property
    def total_pids(self) -> int:
        if not self.fdp_enabled:
            return 0
        return self.num_ruhs * self.num_rgs

    def allocate(self, wants_isolation: bool = True) -> PlacementHandle:
        """Issue a handle; degrades to the default handle when the pool is empty.

        Never raises. Whether isolation was actually granted is visible on
        ``handle.is_default``.
        """
        handle_id = len(self.issued)
        if wants_isolation and self.free_pids:
            pid = self.free_pids.pop(0)
            self.issued[handle_id] = pid
            return PlacementHandle(handle_id, False, self._uid)
        self.issued[handle_id] = None
        return PlacementHandle(handle_id, True, self._uid)

    def resolve(self, handle: PlacementHandle) -> PlacementIdentifier | None:
        if handle.owner != self._uid or handle.handle_id not in self.issued:
            raise ForeignHandleError(f"handle {handle!r} was not issued by this allocator")
        return self.issued[handle.handle_id]

    def audit(self) -> list[dict]:
        rows = []
        for hid, pid in self.issued.items():
            rows.append(
                {
                    "handle_id": hid,
                    "is_default": pid is None,
                    "rg_id": None if pid is None else pid.rg_id,
                    "ruh_id": None if pid is None else pid.ruh_id,
                }
            )
        return rows


def allocator_new(caps: DeviceCaps) -> PlacementAllocator:
    alloc = PlacementAllocator(
        fdp_enabled=bool(caps.fdp_enabled),
        num_ruhs=int(caps.num_ruhs),
        num_rgs=int(caps.num_rgs),
    )
    if alloc.fdp_enabled:
        # ascending ruh within rg 0 first, then the next group
        alloc.free_pids = [
            PlacementIdentifier(rg, ruh)
            for rg in range(alloc.num_rgs)
            for ruh in range(alloc.num_ruhs)
        ]
    return alloc


def allocate(allocator: PlacementAllocator, wants_isolation: bool = True) -> PlacementHandle:
    return allocator.allocate(wants_isolation)


def resolve(allocator: PlacementAllocator, handle: PlacementHandle) -> PlacementIdentifier | None:
    return allocator.resolve(handle)
