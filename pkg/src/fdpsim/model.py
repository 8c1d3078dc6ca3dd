"""Closed-form DLWA for a segregated SOC under greedy GC, plus carbon arithmetic.

The SOC is treated as a uniform-random page-overwrite stream over ``S_SOC``
logical bytes that owns ``S_P_SOC`` physical bytes (its own footprint plus
all device overprovisioning). The live fraction of a GC victim solves

    ln(delta) = x * (delta - 1),   x = S_P_SOC / S_SOC

whose non-trivial root is ``delta = -W0(-x e^-x) / x``; DLWA = 1 / (1 - delta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

INV_E = 0.36787944117144233
# 1/e = INV_E + _INV_E_LO, used to evaluate z + 1/e without cancellation
_INV_E_LO = -1.2428753672788363e-17
E = math.e


class ModelDomainError(ValueError):
    pass


def lambert_w0(z: float) -> float:
    """Principal branch of the Lambert W function for real ``z >= -1/e``.

    Starts from a branch-point series, a log1p guess or the asymptotic
    expansion depending on ``z``, then refines with Halley's iteration kept
    inside the bracket ``[-1, 0]`` (z < 0) or ``[0, log1p(z)]`` (z >= 0).
    """
    z = float(z)
    if math.isnan(z):
        raise ModelDomainError("lambert_w0 of NaN")
    dz = (z + INV_E) + _INV_E_LO
    if dz < 0.0:
        if dz < -1e-12:
            raise ModelDomainError(f"lambert_w0 undefined for z={z!r} < -1/e")
        return -1.0
    if z == 0.0:
        return 0.0
    if math.isinf(z):
        return math.inf

    if z < 0.0:
        lo, hi = -1.0, 0.0
    else:
        lo, hi = 0.0, math.log1p(z)

    if z < -0.25:
        p = math.sqrt(2.0 * E * dz)
        w = -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0 + p * (-43.0 / 540.0))))
    elif z < 3.0:
        w = math.log1p(z) * (1.0 - math.log1p(math.log1p(z)) / (2.0 + math.log1p(z)))
    else:
        l1 = math.log(z)
        l2 = math.log(l1)
        w = l1 - l2 + l2 / l1
    w = min(max(w, lo), hi)

    for _ in range(64):
        ew = math.exp(w)
        f = w * ew - z
        if f == 0.0:
            return w
        if f > 0.0:
            hi = min(hi, w)
        else:
            lo = max(lo, w)
        wp1 = w + 1.0
        if wp1 <= 0.0:
            return -1.0
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        w_new = w - f / denom if denom != 0.0 else 0.5 * (lo + hi)
        if not lo <= w_new <= hi:
            w_new = 0.5 * (lo + hi)
        if abs(w_new - w) <= 4e-16 * (1.0 + abs(w_new)):
            return w_new
        w = w_new
    return w


def delta(s_soc: float, s_p_soc: float) -> float:
    """Average live fraction of a GC victim RU holding SOC data."""
    if not s_soc > 0:
        raise ModelDomainError("S_SOC must be positive")
    if not s_p_soc > s_soc:
        raise ModelDomainError(
            "S_P_SOC must exceed S_SOC: without spare physical space DLWA is unbounded"
        )
    x = s_p_soc / s_soc
    # -x e^-x underflows to -0.0 for huge x, where delta -> 0 anyway
    return -lambert_w0(-x * math.exp(-x)) / x


@dataclass
class ModelParams:
    """Geometry inputs; byte quantities, ``n_bb`` in buckets per GC block.

    Only ``s_soc`` and ``s_p_soc`` enter the closed form; the remaining
    fields describe the device and are carried for reporting.
    """

    s_soc: float
    s_bucket: float = 4096
    s_op: float = 0.0
    s_usable: float = 0.0
    s_loc: float = 0.0
    n_bb: int = 1024

    @property
    def s_p_soc(self) -> float:
        return self.s_soc + self.s_op

    @property
    def s_total(self) -> float:
        return self.s_usable + self.s_op

    @property
    def s_p_loc(self) -> float:
        return self.s_loc

    @property
    def s_nvm(self) -> float:
        return self.s_soc + self.s_loc

    @property
    def n_b(self) -> float:
        return self.s_soc / self.s_bucket

    @property
    def x(self) -> float:
        return self.s_p_soc / self.s_soc

    @property
    def delta(self) -> float:
        return delta(self.s_soc, self.s_p_soc)

    @classmethod
    def from_spare_ratio(cls, x: float, s_soc: float = 1.0) -> "ModelParams":
        return cls(s_soc=s_soc, s_op=(x - 1.0) * s_soc)


def dlwa_model(params: ModelParams) -> float:
    return 1.0 / (1.0 - params.delta)


def dlwa_from_sizes(s_soc: float, s_p_soc: float) -> float:
    return 1.0 / (1.0 - delta(s_soc, s_p_soc))


@dataclass
class CarbonParams:
    dlwa: float
    device_cap_gb: float
    lifecycle_years: float = 5.0
    warranty_years: float = 5.0
    c_ssd_kg_per_gb: float = 0.16
    host_op_fraction: float = 0.0
    device_op_fraction: float = 0.0

    def __post_init__(self):
        if self.lifecycle_years <= 0 or self.warranty_years <= 0:
            raise ValueError("lifecycle and warranty must be positive")
        if self.c_ssd_kg_per_gb < 0:
            raise ValueError("c_ssd must be non-negative")
        for name in ("host_op_fraction", "device_op_fraction"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")

    @property
    def total_op(self) -> float:
        return self.host_op_fraction + self.device_op_fraction

    @property
    def host_cap_gb(self) -> float:
        return self.device_cap_gb * (1.0 - self.total_op)


def embodied_co2e(p: CarbonParams) -> float:
    """Embodied kg CO2e over the system lifecycle, counting DLWA-driven replacements."""
    # product ordered so that the reference point (3.5, 1880, 5, 5, 0.16) is exact
    return p.dlwa * p.device_cap_gb * p.c_ssd_kg_per_gb * (p.lifecycle_years / p.warranty_years)


class EnergyProxy(NamedTuple):
    host_ops: int
    device_migrations: int
    total: int


def gc_energy_proxy(host_ops: int, relocation_pages: int) -> EnergyProxy:
    """Unitless operational-energy tally: host operations plus GC migrations."""
    if host_ops < 0 or relocation_pages < 0:
        raise ValueError("counts must be non-negative")
    return EnergyProxy(host_ops, relocation_pages, host_ops + relocation_pages)


def migration_ratio(baseline: EnergyProxy, improved: EnergyProxy) -> float:
    """How many times more migrations ``baseline`` performed than ``improved``."""
    if baseline.host_ops != improved.host_ops:
        raise ValueError("energy proxies are only comparable at equal host_ops")
    if improved.device_migrations == 0:
        return math.inf if baseline.device_migrations else 1.0
    return baseline.device_migrations / improved.device_migrations
