"""Experiment runner: wires workloads through hybrid caches onto one simulated device.

Every run reports whole-run DLWA and steady-state DLWA. The steady-state
window opens at the first snapshot boundary where every cache whose LOC has
been written has wrapped its ring at least once and the device has absorbed
the configured warm-up volume.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from itertools import islice, repeat
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from fdpsim.cache import CacheMetrics, HybridCache, HybridCacheConfig
from fdpsim.config import ScenarioConfig
from fdpsim.ftl import GiB, Device, DeviceConfig
from fdpsim.model import ModelDomainError, dlwa_from_sizes
from fdpsim.placement import allocator_new
from fdpsim.workload import CacheRequest, gen_synthetic, parse_trace

log = logging.getLogger(__name__)

INTERVAL_COLUMNS = ("host_gib", "interval_dlwa", "cumulative_dlwa")
SWEEP_COLUMNS = (
    "value", "dlwa_fdp", "dlwa_nonfdp", "nvm_hit_ratio", "alwa", "relocation_events",
    "relocation_events_nonfdp", "dlwa_fdp_whole_run", "dlwa_nonfdp_whole_run",
)
COMPARE_COLUMNS = (
    "soc_fraction", "s_soc_bytes", "s_p_soc_bytes", "x", "dlwa_sim", "dlwa_model",
    "relative_error", "excluded", "reason",
)


class InvariantViolation(RuntimeError):
    """A mid-run consistency check failed; ``dump_path`` holds the captured state."""

    def __init__(self, message: str, dump_path: str | None = None):
        super().__init__(message if dump_path is None else f"{message} (state dump: {dump_path})")
        self.dump_path = dump_path


@dataclass
class Interval:
    host_bytes: int  # cumulative at the end of the interval
    nand_bytes: int
    interval_dlwa: float
    cumulative_dlwa: float


@dataclass
class RunReport:
    config: dict
    instances: list[dict] = field(default_factory=list)
    device: dict = field(default_factory=dict)
    dlwa: float | None = None
    steady: dict = field(default_factory=dict)
    intervals: list[Interval] = field(default_factory=list)
    events: dict = field(default_factory=dict)
    handles: list[dict] = field(default_factory=list)
    ops: int = 0
    accounting_closed: bool = True
    generated_at: str = ""

    @property
    def steady_dlwa(self) -> float | None:
        return self.steady.get("dlwa")

    @property
    def relocation_events(self) -> int:
        return self.device.get("relocation_events", 0)

    def instance(self, name: str) -> dict:
        for inst in self.instances:
            if inst["name"] == name:
                return inst
        raise KeyError(name)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def write(self, out_dir: str | Path, device: Device | None = None) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json() + "\n", encoding="utf-8")
        with open(out / "intervals.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(INTERVAL_COLUMNS)
            for iv in self.intervals:
                w.writerow([f"{iv.host_bytes / GiB:.6f}", f"{iv.interval_dlwa:.6f}", f"{iv.cumulative_dlwa:.6f}"])
        if device is not None:
            with open(out / "events.csv", "w", newline="", encoding="utf-8") as fh:
                device.export_events_csv(fh)
        return out


@dataclass
class Scenario:
    """A built, not yet replayed, scenario: one device, its caches and their request streams."""

    config: ScenarioConfig
    device: Device
    caches: list[HybridCache]
    streams: list[Iterable[CacheRequest]]
    names: list[str]


def build_scenario(config: ScenarioConfig) -> Scenario:
    config.validate()
    device = Device(config.device)
    alloc = allocator_new(config.device)
    caches, streams, names = [], [], []
    usable = config.device.usable_capacity_bytes
    for i, (inst, (base, nbytes)) in enumerate(zip(config.instances, config.partitions())):
        dram = inst.dram_bytes if inst.dram_bytes is not None else int(inst.dram_fraction * usable)
        hc = HybridCacheConfig(
            dram_bytes=dram,
            flash_bytes=nbytes,
            soc_fraction=inst.soc_fraction,
            bucket_bytes=inst.bucket_bytes,
            region_bytes=inst.region_bytes,
            small_item_threshold_bytes=inst.small_item_threshold_bytes,
            lba_base=base,
            segregate=inst.segregate,
            hash_seed=inst.hash_seed,
        )
        caches.append(HybridCache(hc, device, alloc))
        if inst.trace is not None:
            streams.append(parse_trace(inst.trace))
        else:
            # distinct, reproducible stream per tenant
            streams.append(gen_synthetic(inst.workload_spec(seed=config.run.seed * 1009 + i)))
        names.append(inst.name)
    return Scenario(config, device, caches, streams, names)


def _interleave(caches: list[HybridCache], streams: list[Iterable[CacheRequest]]) -> Iterator[tuple]:
    """Round-robin (apply, request) pairs, one request per cache per turn."""
    if len(caches) == 1:
        yield from zip(repeat(caches[0].apply), streams[0])
        return
    live = [(c.apply, iter(s)) for c, s in zip(caches, streams)]
    while live:
        alive = []
        for apply, it in live:
            req = next(it, None)
            if req is None:
                continue
            alive.append((apply, it))
            yield apply, req
        live = alive


def _state_dump(scn: Scenario, ops: int, reason: str, out_dir: str | Path | None) -> str | None:
    d = scn.device
    state = {
        "reason": reason,
        "ops": ops,
        "counters": d.counters.to_dict(),
        "free_rus": [len(p) for p in d.free_pools],
        "open_ru": {f"{k[0]}:{k[1]}": v for k, v in sorted(d.open_ru.items())},
        "gc_dest": {str(k): v for k, v in d.gc_dest.items()},
        "valid_counts": d.valid.tolist(),
        "ru_states": d.state.tolist(),
        "last_events": [e._asdict() for e in d.events[-50:]],
        "caches": [c.metrics.to_dict() for c in scn.caches],
    }
    if out_dir is None:
        log.error("invariant violation after %d ops: %s", ops, reason)
        return None
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    path = path / "state_dump.json"
    path.write_text(json.dumps(state, sort_keys=True, indent=1), encoding="utf-8")
    return str(path)


def _steady_ready(scn: Scenario, warmup: int) -> bool:
    if scn.device.counters.host_bytes_written < warmup:
        return False
    spans = scn.config.run.soc_warmup_spans
    if spans and any(c.metrics.soc_bytes_written < spans * c.soc_bytes for c in scn.caches):
        return False
    return all(c.loc_wraps >= 1 for c in scn.caches if c.loc_flushes > 0)


def replay(scn: Scenario, out_dir: str | Path | None = None) -> RunReport:
    """Drive every request through its cache until the host-byte or op budget is spent."""
    cfg = scn.config
    run = cfg.run
    dev = scn.device
    c = dev.counters
    target = run.target_host_bytes(cfg.device)
    window = run.window(cfg.device)
    warmup = run.warmup_host_bytes
    if warmup is None:
        warmup = sum(nbytes for _, nbytes in cfg.partitions())
    check_every = run.check_every or 0

    pairs = _interleave(scn.caches, scn.streams)
    if run.total_ops is not None:
        pairs = islice(pairs, run.total_ops)

    intervals: list[Interval] = []
    mark = None
    next_snap = window
    next_check = check_every if check_every else -1
    ops = 0

    def snap():
        rec = dev.snapshot_interval()
        intervals.append(
            Interval(c.host_bytes_written, c.nand_bytes_written, rec.dlwa, c.nand_bytes_written / c.host_bytes_written)
        )

    def check():
        try:
            dev.check_invariants()
        except AssertionError as exc:
            path = _state_dump(scn, ops, str(exc), out_dir)
            raise InvariantViolation(f"invariant violated after {ops} requests: {exc}", path) from exc

    boundary = min(next_snap, target)
    for apply, req in pairs:
        apply(req)
        ops += 1
        if ops == next_check:
            check()
            next_check += check_every
        if c.host_bytes_written >= boundary:
            if c.host_bytes_written >= next_snap:
                snap()
                next_snap = (c.host_bytes_written // window + 1) * window
                if mark is None and _steady_ready(scn, warmup):
                    mark = _mark(dev)
            if c.host_bytes_written >= target:
                break
            boundary = min(next_snap, target)

    if c.host_bytes_written > (intervals[-1].host_bytes if intervals else 0):
        snap()
    if check_every and ops:
        check()
    return _report(scn, ops, intervals, mark)


def _mark(dev: Device) -> dict:
    return {
        "counters": dev.counters.copy(),
        "host_by_ruh": dict(dev.host_pages_by_ruh),
        "reloc_by_ruh": dict(dev.relocated_pages_by_ruh),
    }


def _ruh_of(cache: HybridCache, pid) -> int | None:
    if pid is None:
        return 0 if cache.device.config.fdp_enabled else None
    return pid.ruh_id


def _handle_dlwa(dev: Device, ruh: int, since: dict | None) -> float | None:
    host = dev.host_pages_by_ruh.get(ruh, 0)
    moved = dev.relocated_pages_by_ruh.get(ruh, 0)
    if since is not None:
        host -= since["host_by_ruh"].get(ruh, 0)
        moved -= since["reloc_by_ruh"].get(ruh, 0)
    return (host + moved) / host if host else None


def _report(scn: Scenario, ops: int, intervals: list[Interval], mark: dict | None) -> RunReport:
    dev = scn.device
    c = dev.counters
    report = RunReport(config=scn.config.to_dict(), ops=ops, intervals=intervals)
    report.generated_at = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    report.device = c.to_dict()
    report.dlwa = c.nand_bytes_written / c.host_bytes_written if c.host_bytes_written else None

    if mark is not None:
        m = mark["counters"]
        host = c.host_bytes_written - m.host_bytes_written
        nand = c.nand_bytes_written - m.nand_bytes_written
        report.steady = {
            "mark_host_bytes": m.host_bytes_written,
            "host_bytes": host,
            "nand_bytes": nand,
            "dlwa": nand / host if host else None,
            "relocation_events": c.relocation_events - m.relocation_events,
            "relocated_bytes": c.relocated_bytes - m.relocated_bytes,
        }
    else:
        report.steady = {"mark_host_bytes": None, "dlwa": None, "relocation_events": None}

    kinds: dict[str, int] = {}
    for e in dev.events:
        kinds[e.event_type] = kinds.get(e.event_type, 0) + 1
    report.events = {
        "total": len(dev.events),
        "by_type": kinds,
        "relocated_pages": c.relocated_bytes // dev.page_size,
    }

    flash_total = 0
    handles = []
    for name, cache in zip(scn.names, scn.caches):
        metrics = cache.metrics
        flash_total += metrics.flash_bytes_written
        soc_ruh = _ruh_of(cache, cache.soc_pid)
        loc_ruh = _ruh_of(cache, cache.loc_pid)
        dedicated = scn.config.device.fdp_enabled and cache.cfg.segregate and not cache.handle_degraded
        inst = {
            "name": name,
            "metrics": metrics.to_dict(),
            "layout": {
                "lba_base": cache.cfg.lba_base,
                "flash_bytes": cache.cfg.flash_bytes,
                "dram_bytes": cache.cfg.dram_bytes,
                "soc_bytes": cache.soc_bytes,
                "loc_bytes": cache.loc_bytes,
                "num_buckets": cache.num_buckets,
                "num_regions": cache.num_regions,
            },
            "loc_wraps": cache.loc_wraps,
            "loc_flushes": cache.loc_flushes,
            "soc_ruh": soc_ruh,
            "loc_ruh": loc_ruh,
            # per-handle figures are only meaningful when the SOC owns its handle
            "soc_dlwa": _handle_dlwa(dev, soc_ruh, None) if dedicated else None,
            "soc_steady_dlwa": _handle_dlwa(dev, soc_ruh, mark) if dedicated and mark else None,
        }
        report.instances.append(inst)
        audit = cache.handle_audit()
        audit["instance"] = name
        handles.append(audit)
    report.handles = handles
    report.accounting_closed = flash_total == c.host_bytes_written
    return report


def run_scenario(config: ScenarioConfig, out_dir: str | Path | None = None) -> RunReport:
    """Build, replay and (when ``out_dir`` or the config names one) write report files."""
    out_dir = out_dir if out_dir is not None else config.report_dir
    scn = build_scenario(config)
    report = replay(scn, out_dir)
    if out_dir is not None:
        report.write(out_dir, scn.device)
    return report


def run_multi_tenant(config: ScenarioConfig, out_dir: str | Path | None = None) -> RunReport:
    """Same replay as :func:`run_scenario`; flags tenants whose isolated handles were unavailable."""
    report = run_scenario(config, out_dir)
    degraded = [h["instance"] for h in report.handles if h["degraded_to_default"]]
    if degraded:
        log.warning("handle pool exhausted; tenants on the default handle: %s", degraded)
    return report


# -- sweeps -------------------------------------------------------------------


def _variant(config: ScenarioConfig, dim: str, value: float, segregate: bool) -> ScenarioConfig:
    cfg = config.copy()
    if dim == "utilization":
        if not 0.0 < value <= 1.0:
            raise ValueError(f"utilization must lie in (0, 1], got {value}")
        share = value / len(cfg.instances)
        for inst in cfg.instances:
            inst.flash_bytes = None
            inst.lba_base = None
            inst.flash_fraction = share
    elif dim == "soc_fraction":
        if not 0.0 < value < 1.0:
            raise ValueError(f"soc_fraction must lie in (0, 1), got {value}")
        for inst in cfg.instances:
            inst.soc_fraction = value
    else:
        raise ValueError(f"unknown sweep dimension {dim!r}; use utilization or soc_fraction")
    for inst in cfg.instances:
        inst.segregate = segregate
    # the baseline is a conventional device: one write stream
    cfg.device.fdp_enabled = segregate
    cfg.report_dir = None
    cfg.validate()
    return cfg


def sweep(config: ScenarioConfig, dim: str, values: list[float], out_dir: str | Path | None = None) -> list[dict]:
    """One FDP run and one conventional run per value; returns rows and writes ``sweep.csv``."""
    rows = []
    for v in values:
        fdp = run_scenario(_variant(config, dim, v, True))
        base = run_scenario(_variant(config, dim, v, False))
        gets = sum(i["metrics"]["gets"] for i in fdp.instances)
        nvm = sum(i["metrics"]["nvm_hits"] for i in fdp.instances)
        app = sum(i["metrics"]["app_bytes"] for i in fdp.instances)
        flash = sum(i["metrics"]["flash_bytes_written"] for i in fdp.instances)
        rows.append({
            "value": v,
            "dlwa_fdp": fdp.steady_dlwa,
            "dlwa_nonfdp": base.steady_dlwa,
            "nvm_hit_ratio": nvm / gets if gets else None,
            "alwa": flash / app if app else None,
            "relocation_events": fdp.relocation_events,
            "relocation_events_nonfdp": base.relocation_events,
            "dlwa_fdp_whole_run": fdp.dlwa,
            "dlwa_nonfdp_whole_run": base.dlwa,
        })
        log.info("sweep %s=%s fdp=%s nonfdp=%s", dim, v, fdp.steady_dlwa, base.steady_dlwa)
    if out_dir is not None:
        write_rows(Path(out_dir) / "sweep.csv", SWEEP_COLUMNS, rows)
    return rows


def write_rows(path: Path, columns: tuple[str, ...], rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: "" if r.get(k) is None else r.get(k) for k in columns})


# -- model vs simulation ------------------------------------------------------


def spare_bytes_for_soc(device: DeviceConfig, s_soc: int, other_live_bytes: int) -> int:
    """Physical bytes available to the SOC: everything not holding other live data."""
    return device.physical_capacity_bytes - other_live_bytes if s_soc else 0


def soc_fraction_for_spare_ratio(x: float, config: ScenarioConfig) -> float:
    """SOC fraction of the first instance giving S_P_SOC / S_SOC = x when nothing else is live."""
    flash = config.partitions()[0][1]
    return config.device.physical_capacity_bytes / (x * flash)


def compare_model_sim(
    config: ScenarioConfig,
    soc_fractions: list[float],
    out_dir: str | Path | None = None,
    warmup_soc_spans: float | None = None,
    measure_soc_spans: float | None = None,
) -> list[dict]:
    """Per-fraction steady SOC DLWA from simulation beside the closed-form prediction.

    S_P_SOC counts every physical byte not holding other live data: the SOC
    footprint, device overprovisioning and LBA space nobody has written.
    When ``warmup_soc_spans`` is given, each point warms up for that many
    SOC-sized volumes of host writes and then measures ``measure_soc_spans``
    more (default 3), instead of using the run section as is.
    """
    rows = []
    dev_cfg = config.device
    page = dev_cfg.page_size_bytes
    for f in soc_fractions:
        cfg = config.copy()
        for inst in cfg.instances:
            inst.soc_fraction = f
            inst.segregate = True
        cfg.device.fdp_enabled = True
        cfg.report_dir = None
        row = {"soc_fraction": f, "excluded": False, "reason": ""}
        if dev_cfg.op_fraction == 0.0:
            flash = cfg.partitions()[0][1]
            soc = flash - HybridCacheConfig(1, flash, f, region_bytes=cfg.instances[0].region_bytes).layout(page)[1]
            row.update(s_soc_bytes=soc, s_p_soc_bytes=soc, x=1.0, dlwa_sim=None, dlwa_model=None,
                       relative_error=None, excluded=True,
                       reason="S_P_SOC <= S_SOC: no spare physical space, model undefined")
            rows.append(row)
            continue
        scn = build_scenario(cfg)
        if warmup_soc_spans is not None:
            soc = scn.caches[0].soc_bytes
            cfg.run.warmup_host_bytes = int(warmup_soc_spans * soc)
            cfg.run.host_bytes = int((warmup_soc_spans + (measure_soc_spans or 3.0)) * soc)
        report = replay(scn)
        cache = scn.caches[0]
        s_soc = cache.soc_bytes
        soc_lo = cache.soc_lba
        soc_pages = s_soc // page
        soc_mapped = int(np.count_nonzero(scn.device.l2p[soc_lo:soc_lo + soc_pages] >= 0))
        other_live = (scn.device.mapped_count() - soc_mapped) * page
        s_p_soc = spare_bytes_for_soc(dev_cfg, s_soc, other_live)
        sim = report.instances[0]["soc_steady_dlwa"]
        row.update(s_soc_bytes=s_soc, s_p_soc_bytes=s_p_soc, x=s_p_soc / s_soc, dlwa_sim=sim)
        try:
            model = dlwa_from_sizes(s_soc, s_p_soc)
        except ModelDomainError as exc:
            row.update(dlwa_model=None, relative_error=None, excluded=True, reason=str(exc))
        else:
            err = (sim - model) / model if sim is not None else None
            row.update(dlwa_model=model, relative_error=err)
        rows.append(row)
        log.info("compare soc=%s x=%.3f sim=%s model=%s", f, row["x"], sim, row.get("dlwa_model"))
    if out_dir is not None:
        write_rows(Path(out_dir) / "compare.csv", COMPARE_COLUMNS, rows)
    return rows


def uniform_overwrite_dlwa(
    x: float,
    span_rus: int = 512,
    pages_per_ru: int = 256,
    warmup_spans: float = 1.0,
    measure_spans: float = 3.0,
    seed: int = 0,
) -> tuple[float, float]:
    """(simulated, model) DLWA for uniform random page overwrites straight on the FTL.

    The logical span is filled sequentially, overwritten at random for
    ``warmup_spans`` spans, then measured over ``measure_spans`` more.
    """
    if x <= 1.0:
        raise ModelDomainError("x must exceed 1")
    page = 4096
    cfg = DeviceConfig(
        page_size_bytes=page,
        ru_size_bytes=pages_per_ru * page,
        usable_capacity_bytes=span_rus * pages_per_ru * page,
        op_fraction=1.0 - 1.0 / x,
        num_ruhs=1,
    )
    dev = Device(cfg)
    n = cfg.usable_pages
    dev.write(None, 0, n)
    rng = np.random.default_rng(seed)
    write = dev.write_page
    for lba in rng.integers(0, n, int(warmup_spans * n)).tolist():
        write(None, lba)
    m = dev.counters.copy()
    for lba in rng.integers(0, n, int(measure_spans * n)).tolist():
        write(None, lba)
    c = dev.counters
    sim = (c.nand_bytes_written - m.nand_bytes_written) / (c.host_bytes_written - m.host_bytes_written)
    # the realised spare ratio, after rounding physical capacity up to whole RUs
    real_x = cfg.physical_capacity_bytes / cfg.usable_capacity_bytes
    return sim, dlwa_from_sizes(1.0, real_x) if math.isfinite(real_x) else math.nan
