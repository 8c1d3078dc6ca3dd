"""Scenario configuration: a YAML (or JSON) document with device, instances, run and output sections.

Sizes may be integers (bytes) or strings such as ``"8GiB"``, ``"1 MiB"`` or ``"930GB"``.

Example::

    device:
      usable_capacity_bytes: 8GiB
      ru_size_bytes: 4MiB
      op_fraction: 0.07
      num_ruhs: 8
    instances:
      - name: kv
        flash_fraction: 1.0
        dram_bytes: 80MiB
        soc_fraction: 0.04
        region_bytes: 1MiB
        segregate: true
        workload: twitter-c12
        workload_overrides: {num_keys: 2400000}
    run:
      host_capacity_multiple: 8
      seed: 1
    output:
      report_dir: out/run
"""

from __future__ import annotations

import copy
import json
import math
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from fdpsim.ftl import ConfigError, DeviceConfig
from fdpsim.workload import PROFILES, SyntheticSpec, profile

_UNITS = {
    "": 1, "B": 1,
    "K": 1024, "KB": 1000, "KIB": 1024,
    "M": 1024**2, "MB": 1000**2, "MIB": 1024**2,
    "G": 1024**3, "GB": 1000**3, "GIB": 1024**3,
    "T": 1024**4, "TB": 1000**4, "TIB": 1024**4,
}
_SIZE_RE = re.compile(r"^\s*([0-9]*\.?[0-9]+)\s*([A-Za-z]*)\s*$")


def parse_size(value) -> int:
    if value is None:
        raise ConfigError("size is missing")
    if isinstance(value, bool):
        raise ConfigError(f"not a size: {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if not value.is_integer():
            raise ConfigError(f"byte sizes must be whole numbers: {value!r}")
        return int(value)
    m = _SIZE_RE.match(str(value))
    if not m or m.group(2).upper() not in _UNITS:
        raise ConfigError(f"cannot parse size {value!r}")
    n = float(m.group(1)) * _UNITS[m.group(2).upper()]
    if not n.is_integer():
        raise ConfigError(f"byte sizes must be whole numbers: {value!r}")
    return int(n)


_DEVICE_SIZE_FIELDS = ("page_size_bytes", "ru_size_bytes", "usable_capacity_bytes")


@dataclass
class InstanceConfig:
    name: str = "cache0"
    flash_bytes: int | None = None
    flash_fraction: float | None = 1.0  # of device usable capacity, used when flash_bytes is unset
    dram_bytes: int | None = None
    dram_fraction: float = 0.01  # of device usable capacity, used when dram_bytes is unset
    soc_fraction: float = 0.04
    bucket_bytes: int = 4096
    region_bytes: int = 1024 * 1024
    small_item_threshold_bytes: int = 2048
    lba_base: int | None = None
    segregate: bool = True
    hash_seed: int = 0
    workload: str = "twitter-c12"
    workload_overrides: dict = field(default_factory=dict)
    trace: str | None = None  # CSV trace path; replaces the synthetic profile

    def workload_spec(self, seed: int) -> SyntheticSpec:
        return profile(self.workload, **{"seed": seed, **self.workload_overrides})


@dataclass
class RunConfig:
    total_ops: int | None = None
    host_bytes: int | None = None
    host_capacity_multiple: float = 8.0
    snapshot_window_bytes: int | None = None  # default: usable / 64
    seed: int = 0
    check_every: int = 0  # full invariant scan every N requests; 0 disables
    # host bytes that must pass before the steady-state mark; default: sum of partition sizes
    warmup_host_bytes: int | None = None
    # additionally wait until each cache has written this many SOC-sized volumes to its SOC
    soc_warmup_spans: float = 0.0

    def target_host_bytes(self, device: DeviceConfig) -> int:
        if self.host_bytes is not None:
            return self.host_bytes
        return int(self.host_capacity_multiple * device.usable_capacity_bytes)

    def window(self, device: DeviceConfig) -> int:
        if self.snapshot_window_bytes:
            return self.snapshot_window_bytes
        return max(device.page_size_bytes, device.usable_capacity_bytes // 64)


@dataclass
class ScenarioConfig:
    device: DeviceConfig = field(default_factory=DeviceConfig)
    instances: list[InstanceConfig] = field(default_factory=lambda: [InstanceConfig()])
    run: RunConfig = field(default_factory=RunConfig)
    report_dir: str | None = None

    def copy(self) -> "ScenarioConfig":
        return copy.deepcopy(self)

    def validate(self) -> None:
        self.device.validate()
        if not self.instances:
            raise ConfigError("a scenario needs at least one instance")
        usable = self.device.usable_capacity_bytes
        page = self.device.page_size_bytes
        spans = []
        for inst, (base, nbytes) in zip(self.instances, self.partitions()):
            if inst.trace is None and inst.workload not in PROFILES:
                raise ConfigError(f"instance {inst.name}: unknown workload profile {inst.workload!r}")
            if nbytes <= 0 or nbytes % page:
                raise ConfigError(f"instance {inst.name}: flash size must be a positive page multiple")
            if base * page + nbytes > usable:
                raise ConfigError(f"instance {inst.name}: partition exceeds usable capacity")
            spans.append((base, base + nbytes // page, inst.name))
        spans.sort()
        for (a0, a1, na), (b0, b1, nb) in zip(spans, spans[1:]):
            if b0 < a1:
                raise ConfigError(f"instances {na} and {nb} have overlapping partitions")

    def partitions(self) -> list[tuple[int, int]]:
        """(first LBA, flash bytes) per instance; unset bases are packed in order."""
        page = self.device.page_size_bytes
        usable = self.device.usable_capacity_bytes
        out = []
        cursor = 0
        for inst in self.instances:
            if inst.flash_bytes is not None:
                nbytes = inst.flash_bytes
            else:
                nbytes = int(inst.flash_fraction * usable) // page * page
            base = cursor if inst.lba_base is None else inst.lba_base
            out.append((base, nbytes))
            cursor = base + nbytes // page
        return out

    def to_dict(self) -> dict:
        return {
            "device": self.device.to_dict(),
            "instances": [asdict(i) for i in self.instances],
            "run": asdict(self.run),
            "output": {"report_dir": self.report_dir},
        }


def _build(cls, data: dict, sizes: tuple[str, ...] = ()):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kw = dict(data)
    for k in sizes:
        if kw.get(k) is not None:
            kw[k] = parse_size(kw[k])
    return cls(**kw)


def config_from_dict(data: dict) -> ScenarioConfig:
    data = data or {}
    unknown = set(data) - {"device", "instances", "run", "output"}
    if unknown:
        raise ConfigError(f"unknown top-level sections: {sorted(unknown)}")
    device = _build(DeviceConfig, data.get("device") or {}, _DEVICE_SIZE_FIELDS)
    inst_data = data.get("instances")
    if inst_data is None:
        inst_data = [{}]
    if isinstance(inst_data, dict):
        inst_data = [inst_data]
    instances = [
        _build(InstanceConfig, d or {}, ("flash_bytes", "dram_bytes", "bucket_bytes", "region_bytes",
                                         "small_item_threshold_bytes"))
        for d in inst_data
    ]
    for i, inst in enumerate(instances):
        if inst.name == "cache0" and len(instances) > 1:
            inst.name = f"cache{i}"
    run = _build(RunConfig, data.get("run") or {}, ("host_bytes", "snapshot_window_bytes", "warmup_host_bytes"))
    out = data.get("output") or {}
    cfg = ScenarioConfig(device=device, instances=instances, run=run, report_dir=out.get("report_dir"))
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> ScenarioConfig:
    text = Path(path).read_text(encoding="utf-8")
    if str(path).endswith(".json"):
        data = json.loads(text)
    else:
        # YAML 1.2 is a superset of JSON, so JSON renderings load here too
        data = yaml.safe_load(text)
    return config_from_dict(data)


def lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)
