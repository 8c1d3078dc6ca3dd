"""Flash cache data placement simulator.

A page-mapped FTL with reclaim-unit handles, a hybrid DRAM/flash cache
that can segregate its small- and large-object engines onto distinct
handles, synthetic and trace workloads, and a closed-form model of the
small-object cache's write amplification.
"""

from fdpsim.cache import CacheMetrics, HybridCache, HybridCacheConfig, alwa, cache_new
from fdpsim.config import ScenarioConfig, load_config
from fdpsim.ftl import Device, DeviceConfig, DlwaCounters, RuhType, device_new, dlwa
from fdpsim.model import CarbonParams, ModelParams, dlwa_model, embodied_co2e, gc_energy_proxy, lambert_w0
from fdpsim.placement import PlacementAllocator, PlacementHandle, PlacementIdentifier, allocator_new
from fdpsim.runner import RunReport, compare_model_sim, run_multi_tenant, run_scenario, sweep
from fdpsim.workload import CacheRequest, Op, SyntheticSpec, gen_synthetic, parse_trace, profile

__all__ = [
    "CacheMetrics", "HybridCache", "HybridCacheConfig", "alwa", "cache_new",
    "ScenarioConfig", "load_config",
    "Device", "DeviceConfig", "DlwaCounters", "RuhType", "device_new", "dlwa",
    "CarbonParams", "ModelParams", "dlwa_model", "embodied_co2e", "gc_energy_proxy", "lambert_w0",
    "PlacementAllocator", "PlacementHandle", "PlacementIdentifier", "allocator_new",
    "RunReport", "compare_model_sim", "run_multi_tenant", "run_scenario", "sweep",
    "CacheRequest", "Op", "SyntheticSpec", "gen_synthetic", "parse_trace", "profile",
]
