"""Acceptance criteria, each checked at its stated tolerance.

Every criterion records one PASS/FAIL line in ``RESULTS``; the lines are
printed as they happen and again in the pytest terminal summary. All
simulator runs here scan the device invariants every 10^4 requests.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdpsim.config import load_config
from fdpsim.ftl import Device, DeviceConfig, RuhType
from fdpsim.model import CarbonParams, delta, dlwa_from_sizes, embodied_co2e, lambert_w0
from fdpsim.placement import PlacementIdentifier
from fdpsim.runner import (
    compare_model_sim,
    run_multi_tenant,
    run_scenario,
    soc_fraction_for_spare_ratio,
    sweep,
)
from reference_ftl import ReferenceFtl
from test_model import bisect_delta

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
CHECK_EVERY = 10_000
RESULTS: list[str] = []


def verdict(criterion: str, ok: bool, detail: str) -> None:
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def scenario(name, **run):
    cfg = load_config(CONFIGS / name)
    cfg.report_dir = None
    cfg.run.check_every = CHECK_EVERY
    for k, v in run.items():
        setattr(cfg.run, k, v)
    return cfg


def unsegregated(cfg):
    cfg = cfg.copy()
    cfg.device.fdp_enabled = False
    for inst in cfg.instances:
        inst.segregate = False
    return cfg


def timed(fn, *args):
    t = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t


# -- 1 and 7: segregation benefit and GC-event reduction ---------------------------------------


@pytest.fixture(scope="module")
def segregation_pair():
    cfg = scenario("segregation.yaml")
    seg, t_seg = timed(run_scenario, cfg)
    shared, t_shared = timed(run_scenario, unsegregated(cfg))
    return seg, shared, t_seg, t_shared


def test_c01_segregation_benefit(segregation_pair):
    seg, shared, t_seg, t_shared = segregation_pair
    s, u = seg.steady_dlwa, shared.steady_dlwa
    ok = (
        s is not None and u is not None
        and s <= 1.10 and u >= 2.0 and u >= 2 * s
        and max(t_seg, t_shared) <= 300
        and seg.accounting_closed and shared.accounting_closed
    )
    verdict("1", ok, f"steady DLWA segregated={s:.4f} unsegregated={u:.4f} "
                     f"runtime={t_seg:.0f}s/{t_shared:.0f}s (<=300s each)")


def test_c07_gc_event_reduction(segregation_pair):
    seg, shared, _, _ = segregation_pair
    hs, hu = seg.device["host_bytes_written"], shared.device["host_bytes_written"]
    es, eu = seg.device["relocation_events"], shared.device["relocation_events"]
    # both runs stop at the first request crossing the same byte budget
    equal_bytes = abs(hs - hu) <= 256 * 1024
    ok = equal_bytes and es > 0 and eu >= 3 * es
    verdict("7", ok, f"relocation events unsegregated={eu} segregated={es} ratio={eu / max(es, 1):.1f}x "
                     f"host bytes {hu} vs {hs}")


# -- 2: utilization flatness --------------------------------------------------------------------


def test_c02_utilization_flatness():
    rows = sweep(scenario("segregation.yaml", host_capacity_multiple=4), "utilization", [0.5, 0.9, 0.95, 1.0])
    fdp = [r["dlwa_fdp"] for r in rows]
    non = [r["dlwa_nonfdp"] for r in rows]
    spread = max(fdp) - min(fdp)
    ok = spread <= 0.05 and all(a <= b for a, b in zip(non, non[1:]))
    verdict("2", ok, f"segregated {[round(v, 4) for v in fdp]} spread={spread:.4f} (<=0.05); "
                     f"unsegregated {[round(v, 3) for v in non]} nondecreasing")


# -- 3: SOC-size sweep ------------------------------------------------------------------------------


def test_c03_soc_size_sweep():
    values = [0.04, 0.16, 0.32, 0.64, 0.90, 0.96]
    rows = sweep(scenario("soc_sweep.yaml"), "soc_fraction", values)
    fdp = [r["dlwa_fdp"] for r in rows]
    non = [r["dlwa_nonfdp"] for r in rows]
    monotone = all(a <= b for a, b in zip(fdp, fdp[1:]))
    high = [abs(f - n) / n for v, f, n in zip(values, fdp, non) if v >= 0.90]
    ok = monotone and fdp[0] <= 1.1 and all(d <= 0.15 for d in high)
    verdict("3", ok, f"segregated {[round(v, 3) for v in fdp]} nondecreasing={monotone}; "
                     f"unsegregated {[round(v, 3) for v in non]}; gap at >=90% {[round(d, 3) for d in high]} (<=0.15)")


# -- 4: model validation ----------------------------------------------------------------------------


def test_c04_model_validation():
    cfg = scenario("model_validation.yaml")
    fractions = [soc_fraction_for_spare_ratio(x, cfg) for x in (1.25, 1.5, 2.0, 5.0)]
    rows = compare_model_sim(cfg, fractions, warmup_soc_spans=5, measure_soc_spans=3)
    errs = [r["relative_error"] for r in rows]
    uniform_ok = all(e is not None and abs(e) <= 0.05 for e in errs)

    skewed = cfg.copy()
    skewed.instances[0].workload_overrides["zipf_alpha"] = 1.0
    (hot,) = compare_model_sim(skewed, fractions[:1], warmup_soc_spans=5, measure_soc_spans=3)
    ok = uniform_ok and hot["dlwa_sim"] <= hot["dlwa_model"]
    detail = ", ".join(f"x={r['x']:.3f} sim={r['dlwa_sim']:.4f} model={r['dlwa_model']:.4f}" for r in rows)
    verdict("4", ok, f"{detail}; max |err|={max(abs(e) for e in errs):.4f} (<=0.05); "
                     f"alpha=1 at x={hot['x']:.3f}: sim={hot['dlwa_sim']:.4f} <= model={hot['dlwa_model']:.4f}")


# -- 5: Lambert W and delta ----------------------------------------------------------------------------


def test_c05_lambert_w_and_delta():
    rng = np.random.default_rng(5)
    ws = rng.uniform(-1.0, 10.0, 10_000).tolist()
    worst_w = max(abs(lambert_w0(w * math.exp(w)) - w) for w in ws)
    xs = rng.uniform(1.001, 50.0, 10_000).tolist()
    worst_res = max(abs(math.log(d) - x * (d - 1.0)) for x in xs for d in [delta(1.0, x)])
    d125 = delta(1.0, 1.25)
    oracle = bisect_delta(1.25)
    ok = worst_w <= 1e-9 and worst_res <= 1e-9 and abs(d125 - oracle) <= 1e-6
    verdict("5", ok, f"max W round-trip error={worst_w:.2e}, max delta residual={worst_res:.2e}, "
                     f"delta(1.25)={d125:.9f} vs bisection {oracle:.9f}")


@pytest.mark.xfail(strict=True, reason="1/(1-delta(1.25)) is 2.6927; the stated 2.72 +- 0.01 is unreachable")
def test_c05_dlwa_at_five_fourths_literal():
    oracle = 1.0 / (1.0 - bisect_delta(1.25))
    got = dlwa_from_sizes(800, 1000)
    verdict("5 (DLWA(1.25) ~= 2.72 +- 0.01)", abs(got - 2.72) <= 0.01,
            f"model={got:.4f}, bisection oracle={oracle:.4f}; target 2.72 is inconsistent with the formula")


# -- 6: sequential ideal ------------------------------------------------------------------------------------


def test_c06_sequential_ideal():
    cfg = scenario("sequential.yaml")
    assert cfg.device.ru_size_bytes % cfg.instances[0].region_bytes == 0
    seg = run_scenario(cfg)
    shared = run_scenario(unsegregated(cfg))
    results = [(r.dlwa, r.device["relocation_events"], r.instances[0]["loc_wraps"]) for r in (seg, shared)]
    ok = all(d == 1.0 and ev == 0 and wraps >= 1 for d, ev, wraps in results)
    verdict("6", ok, f"(DLWA, relocations, LOC wraps) segregated={results[0]} unsegregated={results[1]}")


# -- 8: carbon arithmetic ----------------------------------------------------------------------------------


@settings(max_examples=200)
@given(dlwa=st.floats(0.01, 1e3), cap=st.floats(0.01, 1e5), k=st.floats(0.1, 10.0))
def test_c08_carbon_linearity(dlwa, cap, k):
    base = embodied_co2e(CarbonParams(dlwa=dlwa, device_cap_gb=cap))
    assert embodied_co2e(CarbonParams(dlwa=k * dlwa, device_cap_gb=cap)) == pytest.approx(k * base, rel=1e-12)
    assert embodied_co2e(CarbonParams(dlwa=dlwa, device_cap_gb=k * cap)) == pytest.approx(k * base, rel=1e-12)


def test_c08_carbon_reference_point():
    got = embodied_co2e(CarbonParams(dlwa=3.5, device_cap_gb=1880, lifecycle_years=5, warranty_years=5,
                                     c_ssd_kg_per_gb=0.16))
    verdict("8", got == 1052.8, f"embodied_co2e(3.5, 1880, 5, 5, 0.16)={got!r} (exact 1052.8); linearity by property test")


# -- 9: multi-tenant ---------------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def tenant_pair():
    cfg = scenario("multi_tenant.yaml")
    return run_multi_tenant(cfg), run_multi_tenant(unsegregated(cfg))


def test_c09_multi_tenant(tenant_pair):
    seg, shared = tenant_pair
    s, u = seg.steady_dlwa, shared.steady_dlwa
    isolated = not any(h["degraded_to_default"] for h in seg.handles)
    ok = s is not None and u is not None and s <= 1.1 and u >= 2.0 and isolated
    verdict("9", ok, f"device steady DLWA segregated={s:.4f} (<=1.1) unsegregated={u:.4f} (>=2.0), "
                     f"{len(seg.handles)} tenants on distinct handles={isolated}")


# -- 10: determinism and conservation ---------------------------------------------------------------------


def _strip(report):
    d = report.to_dict()
    d.pop("generated_at")
    return d


def test_c10_determinism_and_invariants(tenant_pair):
    seg, _ = tenant_pair
    again = run_multi_tenant(scenario("multi_tenant.yaml"))
    smoke = scenario("smoke.yaml")
    a, b = run_scenario(smoke), run_scenario(smoke)
    same = _strip(seg) == _strip(again) and _strip(a) == _strip(b)
    # every run in this module scans invariants every CHECK_EVERY requests and
    # raises InvariantViolation on the first failure, so reaching here means they held
    ok = same and seg.config["run"]["check_every"] == CHECK_EVERY and a.accounting_closed
    verdict("10", ok, f"identical reports on re-run (two-tenant 8 GiB, single 1 GiB); "
                      f"invariants scanned every {CHECK_EVERY} requests in all runs")


# -- 11: oracle equivalence --------------------------------------------------------------------------------


def _oracle_case(seed: int) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    persistent = seed % 2 == 1
    ppr = int(rng.choice([4, 8, 16]))
    usable_rus = int(rng.integers(20, 48))
    cfg = DeviceConfig(
        ru_size_bytes=ppr * 4096,
        usable_capacity_bytes=usable_rus * ppr * 4096,
        op_fraction=0.25,
        num_ruhs=2,
        ruh_type=RuhType.PERSISTENTLY_ISOLATED if persistent else RuhType.INITIALLY_ISOLATED,
    )
    assert cfg.physical_rus <= 64
    dev = Device(cfg)
    ref = ReferenceFtl(cfg.usable_pages, ppr, cfg.physical_rus, cfg.gc_trigger_free_rus, persistent=persistent)
    n = cfg.usable_pages
    handles = rng.integers(0, 2, 100_000).tolist()
    lbas = rng.integers(0, n, 100_000).tolist()
    pids = [PlacementIdentifier(0, 0), PlacementIdentifier(0, 1)]
    for i, (h, lba) in enumerate(zip(handles, lbas)):
        # each handle owns LBAs of one parity so relocation ownership stays unambiguous
        lba = lba - lba % 2 + h
        if lba >= n:
            lba -= 2
        dev.write(pids[h], lba)
        ref.write(h, lba)
        if (i + 1) % CHECK_EVERY == 0:
            dev.check_invariants()
    counters = dev.counters.to_dict()
    same = (
        all(counters[k] == v for k, v in ref.counters().items())
        and dev.mapping() == ref.l2p
        and dev.valid.tolist() == ref.valid_counts()
    )
    return same, f"seed={seed} rus={cfg.physical_rus} persistent={persistent} victims={counters['gc_victim_count']}"


def test_c11_oracle_equivalence():
    outcomes = [_oracle_case(seed) for seed in range(20)]
    bad = [d for ok, d in outcomes if not ok]
    gc_seen = sum(" victims=0" not in d for _, d in outcomes)
    verdict("11", not bad and gc_seen == 20,
            f"{20 - len(bad)}/20 seeds identical counters, mapping and valid counts; GC ran in {gc_seen}/20"
            + (f"; mismatches: {bad}" if bad else ""))
