"""Command-line entry point: ``fdpsim run|sweep|model|compare|multi-tenant``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from fdpsim.config import load_config
from fdpsim.ftl import FtlError
from fdpsim.model import ModelDomainError, ModelParams, dlwa_model
from fdpsim.runner import InvariantViolation, compare_model_sim, run_multi_tenant, run_scenario, sweep
from fdpsim.workload import WorkloadError


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.run.seed = args.seed
    if args.out_dir is not None:
        cfg.report_dir = args.out_dir
    return cfg


def _summary(report) -> dict:
    return {
        "ops": report.ops,
        "dlwa": report.dlwa,
        "steady_dlwa": report.steady_dlwa,
        "relocation_events": report.relocation_events,
        "instances": {
            i["name"]: {"alwa": i["metrics"]["alwa"], "nvm_hit_ratio": i["metrics"]["nvm_hit_ratio"]}
            for i in report.instances
        },
    }


def cmd_run(args) -> int:
    cfg = _load(args)
    report = run_scenario(cfg)
    print(json.dumps(_summary(report), indent=2, sort_keys=True))
    return 0


def cmd_multi_tenant(args) -> int:
    cfg = _load(args)
    if len(cfg.instances) < 2:
        print("note: fewer than two instances; this is an ordinary run", file=sys.stderr)
    report = run_multi_tenant(cfg)
    out = _summary(report)
    out["degraded"] = [h["instance"] for h in report.handles if h["degraded_to_default"]]
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def _print_rows(rows, columns):
    print(",".join(columns))
    for r in rows:
        print(",".join("" if r.get(c) is None else str(r.get(c)) for c in columns))


def cmd_sweep(args) -> int:
    cfg = _load(args)
    rows = sweep(cfg, args.dim, args.values, cfg.report_dir)
    _print_rows(rows, ("value", "dlwa_fdp", "dlwa_nonfdp", "nvm_hit_ratio", "alwa", "relocation_events"))
    return 0


def cmd_compare(args) -> int:
    cfg = _load(args)
    rows = compare_model_sim(cfg, args.soc_fractions, cfg.report_dir,
                             warmup_soc_spans=args.warmup_soc_spans, measure_soc_spans=args.measure_soc_spans)
    _print_rows(rows, ("soc_fraction", "x", "dlwa_sim", "dlwa_model", "relative_error", "excluded", "reason"))
    return 0


def cmd_model(args) -> int:
    p = ModelParams(s_soc=args.s_soc, s_op=args.s_p_soc - args.s_soc)
    try:
        d = dlwa_model(p)
    except ModelDomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"s_soc": args.s_soc, "s_p_soc": args.s_p_soc, "x": p.x, "delta": p.delta, "dlwa": d}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fdpsim", description="Flash cache data placement simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", type=Path)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir", default=None)
        return p

    with_config("run", "replay one scenario").set_defaults(func=cmd_run)
    with_config("multi-tenant", "replay several cache instances on one device").set_defaults(func=cmd_multi_tenant)
    p = with_config("sweep", "run a scenario across values of one dimension, FDP on and off")
    p.add_argument("--dim", required=True, choices=("utilization", "soc_fraction"))
    p.add_argument("--values", required=True, type=_floats)
    p.set_defaults(func=cmd_sweep)
    p = with_config("compare", "closed-form SOC DLWA against simulation")
    p.add_argument("--soc-fractions", required=True, type=_floats)
    p.add_argument("--warmup-soc-spans", type=float, default=None,
                   help="warm up for this many SOC-sized volumes per point instead of the run section")
    p.add_argument("--measure-soc-spans", type=float, default=3.0)
    p.set_defaults(func=cmd_compare)
    p = sub.add_parser("model", help="evaluate the closed-form DLWA")
    p.add_argument("--s-soc", type=float, required=True)
    p.add_argument("--s-p-soc", type=float, required=True)
    p.set_defaults(func=cmd_model)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (FtlError, WorkloadError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
