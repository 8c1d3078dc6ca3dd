"""Segregated vs unsegregated run of one scenario; prints steady DLWA and GC events.

    python3 scripts/run_segregation.py configs/segregation.yaml --out-dir out/segregation
"""

import argparse
import json
import time

from fdpsim.config import load_config
from fdpsim.runner import run_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--out-dir", default=None)
    args = ap.parse_args()
    base = load_config(args.config)
    rows = {}
    for label, seg in (("segregated", True), ("unsegregated", False)):
        cfg = base.copy()
        cfg.device.fdp_enabled = seg
        for inst in cfg.instances:
            inst.segregate = seg
        t = time.perf_counter()
        out = f"{args.out_dir}/{label}" if args.out_dir else None
        report = run_scenario(cfg, out)
        rows[label] = {
            "steady_dlwa": report.steady_dlwa,
            "whole_run_dlwa": report.dlwa,
            "relocation_events": report.relocation_events,
            "seconds": round(time.perf_counter() - t, 1),
        }
    print(json.dumps(rows, indent=2))


if __name__ == "__main__":
    main()
