"""Utilization and SOC-fraction sweeps, segregated and unsegregated, written as CSV.

    python3 scripts/run_sweeps.py configs/segregation.yaml --host-multiple 4 --out-dir out/sweeps
"""

import argparse
import json

from fdpsim.config import load_config
from fdpsim.runner import sweep

SWEEPS = {
    "utilization": [0.5, 0.9, 0.95, 1.0],
    "soc_fraction": [0.04, 0.16, 0.32, 0.64, 0.90, 0.96],
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--host-multiple", type=float, default=None)
    ap.add_argument("--dims", default=",".join(SWEEPS))
    ap.add_argument("--out-dir", default="out/sweeps")
    args = ap.parse_args()
    cfg = load_config(args.config)
    if args.host_multiple is not None:
        cfg.run.host_capacity_multiple = args.host_multiple
    for dim in args.dims.split(","):
        for row in sweep(cfg, dim, SWEEPS[dim], f"{args.out_dir}/{dim}"):
            print(dim, json.dumps(row), flush=True)


if __name__ == "__main__":
    main()
