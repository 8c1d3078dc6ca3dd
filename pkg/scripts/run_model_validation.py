"""Simulated SOC DLWA against the closed-form model for a set of spare ratios.

    python3 scripts/run_model_validation.py configs/model_validation.yaml --x 1.25,1.5,2,5
"""

import argparse
import json

from fdpsim.config import load_config
from fdpsim.runner import compare_model_sim, soc_fraction_for_spare_ratio, uniform_overwrite_dlwa


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config")
    ap.add_argument("--x", default="1.25,1.5,2,5", help="spare ratios S_P_SOC / S_SOC")
    ap.add_argument("--zipf-alpha", type=float, default=None)
    ap.add_argument("--out-dir", default="out/model_validation")
    args = ap.parse_args()
    cfg = load_config(args.config)
    if args.zipf_alpha is not None:
        cfg.instances[0].workload_overrides["zipf_alpha"] = args.zipf_alpha
    xs = [float(v) for v in args.x.split(",")]
    fractions = [soc_fraction_for_spare_ratio(x, cfg) for x in xs]
    for row in compare_model_sim(cfg, fractions, args.out_dir, warmup_soc_spans=5, measure_soc_spans=3):
        print("cache", json.dumps(row))
    for x in xs:
        sim, model = uniform_overwrite_dlwa(x)
        print("ftl", json.dumps({"x": x, "dlwa_sim": sim, "dlwa_model": model}))


if __name__ == "__main__":
    main()
