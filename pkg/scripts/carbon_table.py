"""Embodied-carbon estimates for a range of device DLWA values.

    python3 scripts/carbon_table.py --capacity-gb 1880 --dlwa 1.03,1.5,2,3.5
"""

import argparse

from fdpsim.model import CarbonParams, embodied_co2e


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--capacity-gb", type=float, default=1880)
    ap.add_argument("--dlwa", default="1.03,1.5,2,3.5")
    ap.add_argument("--lifecycle-years", type=float, default=5)
    ap.add_argument("--warranty-years", type=float, default=5)
    args = ap.parse_args()
    print("dlwa,kg_co2e")
    for d in (float(v) for v in args.dlwa.split(",")):
        p = CarbonParams(dlwa=d, device_cap_gb=args.capacity_gb,
                         lifecycle_years=args.lifecycle_years, warranty_years=args.warranty_years)
        print(f"{d},{embodied_co2e(p):.3f}")


if __name__ == "__main__":
    main()
