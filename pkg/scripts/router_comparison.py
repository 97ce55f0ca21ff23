"""Onset rate per router on each preset, with the gain over shortest path.

    python scripts/router_comparison.py --networks grid5,scalefree --alpha 0.8
"""
import argparse
import time

from covroute.engine import SimConfig
from covroute.metrics import TransitionBelowGrid
from covroute.netgraph import PRESETS, preset
from covroute.sweep import compare_routers, default_workers, format_comparison


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--networks", default=",".join(PRESETS))
    p.add_argument("--alpha", type=float, default=0.8)
    p.add_argument("--step", type=float, default=0.1)
    p.add_argument("--max-lambda", type=float, default=8.0)
    p.add_argument("--replicates", type=int, default=3)
    p.add_argument("--duration", type=float, default=3600.0)
    p.add_argument("--jobs", type=int, default=default_workers())
    args = p.parse_args()

    n = int(round(args.max_lambda / args.step))
    lambdas = [round(args.step * i, 6) for i in range(1, n + 1)]
    for name in args.networks.split(","):
        t0 = time.time()
        try:
            cmp = compare_routers(preset(name), lambdas, args.alpha, args.replicates,
                                  SimConfig(duration=args.duration), workers=args.jobs)
        except TransitionBelowGrid as exc:
            print(f"{name}: {exc}")
            continue
        print(format_comparison(cmp))
        print(f"({time.time() - t0:.0f} s)\n")


if __name__ == "__main__":
    main()
