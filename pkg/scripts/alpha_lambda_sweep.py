"""Mean delay over an alpha x lambda grid for one topology.

Writes ``cells.csv`` and ``heatmap_coverage.txt`` to the output directory,
prints a coarse text rendering of the heatmap and the alpha range with the
highest onset rate.

    python scripts/alpha_lambda_sweep.py --network grid5 --out runs/grid5
"""
import argparse
import time
from pathlib import Path

import numpy as np

from covroute.engine import SimConfig
from covroute.sweep import (
    DEFAULT_ALPHAS,
    DEFAULT_LAMBDAS,
    SweepSpec,
    default_workers,
    emit_csv,
    emit_heatmap_grid,
    heatmap_grid,
    lambda_hat_by_alpha,
    optimal_alpha,
    run_sweep,
)

SHADES = " .:-=+*#%@"


def render(alphas, lams, grid, cap=500.0):
    lines = ["alpha  " + "".join("|" if i % 5 == 0 else " " for i in range(len(lams)))]
    for a, row in zip(alphas, grid):
        cells = "".join("?" if np.isnan(v) else SHADES[min(int(v / cap * (len(SHADES) - 1)), len(SHADES) - 1)] for v in row)
        lines.append(f"{a:5.2f}  {cells}")
    lines.append(f"lambda {lams[0]:g} .. {lams[-1]:g}; shading from 0 (blank) to {cap:g} (@)")
    return "\n".join(lines)


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--network", default="grid5")
    p.add_argument("--alphas", default=",".join(map(str, DEFAULT_ALPHAS)))
    p.add_argument("--lambdas", default=",".join(map(str, DEFAULT_LAMBDAS)))
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--duration", type=float, default=3600.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=default_workers())
    p.add_argument("--out", type=Path, required=True)
    args = p.parse_args()

    spec = SweepSpec(
        network=args.network,
        alphas=[float(x) for x in args.alphas.split(",")],
        lambdas=[float(x) for x in args.lambdas.split(",")],
        replicates=args.replicates,
        base=SimConfig(duration=args.duration, seed=args.seed),
    )
    t0 = time.time()
    cells = run_sweep(spec, workers=args.jobs)
    args.out.mkdir(parents=True, exist_ok=True)
    emit_csv(cells, args.out / "cells.csv")
    emit_heatmap_grid(cells, args.out / "heatmap_coverage.txt")
    print(f"{len(cells)} runs in {time.time() - t0:.0f} s")
    print(render(*heatmap_grid(cells)))
    for a, lh in lambda_hat_by_alpha(cells).items():
        print(f"alpha {a:4.2f}: lambda_hat {'below grid' if lh is None else lh}")
    opt = optimal_alpha(cells)
    print(f"optimal alpha: {opt.low:g} to {opt.high:g} (lambda_hat {opt.lambda_hat})")


if __name__ == "__main__":
    main()
