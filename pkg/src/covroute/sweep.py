"""Experiment harness: alpha x lambda sweeps, router comparisons and outputs."""
from __future__ import annotations

import csv
import math
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from covroute.engine import SimConfig, run
from covroute.metrics import LambdaHat, MetricsError, RunMetrics, TransitionBelowGrid, average_metrics, find_lambda_hat, run_metrics
from covroute.netgraph import Network, load_network, preset, PRESETS
from covroute.routing import Coverage, CoverageParams, ModifiedShortestPath, RouterKind, ShortestPath

CSV_COLUMNS = (
    "topology", "router", "alpha", "lambda", "replicate", "seed",
    "mean_travel_time", "mean_delay", "mean_delay_capped", "completion_rate", "congested", "status",
)

DEFAULT_ALPHAS = [round(0.05 * i, 2) for i in range(21)]
DEFAULT_LAMBDAS = [round(0.2 * i, 1) for i in range(1, 26)]


@dataclass
class SweepSpec:
    network: str
    alphas: list[float] = field(default_factory=lambda: list(DEFAULT_ALPHAS))
    lambdas: list[float] = field(default_factory=lambda: list(DEFAULT_LAMBDAS))
    replicates: int = 3
    base: SimConfig = field(default_factory=SimConfig)
    routers: list[RouterKind] = field(default_factory=lambda: [Coverage()])

    def validate(self) -> None:
        for name in ("alphas", "lambdas"):
            grid = getattr(self, name)
            if not grid:
                raise ValueError(f"{name} grid is empty")
            if list(grid) != sorted(grid):
                raise ValueError(f"{name} grid must be sorted ascending")
        if any(not 0 <= a <= 1 for a in self.alphas):
            raise ValueError("alpha values must lie in [0, 1]")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not self.routers:
            raise ValueError("no routers given")


@dataclass
class SweepCell:
    topology: str
    router: str
    alpha: float | None
    lam: float
    replicate: int
    seed: int
    metrics: RunMetrics | None
    status: str = "ok"

    def sort_key(self):
        return (math.inf if self.alpha is None else self.alpha, self.lam, self.replicate, self.router)


def resolve_network(name: str) -> Network:
    """A preset name or a path to a network file."""
    if name in PRESETS:
        return preset(name)
    path = Path(name)
    if not path.is_file():
        raise FileNotFoundError(f"network {name!r} is neither a preset ({', '.join(PRESETS)}) nor a file")
    net = load_network(path)
    if not net.name:
        net.name = path.stem
    return net


def derive_seed(base: int, alpha_idx: int, lam_idx: int, replicate: int) -> int:
    state = np.random.SeedSequence([base, alpha_idx, lam_idx, replicate]).generate_state(1, np.uint64)
    return int(state[0])


@dataclass
class _Task:
    alpha_idx: int
    lam_idx: int
    replicate: int
    router: RouterKind
    alpha: float | None
    lam: float


def _tasks(spec: SweepSpec) -> list[_Task]:
    out = []
    baseline_idx = len(spec.alphas)
    for router in spec.routers:
        if isinstance(router, Coverage):
            for ai, a in enumerate(spec.alphas):
                r = Coverage(replace(router.params, alpha=a))
                for li, lam in enumerate(spec.lambdas):
                    for rep in range(spec.replicates):
                        out.append(_Task(ai, li, rep, r, a, lam))
        else:
            for li, lam in enumerate(spec.lambdas):
                for rep in range(spec.replicates):
                    out.append(_Task(baseline_idx, li, rep, router, None, lam))
            baseline_idx += 1
    return out


def _run_cell(net: Network, base: SimConfig, task: _Task, seed: int) -> SweepCell:
    cfg = replace(base, lam=task.lam, router=task.router, seed=seed)
    try:
        metrics = run_metrics(run(cfg, net))
        status = "ok"
    except Exception as exc:  # recorded per cell; the sweep carries on
        metrics, status = None, f"failed: {type(exc).__name__}: {exc}".replace("\n", " ")
    return SweepCell(net.name, task.router.label, task.alpha, task.lam, task.replicate, seed, metrics, status)


def _run_batch(args):
    net, base, batch = args
    return [_run_cell(net, base, task, seed) for task, seed in batch]


def run_cells(net: Network, base: SimConfig, jobs: list[tuple[_Task, int]], workers: int = 1) -> list[SweepCell]:
    if workers <= 1 or len(jobs) <= 1:
        return _run_batch((net, base, jobs))
    chunks = [jobs[i::workers] for i in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = pool.map(_run_batch, [(net, base, c) for c in chunks if c])
    return [cell for part in parts for cell in part]


def run_sweep(spec: SweepSpec, workers: int = 1, net: Network | None = None) -> list[SweepCell]:
    """One simulation per (alpha, lambda, replicate, router) cell.

    Baseline routers ignore alpha, so they run once per (lambda, replicate)
    and carry ``alpha=None``.  Output order is canonical whatever the worker
    count.
    """
    spec.validate()
    if net is None:
        net = resolve_network(spec.network)
    spec.base.validate(net)
    jobs = [(t, derive_seed(spec.base.seed, t.alpha_idx, t.lam_idx, t.replicate)) for t in _tasks(spec)]
    seeds = [s for _, s in jobs]
    assert len(set(seeds)) == len(seeds), "derived seeds collide"
    cells = run_cells(net, spec.base, jobs, workers)
    return sorted(cells, key=SweepCell.sort_key)


# --------------------------------------------------------------------------
# analysis


def _ok(cells, router):
    return [c for c in cells if c.router == router and c.metrics is not None]


@dataclass
class OptimalAlpha:
    alphas: list[float]
    lambda_hat: LambdaHat
    contiguous: bool

    @property
    def low(self) -> float:
        return self.alphas[0]

    @property
    def high(self) -> float:
        return self.alphas[-1]


def lambda_hat_by_alpha(cells: list[SweepCell], router: str = "coverage") -> dict[float, LambdaHat | None]:
    """Per-alpha onset rate; ``None`` where even the smallest rate congests."""
    by_alpha = defaultdict(list)
    for c in _ok(cells, router):
        by_alpha[c.alpha].append((c.lam, c.metrics))
    out = {}
    for a in sorted(by_alpha):
        try:
            out[a] = find_lambda_hat(by_alpha[a], router)
        except TransitionBelowGrid:
            out[a] = None
    return out


def optimal_alpha(cells: list[SweepCell], router: str = "coverage") -> OptimalAlpha:
    """Alpha values sustaining the highest onset rate ("limit not found" wins)."""
    per_alpha = lambda_hat_by_alpha(cells, router)
    if len(per_alpha) < 3:
        raise MetricsError("need cells for at least three alpha values")

    def score(lh):
        if lh is None:
            return -math.inf
        return math.inf if lh.lambda_hat is None else lh.lambda_hat

    scores = {a: score(lh) for a, lh in per_alpha.items()}
    top = max(scores.values())
    if top == -math.inf:
        raise TransitionBelowGrid("every alpha is congested at every rate")
    grid = sorted(scores)
    winners = [a for a in grid if scores[a] == top]
    idx = [grid.index(a) for a in winners]
    contiguous = idx == list(range(idx[0], idx[-1] + 1))
    return OptimalAlpha(winners, per_alpha[winners[0]], contiguous)


def averaged_curve(cells: list[SweepCell], router: str, alpha: float | None = None) -> list[tuple[float, RunMetrics]]:
    by_lam = defaultdict(list)
    for c in _ok(cells, router):
        if alpha is None or c.alpha == alpha:
            by_lam[c.lam].append(c.metrics)
    return [(lam, average_metrics(ms)) for lam, ms in sorted(by_lam.items())]


@dataclass
class Comparison:
    topology: str
    alpha: float
    lambda_hats: dict[str, LambdaHat]
    curves: dict[str, list[tuple[float, RunMetrics]]]
    cells: list[SweepCell]

    def gain(self, router: str, baseline: str = "sp") -> float | None:
        """Relative onset-rate gain over ``baseline``; None if either is open-ended."""
        a, b = self.lambda_hats[router].lambda_hat, self.lambda_hats[baseline].lambda_hat
        if a is None or b is None:
            return None
        return a / b - 1.0


def compare_routers(
    net: Network,
    lambdas: list[float],
    alpha_star: float,
    replicates: int = 3,
    base: SimConfig | None = None,
    routers: list[RouterKind] | None = None,
    full_curves: bool = False,
    workers: int = 1,
) -> Comparison:
    """Onset rate per router on a shared lambda grid.

    Rates are scanned upward and, unless ``full_curves``, each router stops
    at its first congested rate, which is all the first-crossing rule needs.
    Seeds match :func:`run_sweep` for the same grid.
    """
    base = base or SimConfig()
    base.validate(net)
    if list(lambdas) != sorted(lambdas) or len(lambdas) < 2:
        raise ValueError("lambda grid must be sorted with at least two points")
    if routers is None:
        routers = [ShortestPath(), ModifiedShortestPath(), Coverage(CoverageParams(alpha_star))]
    cells = []
    hats, curves = {}, {}
    baseline_idx = 1
    for router in routers:
        if isinstance(router, Coverage):
            router = Coverage(replace(router.params, alpha=alpha_star))
            ai, alpha = 0, alpha_star
        else:
            ai, alpha = baseline_idx, None
            baseline_idx += 1
        mine = []
        for li, lam in enumerate(lambdas):
            jobs = [(_Task(ai, li, rep, router, alpha, lam), derive_seed(base.seed, ai, li, rep)) for rep in range(replicates)]
            batch = run_cells(net, base, jobs, workers)
            mine.extend(batch)
            ok = [c.metrics for c in batch if c.metrics is not None]
            if not full_curves and ok and average_metrics(ok).congested:
                break
        cells.extend(mine)
        label = router.label
        step = min(b - a for a, b in zip(lambdas, lambdas[1:]))
        hats[label] = find_lambda_hat([(c.lam, c.metrics) for c in mine if c.metrics is not None], label, step)
        curves[label] = averaged_curve(mine, label)
    return Comparison(net.name, alpha_star, hats, curves, sorted(cells, key=SweepCell.sort_key))


def format_comparison(cmp: Comparison) -> str:
    """Onset-rate table with the gain of each router over shortest path."""
    lines = [
        f"topology: {cmp.topology}   coverage alpha: {cmp.alpha:g}",
        f"{'router':<10} {'lambda_hat':>16} {'vs sp':>8}",
    ]
    for label, lh in cmp.lambda_hats.items():
        gain = cmp.gain(label) if "sp" in cmp.lambda_hats else None
        g = "" if gain is None or label == "sp" else f"{gain:+.0%}"
        lines.append(f"{label:<10} {str(lh):>16} {g:>8}")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# files


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def emit_csv(cells: list[SweepCell], path) -> None:
    if not cells:
        raise ValueError("no cells to write")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for c in cells:
            m = c.metrics
            w.writerow([
                c.topology, c.router, _fmt(c.alpha), _fmt(float(c.lam)), c.replicate, c.seed,
                *([""] * 5 if m is None else [
                    _fmt(m.mean_travel_time), _fmt(m.mean_delay), _fmt(m.mean_delay_capped),
                    _fmt(m.completion_rate), _fmt(m.congested),
                ]),
                c.status,
            ])


def read_csv(path) -> list[SweepCell]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            metrics = None
            if row["mean_delay"] != "":
                metrics = RunMetrics(
                    mean_travel_time=float(row["mean_travel_time"]),
                    mean_delay=float(row["mean_delay"]),
                    mean_delay_capped=float(row["mean_delay_capped"]),
                    completion_rate=float(row["completion_rate"]),
                    congested=row["congested"] == "1",
                )
            out.append(SweepCell(
                topology=row["topology"],
                router=row["router"],
                alpha=None if row["alpha"] == "" else float(row["alpha"]),
                lam=float(row["lambda"]),
                replicate=int(row["replicate"]),
                seed=int(row["seed"]),
                metrics=metrics,
                status=row["status"],
            ))
    return out


def heatmap_grid(cells: list[SweepCell], router: str = "coverage") -> tuple[list[float], list[float], np.ndarray]:
    """Replicate-mean capped delay, rows indexed by alpha and columns by lambda."""
    mine = [c for c in cells if c.router == router]
    alphas = sorted({c.alpha for c in mine})
    lams = sorted({c.lam for c in mine})
    acc = defaultdict(list)
    for c in mine:
        if c.metrics is not None:
            acc[(c.alpha, c.lam)].append(c.metrics.mean_delay_capped)
    grid = np.full((len(alphas), len(lams)), np.nan)
    for i, a in enumerate(alphas):
        for j, lam in enumerate(lams):
            if acc[(a, lam)]:
                grid[i, j] = float(np.mean(acc[(a, lam)]))
    return alphas, lams, grid


def emit_heatmap_grid(cells: list[SweepCell], path, router: str = "coverage") -> None:
    """Plain-text matrix: header row of lambdas, header column of alphas."""
    if not cells:
        raise ValueError("no cells to write")
    alphas, lams, grid = heatmap_grid(cells, router)
    if not alphas:
        raise ValueError(f"no {router} cells to write")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha\\lambda", *(_fmt(float(x)) for x in lams)])
        for a, row in zip(alphas, grid):
            w.writerow([_fmt(a), *(_fmt(float(v)) for v in row)])


def read_heatmap_grid(path) -> tuple[list[float], list[float], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    lams = [float(x) for x in rows[0][1:]]
    alphas = [float(r[0]) for r in rows[1:]]
    grid = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return alphas, lams, grid


def default_workers() -> int:
    return os.cpu_count() or 1
