"""Delay statistics, congestion classification and onset-rate extraction."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from covroute.engine import SimResult
from covroute.netgraph import Network, shortest_distance_map

DELAY_CAP = 500.0
MIN_COMPLETION = 0.5


class MetricsError(ValueError):
    pass


class TransitionBelowGrid(MetricsError):
    """Even the smallest swept rate is congested."""


@dataclass
class RunMetrics:
    mean_travel_time: float
    mean_delay: float
    mean_delay_capped: float
    completion_rate: float
    congested: bool
    mean_delay_completed: float = math.nan
    n_trips: int = 0


@dataclass
class LambdaHat:
    router: str
    lambda_hat: float | None
    grid_step: float

    @property
    def limit_found(self) -> bool:
        return self.lambda_hat is not None

    def __str__(self) -> str:
        return "limit not found" if self.lambda_hat is None else f"{self.lambda_hat:g}"


def free_flow_time(net: Network, origin: int, dest: int, v_max: float) -> float:
    dist = shortest_distance_map(net, dest)[origin]
    if not math.isfinite(dist):
        raise MetricsError(f"junction {dest} unreachable from {origin}")
    return dist / v_max


def classify_congested(metrics: RunMetrics, threshold: float = DELAY_CAP) -> bool:
    return metrics.mean_delay_capped >= threshold or metrics.completion_rate < MIN_COMPLETION


def run_metrics(result: SimResult, cap: float = DELAY_CAP) -> RunMetrics:
    """Summarise a run.

    Every generated trip contributes a delay: the real one for completed
    trips and the elapsed-time lower bound for trips still unfinished at the
    horizon.  Travel time is averaged over completed trips only.
    """
    if result.generated == 0:
        raise MetricsError("no vehicles were generated; delay statistics are undefined")
    delays = np.array([tr.delay(result.horizon) for tr in result.trips])
    done = [tr for tr in result.trips if tr.completed]
    travel = [tr.arrival_time - tr.spawn_time for tr in done]
    m = RunMetrics(
        mean_travel_time=float(np.mean(travel)) if travel else math.nan,
        mean_delay=float(delays.mean()),
        mean_delay_capped=float(np.minimum(delays, cap).mean()),
        completion_rate=result.completed / result.generated,
        congested=False,
        mean_delay_completed=float(np.mean([tr.delay(result.horizon) for tr in done])) if done else math.nan,
        n_trips=result.generated,
    )
    m.congested = classify_congested(m, cap)
    return m


def average_metrics(runs: list[RunMetrics]) -> RunMetrics:
    """Replicate average; the congestion flag is re-derived from the means."""
    if not runs:
        raise MetricsError("nothing to average")

    def mean(attr):
        vals = [getattr(r, attr) for r in runs if not math.isnan(getattr(r, attr))]
        return float(np.mean(vals)) if vals else math.nan

    m = RunMetrics(
        mean_travel_time=mean("mean_travel_time"),
        mean_delay=mean("mean_delay"),
        mean_delay_capped=mean("mean_delay_capped"),
        completion_rate=mean("completion_rate"),
        congested=False,
        mean_delay_completed=mean("mean_delay_completed"),
        n_trips=sum(r.n_trips for r in runs),
    )
    m.congested = classify_congested(m)
    return m


def find_lambda_hat(cells: list[tuple[float, RunMetrics]], router: str = "", grid_step: float | None = None) -> LambdaHat:
    """Largest swept rate below the first congested one.

    Replicates at the same rate are averaged before classification.  Points
    above the first congested rate are ignored, so noise past the transition
    cannot move the answer.  Returns ``lambda_hat=None`` ("limit not found")
    when no rate is congested.
    """
    groups: dict[float, list[RunMetrics]] = defaultdict(list)
    for lam, m in cells:
        groups[float(lam)].append(m)
    lams = sorted(groups)
    if not lams:
        raise MetricsError("no cells")
    if average_metrics(groups[lams[0]]).congested:
        raise TransitionBelowGrid(f"congested already at the smallest rate {lams[0]}")
    if len(lams) < 2:
        raise MetricsError("need at least two rates on the grid")
    step = grid_step if grid_step is not None else min(b - a for a, b in zip(lams, lams[1:]))
    best = None
    for lam in lams:
        if average_metrics(groups[lam]).congested:
            break
        best = lam
    else:
        return LambdaHat(router, None, step)
    return LambdaHat(router, best, step)
