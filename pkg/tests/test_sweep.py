import math

import numpy as np
import pytest

from covroute.engine import SimConfig, run
from covroute.metrics import MetricsError, RunMetrics, TransitionBelowGrid, classify_congested, run_metrics
from covroute.netgraph import build_grid, save_network
from covroute.routing import Coverage, CoverageParams, ModifiedShortestPath, ShortestPath
from covroute.sweep import (
    CSV_COLUMNS,
    SweepCell,
    SweepSpec,
    compare_routers,
    derive_seed,
    emit_csv,
    emit_heatmap_grid,
    format_comparison,
    heatmap_grid,
    lambda_hat_by_alpha,
    optimal_alpha,
    read_csv,
    read_heatmap_grid,
    resolve_network,
    run_sweep,
)

SHORT = SimConfig(duration=300)


def cell(alpha, lam, capped, router="coverage", rep=0):
    m = RunMetrics(capped + 20.0, capped, capped, 1.0, False)
    m.congested = classify_congested(m)
    return SweepCell("t", router, alpha, lam, rep, 0, m)


def synthetic_sweep(onset):
    """Cells where alpha ``a`` congests from rate ``onset[a]`` upward."""
    return [cell(a, lam, 900.0 if lam >= on else 5.0) for a, on in onset.items() for lam in (1.0, 2.0, 3.0, 4.0)]


def test_spec_validation():
    for bad in (
        dict(alphas=[]), dict(lambdas=[]), dict(alphas=[0.5, 0.1]), dict(lambdas=[2.0, 1.0]),
        dict(alphas=[1.2]), dict(replicates=0), dict(routers=[]),
    ):
        with pytest.raises(ValueError):
            SweepSpec("grid5", **bad).validate()


def test_degenerate_sweep_equals_direct_run():
    spec = SweepSpec("grid5", alphas=[0.8], lambdas=[1.5], replicates=1, base=SHORT)
    [c] = run_sweep(spec)
    seed = derive_seed(0, 0, 0, 0)
    assert c.seed == seed
    direct = run_metrics(run(SimConfig(duration=300, lam=1.5, router=Coverage(CoverageParams(0.8)), seed=seed), resolve_network("grid5")))
    assert c.metrics == direct
    assert c.status == "ok"


def test_cell_count_and_canonical_order():
    spec = SweepSpec("grid5", alphas=[0.2, 0.9], lambdas=[0.5, 1.0], replicates=2, base=SHORT,
                     routers=[ShortestPath(), Coverage()])
    cells = run_sweep(spec)
    assert len(cells) == 2 * 2 * 2 + 2 * 2
    assert cells == sorted(cells, key=SweepCell.sort_key)
    assert [c.alpha for c in cells[-4:]] == [None] * 4
    assert len({c.seed for c in cells}) == len(cells)


def test_worker_count_does_not_change_output():
    spec = SweepSpec("grid5", alphas=[0.5, 0.9], lambdas=[1.0, 2.0], replicates=1, base=SHORT)
    assert run_sweep(spec, workers=1) == run_sweep(spec, workers=2)


def test_same_spec_twice_gives_identical_files(tmp_path):
    spec = SweepSpec("grid5", alphas=[0.0, 0.9], lambdas=[1.0, 3.0], replicates=1, base=SHORT)
    for k in (1, 2):
        cells = run_sweep(spec)
        emit_csv(cells, tmp_path / f"c{k}.csv")
        emit_heatmap_grid(cells, tmp_path / f"h{k}.txt")
    assert (tmp_path / "c1.csv").read_bytes() == (tmp_path / "c2.csv").read_bytes()
    assert (tmp_path / "h1.txt").read_bytes() == (tmp_path / "h2.txt").read_bytes()


def test_derived_seeds_distinct():
    seeds = {derive_seed(0, a, l, r) for a in range(21) for l in range(25) for r in range(3)}
    assert len(seeds) == 21 * 25 * 3
    assert derive_seed(1, 0, 0, 0) != derive_seed(0, 0, 0, 0)


def test_failed_cells_are_recorded(monkeypatch):
    import covroute.sweep as sweep

    def boom(cfg, net):
        raise RuntimeError("synthetic failure")

    monkeypatch.setattr(sweep, "run", boom)
    cells = run_sweep(SweepSpec("grid5", alphas=[0.5], lambdas=[1.0, 2.0], replicates=1, base=SHORT))
    assert all(c.metrics is None and c.status.startswith("failed: RuntimeError") for c in cells)


def test_missing_network_file_fails_fast(tmp_path):
    with pytest.raises(FileNotFoundError):
        run_sweep(SweepSpec(str(tmp_path / "nope.net"), alphas=[0.5], lambdas=[1.0]))


def test_network_file_name_becomes_topology(tmp_path):
    path = tmp_path / "tiny.net"
    net = build_grid(3, 3, 100)
    net.name = ""
    save_network(net, path)
    assert resolve_network(str(path)).name == "tiny"


def test_csv_round_trip(tmp_path):
    cells = [
        cell(0.35, 1.7, 123.456789012345),
        cell(None, 2.2, 1 / 3, router="sp", rep=2),
        SweepCell("t", "msp", None, 0.4, 0, 99, None, "failed: ValueError: x"),
    ]
    cells[0].metrics.mean_travel_time = math.pi
    path = tmp_path / "cells.csv"
    emit_csv(cells, path)
    header = path.read_text().splitlines()[0].split(",")
    assert tuple(header) == CSV_COLUMNS
    back = read_csv(path)
    for a, b in zip(cells, back):
        assert (a.topology, a.router, a.alpha, a.lam, a.replicate, a.seed, a.status) == (
            b.topology, b.router, b.alpha, b.lam, b.replicate, b.seed, b.status)
        if a.metrics is None:
            assert b.metrics is None
            continue
        for f in ("mean_travel_time", "mean_delay", "mean_delay_capped", "completion_rate"):
            x, y = getattr(a.metrics, f), getattr(b.metrics, f)
            assert float(f"{x:.12g}") == float(f"{y:.12g}")
        assert a.metrics.congested == b.metrics.congested


def test_empty_outputs_are_errors(tmp_path):
    with pytest.raises(ValueError):
        emit_csv([], tmp_path / "x.csv")
    with pytest.raises(ValueError):
        emit_heatmap_grid([], tmp_path / "x.txt")
    assert not list(tmp_path.iterdir())


def test_unwritable_path_is_an_error(tmp_path):
    with pytest.raises(OSError):
        emit_csv([cell(0.5, 1.0, 1.0)], tmp_path / "missing" / "x.csv")


def test_heatmap_shape_and_values(tmp_path):
    cells = [cell(a, lam, 10 * a + lam, rep=r) for a in (0.1, 0.2) for lam in (1.0, 2.0) for r in range(2)]
    path = tmp_path / "h.txt"
    emit_heatmap_grid(cells, path)
    rows = [line.split(",") for line in path.read_text().splitlines()]
    assert [len(r) for r in rows] == [3, 3, 3]
    assert rows[0][0] == "alpha\\lambda"
    alphas, lams, grid = read_heatmap_grid(path)
    assert alphas == [0.1, 0.2] and lams == [1.0, 2.0]
    assert np.allclose(grid, [[2.0, 3.0], [3.0, 4.0]])
    assert np.array_equal(heatmap_grid(cells)[2], grid)


def test_optimal_alpha_unique_interior():
    opt = optimal_alpha(synthetic_sweep({0.0: 2.0, 0.5: 4.0, 1.0: 3.0}))
    assert (opt.low, opt.high) == (0.5, 0.5)
    assert opt.lambda_hat.lambda_hat == 3.0


def test_optimal_alpha_tie_returns_full_range():
    opt = optimal_alpha(synthetic_sweep({0.0: 3.0, 0.5: 3.0, 1.0: 3.0}))
    assert opt.alphas == [0.0, 0.5, 1.0] and opt.contiguous


def test_optimal_alpha_range_and_gaps():
    opt = optimal_alpha(synthetic_sweep({0.0: 2.0, 0.25: 4.0, 0.5: 3.0, 0.75: 4.0, 1.0: 2.0}))
    assert opt.alphas == [0.25, 0.75] and not opt.contiguous
    assert 0.0 not in opt.alphas and 1.0 not in opt.alphas


def test_optimal_alpha_prefers_no_limit():
    cells = synthetic_sweep({0.0: 2.0, 1.0: 3.0}) + [cell(0.5, lam, 5.0) for lam in (1.0, 2.0, 3.0, 4.0)]
    opt = optimal_alpha(cells)
    assert opt.alphas == [0.5] and not opt.lambda_hat.limit_found


def test_optimal_alpha_errors():
    with pytest.raises(TransitionBelowGrid):
        optimal_alpha(synthetic_sweep({0.0: 1.0, 0.5: 1.0, 1.0: 1.0}))
    with pytest.raises(MetricsError):
        optimal_alpha(synthetic_sweep({0.0: 2.0, 1.0: 3.0}))


def test_lambda_hat_by_alpha_marks_below_grid():
    per = lambda_hat_by_alpha(synthetic_sweep({0.0: 1.0, 0.5: 3.0}))
    assert per[0.0] is None and per[0.5].lambda_hat == 2.0


def test_identical_router_listed_twice():
    net = build_grid(4, 4, 100)
    cmp = compare_routers(net, [1.0, 3.0, 6.0], 0.9, replicates=1, base=SimConfig(duration=600),
                          routers=[ShortestPath()])
    again = compare_routers(net, [1.0, 3.0, 6.0], 0.9, replicates=1, base=SimConfig(duration=600),
                            routers=[ShortestPath()])
    assert cmp.lambda_hats["sp"].lambda_hat == again.lambda_hats["sp"].lambda_hat


def test_compare_report_layout():
    net = build_grid(4, 4, 100)
    cmp = compare_routers(net, [0.5, 2.0, 8.0], 0.9, replicates=1, base=SimConfig(duration=600),
                          routers=[ShortestPath(), ModifiedShortestPath(), Coverage()])
    assert set(cmp.lambda_hats) == {"sp", "msp", "coverage"}
    text = format_comparison(cmp)
    assert "lambda_hat" in text and "vs sp" in text
    assert {c.router for c in cmp.cells} == {"sp", "msp", "coverage"}
    for label, curve in cmp.curves.items():
        assert [lam for lam, _ in curve] == sorted(lam for lam, _ in curve)


def test_compare_propagates_below_grid():
    net = build_grid(3, 3, 100)
    with pytest.raises(TransitionBelowGrid):
        compare_routers(net, [9.0, 10.0], 0.9, replicates=1, base=SimConfig(duration=900), routers=[ShortestPath()])
