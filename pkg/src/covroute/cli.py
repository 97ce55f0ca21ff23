"""Command-line entry point.

Configuration lives in one JSON document with ``network``, ``sim``,
``sweep`` and ``compare`` sections; ``covroute print-defaults`` prints it
with every default filled in.  Flags override the document.  The seed is
taken from ``--seed``, then the document, then ``COVERAGE_ROUTER_SEED``.

Every command that writes files builds them in a temporary directory and
renames it into place, together with a ``manifest.json`` recording the
resolved configuration.  A manifest can be passed back as ``--config`` to
reproduce the run.

Exit codes: 0 success, 2 configuration or usage error, 3 runtime error,
4 metrics undefined (no vehicles were generated).
"""
from __future__ import annotations

import argparse
import copy
import datetime as _dt
import hashlib
import json
import os
import shutil
import sys
import tempfile
from dataclasses import asdict
from pathlib import Path

from covroute import __version__
from covroute.engine import SimConfig, run, write_trip_log
from covroute.metrics import MetricsError, TransitionBelowGrid, run_metrics
from covroute.netgraph import (
    PRESETS,
    NetworkError,
    build_grid,
    build_random_rewire,
    build_scale_free,
    build_spiderweb,
    network_stats,
    save_network,
)
from covroute.routing import Coverage, CoverageParams, router_from_name
from covroute.sweep import (
    DEFAULT_ALPHAS,
    DEFAULT_LAMBDAS,
    SweepSpec,
    compare_routers,
    default_workers,
    emit_csv,
    emit_heatmap_grid,
    format_comparison,
    optimal_alpha,
    resolve_network,
    run_sweep,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_UNDEFINED = 4

SEED_ENV = "COVERAGE_ROUTER_SEED"


class ConfigError(Exception):
    pass


# --------------------------------------------------------------------------
# configuration document


def default_document() -> dict:
    cfg = SimConfig()
    p = CoverageParams()
    return {
        "network": "grid5",
        "sim": {
            "duration": cfg.duration,
            "dt": cfg.dt,
            "lambda": cfg.lam,
            "gen_mode": cfg.gen_mode,
            "router": {"name": "coverage", "alpha": p.alpha, "eta_crit": p.eta_crit, "sigma": p.sigma},
            "trip_mode": cfg.trip_mode,
            "fixed_od": None,
            "seed": cfg.seed,
            "v_max": cfg.v_max,
            "v_min": cfg.v_min,
        },
        "sweep": {
            "alphas": list(DEFAULT_ALPHAS),
            "lambdas": list(DEFAULT_LAMBDAS),
            "replicates": 3,
            "routers": ["coverage"],
        },
        "compare": {
            "alpha": 0.9,
            "lambdas": list(DEFAULT_LAMBDAS),
            "replicates": 3,
            "routers": ["sp", "msp", "coverage"],
        },
    }


def _merge(base: dict, over: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key {where}{k!r}")
        if isinstance(base[k], dict) and isinstance(v, dict):
            out[k] = _merge(base[k], v, f"{where}{k}.")
        else:
            out[k] = v
    return out


def load_document(path: str | None) -> tuple[dict, bool]:
    """Defaults merged with the file at ``path``; also reports whether the
    file set a seed.  A run manifest is accepted in place of a config."""
    doc = default_document()
    if path is None:
        return doc, False
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if "resolved_config" in data:
        data = data["resolved_config"]
    seeded = isinstance(data.get("sim"), dict) and "seed" in data["sim"]
    return _merge(doc, data), seeded


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def apply_overrides(doc: dict, args, seeded: bool) -> dict:
    doc = copy.deepcopy(doc)
    sim = doc["sim"]
    if getattr(args, "preset", None):
        doc["network"] = args.preset
    if getattr(args, "net", None):
        doc["network"] = args.net
    if getattr(args, "router", None):
        sim["router"]["name"] = args.router
    if getattr(args, "gen_mode", None):
        sim["gen_mode"] = args.gen_mode
    if getattr(args, "duration", None) is not None:
        sim["duration"] = args.duration
    if getattr(args, "replicates", None) is not None:
        doc["sweep"]["replicates"] = args.replicates
        doc["compare"]["replicates"] = args.replicates
    if getattr(args, "seed", None) is not None:
        sim["seed"] = args.seed
    elif not seeded and os.environ.get(SEED_ENV):
        try:
            sim["seed"] = int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer") from None
    return doc


def router_from_doc(spec) -> object:
    if isinstance(spec, str):
        spec = {"name": spec}
    try:
        return router_from_name(
            spec.get("name", "coverage"), spec.get("alpha"),
            spec.get("eta_crit", CoverageParams().eta_crit), spec.get("sigma", CoverageParams().sigma),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def sim_config_from_doc(sim: dict) -> SimConfig:
    router = router_from_doc(sim["router"])
    try:
        od = sim["fixed_od"]
        cfg = SimConfig(
            duration=float(sim["duration"]),
            dt=float(sim["dt"]),
            lam=float(sim["lambda"]),
            gen_mode=sim["gen_mode"],
            router=router,
            trip_mode=sim["trip_mode"],
            fixed_od=None if od is None else (int(od[0]), int(od[1])),
            seed=int(sim["seed"]),
            v_max=float(sim["v_max"]),
            v_min=float(sim["v_min"]),
        )
        cfg.validate()
    except (TypeError, ValueError, IndexError) as exc:
        raise ConfigError(f"bad sim section: {exc}") from None
    return cfg


def _network(name: str):
    try:
        return resolve_network(name)
    except (FileNotFoundError, NetworkError) as exc:
        raise ConfigError(str(exc)) from None


def _network_record(name: str) -> dict:
    if name in PRESETS:
        return {"preset": name}
    path = Path(name).resolve()
    return {"file": str(path), "sha256": hashlib.sha256(path.read_bytes()).hexdigest()}


# --------------------------------------------------------------------------
# atomic outputs


def _manifest(args, doc: dict, out: Path, started: str) -> dict:
    return {
        "tool": "covroute",
        "version": __version__,
        "command": args.command_name,
        "argv": args.argv,
        "config_path": None if getattr(args, "config", None) is None else str(Path(args.config).resolve()),
        "resolved_config": doc,
        "network": _network_record(doc["network"]) if doc.get("network") else None,
        "seed": doc["sim"]["seed"],
        "out_dir": str(out.resolve()),
        "started_at": started,
    }


class AtomicDir:
    """Build an output directory next to ``final`` and rename it into place.

    On an exception the partial directory is removed and ``final`` is left
    as it was.
    """

    def __init__(self, final: Path):
        self.final = final

    def __enter__(self) -> Path:
        self.final.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=f".{self.final.name}.", dir=self.final.parent))
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            shutil.rmtree(self.tmp, ignore_errors=True)
            return False
        old = None
        if self.final.exists():
            old = self.final.with_name(f".{self.final.name}.old-{os.getpid()}")
            os.replace(self.final, old)
        os.replace(self.tmp, self.final)
        if old is not None:
            shutil.rmtree(old, ignore_errors=True)
        return False


def _plain(x):
    """JSON-safe copy: NaN becomes null."""
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, float) and x != x:
        return None
    return x


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_plain(data), indent=2, allow_nan=False) + "\n")


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


# --------------------------------------------------------------------------
# commands


def cmd_print_defaults(args) -> int:
    print(json.dumps(default_document(), indent=2))
    return EXIT_OK


def _generated_network(args):
    kind = args.kind
    if kind == "grid":
        return build_grid(args.rows, args.cols, args.spacing)
    if kind == "spiderweb":
        return build_spiderweb(args.rings, args.spokes, args.spacing)
    if kind == "rewire":
        return build_random_rewire(build_grid(args.rows, args.cols, args.spacing), args.rewires, args.gen_seed)
    if kind == "scalefree":
        return build_scale_free(args.nodes, args.edges, args.gen_seed)
    raise ConfigError(f"unknown generator {kind!r}")


def cmd_net_generate(args) -> int:
    if bool(args.preset) == bool(args.kind):
        raise ConfigError("give exactly one of --preset or --kind")
    try:
        net = _network(args.preset) if args.preset else _generated_network(args)
    except NetworkError as exc:
        raise ConfigError(str(exc)) from None
    if args.kind:
        net.name = Path(args.out).stem
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{out.name}.", dir=out.parent)
    os.close(fd)
    try:
        save_network(net, tmp)
        manifest = {
            "tool": "covroute", "version": __version__, "command": "net generate", "argv": args.argv,
            "generator": {k: getattr(args, k) for k in ("preset", "kind", "rows", "cols", "rings", "spokes", "spacing", "rewires", "nodes", "edges", "gen_seed")},
            "output": str(out.resolve()), "started_at": _now(),
        }
        _write_json(Path(tmp + ".manifest"), manifest)
        os.replace(tmp + ".manifest", str(out) + ".manifest.json")
        os.replace(tmp, out)
    finally:
        for leftover in (tmp, tmp + ".manifest"):
            if os.path.exists(leftover):
                os.remove(leftover)
    s = network_stats(net)
    print(f"wrote {out} ({s.node_count} nodes, {s.edge_count} edges)")
    return EXIT_OK


def cmd_net_stats(args) -> int:
    sources = [x for x in (args.file, args.preset, args.net) if x]
    if len(sources) != 1:
        raise ConfigError("give exactly one of a network file, --preset or --net")
    net = _network(sources[0])
    try:
        s = network_stats(net)
    except NetworkError as exc:
        raise ConfigError(str(exc)) from None
    if args.json:
        print(json.dumps(asdict(s)))
    else:
        print(f"network: {net.name or sources[0]}")
        print(f"nodes: {s.node_count}")
        print(f"edges: {s.edge_count}")
        print(f"mean degree: {s.mean_degree:.4g}")
        print(f"diameter: {s.diameter:.6g}")
    return EXIT_OK


def cmd_sim_run(args) -> int:
    started = _now()
    doc, seeded = load_document(args.config)
    doc = apply_overrides(doc, args, seeded)
    sim = doc["sim"]
    if args.alpha is not None:
        if len(args.alpha) != 1:
            raise ConfigError("sim run takes a single --alpha")
        sim["router"]["alpha"] = args.alpha[0]
    if args.lam is not None:
        if len(args.lam) != 1:
            raise ConfigError("sim run takes a single --lambda")
        sim["lambda"] = args.lam[0]
    cfg = sim_config_from_doc(sim)
    net = _network(doc["network"])
    try:
        cfg.validate(net)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    result = run(cfg, net)
    out = Path(args.out)
    summary = {
        "generated": result.generated, "completed": result.completed,
        "in_flight": result.in_flight, "pending": result.pending, "deferrals": result.deferrals,
    }
    code = EXIT_OK
    try:
        m = run_metrics(result)
        summary["metrics"] = asdict(m)
    except MetricsError as exc:
        summary["metrics"] = None
        summary["error"] = str(exc)
        code = EXIT_UNDEFINED
    with AtomicDir(out) as tmp:
        write_trip_log(result, tmp / "trips.csv")
        _write_json(tmp / "summary.json", summary)
        _write_json(tmp / "manifest.json", _manifest(args, doc, out, started))
    print(f"vehicles generated {result.generated}, completed {result.completed}, censored {result.censored}")
    if code == EXIT_OK:
        m = summary["metrics"]
        print(f"mean delay {m['mean_delay']:.2f} s (capped {m['mean_delay_capped']:.2f}), "
              f"completion {m['completion_rate']:.3f}, {'congested' if m['congested'] else 'free flow'}")
    else:
        print(f"error: {summary['error']}", file=sys.stderr)
    print(f"outputs in {out}")
    return code


def cmd_sweep(args) -> int:
    started = _now()
    doc, seeded = load_document(args.config)
    doc = apply_overrides(doc, args, seeded)
    sw = doc["sweep"]
    if args.alpha is not None:
        sw["alphas"] = args.alpha
    if args.lam is not None:
        sw["lambdas"] = args.lam
    if args.router:
        sw["routers"] = [args.router]
    base = sim_config_from_doc(doc["sim"])
    net = _network(doc["network"])
    try:
        spec = SweepSpec(
            network=doc["network"],
            alphas=[float(a) for a in sw["alphas"]],
            lambdas=[float(x) for x in sw["lambdas"]],
            replicates=int(sw["replicates"]),
            base=base,
            routers=[router_from_doc(r) for r in sw["routers"]],
        )
        spec.validate()
        base.validate(net)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    workers = args.jobs or default_workers()
    cells = run_sweep(spec, workers=workers, net=net)
    out = Path(args.out)
    summary = {"cells": len(cells), "failed": sum(c.metrics is None for c in cells)}
    if any(isinstance(r, Coverage) for r in spec.routers) and len(spec.alphas) >= 3:
        try:
            opt = optimal_alpha(cells)
            summary["optimal_alpha"] = {"alphas": opt.alphas, "contiguous": opt.contiguous, "lambda_hat": str(opt.lambda_hat)}
        except MetricsError as exc:
            summary["optimal_alpha"] = {"error": str(exc)}
    with AtomicDir(out) as tmp:
        emit_csv(cells, tmp / "cells.csv")
        for r in spec.routers:
            if isinstance(r, Coverage):
                emit_heatmap_grid(cells, tmp / "heatmap_coverage.txt", "coverage")
        _write_json(tmp / "summary.json", summary)
        _write_json(tmp / "manifest.json", _manifest(args, doc, out, started))
    print(f"{len(cells)} cells ({summary['failed']} failed) written to {out}")
    if "optimal_alpha" in summary:
        print(f"optimal alpha: {summary['optimal_alpha']}")
    return EXIT_OK


def cmd_compare(args) -> int:
    started = _now()
    doc, seeded = load_document(args.config)
    doc = apply_overrides(doc, args, seeded)
    cmp_doc = doc["compare"]
    if args.alpha is not None:
        if len(args.alpha) != 1:
            raise ConfigError("compare takes a single --alpha")
        cmp_doc["alpha"] = args.alpha[0]
    if args.lam is not None:
        cmp_doc["lambdas"] = args.lam
    base = sim_config_from_doc(doc["sim"])
    net = _network(doc["network"])
    try:
        base.validate(net)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    routers = [router_from_doc(r) for r in cmp_doc["routers"]]
    try:
        lambdas = [float(x) for x in cmp_doc["lambdas"]]
        alpha, replicates = float(cmp_doc["alpha"]), int(cmp_doc["replicates"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad compare section: {exc}") from None
    try:
        cmp = compare_routers(
            net, lambdas, alpha, replicates,
            base, routers, full_curves=args.full_curves, workers=args.jobs or default_workers(),
        )
    except TransitionBelowGrid as exc:
        raise ConfigError(f"lambda grid starts above the congestion onset: {exc}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    report = format_comparison(cmp)
    out = Path(args.out)
    with AtomicDir(out) as tmp:
        (tmp / "report.txt").write_text(report + "\n")
        emit_csv(cmp.cells, tmp / "cells.csv")
        _write_json(tmp / "lambda_hat.json", {
            k: {"lambda_hat": v.lambda_hat, "grid_step": v.grid_step, "gain_vs_sp": cmp.gain(k) if "sp" in cmp.lambda_hats else None}
            for k, v in cmp.lambda_hats.items()
        })
        _write_json(tmp / "manifest.json", _manifest(args, doc, out, started))
    print(report)
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _run_flags(p, multi: bool):
    p.add_argument("config", nargs="?", help="JSON config document or run manifest")
    p.add_argument("--config", dest="config_flag", help="same as the positional config")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=PRESETS)
    src.add_argument("--net", help="network file")
    p.add_argument("--router", choices=["coverage", "sp", "msp"])
    p.add_argument("--alpha", type=_floats, help="alpha value" + (" list, comma-separated" if multi else ""))
    p.add_argument("--lambda", dest="lam", type=_floats, help="generation rate" + (" list, comma-separated" if multi else ""))
    p.add_argument("--gen-mode", choices=["poisson", "constant"])
    p.add_argument("--duration", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--jobs", type=int, help="worker processes (default: available cores)")
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="covroute", description="Coverage-based traffic routing simulator")
    parser.add_argument("--version", action="version", version=f"covroute {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    net = sub.add_parser("net", help="generate or inspect road networks")
    net_sub = net.add_subparsers(dest="net_command", required=True, parser_class=_Parser)
    gen = net_sub.add_parser("generate", help="write a network file")
    gen.add_argument("--preset", choices=PRESETS)
    gen.add_argument("--kind", choices=["grid", "spiderweb", "rewire", "scalefree"], help="explicit generator")
    gen.add_argument("--rows", type=int, default=5)
    gen.add_argument("--cols", type=int, default=5)
    gen.add_argument("--rings", type=int, default=5)
    gen.add_argument("--spokes", type=int, default=10)
    gen.add_argument("--spacing", type=float, default=100.0)
    gen.add_argument("--rewires", type=int, default=50)
    gen.add_argument("--nodes", type=int, default=48)
    gen.add_argument("--edges", type=int, default=58)
    gen.add_argument("--gen-seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_net_generate, command_name="net generate")
    stats = net_sub.add_parser("stats", help="print node/edge counts, mean degree and diameter")
    stats.add_argument("file", nargs="?")
    stats.add_argument("--preset", choices=PRESETS)
    stats.add_argument("--net")
    stats.add_argument("--json", action="store_true")
    stats.set_defaults(func=cmd_net_stats, command_name="net stats")

    sim = sub.add_parser("sim", help="single simulation runs")
    sim_sub = sim.add_subparsers(dest="sim_command", required=True, parser_class=_Parser)
    sim_run = sim_sub.add_parser("run", help="run one simulation and write its trip log")
    _run_flags(sim_run, multi=False)
    sim_run.set_defaults(func=cmd_sim_run, command_name="sim run")

    sweep = sub.add_parser("sweep", help="alpha x lambda sweep with CSV and heatmap output")
    _run_flags(sweep, multi=True)
    sweep.set_defaults(func=cmd_sweep, command_name="sweep")

    compare = sub.add_parser("compare", help="onset rate per router")
    _run_flags(compare, multi=True)
    compare.add_argument("--full-curves", action="store_true", help="run every rate instead of stopping at the onset")
    compare.set_defaults(func=cmd_compare, command_name="compare")

    defaults = sub.add_parser("print-defaults", help="print the default config document")
    defaults.set_defaults(func=cmd_print_defaults, command_name="print-defaults")
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    if getattr(args, "config_flag", None):
        if args.config:
            print("covroute: error: config given twice", file=sys.stderr)
            return EXIT_CONFIG
        args.config = args.config_flag
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"covroute: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MetricsError as exc:
        print(f"covroute: {exc}", file=sys.stderr)
        return EXIT_UNDEFINED
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"covroute: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
