"""Coverage-based congestion-aware routing on road networks."""

__version__ = "0.1.0"

from covroute.engine import SimConfig, SimResult, Simulation, run  # noqa: E402
from covroute.metrics import LambdaHat, RunMetrics, find_lambda_hat, run_metrics  # noqa: E402
from covroute.netgraph import Network, PRESETS, network_stats, preset  # noqa: E402
from covroute.routing import Coverage, CoverageParams, ModifiedShortestPath, ShortestPath  # noqa: E402
from covroute.sweep import SweepSpec, compare_routers, optimal_alpha, run_sweep  # noqa: E402

__all__ = [
    "__version__",
    "Coverage", "CoverageParams", "ModifiedShortestPath", "ShortestPath",
    "LambdaHat", "Network", "PRESETS", "RunMetrics", "SimConfig", "SimResult", "Simulation", "SweepSpec",
    "compare_routers", "find_lambda_hat", "network_stats", "optimal_alpha", "preset", "run", "run_metrics", "run_sweep",
]
