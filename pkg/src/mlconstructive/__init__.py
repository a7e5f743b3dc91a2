"""ML-gated constructive heuristic for the Euclidean TSP."""

__version__ = "0.1.0"

from .candidates import CandidateLists, build_candidates, build_promising_list  # noqa: E402
from .constructive import Policy, SolveConfig, SolveResult, solve  # noqa: E402
from .instance import Instance, Metric, load_bundled, random_instance, read_tsplib  # noqa: E402

__all__ = ["Instance", "Metric", "load_bundled", "random_instance", "read_tsplib",
           "CandidateLists", "build_candidates", "build_promising_list",
           "Policy", "SolveConfig", "SolveResult", "solve", "__version__"]
