"""Random assignment games: markets, optimal matchings, extreme core allocations and simulations."""

from .core import (Allocation, CoreComputationError, CoreViolation, brute_force_extremes,
                   ck_auction, dispersion, firm_optimal, is_core, worker_optimal)
from .market import DistributionSpec, Market, MarketFormatError, generate_market, read_market, write_market
from .matching import Matching, brute_force_matching, coalition_value, max_weight_matching
from .pointer_graph import (PointerGraph, audit_path_inequalities, build_pointer_graph,
                            check_expansion, firm_path_distance, min_pointed_value,
                            stream_pointer_graph)
from .simulator import (KRule, SimConfig, TrialStats, exp_outlier_count, run_trials,
                        salary_histogram, sweep_firms, worst_worker_regression)

__version__ = "0.1.0"

__all__ = [
    "Allocation", "CoreComputationError", "CoreViolation", "DistributionSpec", "KRule", "Market",
    "MarketFormatError", "Matching", "PointerGraph", "SimConfig", "TrialStats",
    "audit_path_inequalities", "brute_force_extremes", "brute_force_matching",
    "build_pointer_graph", "check_expansion", "ck_auction", "coalition_value", "dispersion",
    "exp_outlier_count", "firm_optimal", "firm_path_distance", "generate_market", "is_core",
    "max_weight_matching", "min_pointed_value", "read_market", "run_trials", "salary_histogram",
    "stream_pointer_graph", "sweep_firms", "worker_optimal", "worst_worker_regression",
    "write_market",
]
