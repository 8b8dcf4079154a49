"""Battery trading in the intraday market: SDDP policies and indifference prices."""

__version__ = "0.1.0"

from .config import (
    RunConfig,
    build_chain_for,
    build_problem,
    config_from_dict,
    default_day_ahead,
    load_config,
)
from .discretization import MarkovChain, QuadratureRule, build_chain, gauss_hermite, nearest_node
from .price_model import (
    PriceModel,
    PriceSeries,
    RegressionFit,
    bid_ask,
    deviations_from_series,
    fit_ar,
    read_price_csv,
    simulate_deviation_path,
)
from .sddp import CutPool, Policy, StorageProblem, TrainingLog, bound, decide, train
from .simulation import (
    DensityEstimate,
    SimulationReport,
    evaluate_out_of_sample,
    kernel_density,
    tail_comparison,
)
from .stage_solver import (
    Cut,
    CutSet,
    NodeSolution,
    NodeSubproblem,
    StageSolution,
    solve_stage,
    terminal_kelley_solve,
)
from .storage import (
    BatterySpec,
    ComplementaryTrajectory,
    RelaxedTrajectory,
    StageData,
    UtilitySpec,
    check_spread_condition,
    recover_complementary,
    stage_data_for,
    terminal_cost,
    terminal_cost_derivative,
    wealth_box,
)
from .valuation import (
    ValuationResult,
    indifference_price_bisection,
    indifference_price_exponential,
    price_storage,
    price_sweep,
    storage_value,
)

__all__ = [
    "BatterySpec",
    "ComplementaryTrajectory",
    "Cut",
    "CutPool",
    "CutSet",
    "DensityEstimate",
    "MarkovChain",
    "NodeSolution",
    "NodeSubproblem",
    "Policy",
    "PriceModel",
    "PriceSeries",
    "QuadratureRule",
    "RegressionFit",
    "RelaxedTrajectory",
    "RunConfig",
    "SimulationReport",
    "StageData",
    "StageSolution",
    "StorageProblem",
    "TrainingLog",
    "UtilitySpec",
    "ValuationResult",
    "bid_ask",
    "bound",
    "build_chain",
    "build_chain_for",
    "build_problem",
    "check_spread_condition",
    "config_from_dict",
    "decide",
    "default_day_ahead",
    "deviations_from_series",
    "evaluate_out_of_sample",
    "fit_ar",
    "gauss_hermite",
    "indifference_price_bisection",
    "indifference_price_exponential",
    "kernel_density",
    "load_config",
    "nearest_node",
    "price_storage",
    "price_sweep",
    "read_price_csv",
    "recover_complementary",
    "simulate_deviation_path",
    "solve_stage",
    "stage_data_for",
    "storage_value",
    "tail_comparison",
    "terminal_cost",
    "terminal_cost_derivative",
    "terminal_kelley_solve",
    "train",
    "wealth_box",
]
