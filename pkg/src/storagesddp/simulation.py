"""Out-of-sample policy evaluation and terminal-wealth diagnostics.

Out-of-sample scenarios draw the deviation process from its continuous law.
At each stage the realized deviation is mapped to the nearest chain node;
the stage problem is re-solved with that node's trained cuts but with the
realized bid/ask in the immediate dynamics and accounting.  An in-sample
analogue (scenarios drawn from the chain itself) is computed alongside for
the discretization-gap comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discretization import nearest_node
from .errors import DegenerateSampleError
from .sddp import Policy
from .stage_solver import NodeSubproblem
from .storage import stage_data_for, terminal_cost

_FEAS_TOL = 1e-9


@dataclass(frozen=True)
class SimulationReport:
    """Scenario-evaluation summary.

    ``mean_objective`` is the mean terminal wealth (EUR); ``mean_utility``
    the mean utility (the optimization objective) with ``std_error`` the
    standard error of that mean; ``in_sample_mean`` the utility mean over
    scenarios drawn from the chain instead of the continuous process.
    """

    n_scenarios: int
    mean_objective: float
    std_error: float
    terminal_wealths: np.ndarray
    mean_utility: float
    in_sample_mean: float
    utilities: np.ndarray


@dataclass(frozen=True)
class DensityEstimate:
    """Gaussian-kernel density on an equally spaced grid."""

    grid: np.ndarray
    density: np.ndarray
    bandwidth: float


def _simulate_one(
    policy: Policy, deviations: np.ndarray, realized_prices: bool
) -> tuple[float, float]:
    """Run one scenario; returns (terminal wealth, utility).

    With ``realized_prices`` the stage dynamics use the scenario's own
    bid/ask and the nearest node's cuts; otherwise the deviations are node
    values and the policy's node subproblems are used directly.
    """
    problem = policy.problem
    model = problem.price_model
    battery = problem.battery
    utility = problem.utility
    T = policy.horizon
    state = (utility.initial_wealth, 0.0)
    traded = 0.0
    for t in range(1, T + 1):
        xi = float(deviations[t - 1])
        node = nearest_node(policy.chain, t, xi)
        if realized_prices:
            data = stage_data_for(
                model, battery, t, xi, node=node, wealth_cap=policy.wealth_cap
            )
            if t == T:
                sub = NodeSubproblem(data, utility, cutset=None, terminal=True)
            else:
                sub = NodeSubproblem(data, utility, cutset=policy.pools.get(t, node))
        else:
            data = policy.stage_data(t, node)
            sub = policy.subproblem(t, node)
        sol = sub.solve(state)
        buy, sell = sol.controls
        if not (
            -_FEAS_TOL <= buy <= data.u_max_charge + _FEAS_TOL
            and -_FEAS_TOL <= sell <= data.u_max_discharge + _FEAS_TOL
        ):
            raise AssertionError(f"control outside box at stage {t}")
        state = sol.next_state
        if not -_FEAS_TOL <= state[1] <= battery.capacity + _FEAS_TOL:
            raise AssertionError(f"energy outside [0, capacity] at stage {t}")
        traded += data.ask * buy - data.bid * sell
    wealth = state[0]
    if abs(wealth - (utility.initial_wealth - traded)) > 1e-9 * max(1.0, abs(wealth)):
        raise AssertionError("wealth accounting identity violated")
    return wealth, -terminal_cost(utility, wealth)


def _node_path_deviations(policy: Policy, seed: int) -> np.ndarray:
    """Draw one node path from the chain; return its deviation values."""
    chain = policy.chain
    rng = np.random.default_rng(seed)
    draws = rng.random(chain.horizon)
    out = np.empty(chain.horizon)
    j = 0
    for t in range(chain.horizon):
        row = np.cumsum(chain.transitions[t][j])
        j = min(int(np.searchsorted(row, draws[t])), chain.node_count(t + 1) - 1)
        out[t] = chain.nodes[t + 1][j]
    return out


def evaluate_out_of_sample(
    policy: Policy, n_scenarios: int, rng_seed: int
) -> SimulationReport:
    """Monte Carlo evaluation of a trained policy.

    Scenario k uses seed ``rng_seed XOR k`` so the scenario set does not
    depend on evaluation order.
    """
    if n_scenarios < 1:
        raise ValueError("n_scenarios must be >= 1")
    from .price_model import simulate_deviation_path

    model = policy.problem.price_model
    T = policy.horizon
    wealths = np.empty(n_scenarios)
    utils = np.empty(n_scenarios)
    for k in range(n_scenarios):
        xi = simulate_deviation_path(model, T, rng_seed ^ k)
        wealths[k], utils[k] = _simulate_one(policy, xi, realized_prices=True)

    in_sample = np.empty(n_scenarios)
    for k in range(n_scenarios):
        xi = _node_path_deviations(policy, (rng_seed + 1_000_003) ^ k)
        _, in_sample[k] = _simulate_one(policy, xi, realized_prices=False)

    se = float(np.std(utils, ddof=1) / np.sqrt(n_scenarios)) if n_scenarios > 1 else 0.0
    return SimulationReport(
        n_scenarios=n_scenarios,
        mean_objective=float(wealths.mean()),
        std_error=se,
        terminal_wealths=wealths,
        mean_utility=float(utils.mean()),
        in_sample_mean=float(in_sample.mean()),
        utilities=utils,
    )


def kernel_density(samples: np.ndarray, grid_points: int = 256) -> DensityEstimate:
    """Gaussian KDE with Silverman bandwidth 1.06 * std * n^(-1/5)."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2 or np.std(x) == 0.0:
        raise DegenerateSampleError("need >= 2 samples with nonzero variance")
    if grid_points < 16:
        raise ValueError("grid_points must be >= 16")
    n = x.size
    bw = 1.06 * float(np.std(x, ddof=1)) * n ** (-0.2)
    grid = np.linspace(x.min() - 3.0 * bw, x.max() + 3.0 * bw, grid_points)
    density = np.empty(grid_points)
    norm = 1.0 / (n * bw * np.sqrt(2.0 * np.pi))
    chunk = max(1, int(2_000_000 // max(n, 1)))
    for lo in range(0, grid_points, chunk):
        g = grid[lo : lo + chunk, None]
        z = (g - x[None, :]) / bw
        density[lo : lo + chunk] = norm * np.exp(-0.5 * z * z).sum(axis=1)
    return DensityEstimate(grid=grid, density=density, bandwidth=bw)


def tail_comparison(
    reports: dict[float, SimulationReport], quantile: float
) -> list[tuple[float, float]]:
    """Lower wealth quantile per risk aversion, sorted by risk aversion."""
    if len(reports) < 2:
        raise ValueError("need reports for at least two risk aversions")
    if not 0.0 < quantile < 0.5:
        raise ValueError("quantile must lie in (0, 0.5)")
    return [
        (rho, float(np.quantile(reports[rho].terminal_wealths, quantile)))
        for rho in sorted(reports)
    ]
