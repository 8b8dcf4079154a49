"""Independent reference computations used to verify the solver stack.

Nothing here touches the cut/LP machinery: values come from grid dynamic
programming, exhaustive enumeration, or closed forms, so agreement with the
package is meaningful evidence.
"""

from __future__ import annotations

import itertools

import numpy as np

from storagesddp import bid_ask
from storagesddp.discretization import MarkovChain
from storagesddp.sddp import Policy, StorageProblem


def chain_dp(
    problem: StorageProblem,
    chain: MarkovChain,
    n_energy: int = 1025,
    n_control: int = 2049,
):
    """Backward induction for the chain problem on (energy x node) grids.

    Wealth is handled exactly through the exponential-utility factorization
    J_t(xm, xe, node) = exp(-rho*xm) * G_t(xe, node) - 1/rho with G_T = 1/rho.
    The net-control grid is augmented per energy level with the exact
    empty-the-storage / fill-the-storage breakpoints, which land on the grid
    endpoints and avoid interpolation there.  Residual grid bias makes G an
    overestimate (cost side), i.e. the returned value underestimates the
    achievable expected utility slightly.

    Returns (phi_root, G) where G[t][j] is the stage-t array over the energy
    grid and phi_root = -J_0(x0m, 0, root).
    """
    model, battery, utility = problem.price_model, problem.battery, problem.utility
    rho = utility.risk_aversion
    T = chain.horizon
    cap, cp, cm = battery.capacity, battery.charge_eff, battery.discharge_eff
    leak = 1.0 - battery.leakage
    e_grid = np.linspace(0.0, cap, n_energy)
    u = np.concatenate(
        [
            np.linspace(-battery.max_discharge, 0.0, n_control // 2 + 1),
            np.linspace(0.0, battery.max_charge, n_control // 2 + 1)[1:],
        ]
    )
    charge = np.where(u >= 0, cp * u, cm * u)
    G = [None] * (T + 1)
    G[T] = [np.full(n_energy, 1.0 / rho) for _ in range(chain.node_count(T))]
    for t in range(T, 0, -1):
        level = []
        for i in range(chain.node_count(t)):
            bid, ask = bid_ask(model, t, float(chain.nodes[t][i]))
            cost = np.where(u >= 0, ask * u, bid * u)
            factor = np.exp(rho * cost)
            Gn = G[t][i]
            nxt = leak * e_grid[:, None] + charge[None, :]
            ok = (nxt >= -1e-12) & (nxt <= cap + 1e-12)
            vals = np.where(
                ok, factor[None, :] * np.interp(np.clip(nxt, 0.0, cap), e_grid, Gn), np.inf
            )
            best = vals.min(axis=1)
            u_empty = np.maximum(-leak * e_grid / cm, -battery.max_discharge)
            v_empty = np.where(
                -leak * e_grid / cm >= -battery.max_discharge - 1e-15,
                np.exp(rho * bid * u_empty) * Gn[0],
                np.inf,
            )
            u_fill = np.minimum((cap - leak * e_grid) / cp, battery.max_charge)
            v_fill = np.where(
                (cap - leak * e_grid) / cp <= battery.max_charge + 1e-15,
                np.exp(rho * ask * u_fill) * Gn[-1],
                np.inf,
            )
            level.append(np.minimum(best, np.minimum(v_empty, v_fill)))
        P = chain.transitions[t - 1]
        G[t - 1] = [
            sum(P[j, i] * level[i] for i in range(chain.node_count(t)))
            for j in range(chain.node_count(t - 1))
        ]
    x0m = utility.initial_wealth
    phi = 1.0 / rho - float(np.exp(-rho * x0m) * G[0][0][0])
    return phi, G


def dp_cost_to_go(G, e_grid_cap: float, rho: float, t: int, node: int, xm: float, xe: float):
    """Evaluate the DP cost-to-go J_t(xm, xe, node) from `chain_dp` output."""
    Gn = G[t][node]
    e_grid = np.linspace(0.0, e_grid_cap, len(Gn))
    return float(np.exp(-rho * xm) * np.interp(xe, e_grid, Gn) - 1.0 / rho)


def enumerate_node_paths(chain: MarkovChain):
    """All node paths (j_1..j_T) with their probabilities."""
    T = chain.horizon
    counts = [chain.node_count(t) for t in range(1, T + 1)]
    for path in itertools.product(*(range(c) for c in counts)):
        prob = chain.transitions[0][0][path[0]]
        for t in range(1, T):
            prob *= chain.transitions[t][path[t - 1]][path[t]]
        yield path, float(prob)


def policy_chain_value(policy: Policy) -> float:
    """Exact expected utility of a trained policy on its own chain."""
    utility = policy.problem.utility
    rho = utility.risk_aversion
    total = 0.0
    for path, prob in enumerate_node_paths(policy.chain):
        state = (utility.initial_wealth, 0.0)
        for t in range(1, policy.horizon + 1):
            controls = policy.decide(t, path[t - 1], state)
            state = policy.stage_data(t, path[t - 1]).next_state(state, controls)
        total += prob * (1.0 - np.exp(-rho * state[0])) / rho
    return total


def feedback_policy_value(policy_fn, problem, chain) -> float:
    """Exact expected utility of an arbitrary feasible feedback rule.

    ``policy_fn(t, node, state) -> (buy, sell)`` must return box-feasible
    controls keeping the energy in [0, capacity].
    """
    utility = problem.utility
    rho = utility.risk_aversion
    model, battery = problem.price_model, problem.battery
    total = 0.0
    for path, prob in enumerate_node_paths(chain):
        state = (utility.initial_wealth, 0.0)
        for t in range(1, chain.horizon + 1):
            buy, sell = policy_fn(t, path[t - 1], state)
            bid, ask = bid_ask(model, t, float(chain.nodes[t][path[t - 1]]))
            xm = state[0] - ask * buy + bid * sell
            xe = (1 - battery.leakage) * state[1] + battery.charge_eff * buy - battery.discharge_eff * sell
            assert -1e-9 <= xe <= battery.capacity + 1e-9, "oracle policy infeasible"
            state = (xm, xe)
        total += prob * (1.0 - np.exp(-rho * state[0])) / rho
    return total


def stage_objective(data, cuts, floor: float, state, buy: float, sell: float) -> float:
    """Polyhedral stage objective at given controls (max of cuts and floor)."""
    xm, xe = data.next_state(state, (buy, sell))
    val = floor
    for c in cuts:
        val = max(val, c.intercept + c.grad_wealth * xm + c.grad_energy * xe)
    return val


def grid_stage_minimum(data, cuts, floor: float, state, n: int = 201, zoom: int = 3):
    """Brute-force minimum of the stage objective over a control grid.

    Vectorized evaluation with ``zoom`` rounds of local grid refinement
    around the incumbent, so the returned value is accurate to roughly
    (box width / n**zoom) times the objective slope.  Returns
    (value, (buy, sell)); grid points outside the capacity box are skipped.
    """
    xm0, xe0 = state
    leak = data.leak_factor
    a = np.array([c.intercept for c in cuts])
    gw = np.array([c.grad_wealth for c in cuts])
    ge = np.array([c.grad_energy for c in cuts])

    def value_at(B, K):
        xm = xm0 - data.ask * B + data.bid * K
        xe = leak * xe0 + data.charge_eff * B - data.discharge_eff * K
        ok = (xe >= -1e-9) & (xe <= data.capacity + 1e-9)
        vals = np.full(B.shape, floor)
        if len(cuts):
            stacked = a[:, None] + gw[:, None] * xm.ravel() + ge[:, None] * xe.ravel()
            vals = np.maximum(vals, stacked.max(axis=0).reshape(B.shape))
        return np.where(ok, vals, np.inf)

    def candidates(b_lo, b_hi, k_lo, k_hi):
        buys = np.linspace(b_lo, b_hi, n)
        sells = np.linspace(k_lo, k_hi, n)
        B, K = np.meshgrid(buys, sells, indexing="ij")
        # per buy, the sells putting next energy exactly at 0 / capacity
        for target in (0.0, data.capacity):
            k_edge = (leak * xe0 + data.charge_eff * buys - target) / data.discharge_eff
            k_edge = np.clip(k_edge, 0.0, data.u_max_discharge)
            B = np.concatenate([B, buys[:, None]], axis=1)
            K = np.concatenate([K, k_edge[:, None]], axis=1)
        return B, K, buys[1] - buys[0], sells[1] - sells[0]

    b_lo, b_hi = 0.0, data.u_max_charge
    k_lo, k_hi = 0.0, data.u_max_discharge
    best, b_star, k_star = np.inf, 0.0, 0.0
    for _ in range(zoom):
        B, K, db, dk = candidates(b_lo, b_hi, k_lo, k_hi)
        vals = value_at(B, K)
        idx = np.unravel_index(np.argmin(vals), vals.shape)
        if vals[idx] < best:
            best, b_star, k_star = float(vals[idx]), float(B[idx]), float(K[idx])
        b_lo = max(0.0, b_star - 2 * db)
        b_hi = min(data.u_max_charge, b_star + 2 * db)
        k_lo = max(0.0, k_star - 2 * dk)
        k_hi = min(data.u_max_discharge, k_star + 2 * dk)
    return best, (b_star, k_star)


def random_relaxed_trajectory(rng, battery, prices, x0m: float):
    """A random feasible trajectory of the two-control relaxation."""
    import storagesddp as s

    T = len(prices)
    leak = 1.0 - battery.leakage
    wealth = [x0m]
    energy = [0.0]
    buys = []
    sells = []
    for t in range(T):
        bid, ask = prices[t]
        e = energy[-1]
        for _ in range(50):
            b = rng.uniform(0.0, battery.max_charge)
            k = rng.uniform(0.0, battery.max_discharge)
            nxt = leak * e + battery.charge_eff * b - battery.discharge_eff * k
            if 0.0 <= nxt <= battery.capacity:
                break
        else:
            b = k = 0.0
            nxt = leak * e
        buys.append(b)
        sells.append(k)
        wealth.append(wealth[-1] - ask * b + bid * k)
        energy.append(nxt)
    return s.RelaxedTrajectory(
        wealth=np.array(wealth), energy=np.array(energy), buy=np.array(buys), sell=np.array(sells)
    )
