"""One-stage subproblem solver.

Each stage subproblem minimizes the polyhedral cost-to-go over the two
relaxed controls after the stage's prices are observed:

    min  theta
    s.t. theta >= intercept_c + gw_c * wealth' + ge_c * energy'   (cuts)
         0 <= buy <= u_max_charge,  0 <= sell <= u_max_discharge
         0 <= energy' <= capacity,  |wealth'| <= wealth_cap
         theta >= -1/rho                                          (floor)

with wealth' and energy' affine in (buy, sell).  The LP has three variables
and many rows, so it is solved by the primal simplex on the dual: the basis
is always three active rows and every pivot is a 3x3 solve.  The entering
rule is most-violated-row with a deterministic switch to Bland's
smallest-index rule for anti-cycling; ratio ties leave by smallest basis
position.  The pivot sequence, and hence the output, is a pure function of
the inputs.  A two-level objective perturbation (1e-10 on buy, 1e-13 on
sell) selects the lexicographically smallest optimal controls.

Dual values double as state sensitivities: the subgradient of the stage value
with respect to the incoming state is the dual-weighted sum of the row
right-hand-side derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InfeasibleError,
    MaxIterationsError,
    StorageError,
)
from .storage import StageData, UtilitySpec, terminal_cost, terminal_cost_derivative

_PIVOT_TOL = 1e-9
_STATE_TOL = 1e-9
_MAX_PIVOTS = 10_000
# most-violated entering rule normally; switch to Bland's smallest-index
# rule (anti-cycling) if a solve runs unusually long
_BLAND_AFTER = 60

# hierarchical objective perturbation: among theta-optimal vertices prefer
# the lexicographically smallest (buy, sell); biases theta by < 1e-9
_TIE_BUY = 1e-10
_TIE_SELL = 1e-13
_OBJECTIVE = (_TIE_BUY, _TIE_SELL, 1.0)

# static row indices
_R_BUY_LO, _R_BUY_HI, _R_SELL_LO, _R_SELL_HI = 0, 1, 2, 3
_R_FLOOR, _R_CAP_LO, _R_CAP_HI, _R_W_LO, _R_W_HI = 4, 5, 6, 7, 8
_N_STATIC = 9
_START_BASIS = (_R_BUY_LO, _R_SELL_LO, _R_FLOOR)


@dataclass(frozen=True)
class Cut:
    """Affine lower bound intercept + gw*x_m + ge*x_e on a cost-to-go."""

    intercept: float
    grad_wealth: float
    grad_energy: float
    origin_iteration: int = 0

    def __post_init__(self) -> None:
        if not (
            np.isfinite(self.intercept)
            and np.isfinite(self.grad_wealth)
            and np.isfinite(self.grad_energy)
        ):
            raise ValueError("cut coefficients must be finite")

    def value(self, wealth: float, energy: float) -> float:
        return self.intercept + self.grad_wealth * wealth + self.grad_energy * energy


class CutSet:
    """Append-only cut collection with array views for fast LP assembly."""

    __slots__ = ("cuts", "_a", "_gw", "_ge", "n")

    def __init__(self, cuts: list[Cut] | None = None) -> None:
        self.cuts: list[Cut] = []
        self._a = np.empty(16)
        self._gw = np.empty(16)
        self._ge = np.empty(16)
        self.n = 0
        for c in cuts or []:
            self.add(c)

    def add(self, cut: Cut) -> None:
        if self.n == len(self._a):
            grow = 2 * len(self._a)
            for name in ("_a", "_gw", "_ge"):
                arr = np.empty(grow)
                arr[: self.n] = getattr(self, name)[: self.n]
                setattr(self, name, arr)
        self._a[self.n] = cut.intercept
        self._gw[self.n] = cut.grad_wealth
        self._ge[self.n] = cut.grad_energy
        self.n += 1
        self.cuts.append(cut)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self._a[: self.n], self._gw[: self.n], self._ge[: self.n]

    def value(self, wealth: float, energy: float, floor: float) -> float:
        """Pointwise max of the cuts and the floor."""
        if self.n == 0:
            return floor
        a, gw, ge = self.arrays()
        return max(floor, float(np.max(a + gw * wealth + ge * energy)))

    def __len__(self) -> int:
        return self.n

    def __iter__(self):
        return iter(self.cuts)


@dataclass(frozen=True)
class NodeSolution:
    """Optimum of one successor subproblem."""

    controls: tuple[float, float]
    value: float
    subgradient: tuple[float, float]
    next_state: tuple[float, float]


@dataclass(frozen=True)
class TerminalSolution(NodeSolution):
    """Kelley solve result; `gaps` records the objective/bound gap per pass."""

    gaps: tuple[float, ...] = ()


@dataclass(frozen=True)
class StageSolution:
    """Probability-weighted aggregate over successor subproblems."""

    value: float
    state_subgradient: tuple[float, float]
    controls_by_successor: dict[int, tuple[float, float]]
    next_state_per_successor: dict[int, tuple[float, float]]

    @property
    def controls(self) -> tuple[float, float]:
        """The stage control, defined when all successors agree (or one exists)."""
        vals = list(self.controls_by_successor.values())
        first = vals[0]
        if all(abs(v[0] - first[0]) < 1e-12 and abs(v[1] - first[1]) < 1e-12 for v in vals):
            return first
        raise ValueError("controls differ across successors; index by successor node")


def _solve3(r0, r1, r2, v0, v1, v2):
    """Solve M x = v for the 3x3 matrix with rows r0, r1, r2 (Cramer)."""
    a, b, c = r0
    d, e, f = r1
    g, h, i = r2
    A = e * i - f * h
    B = c * h - b * i
    C = b * f - c * e
    D = f * g - d * i
    E = a * i - c * g
    F = c * d - a * f
    G = d * h - e * g
    H = b * g - a * h
    I = a * e - b * d
    det = a * A + b * D + c * G
    if det == 0.0:
        raise StorageError("singular stage-LP basis")
    inv = 1.0 / det
    return (
        (A * v0 + B * v1 + C * v2) * inv,
        (D * v0 + E * v1 + F * v2) * inv,
        (G * v0 + H * v1 + I * v2) * inv,
        (A, B, C, D, E, F, G, H, I, inv),
    )


class NodeSubproblem:
    """LP template for one (stage, successor-node) subproblem.

    The constraint matrix depends only on the node's prices and cuts; the
    incoming state enters the right-hand side alone, so a template is built
    once per node and re-solved for many states.  Terminal subproblems hold
    exponential-cost tangents instead of persistent cuts and are re-seeded
    per solve.
    """

    def __init__(
        self,
        data: StageData,
        utility: UtilitySpec,
        cutset: CutSet | None,
        terminal: bool = False,
    ) -> None:
        if terminal == (cutset is not None):
            raise ValueError("provide a cutset, or terminal=True, not both")
        self.data = data
        self.utility = utility
        self.cutset = cutset
        self.terminal = terminal
        self.floor = -1.0 / utility.risk_aversion
        cap0 = 32
        self._c0 = np.empty(cap0)
        self._c1 = np.empty(cap0)
        self._c2 = np.empty(cap0)
        self._b = np.empty(cap0)
        self._rows: list[tuple[float, float, float]] = [(0.0, 0.0, 0.0)] * cap0
        d = data
        static = [
            (1.0, 0.0, 0.0),
            (-1.0, 0.0, 0.0),
            (0.0, 1.0, 0.0),
            (0.0, -1.0, 0.0),
            (0.0, 0.0, 1.0),
            (d.charge_eff, -d.discharge_eff, 0.0),
            (-d.charge_eff, d.discharge_eff, 0.0),
            (-d.ask, d.bid, 0.0),
            (d.ask, -d.bid, 0.0),
        ]
        # rows are normalized to unit magnitude at insertion; the matching
        # rhs divisors for the static rows are kept for assembly
        self._static_inv = np.array([1.0 / max(1.0, abs(r[0]), abs(r[1]), abs(r[2])) for r in static])
        for i, row in enumerate(static):
            self._set_row(i, row)
        self._m = _N_STATIC  # rows in use (static + synced cuts)
        self._synced = 0  # cuts mirrored into rows so far
        # per-cut rhs pieces, pre-divided by the row scale:
        # b_cut = (a + gw * x_m + ge*leak * x_e) / row_scale
        self._cut_a = np.empty(cap0)
        self._cut_gw = np.empty(cap0)
        self._cut_gel = np.empty(cap0)

    # -- row storage -------------------------------------------------------

    def _ensure(self, m: int) -> None:
        cap = len(self._b)
        if m <= cap:
            return
        while cap < m:
            cap *= 2
        for name in ("_c0", "_c1", "_c2", "_b", "_cut_a", "_cut_gw", "_cut_gel"):
            old = getattr(self, name)
            arr = np.empty(cap)
            arr[: len(old)] = old
            setattr(self, name, arr)
        self._rows = self._rows + [(0.0, 0.0, 0.0)] * (cap - len(self._rows))

    def _set_row(self, i: int, row: tuple[float, float, float]) -> None:
        self._ensure(i + 1)
        inv = 1.0 / max(1.0, abs(row[0]), abs(row[1]), abs(row[2]))
        row = (row[0] * inv, row[1] * inv, row[2] * inv)
        self._c0[i], self._c1[i], self._c2[i] = row
        self._rows[i] = row

    def _append_cut_row(self, intercept: float, gw: float, ge: float) -> None:
        d = self.data
        i = self._m
        c0 = gw * d.ask - ge * d.charge_eff
        c1 = -gw * d.bid + ge * d.discharge_eff
        inv = 1.0 / max(1.0, abs(c0), abs(c1))
        self._set_row(i, (c0, c1, 1.0))
        self._cut_a[i] = intercept * inv
        self._cut_gw[i] = gw * inv
        self._cut_gel[i] = ge * d.leak_factor * inv
        self._m = i + 1

    def _sync_cuts(self) -> None:
        cs = self.cutset
        if cs is None or self._synced == cs.n:
            return
        a, gw, ge = cs.arrays()
        lo, hi = self._synced, cs.n
        n_new = hi - lo
        d = self.data
        start = self._m
        self._ensure(start + n_new)
        sl = slice(start, start + n_new)
        c0 = gw[lo:hi] * d.ask - ge[lo:hi] * d.charge_eff
        c1 = -gw[lo:hi] * d.bid + ge[lo:hi] * d.discharge_eff
        inv = 1.0 / np.maximum(1.0, np.maximum(np.abs(c0), np.abs(c1)))
        c0 = c0 * inv
        c1 = c1 * inv
        self._c0[sl] = c0
        self._c1[sl] = c1
        self._c2[sl] = inv
        self._cut_a[sl] = a[lo:hi] * inv
        self._cut_gw[sl] = gw[lo:hi] * inv
        self._cut_gel[sl] = ge[lo:hi] * d.leak_factor * inv
        rows = self._rows
        for k in range(n_new):
            rows[start + k] = (c0[k], c1[k], inv[k])
        self._m = start + n_new
        self._synced = hi

    def _reset_tangents(self) -> None:
        self._m = _N_STATIC

    # -- LP core -----------------------------------------------------------

    def _assemble_b(self, xm: float, xe: float, m: int) -> None:
        d = self.data
        b = self._b
        b[_R_BUY_LO] = 0.0
        b[_R_BUY_HI] = -d.u_max_charge
        b[_R_SELL_LO] = 0.0
        b[_R_SELL_HI] = -d.u_max_discharge
        b[_R_FLOOR] = self.floor
        leak_xe = d.leak_factor * xe
        b[_R_CAP_LO] = -leak_xe
        b[_R_CAP_HI] = leak_xe - d.capacity
        b[_R_W_LO] = -d.wealth_cap - xm
        b[_R_W_HI] = xm - d.wealth_cap
        b[:_N_STATIC] *= self._static_inv
        if m > _N_STATIC:
            sl = slice(_N_STATIC, m)
            np.multiply(self._cut_gw[sl], xm, out=b[sl])
            b[sl] += self._cut_gel[sl] * xe
            b[sl] += self._cut_a[sl]

    def _pivot(self, m: int, c: tuple[float, float, float]):
        """Run the dual-form simplex on the first ``m`` rows, objective ``c``.

        Returns (x, basis, y_basis).  Raises InfeasibleError if the primal is
        infeasible (dual unbounded).
        """
        rows = self._rows
        b = self._b
        c0v, c1v, c2v = c
        W0, W1, W2 = _START_BASIS
        col0 = self._c0[:m]
        col1 = self._c1[:m]
        col2 = self._c2[:m]
        bm = b[:m]
        pivots = 0
        for _ in range(_MAX_PIVOTS):
            r0, r1, r2 = rows[W0], rows[W1], rows[W2]
            # multipliers solve A_W^T y = c; primal point solves A_W x = b_W
            y0, y1, y2, co = _solve3(
                (r0[0], r1[0], r2[0]),
                (r0[1], r1[1], r2[1]),
                (r0[2], r1[2], r2[2]),
                c0v,
                c1v,
                c2v,
            )
            A, B, C, D, E, F, G, H, I, inv = co
            bw0, bw1, bw2 = b[W0], b[W1], b[W2]
            # x = A_W^{-1} b_W; note co is the adjugate of A_W^T, so transpose back
            x0 = (A * bw0 + D * bw1 + G * bw2) * inv
            x1 = (B * bw0 + E * bw1 + H * bw2) * inv
            x2 = (C * bw0 + F * bw1 + I * bw2) * inv
            slack = col0 * x0
            slack += col1 * x1
            slack += col2 * x2
            slack -= bm
            # ill-conditioned bases (near-parallel active rows) inflate the fp
            # error of x beyond the base tolerance; widen it accordingly
            minv_max = max(abs(A), abs(B), abs(C), abs(D), abs(E), abs(F), abs(G), abs(H), abs(I)) * abs(inv)
            x_err = 64.0 * 2.3e-16 * minv_max * max(abs(bw0), abs(bw1), abs(bw2), 1.0)
            thresh = -(_PIVOT_TOL + x_err)
            if pivots < _BLAND_AFTER:
                j = int(slack.argmin())  # most violated row enters
            else:
                j = int((slack < thresh).argmax())  # Bland: smallest index
            pivots += 1
            if slack[j] >= thresh:
                return (x0, x1, x2), (W0, W1, W2), (y0, y1, y2)
            aj = rows[j]
            u0 = (A * aj[0] + B * aj[1] + C * aj[2]) * inv
            u1 = (D * aj[0] + E * aj[1] + F * aj[2]) * inv
            u2 = (G * aj[0] + H * aj[1] + I * aj[2]) * inv
            leave = -1
            t_best = 0.0
            if u0 > _PIVOT_TOL:
                t_best, leave = y0 / u0, 0
            if u1 > _PIVOT_TOL:
                t = y1 / u1
                if leave < 0 or t < t_best:
                    t_best, leave = t, 1
            if u2 > _PIVOT_TOL:
                t = y2 / u2
                if leave < 0 or t < t_best:
                    t_best, leave = t, 2
            if leave < 0:
                # rows normalized against exponential-scale cut gradients can
                # have legitimately tiny pivot elements; accept an exactly
                # positive one (a huge but finite step) before giving up
                if u0 > 0.0:
                    t_best, leave = y0 / u0, 0
                if u1 > 0.0 and (leave < 0 or y1 / u1 < t_best):
                    t_best, leave = y1 / u1, 1
                if u2 > 0.0 and (leave < 0 or y2 / u2 < t_best):
                    leave = 2
            if leave < 0:
                raise InfeasibleError("stage subproblem infeasible")
            if leave == 0:
                W0 = j
            elif leave == 1:
                W1 = j
            else:
                W2 = j
        raise MaxIterationsError("stage LP exceeded pivot budget")

    def _check_state(self, state: tuple[float, float]) -> None:
        xm, xe = state
        d = self.data
        if not (-_STATE_TOL <= xe <= d.capacity + _STATE_TOL):
            raise InfeasibleError(f"energy state {xe:.6g} outside [0, {d.capacity:.6g}]")
        if abs(xm) > d.wealth_cap + _STATE_TOL:
            raise InfeasibleError(f"wealth state {xm:.6g} outside +-{d.wealth_cap:.6g}")

    def _subgradient(
        self, basis: tuple[int, int, int], y_basis: tuple[float, float, float]
    ) -> tuple[float, float]:
        d = self.data
        vm = 0.0
        ve = 0.0
        for idx, y in zip(basis, y_basis):
            if y <= 0.0:
                continue
            if idx >= _N_STATIC:
                # cut data are stored pre-divided by the row scale, so the
                # scaled dual times them is already the unscaled product
                vm += y * self._cut_gw[idx]
                ve += y * self._cut_gel[idx]
            elif idx == _R_CAP_LO:
                ve -= y * d.leak_factor * self._static_inv[idx]
            elif idx == _R_CAP_HI:
                ve += y * d.leak_factor * self._static_inv[idx]
            elif idx in (_R_W_LO, _R_W_HI):
                raise StorageError(
                    "wealth box is binding; raise wealth_cap (state far outside "
                    "the expected operating range)"
                )
        return vm, ve

    # -- public solves -----------------------------------------------------

    def _clamp(self, x, xe: float) -> tuple[float, float]:
        """Snap LP controls into their boxes and the energy band.

        Pivot tolerances let solutions stray from the capacity band by a few
        1e-9; repairing the controls here (rather than clipping the state)
        keeps the dynamics identity exact and stops drift across stages.
        """
        d = self.data
        buy = min(max(x[0], 0.0), d.u_max_charge)
        sell = min(max(x[1], 0.0), d.u_max_discharge)
        nxt = d.leak_factor * xe + d.charge_eff * buy - d.discharge_eff * sell
        if nxt < 0.0:
            sell = max(sell + nxt / d.discharge_eff, 0.0)
        elif nxt > d.capacity:
            buy = max(buy - (nxt - d.capacity) / d.charge_eff, 0.0)
        return buy, sell

    def solve(self, state: tuple[float, float]) -> NodeSolution:
        """Solve the subproblem at the incoming ``state``."""
        if self.terminal:
            return self.solve_terminal(state)
        self._sync_cuts()
        self._check_state(state)
        xm, xe = state
        m = self._m
        self._assemble_b(xm, xe, m)
        x, basis, y_basis = self._pivot(m, _OBJECTIVE)
        controls = self._clamp(x, xe)
        return NodeSolution(
            controls=controls,
            value=x[2],
            subgradient=self._subgradient(basis, y_basis),
            next_state=self.data.next_state(state, controls),
        )

    def solve_terminal(
        self,
        state: tuple[float, float],
        tol: float = 1e-8,
        max_iter: int = 100,
    ) -> TerminalSolution:
        """Minimize the exponential terminal cost by Kelley tangent refinement.

        Exact tangents of the terminal cost are added at the trial terminal
        wealth until the evaluated objective and the LP lower bound agree
        within ``tol`` (relative to the objective magnitude once that exceeds
        one; the exponential spans too many decades for an absolute test).
        """
        if not self.terminal:
            raise ValueError("not a terminal subproblem")
        if tol <= 0:
            raise ValueError("tol must be > 0")
        self._check_state(state)
        self._reset_tangents()
        xm, xe = state
        d = self.data
        # the terminal cost is strictly decreasing in wealth, so the optimum
        # sits at the maximum-wealth vertex; seeding the tangent there makes
        # the first pass exact regardless of the exponential's scale
        b0, k0 = max_wealth_controls(d, state)
        w0 = xm - d.ask * b0 + d.bid * k0
        f0 = terminal_cost(self.utility, w0)
        d0 = terminal_cost_derivative(self.utility, w0)
        self._append_cut_row(f0 - d0 * w0, d0, 0.0)
        gaps: list[float] = []
        for _ in range(max_iter):
            m = self._m
            self._assemble_b(xm, xe, m)
            x, basis, y_basis = self._pivot(m, _OBJECTIVE)
            theta = x[2]
            w_next = xm - d.ask * x[0] + d.bid * x[1]
            f = terminal_cost(self.utility, w_next)
            gap = f - theta
            gaps.append(gap)
            if gap <= tol * max(1.0, abs(f)):
                controls = self._clamp(x, xe)
                return TerminalSolution(
                    controls=controls,
                    value=theta,
                    subgradient=self._subgradient(basis, y_basis),
                    next_state=d.next_state(state, controls),
                    gaps=tuple(gaps),
                )
            dw = terminal_cost_derivative(self.utility, w_next)
            self._append_cut_row(f - dw * w_next, dw, 0.0)
        raise MaxIterationsError(
            f"terminal solve did not reach tol={tol:g} in {max_iter} passes"
        )


def max_wealth_controls(data: StageData, state: tuple[float, float]) -> tuple[float, float]:
    """Controls maximizing next wealth over the stage's feasible polytope.

    The polytope is two-dimensional (control boxes plus the next-energy
    band), so the optimum is found by enumerating the candidate vertices.
    """
    xm, xe = state
    E = data.leak_factor * xe
    B, K = data.u_max_charge, data.u_max_discharge
    cp, cm, C = data.charge_eff, data.discharge_eff, data.capacity
    cands = [(0.0, 0.0), (B, 0.0), (0.0, K), (B, K)]
    for b in (0.0, B):
        for target in (0.0, C):
            cands.append((b, (E + cp * b - target) / cm))
    for k in (0.0, K):
        for target in (0.0, C):
            cands.append(((target - E + cm * k) / cp, k))
    best = (0.0, 0.0)
    best_gain = 0.0
    for b, k in cands:
        if not (-1e-12 <= b <= B + 1e-12 and -1e-12 <= k <= K + 1e-12):
            continue
        b = min(max(b, 0.0), B)
        k = min(max(k, 0.0), K)
        nxt = E + cp * b - cm * k
        if not -1e-9 <= nxt <= C + 1e-9:
            continue
        gain = -data.ask * b + data.bid * k
        if gain > best_gain:
            best_gain = gain
            best = (b, k)
    return best


def terminal_kelley_solve(
    state: tuple[float, float],
    stage_data: StageData,
    utility: UtilitySpec,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> TerminalSolution:
    """One-off terminal-stage solve (fresh template)."""
    sub = NodeSubproblem(stage_data, utility, cutset=None, terminal=True)
    return sub.solve_terminal(state, tol=tol, max_iter=max_iter)


def solve_stage(
    state: tuple[float, float],
    stage_data_by_successor: dict[int, StageData],
    transition_row: np.ndarray,
    cuts_by_successor: dict[int, list[Cut] | CutSet] | None,
    is_terminal_next: bool,
    utility: UtilitySpec,
) -> StageSolution:
    """Solve one Bellman stage: expectation over successor subproblems.

    Prices are observed before the stage control is chosen, so each successor
    node gets its own deterministic subproblem; the stage value and state
    subgradient are the transition-probability-weighted sums of the successor
    optima.
    """
    row = np.asarray(transition_row, dtype=float)
    if abs(row.sum() - 1.0) > 1e-9:
        raise ValueError("transition_row must sum to 1")
    value = 0.0
    vm = 0.0
    ve = 0.0
    controls: dict[int, tuple[float, float]] = {}
    next_states: dict[int, tuple[float, float]] = {}
    for i, p in enumerate(row):
        if p <= 0.0:
            continue
        data = stage_data_by_successor[i]
        if is_terminal_next:
            sub = NodeSubproblem(data, utility, cutset=None, terminal=True)
            sol = sub.solve_terminal(state)
        else:
            cuts = cuts_by_successor[i] if cuts_by_successor else []
            cutset = cuts if isinstance(cuts, CutSet) else CutSet(list(cuts))
            sub = NodeSubproblem(data, utility, cutset=cutset)
            sol = sub.solve(state)
        value += p * sol.value
        vm += p * sol.subgradient[0]
        ve += p * sol.subgradient[1]
        controls[i] = sol.controls
        next_states[i] = sol.next_state
    return StageSolution(
        value=value,
        state_subgradient=(vm, ve),
        controls_by_successor=controls,
        next_state_per_successor=next_states,
    )
