"""Finite-state Markov chain approximation of the AR(1) deviation process.

Stage t >= 1 shares one set of Gauss-Hermite quadrature nodes drawn for a
zero-mean Gaussian sampling density.  Transition weights from node ``xi_j`` at
stage t to node ``xi_i`` at stage t+1 are importance-reweighted quadrature
weights

    raw[j, i] = cond_density(xi_i | xi_j) / sampling_density(xi_i) * w_i

with the conditional density N(a*xi_j, sigma_eps^2).  Raw rows do not sum
exactly to one, so each row is normalized; the pre-normalization sums are kept
as a diagnostic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidOrderError, NumericalUnderflowError, StageOutOfRangeError
from .price_model import PriceModel

_ROW_SUM_FLOOR = 1e-12


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and probability weights matching a zero-mean Gaussian."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("quadrature weights must sum to 1")
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("quadrature nodes must be strictly increasing")


def gauss_hermite(n: int, sigma: float) -> QuadratureRule:
    """Gauss-Hermite rule for expectations under N(0, sigma^2).

    Exact for polynomials of degree <= 2n - 1.
    """
    if n < 1:
        raise InvalidOrderError("quadrature order must be >= 1")
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    x, w = np.polynomial.hermite.hermgauss(n)
    nodes = np.sqrt(2.0) * sigma * x
    weights = w / w.sum()
    return QuadratureRule(nodes=nodes, weights=weights)


class MarkovChain:
    """Per-stage node values and row-stochastic transition matrices.

    Stage 0 holds the single root node ``xi_0``; stages 1..T share one node
    set.  ``transitions[t]`` maps stage-t nodes to stage-(t+1) nodes for
    t = 0..T-1.  Immutable after construction and safe to share.
    """

    def __init__(
        self,
        horizon: int,
        nodes: list[np.ndarray],
        transitions: list[np.ndarray],
        raw_row_mass: list[np.ndarray],
    ) -> None:
        if len(nodes) != horizon + 1 or len(transitions) != horizon:
            raise ValueError("need horizon+1 node vectors and horizon transition matrices")
        self.horizon = horizon
        self.nodes = [np.asarray(v, dtype=float) for v in nodes]
        self.transitions = [np.asarray(m, dtype=float) for m in transitions]
        self.raw_row_mass = [np.asarray(v, dtype=float) for v in raw_row_mass]
        for t, mat in enumerate(self.transitions):
            if mat.shape != (len(self.nodes[t]), len(self.nodes[t + 1])):
                raise ValueError(f"transition matrix {t} has shape {mat.shape}")
            if np.any(mat < 0) or np.any(np.abs(mat.sum(axis=1) - 1.0) > 1e-12):
                raise ValueError(f"transition matrix {t} is not row-stochastic")
        for v in self.nodes:
            v.setflags(write=False)
        for m in self.transitions:
            m.setflags(write=False)

    def node_count(self, stage: int) -> int:
        return len(self.nodes[stage])

    def to_json(self) -> str:
        doc = {
            "horizon": self.horizon,
            "nodes": [v.tolist() for v in self.nodes],
            "transitions": [m.tolist() for m in self.transitions],
        }
        return json.dumps(doc, indent=2)


def _normal_pdf(x: np.ndarray, mean: float | np.ndarray, std: float) -> np.ndarray:
    z = (x - mean) / std
    return np.exp(-0.5 * z * z) / (std * np.sqrt(2.0 * np.pi))


def build_chain(
    model: PriceModel,
    n: int,
    sampling_std: float | None = None,
    horizon: int | None = None,
) -> MarkovChain:
    """Discretize the deviation process on ``n`` quadrature nodes per stage.

    Parameters
    ----------
    model:
        Price model supplying ``a``, ``sigma_eps`` and ``xi_0``.
    n:
        Quadrature points per stage (same at every stage).
    sampling_std:
        Std of the zero-mean Gaussian sampling density.  Defaults to the
        stationary std of the deviation process.
    horizon:
        Number of stages; defaults to the model horizon.

    Raises
    ------
    NumericalUnderflowError
        If a raw transition row sums to less than 1e-12 (sampling density
        badly mismatched with the conditional density).
    """
    if n < 1:
        raise InvalidOrderError("need at least one quadrature point")
    T = model.horizon if horizon is None else int(horizon)
    if T < 1:
        raise ValueError("horizon must be >= 1")
    if sampling_std is None:
        sampling_std = model.stationary_std()
        if sampling_std <= 0:
            sampling_std = 1.0  # degenerate model; node placement is irrelevant
    if sampling_std <= 0:
        raise ValueError("sampling_std must be > 0")

    rule = gauss_hermite(n, sampling_std)
    stage_nodes = rule.nodes
    a = model.ar_coefficient
    sig = model.innovation_std
    phi = _normal_pdf(stage_nodes, 0.0, sampling_std)

    nodes: list[np.ndarray] = [np.array([model.initial_deviation])]
    nodes += [stage_nodes.copy() for _ in range(T)]

    transitions: list[np.ndarray] = []
    raw_mass: list[np.ndarray] = []
    for t in range(T):
        sources = nodes[t]
        mat = np.empty((len(sources), n))
        mass = np.empty(len(sources))
        for j, xi_j in enumerate(sources):
            if sig == 0.0:
                # Dirac conditional: all mass on the node nearest a*xi_j.
                row = np.zeros(n)
                row[int(np.argmin(np.abs(stage_nodes - a * xi_j)))] = 1.0
                mass[j] = 1.0
            else:
                row = _normal_pdf(stage_nodes, a * xi_j, sig) / phi * rule.weights
                mass[j] = row.sum()
                if mass[j] < _ROW_SUM_FLOOR:
                    raise NumericalUnderflowError(
                        f"stage {t}, node {j}: raw transition mass {mass[j]:.3e} "
                        "below 1e-12; adjust sampling_std"
                    )
                row = row / mass[j]
            mat[j] = row
        transitions.append(mat)
        raw_mass.append(mass)

    return MarkovChain(T, nodes, transitions, raw_mass)


def nearest_node(chain: MarkovChain, stage: int, deviation: float) -> int:
    """Index of the stage node closest to ``deviation``; ties go to the smaller index."""
    if not 1 <= stage <= chain.horizon:
        raise StageOutOfRangeError(f"stage {stage} outside 1..{chain.horizon}")
    return int(np.argmin(np.abs(chain.nodes[stage] - deviation)))
