"""
Greedy activation order of V-nodes and the mean transition time predictions
Admissible paths, maximum least degree d*, regime classification and leading-order formulas
"""

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from ctmc_engine import DynamicsLaw
from graph_model import BipartiteGraph
from queue_dynamics import QueueParams

MAX_ENUMERATION_N = 12
MAX_BRUTE_FORCE_N = 8
MAX_PATHS = 200_000

PATH_COLUMNS = ['path', 'probability', 'd_bars', 'n_ks', 'd_star', 'regime', 'prefactor', 'exponent',
                'mean_prediction', 'd_hat', 'overtaking_step']


class PathCapacityError(ValueError):
    """Graph too large for exhaustive enumeration"""


class ClassificationError(ValueError):
    """Parameters fall outside the case split of the predictions"""


class InconsistentPathsError(RuntimeError):
    """Admissible paths disagree on d*"""


class Regime(str, Enum):
    SUBCRITICAL = 'subcritical'
    CRITICAL = 'critical'
    SUPERCRITICAL = 'supercritical'


# =============================================================================
# DATA TYPES
# =============================================================================

@dataclass(frozen=True)
class AlgorithmStep:
    """One step of the greedy algorithm on the residual graph G_k"""
    k: int
    candidates: Tuple[int, ...]
    d_bar: int
    n_k: int
    chosen: int


@dataclass(frozen=True)
class ActivationOrderResult:
    """An admissible path with its d* and probability"""
    steps: Tuple[AlgorithmStep, ...]
    d_star: int
    probability: Fraction

    @property
    def order(self) -> Tuple[int, ...]:
        return tuple(step.chosen for step in self.steps)

    @property
    def d_bars(self) -> Tuple[int, ...]:
        return tuple(step.d_bar for step in self.steps)

    def label(self) -> str:
        return '-'.join(f"v{j}" for j in self.order)


@dataclass
class RegimePrediction:
    """Leading-order mean transition time prefactor * r^exponent"""
    regime: Regime
    mean_prediction: float
    prefactor: float
    exponent: float
    uses_TU: bool = False
    case: str = 'static'
    conditional: List[Dict] = field(default_factory=list)

    def at(self, r: float) -> float:
        return self.prefactor * float(r) ** self.exponent

    def to_dict(self) -> Dict:
        return {
            'regime': self.regime.value,
            'case': self.case,
            'mean_prediction': self.mean_prediction,
            'prefactor': self.prefactor,
            'exponent': self.exponent,
            'uses_TU': self.uses_TU,
            'conditional': self.conditional,
        }


# =============================================================================
# GREEDY ALGORITHM
# =============================================================================

class _Residual:
    """Residual graph G_k: V-nodes not yet activated and U-nodes not yet blocked"""

    def __init__(self, graph: BipartiteGraph):
        self.neighbors = {j: frozenset(graph.v_neighbors(j)) for j in range(graph.n)}
        self.v_left = set(range(graph.n))
        self.u_left = set(range(graph.m))

    def degree(self, j: int) -> int:
        return len(self.neighbors[j] & self.u_left)

    def minimizers(self) -> Tuple[int, Tuple[int, ...]]:
        degrees = {j: self.degree(j) for j in self.v_left}
        low = min(degrees.values())
        return low, tuple(sorted(j for j, d in degrees.items() if d == low))

    def remove(self, j: int) -> FrozenSet[int]:
        blocked = self.neighbors[j] & self.u_left
        self.v_left.discard(j)
        self.u_left -= blocked
        return frozenset(blocked)

    def restore(self, j: int, blocked: FrozenSet[int]) -> None:
        self.v_left.add(j)
        self.u_left |= blocked


def _result(steps: Sequence[AlgorithmStep]) -> ActivationOrderResult:
    probability = Fraction(1)
    for step in steps:
        probability /= step.n_k
    d_star = max((step.d_bar for step in steps), default=0)
    return ActivationOrderResult(tuple(steps), d_star, probability)


def run_algorithm(graph: BipartiteGraph, rng: np.random.Generator) -> ActivationOrderResult:
    """
    At each step find the minimum residual degree among remaining V-nodes,
    activate one minimizer chosen uniformly at random and remove its U-neighbours.
    """
    residual = _Residual(graph)
    steps = []
    for k in range(1, graph.n + 1):
        d_bar, candidates = residual.minimizers()
        chosen = candidates[int(rng.integers(len(candidates)))]
        residual.remove(chosen)
        steps.append(AlgorithmStep(k, candidates, d_bar, len(candidates), chosen))
    return _result(steps)


def enumerate_paths(graph: BipartiteGraph, max_paths: int = MAX_PATHS) -> List[ActivationOrderResult]:
    """All admissible paths by depth-first search over minimizer choices, in node-id order"""
    if graph.n > MAX_ENUMERATION_N:
        raise PathCapacityError(
            f"N={graph.n} exceeds {MAX_ENUMERATION_N}; sample paths with run_algorithm instead")
    residual = _Residual(graph)
    paths: List[ActivationOrderResult] = []
    steps: List[AlgorithmStep] = []

    def dfs(k: int) -> None:
        if k > graph.n:
            paths.append(_result(steps))
            if len(paths) > max_paths:
                raise PathCapacityError(
                    f"More than {max_paths} admissible paths; sample with run_algorithm instead")
            return
        d_bar, candidates = residual.minimizers()
        for chosen in candidates:
            blocked = residual.remove(chosen)
            steps.append(AlgorithmStep(k, candidates, d_bar, len(candidates), chosen))
            dfs(k + 1)
            steps.pop()
            residual.restore(chosen, blocked)

    dfs(1)
    return paths


def sample_path_frequencies(graph: BipartiteGraph, runs: int, seed: int) -> Counter:
    """Counts of each activation order over repeated runs of the randomized algorithm"""
    rng = np.random.default_rng(seed)
    return Counter(run_algorithm(graph, rng).order for _ in range(runs))


def min_max_residual_degree(graph: BipartiteGraph) -> int:
    """Minimum over all orders of V of the largest residual degree met at activation"""
    if graph.n > MAX_BRUTE_FORCE_N:
        raise PathCapacityError(f"Brute force over {graph.n}! orders is too large (limit N={MAX_BRUTE_FORCE_N})")
    if graph.n == 0:
        return 0
    neighbors = [frozenset(graph.v_neighbors(j)) for j in range(graph.n)]
    best = graph.m
    for order in itertools.permutations(range(graph.n)):
        blocked = set()
        worst = 0
        for j in order:
            worst = max(worst, len(neighbors[j] - blocked))
            if worst >= best:
                break
            blocked |= neighbors[j]
        best = min(best, worst)
    return best


# =============================================================================
# REGIMES AND PREDICTIONS
# =============================================================================

def classify_regime(d_star: int, beta: float) -> Regime:
    if d_star < 0 or not beta > 0:
        raise ClassificationError(f"Need d* >= 0 and beta > 0, got d*={d_star}, beta={beta}")
    if d_star <= 1:
        return Regime.SUBCRITICAL
    threshold = 1.0 / (d_star - 1)
    if math.isclose(beta, threshold, rel_tol=1e-12):
        return Regime.CRITICAL
    return Regime.SUBCRITICAL if beta < threshold else Regime.SUPERCRITICAL


def _tu_prefactor(params: QueueParams) -> float:
    c = params.drain_speed
    if params.rho_u >= c:
        raise ClassificationError(f"rho_U={params.rho_u:g} >= c={c:g}: T_U(r) is infinite")
    return params.gamma_u / (c - params.rho_u)


def _prediction(regime: Regime, prefactor: float, exponent: float, params: QueueParams,
                **extra) -> RegimePrediction:
    return RegimePrediction(regime=regime, mean_prediction=prefactor * params.r ** exponent,
                            prefactor=prefactor, exponent=exponent, **extra)


def predict_fixed_complete(m: int, beta: float, params: QueueParams) -> RegimePrediction:
    """Complete graph K_{m,n} with fixed rates"""
    if m < 1:
        raise ClassificationError(f"Complete-graph prediction needs m >= 1, got {m}")
    regime = classify_regime(m, beta)
    if regime == Regime.SUBCRITICAL:
        return _prediction(regime, 1.0 / m, beta * (m - 1), params)
    if regime == Regime.CRITICAL:
        return _prediction(regime, 1.0 / m, 1.0, params)
    return _prediction(regime, _tu_prefactor(params), 1.0, params, uses_TU=True)


def _path_prefactor(path: ActivationOrderResult) -> Fraction:
    d = path.d_star
    if d == 0:
        return Fraction(0)
    return sum((Fraction(1, step.n_k * d) for step in path.steps if step.d_bar == d), Fraction(0))


def predict_fixed_arbitrary(paths: Sequence[ActivationOrderResult], beta: float,
                            params: QueueParams) -> RegimePrediction:
    """
    Arbitrary graph with fixed rates. Each path contributes
    sum over steps with d_bar_k = d* of 1/(n_k d*); the reported prefactor
    is the probability-weighted average and `conditional` keeps the per-path values.
    """
    if not paths:
        raise ClassificationError("No admissible paths given")
    d_values = {p.d_star for p in paths}
    if len(d_values) != 1:
        raise InconsistentPathsError(f"Admissible paths disagree on d*: {sorted(d_values)}")
    d_star = d_values.pop()
    regime = classify_regime(d_star, beta)

    conditional = [{'path': p.label(), 'probability': float(p.probability),
                    'prefactor': float(_path_prefactor(p))} for p in paths]
    total = sum((p.probability for p in paths), Fraction(0))
    weighted = float(sum((p.probability * _path_prefactor(p) for p in paths), Fraction(0)) / total)

    if regime == Regime.SUPERCRITICAL:
        return _prediction(regime, _tu_prefactor(params), 1.0, params,
                           uses_TU=True, conditional=conditional)
    if regime == Regime.CRITICAL:
        tu = _tu_prefactor(params)
        if weighted >= tu:
            return _prediction(Regime.SUPERCRITICAL, tu, 1.0, params,
                               uses_TU=True, conditional=conditional)
        return _prediction(regime, weighted, 1.0, params, conditional=conditional)
    exponent = beta * (d_star - 1) if d_star >= 1 else 0.0
    return _prediction(regime, weighted, exponent, params, conditional=conditional)


def predict_dynamic(d_star: int, beta: float, dynamics: DynamicsLaw, params: QueueParams,
                    paths: Optional[Sequence[ActivationOrderResult]] = None) -> RegimePrediction:
    """Order of the mean transition time under edge dynamics"""
    regime = classify_regime(d_star, beta)

    if dynamics.kind == 'fast':
        if not dynamics.exponent > 0:
            raise ClassificationError(f"FD needs lambda(r) = r^a with a > 0, got a={dynamics.exponent}")
        return _prediction(regime, 1.0, -dynamics.exponent, params, case='FD')

    if dynamics.kind == 'regular':
        if not dynamics.constant > 0:
            raise ClassificationError(f"RD needs a positive constant rate, got {dynamics.constant}")
        return _prediction(regime, 1.0 / dynamics.constant, 0.0, params, case='RD')

    if dynamics.kind == 'slow':
        alpha = dynamics.exponent
        if not alpha > 0:
            raise ClassificationError(f"SD needs lambda(r) = r^-alpha with alpha > 0, got {alpha}")
        threshold = min(1.0, beta * (d_star - 1)) if d_star >= 1 else 0.0
        if alpha <= threshold:
            return _prediction(regime, 1.0, alpha, params, case='SDc')
        if regime == Regime.SUPERCRITICAL:
            # threshold is 1 here, so alpha > 1: the U-queues empty first
            return _prediction(regime, _tu_prefactor(params), 1.0, params, uses_TU=True, case='SDc')
        if paths is None:
            raise ClassificationError(
                f"SDnc (alpha={alpha:g} > {threshold:g}) reduces to the static prediction, "
                f"which needs the admissible paths")
        static = predict_fixed_arbitrary(paths, beta, params)
        static.case = 'SDnc'
        return static

    if dynamics.kind == 'static':
        if paths is None:
            raise ClassificationError("Static prediction needs the admissible paths")
        return predict_fixed_arbitrary(paths, beta, params)

    raise ClassificationError(f"Unknown dynamics kind {dynamics.kind!r}")


def d_hat(beta: float, alpha: float) -> int:
    """Largest integer d >= 1 with beta (d - 1) < alpha"""
    if not beta > 0 or not alpha > 0:
        raise ValueError(f"Need beta > 0 and alpha > 0, got beta={beta}, alpha={alpha}")
    d = 1
    while beta * d < alpha:
        d += 1
    return d


def overtaking_step(path: ActivationOrderResult, beta: float, alpha: float) -> Optional[int]:
    """
    First step k whose residual degree exceeds d_hat(beta, alpha). Up to step k-1 the
    path's nodes still nucleate first; from step k on the dynamics take over.
    None when every step nucleates first.
    """
    limit = d_hat(beta, alpha)
    return next((step.k for step in path.steps if step.d_bar > limit), None)


def path_table(paths: Sequence[ActivationOrderResult], beta: float, params: QueueParams,
               alpha: Optional[float] = None) -> Tuple[List[Dict], RegimePrediction]:
    """
    One row per admissible path with its probability, residual degrees, conditional
    prediction and, for slow dynamics, the step where the dynamics overtake nucleation.
    """
    prediction = predict_fixed_arbitrary(paths, beta, params)
    rows = []
    for path, conditional in zip(paths, prediction.conditional):
        row = {
            'path': path.label(),
            'probability': str(path.probability),
            'd_bars': ' '.join(str(d) for d in path.d_bars),
            'n_ks': ' '.join(str(step.n_k) for step in path.steps),
            'd_star': path.d_star,
            'regime': prediction.regime.value,
            'prefactor': prediction.prefactor if prediction.uses_TU else conditional['prefactor'],
            'exponent': prediction.exponent,
        }
        row['mean_prediction'] = row['prefactor'] * params.r ** row['exponent']
        row['d_hat'] = d_hat(beta, alpha) if alpha is not None else None
        row['overtaking_step'] = overtaking_step(path, beta, alpha) if alpha is not None else None
        rows.append(row)
    return rows, prediction


def first_activation_mechanism(d: int, beta: float, dynamics: DynamicsLaw) -> str:
    """
    Which mechanism activates a V-node of initial degree d:
    'disconnection' when the dynamics beat the nucleation scale r^{min(1, beta(d-1))},
    'nucleation' when they are slower, 'mixed' on the boundary.
    """
    if d == 0 or dynamics.kind in ('fast', 'regular'):
        return 'disconnection'
    if dynamics.kind == 'static':
        return 'nucleation'
    threshold = min(1.0, beta * (d - 1))
    alpha = dynamics.exponent
    if math.isclose(alpha, threshold, rel_tol=1e-12):
        return 'mixed'
    return 'disconnection' if alpha < threshold else 'nucleation'
