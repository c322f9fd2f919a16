"""
Exact event-driven simulation of the joint process (X(t), Q(t), Y(t))
Competing exponential clocks for activations, deactivations, edge flips and arrivals,
merged with deterministic queue-empty events
"""

import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from graph_model import (
    ActivityState,
    BipartiteGraph,
    DynamicGraphState,
    Node,
    active_degree,
    apply_edge_flip,
    check_node,
    degree,
    is_transition_complete,
    u,
    v,
)
from queue_dynamics import (
    QueueParams,
    RateFunctions,
    activation_rates,
    busy_time_to_empty,
    initial_queue,
    sample_work,
)

BIT_GENERATOR = 'PCG64'
DEFAULT_EVENT_CAP = 10 ** 8

NUCLEATION = 'nucleation'
DISCONNECTION = 'disconnection'


class DeadlockError(RuntimeError):
    """No clock can tick and no deterministic event is pending"""


class EngineConsistencyError(RuntimeError):
    """An event does not fit the state it is applied to"""


class SimulationTimeoutError(RuntimeError):
    """Event cap reached before 1_V; carries the partial record"""

    def __init__(self, message: str, record: 'TransitionRecord'):
        super().__init__(message)
        self.record = record


# =============================================================================
# PARAMETERS
# =============================================================================

@dataclass(frozen=True)
class DynamicsLaw:
    """
    Edge flip rate lambda(r):
        static  -> 0
        fast    -> r^exponent   (exponent > 0)
        regular -> constant
        slow    -> r^-exponent  (exponent = alpha > 0)
    """
    kind: str = 'static'
    exponent: float = 0.0
    constant: float = 0.0

    def rate(self, r: float) -> float:
        if self.kind == 'static':
            return 0.0
        if self.kind == 'fast':
            return float(r) ** self.exponent
        if self.kind == 'regular':
            return float(self.constant)
        if self.kind == 'slow':
            return float(r) ** (-self.exponent)
        raise ValueError(f"Unknown dynamics kind {self.kind!r}")

    def describe(self) -> str:
        if self.kind == 'fast':
            return f"fast lambda=r^{self.exponent:g}"
        if self.kind == 'regular':
            return f"regular lambda={self.constant:g}"
        if self.kind == 'slow':
            return f"slow lambda=r^-{self.exponent:g}"
        return 'static'


@dataclass(frozen=True)
class ModelParams:
    """All rates of the model plus the engine switches"""
    queues: QueueParams = field(default_factory=QueueParams)
    rates: RateFunctions = field(default_factory=RateFunctions)
    dynamics: DynamicsLaw = field(default_factory=DynamicsLaw)
    deactivate_on_empty: bool = True
    skip_blocked_attempts: bool = True
    event_cap: int = DEFAULT_EVENT_CAP
    debug: bool = False

    @property
    def r(self) -> float:
        return self.queues.r

    @property
    def edge_rate(self) -> float:
        return self.dynamics.rate(self.queues.r)

    def with_r(self, r: float) -> 'ModelParams':
        return replace(self, queues=self.queues.with_r(r))


# =============================================================================
# EVENTS AND RECORDS
# =============================================================================

class EventKind(str, Enum):
    ACTIVATION_ATTEMPT = 'activation_attempt'
    DEACTIVATION = 'deactivation'
    EDGE_FLIP = 'edge_flip'
    ARRIVAL = 'arrival'
    QUEUE_EMPTY = 'queue_empty'


@dataclass(frozen=True)
class Event:
    kind: EventKind
    at: float
    node: Optional[Node] = None
    edge: Optional[Tuple[int, int]] = None


@dataclass
class ActivationEntry:
    """One activation of a V-node"""
    node: int
    time: float
    cause: str
    degree: int
    initial_degree: int
    dynamics_assisted: bool


@dataclass
class TransitionRecord:
    """Outcome of one replication started in 1_U"""
    transition_time: float
    v_activation: List[Optional[ActivationEntry]]
    path: List[int]
    event_counts: Dict[str, int]
    residual_active_u: List[int]
    seed: int
    spawn_key: List[int] = field(default_factory=list)
    history: List[ActivationEntry] = field(default_factory=list)
    v_deactivations: List[Tuple[int, float]] = field(default_factory=list)
    initial_degrees: List[int] = field(default_factory=list)
    isolated_activation_times: List[float] = field(default_factory=list)
    completed: bool = True
    rng: str = BIT_GENERATOR

    @property
    def first_activation(self) -> Optional[ActivationEntry]:
        return self.history[0] if self.history else None

    @property
    def first_activation_cause(self) -> Optional[str]:
        first = self.first_activation
        return first.cause if first else None

    @property
    def first_activation_time(self) -> float:
        first = self.first_activation
        return first.time if first else 0.0

    def to_dict(self) -> Dict:
        data = asdict(self)
        data['first_activation_cause'] = self.first_activation_cause
        return data


EVENT_COUNT_KEYS = [kind.value for kind in EventKind] + ['failed_attempt', 'forced_deactivation']


def make_rng(seed: Union[int, np.random.SeedSequence]) -> np.random.Generator:
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.PCG64(seed))


def replication_seed(master_seed: int, r_index: int, replication: int) -> np.random.SeedSequence:
    """Stream for one replication, derived from its indices only"""
    return np.random.SeedSequence(int(master_seed), spawn_key=(int(r_index), int(replication)))


# =============================================================================
# RATES
# =============================================================================

def total_rate(state: DynamicGraphState, params: ModelParams) -> float:
    """
    Literal total clock rate: activation clocks of all inactive nodes, rate 1 per
    active node, lambda(r) on each of the M*N edge slots and an arrival clock per node.
    """
    r, rates = params.r, params.rates
    au, av = state.activity.active_u, state.activity.active_v
    act = (activation_rates(state.queues_u[~au], 'u', rates, r).sum()
           + activation_rates(state.queues_v[~av], 'v', rates, r).sum())
    return float(act + au.sum() + av.sum()
                 + state.m * state.n * params.edge_rate
                 + (state.m + state.n) * params.queues.arrival_rate)


def _race_rates(state: DynamicGraphState, params: ModelParams) -> Tuple[np.ndarray, float, float]:
    """Per-node rates [act U, act V, deact U, deact V], edge total, arrival total"""
    r, rates = params.r, params.rates
    au, av = state.activity.active_u, state.activity.active_v
    eligible_u = ~au
    eligible_v = ~av
    if params.skip_blocked_attempts:
        eligible_u = eligible_u & (state.active_degree_u == 0)
        eligible_v = eligible_v & (state.active_degree_v == 0)
    if params.deactivate_on_empty:
        eligible_u = eligible_u & (state.queues_u > 0)
    node_rates = np.concatenate([
        np.where(eligible_u, activation_rates(state.queues_u, 'u', rates, r), 0.0),
        np.where(eligible_v, activation_rates(state.queues_v, 'v', rates, r), 0.0),
        au.astype(float),
        av.astype(float),
    ])
    edge_total = state.m * state.n * params.edge_rate
    arrival_total = (state.m + state.n) * params.queues.arrival_rate
    return node_rates, float(edge_total), float(arrival_total)


def effective_rate(state: DynamicGraphState, params: ModelParams) -> float:
    """Rate actually raced (blocked attempts and empty queues removed per params)"""
    node_rates, edge_total, arrival_total = _race_rates(state, params)
    return float(node_rates.sum() + edge_total + arrival_total)


def pending_queue_empty(state: DynamicGraphState, params: ModelParams) -> Optional[Tuple[float, Node]]:
    """
    Earliest deterministic queue-empty time (relative) among active U-nodes.
    V-nodes stay active on an empty queue and keep their activation clocks.
    """
    if not params.deactivate_on_empty:
        return None
    idx = np.flatnonzero(state.activity.active_u)
    if idx.size == 0:
        return None
    times = busy_time_to_empty(state.queues_u[idx], params.queues)
    j = int(np.argmin(times))
    return float(times[j]), u(int(idx[j]))


def _node_for_index(idx: int, m: int, n: int) -> Tuple[EventKind, Node]:
    if idx < m:
        return EventKind.ACTIVATION_ATTEMPT, u(idx)
    if idx < m + n:
        return EventKind.ACTIVATION_ATTEMPT, v(idx - m)
    if idx < 2 * m + n:
        return EventKind.DEACTIVATION, u(idx - m - n)
    return EventKind.DEACTIVATION, v(idx - 2 * m - n)


def next_event(state: DynamicGraphState, params: ModelParams,
               rng: np.random.Generator) -> Tuple[float, Event]:
    """Sample the delay and the winning clock; queue-empty truncates the exponential delay"""
    node_rates, edge_total, arrival_total = _race_rates(state, params)
    node_total = float(node_rates.sum())
    total = node_total + edge_total + arrival_total
    pending = pending_queue_empty(state, params)

    if total <= 0.0:
        if pending is None:
            raise DeadlockError(f"No clock can tick at t={state.clock:g} and no queue is draining")
        delay, node = pending
        return delay, Event(EventKind.QUEUE_EMPTY, state.clock + delay, node=node)

    delay = float(rng.exponential(1.0 / total))
    if pending is not None and pending[0] <= delay:
        delay, node = pending
        return delay, Event(EventKind.QUEUE_EMPTY, state.clock + delay, node=node)

    at = state.clock + delay
    pick = float(rng.random()) * total
    if pick < node_total:
        cumulative = np.cumsum(node_rates)
        idx = int(np.searchsorted(cumulative, pick, side='right'))
        if idx >= len(node_rates):
            idx = int(np.flatnonzero(node_rates)[-1])
        kind, node = _node_for_index(idx, state.m, state.n)
        return delay, Event(kind, at, node=node)
    if pick < node_total + edge_total:
        slot = int(rng.integers(state.m * state.n))
        return delay, Event(EventKind.EDGE_FLIP, at, edge=(slot // state.n, slot % state.n))
    w = int(rng.integers(state.m + state.n))
    node = u(w) if w < state.m else v(w - state.m)
    return delay, Event(EventKind.ARRIVAL, at, node=node)


# =============================================================================
# EFFECTS
# =============================================================================

def advance(state: DynamicGraphState, to_time: float, params: QueueParams) -> None:
    """Drain every active queue up to `to_time`"""
    elapsed = to_time - state.clock
    if elapsed < 0:
        raise EngineConsistencyError(f"Event at {to_time:g} precedes clock {state.clock:g}")
    if elapsed > 0:
        work = params.drain_speed * elapsed
        au, av = state.activity.active_u, state.activity.active_v
        state.queues_u[au] = np.maximum(state.queues_u[au] - work, 0.0)
        state.queues_v[av] = np.maximum(state.queues_v[av] - work, 0.0)
    state.clock = to_time


def apply_event(state: DynamicGraphState, event: Event, params: ModelParams,
                rng: np.random.Generator, counts: Optional[Dict[str, int]] = None) -> DynamicGraphState:
    """Drain to the event time, then apply the event's effect in place"""
    advance(state, event.at, params.queues)
    if counts is not None:
        counts[event.kind.value] += 1

    if event.kind == EventKind.ACTIVATION_ATTEMPT:
        if state.is_active(event.node):
            raise EngineConsistencyError(f"Activation attempt by active node {event.node.label}")
        if active_degree(state, event.node) == 0:
            state.set_active(event.node, True)
        elif counts is not None:
            counts['failed_attempt'] += 1

    elif event.kind == EventKind.DEACTIVATION:
        if not state.is_active(event.node):
            raise EngineConsistencyError(f"Deactivation of inactive node {event.node.label}")
        state.set_active(event.node, False)

    elif event.kind == EventKind.EDGE_FLIP:
        effect = apply_edge_flip(state, event.edge)
        if effect.forced_deactivation is not None and counts is not None:
            counts['forced_deactivation'] += 1

    elif event.kind == EventKind.ARRIVAL:
        node = check_node(event.node, state.m, state.n)
        queues = state.queues_u if node.side == 'u' else state.queues_v
        queues[node.index] += sample_work(node.side, params.queues, rng)

    elif event.kind == EventKind.QUEUE_EMPTY:
        if not params.deactivate_on_empty or event.node.side != 'u' or not state.is_active(event.node):
            raise EngineConsistencyError(f"Queue-empty event for {event.node.label} does not apply")
        state.queues_u[event.node.index] = 0.0
        state.set_active(event.node, False)

    if params.debug:
        state.check_feasible()
        if not state.counters_consistent():
            raise EngineConsistencyError(f"Degree counters drifted at t={state.clock:g}")
    return state


# =============================================================================
# REPLICATIONS
# =============================================================================

def initial_state(graph: BipartiteGraph, params: ModelParams) -> DynamicGraphState:
    """1_U with queues gamma_U r / gamma_V r"""
    qu = [initial_queue('u', params.queues).length] * graph.m
    qv = [initial_queue('v', params.queues).length] * graph.n
    return DynamicGraphState.initial(graph, ActivityState.all_u(graph.m, graph.n), qu, qv)


def _seed_fields(seed: Union[int, np.random.SeedSequence]) -> Tuple[int, List[int]]:
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.entropy), [int(k) for k in seed.spawn_key]
    return int(seed), []


def run_transition(graph: BipartiteGraph, params: ModelParams,
                   seed: Union[int, np.random.SeedSequence]) -> TransitionRecord:
    """Simulate from 1_U until every V-node is active"""
    rng = make_rng(seed)
    state = initial_state(graph, params)
    initial_presence = state.presence.copy()
    initial_degrees = [int(d) for d in state.degree_v]
    seed_value, spawn_key = _seed_fields(seed)

    record = TransitionRecord(
        transition_time=0.0,
        v_activation=[None] * graph.n,
        path=[],
        event_counts={key: 0 for key in EVENT_COUNT_KEYS},
        residual_active_u=[],
        seed=seed_value,
        spawn_key=spawn_key,
        initial_degrees=initial_degrees,
    )

    events = 0
    while not is_transition_complete(state):
        if events >= params.event_cap:
            record.transition_time = state.clock
            record.completed = False
            record.residual_active_u = [int(i) for i in np.flatnonzero(state.activity.active_u)]
            raise SimulationTimeoutError(
                f"Event cap {params.event_cap} reached at t={state.clock:g} "
                f"with {state.k}/{state.n} V-nodes active", record)

        _, event = next_event(state, params, rng)
        entry = None
        if (event.kind == EventKind.ACTIVATION_ATTEMPT and event.node.side == 'v'
                and active_degree(state, event.node) == 0):
            j = event.node.index
            d_now = degree(state, event.node)
            lost_initial = bool(np.any(initial_presence[:, j] & ~state.presence[:, j]))
            entry = ActivationEntry(
                node=j,
                time=event.at,
                cause=DISCONNECTION if d_now == 0 else NUCLEATION,
                degree=d_now,
                initial_degree=initial_degrees[j],
                dynamics_assisted=lost_initial,
            )
        was_active_v = state.activity.active_v.copy()

        apply_event(state, event, params, rng, record.event_counts)
        events += 1

        if entry is not None:
            record.history.append(entry)
            if record.v_activation[entry.node] is None:
                record.v_activation[entry.node] = entry
                record.path.append(entry.node)
                if entry.initial_degree == 0:
                    record.isolated_activation_times.append(entry.time)
        for j in np.flatnonzero(was_active_v & ~state.activity.active_v):
            record.v_deactivations.append((int(j), state.clock))

    record.transition_time = state.clock
    record.residual_active_u = [int(i) for i in np.flatnonzero(state.activity.active_u)]
    return record


# =============================================================================
# DISCONNECTION TIME (EDGE DYNAMICS ONLY)
# =============================================================================

def measure_disconnection(graph: BipartiteGraph, v_node: Union[int, Node], params: ModelParams,
                          seed: Union[int, np.random.SeedSequence]) -> float:
    """First time all M potential edges of v are absent, flipping edge clocks only"""
    j = v_node.index if isinstance(v_node, Node) else int(v_node)
    check_node(v(j), graph.m, graph.n)
    rng = make_rng(seed)
    present = graph.presence_matrix()[:, j].copy()
    count = int(present.sum())
    if count == 0:
        return 0.0
    lam = params.edge_rate
    if lam <= 0:
        return math.inf
    t = 0.0
    total = graph.m * lam
    while count > 0:
        t += float(rng.exponential(1.0 / total))
        i = int(rng.integers(graph.m))
        present[i] = not present[i]
        count += 1 if present[i] else -1
    return t


def disconnection_samples(m: int, d: int, lam: float, size: int,
                          seed: Union[int, np.random.SeedSequence]) -> np.ndarray:
    """
    Many disconnection times at once from the edge-count chain: each flip hits a
    uniformly chosen of the m slots, so the count moves down w.p. k/m and up otherwise.
    """
    if not 0 <= d <= m:
        raise ValueError(f"Initial degree {d} outside [0, {m}]")
    times = np.zeros(size)
    if d == 0:
        return times
    if lam <= 0:
        return np.full(size, math.inf)
    rng = make_rng(seed)
    counts = np.full(size, d, dtype=np.int64)
    alive = np.arange(size)
    scale = 1.0 / (m * lam)
    while alive.size:
        times[alive] += rng.exponential(scale, alive.size)
        down = rng.random(alive.size) < counts[alive] / m
        counts[alive] += np.where(down, -1, 1)
        alive = alive[counts[alive] > 0]
    return times
