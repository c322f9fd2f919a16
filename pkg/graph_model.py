"""
Bipartite interference graphs and the joint activity / edge / queue state
Holds the hard-core feasibility rule and the deterministic mutation primitives used by the engine
"""

import json
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Tuple, Union

import numpy as np


class GraphError(ValueError):
    """Invalid node id, malformed graph or an infeasible activity change"""


class Node(NamedTuple):
    """A node of U ('u') or V ('v') with a dense per-side index"""
    side: str
    index: int

    @property
    def label(self) -> str:
        return f"{self.side}{self.index}"


def u(index: int) -> Node:
    return Node('u', index)


def v(index: int) -> Node:
    return Node('v', index)


def parse_node(label: Union[str, Node]) -> Node:
    """Parse an external label such as 'u3' or 'v1'"""
    if isinstance(label, Node):
        return label
    text = str(label).strip().lower()
    if len(text) < 2 or text[0] not in ('u', 'v') or not text[1:].isdigit():
        raise GraphError(f"Invalid node label: {label!r}")
    return Node(text[0], int(text[1:]))


# =============================================================================
# GRAPH AND ACTIVITY TYPES
# =============================================================================

@dataclass(frozen=True)
class BipartiteGraph:
    """Bipartite graph on U = {0..m-1} and V = {0..n-1}"""
    m: int
    n: int
    edges: FrozenSet[Tuple[int, int]] = frozenset()

    def __post_init__(self):
        if self.m < 0 or self.n < 0:
            raise GraphError(f"Node counts must be nonnegative, got m={self.m}, n={self.n}")
        edges = frozenset((int(a), int(b)) for a, b in self.edges)
        for a, b in edges:
            if not (0 <= a < self.m and 0 <= b < self.n):
                raise GraphError(f"Edge ({a},{b}) out of range for m={self.m}, n={self.n}")
        object.__setattr__(self, 'edges', edges)

    def u_neighbors(self, i: int) -> List[int]:
        return sorted(b for a, b in self.edges if a == i)

    def v_neighbors(self, j: int) -> List[int]:
        return sorted(a for a, b in self.edges if b == j)

    def degree(self, node: Node) -> int:
        node = check_node(node, self.m, self.n)
        if node.side == 'u':
            return sum(1 for a, _ in self.edges if a == node.index)
        return sum(1 for _, b in self.edges if b == node.index)

    def presence_matrix(self) -> np.ndarray:
        presence = np.zeros((self.m, self.n), dtype=bool)
        for a, b in self.edges:
            presence[a, b] = True
        return presence

    def to_dict(self) -> Dict:
        return {'m': self.m, 'n': self.n, 'edges': [list(e) for e in sorted(self.edges)]}


def check_node(node: Union[str, Node], m: int, n: int) -> Node:
    node = parse_node(node)
    limit = m if node.side == 'u' else n
    if not 0 <= node.index < limit:
        raise GraphError(f"Node {node.label} does not exist (m={m}, n={n})")
    return node


def complete_graph(m: int, n: int) -> BipartiteGraph:
    return BipartiteGraph(m, n, frozenset((a, b) for a in range(m) for b in range(n)))


def empty_graph(m: int, n: int) -> BipartiteGraph:
    return BipartiteGraph(m, n, frozenset())


def disjoint_union(first: BipartiteGraph, second: BipartiteGraph) -> BipartiteGraph:
    """Place `second` after `first` on both sides"""
    shifted = {(a + first.m, b + first.n) for a, b in second.edges}
    return BipartiteGraph(first.m + second.m, first.n + second.n, frozenset(first.edges | shifted))


def random_graph(m: int, n: int, p: float, seed: int) -> BipartiteGraph:
    """Each of the m*n edges present independently with probability p"""
    if not 0.0 <= p <= 1.0:
        raise GraphError(f"Edge probability must be in [0,1], got {p}")
    rng = np.random.default_rng(seed)
    presence = rng.random((m, n)) < p
    return BipartiteGraph(m, n, frozenset((int(a), int(b)) for a, b in zip(*np.nonzero(presence))))


def graph_from_spec(spec: Union[Dict, str]) -> BipartiteGraph:
    """
    Build a graph from its JSON description.

    Accepted forms:
        {"m": 2, "n": 2, "edges": [[0, 0], [1, 1]]}
        {"m": 2, "n": 2, "topology": "complete"}
        {"m": 4, "n": 3, "topology": {"random_p": 0.5, "seed": 7}}
    Edge endpoints may also be given as labels, e.g. ["u0", "v1"].
    """
    if isinstance(spec, str):
        with open(spec, 'r') as f:
            spec = json.load(f)
    try:
        m = int(spec['m'])
        n = int(spec['n'])
    except (KeyError, TypeError, ValueError) as e:
        raise GraphError(f"Graph spec needs integer 'm' and 'n': {e}")

    if 'edges' in spec and 'topology' in spec:
        raise GraphError("Graph spec takes either 'edges' or 'topology', not both")

    topology = spec.get('topology')
    if topology is None:
        edges = set()
        for pair in spec.get('edges', []):
            if len(pair) != 2:
                raise GraphError(f"Edge must have two endpoints: {pair!r}")
            a, b = pair
            if isinstance(a, str):
                a = parse_node(a)
                b = parse_node(b)
                if a.side != 'u' or b.side != 'v':
                    raise GraphError(f"Edge must join a U-node to a V-node: {pair!r}")
                a, b = a.index, b.index
            edges.add((int(a), int(b)))
        if len(edges) != len(spec.get('edges', [])):
            raise GraphError("Duplicate edges in graph spec")
        return BipartiteGraph(m, n, frozenset(edges))
    if topology == 'complete':
        return complete_graph(m, n)
    if isinstance(topology, dict) and 'random_p' in topology:
        return random_graph(m, n, float(topology['random_p']), int(topology.get('seed', 0)))
    raise GraphError(f"Unknown topology: {topology!r}")


@dataclass
class ActivityState:
    """Activity bit per node"""
    active_u: np.ndarray
    active_v: np.ndarray

    @classmethod
    def all_u(cls, m: int, n: int) -> 'ActivityState':
        """The configuration 1_U"""
        return cls(np.ones(m, dtype=bool), np.zeros(n, dtype=bool))

    @classmethod
    def all_v(cls, m: int, n: int) -> 'ActivityState':
        """The configuration 1_V"""
        return cls(np.zeros(m, dtype=bool), np.ones(n, dtype=bool))

    @classmethod
    def idle(cls, m: int, n: int) -> 'ActivityState':
        return cls(np.zeros(m, dtype=bool), np.zeros(n, dtype=bool))

    def copy(self) -> 'ActivityState':
        return ActivityState(self.active_u.copy(), self.active_v.copy())

    def is_feasible(self, presence: np.ndarray) -> bool:
        return not bool(np.any(presence & np.outer(self.active_u, self.active_v)))


@dataclass
class FlipEffect:
    """Outcome of a single edge flip"""
    edge: Tuple[int, int]
    appeared: bool
    scenario: str
    forced_deactivation: Optional[Node] = None


def _scenario(appeared: bool, u_active: bool, v_active: bool) -> str:
    mark = lambda active: '•' if active else '∘'
    return f"{'appear' if appeared else 'disappear'}-{mark(u_active)}{mark(v_active)}"


SCENARIOS = (
    'appear-∘∘', 'appear-∘•', 'appear-•∘', 'appear-••',
    'disappear-∘∘', 'disappear-∘•', 'disappear-•∘',
)


# =============================================================================
# JOINT STATE (X, Q, Y)
# =============================================================================

@dataclass
class DynamicGraphState:
    """
    Current edge bitmap, activity bits, queue lengths and clock.

    Degrees and active degrees are maintained incrementally by the mutation
    primitives; `recount()` rebuilds them from scratch.
    """
    m: int
    n: int
    presence: np.ndarray
    activity: ActivityState
    queues_u: np.ndarray
    queues_v: np.ndarray
    clock: float = 0.0
    degree_u: np.ndarray = field(default=None)
    degree_v: np.ndarray = field(default=None)
    active_degree_u: np.ndarray = field(default=None)
    active_degree_v: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.degree_u is None:
            self.recount()

    @classmethod
    def initial(cls, graph: BipartiteGraph, activity: Optional[ActivityState] = None,
                queues_u: Optional[Iterable[float]] = None,
                queues_v: Optional[Iterable[float]] = None) -> 'DynamicGraphState':
        activity = activity.copy() if activity is not None else ActivityState.all_u(graph.m, graph.n)
        presence = graph.presence_matrix()
        if not activity.is_feasible(presence):
            raise GraphError("Initial activity violates the hard-core constraint")
        qu = np.zeros(graph.m) if queues_u is None else np.asarray(list(queues_u), dtype=float)
        qv = np.zeros(graph.n) if queues_v is None else np.asarray(list(queues_v), dtype=float)
        if np.any(qu < 0) or np.any(qv < 0):
            raise GraphError("Queue lengths must be nonnegative")
        return cls(graph.m, graph.n, presence, activity, qu, qv)

    # -- derived views -------------------------------------------------------

    @property
    def graph(self) -> BipartiteGraph:
        """Snapshot of the present edges"""
        return BipartiteGraph(self.m, self.n,
                              frozenset((int(a), int(b)) for a, b in zip(*np.nonzero(self.presence))))

    @property
    def h(self) -> int:
        return int(self.activity.active_u.sum())

    @property
    def k(self) -> int:
        return int(self.activity.active_v.sum())

    @property
    def l(self) -> int:
        return int(self.presence.sum())

    def is_active(self, node: Node) -> bool:
        node = check_node(node, self.m, self.n)
        bits = self.activity.active_u if node.side == 'u' else self.activity.active_v
        return bool(bits[node.index])

    def queue(self, node: Node) -> float:
        node = check_node(node, self.m, self.n)
        return float(self.queues_u[node.index] if node.side == 'u' else self.queues_v[node.index])

    def copy(self) -> 'DynamicGraphState':
        return DynamicGraphState(
            self.m, self.n, self.presence.copy(), self.activity.copy(),
            self.queues_u.copy(), self.queues_v.copy(), self.clock,
            self.degree_u.copy(), self.degree_v.copy(),
            self.active_degree_u.copy(), self.active_degree_v.copy(),
        )

    # -- bookkeeping ---------------------------------------------------------

    def recount(self) -> None:
        presence = self.presence.astype(np.int64)
        self.degree_u = presence.sum(axis=1)
        self.degree_v = presence.sum(axis=0)
        self.active_degree_u = presence @ self.activity.active_v.astype(np.int64)
        self.active_degree_v = self.activity.active_u.astype(np.int64) @ presence

    def counters_consistent(self) -> bool:
        """Incremental counters equal a full recount"""
        rebuilt = DynamicGraphState(self.m, self.n, self.presence, self.activity,
                                    self.queues_u, self.queues_v, self.clock)
        return (np.array_equal(rebuilt.degree_u, self.degree_u)
                and np.array_equal(rebuilt.degree_v, self.degree_v)
                and np.array_equal(rebuilt.active_degree_u, self.active_degree_u)
                and np.array_equal(rebuilt.active_degree_v, self.active_degree_v))

    def check_feasible(self) -> None:
        """Full scan of the hard-core constraint and queue signs"""
        if not self.activity.is_feasible(self.presence):
            raise GraphError(f"Infeasible state at t={self.clock}: two active endpoints share an edge")
        if np.any(self.queues_u < 0) or np.any(self.queues_v < 0):
            raise GraphError(f"Negative queue length at t={self.clock}")

    # -- mutation primitives -------------------------------------------------

    def set_active(self, node: Node, active: bool) -> None:
        node = check_node(node, self.m, self.n)
        i = node.index
        if node.side == 'u':
            if bool(self.activity.active_u[i]) == active:
                return
            if active and self.active_degree_u[i] > 0:
                raise GraphError(f"{node.label} has active neighbours and cannot activate")
            self.activity.active_u[i] = active
            self.active_degree_v += np.where(self.presence[i, :], 1 if active else -1, 0)
        else:
            if bool(self.activity.active_v[i]) == active:
                return
            if active and self.active_degree_v[i] > 0:
                raise GraphError(f"{node.label} has active neighbours and cannot activate")
            self.activity.active_v[i] = active
            self.active_degree_u += np.where(self.presence[:, i], 1 if active else -1, 0)


def degree(state: DynamicGraphState, node: Union[str, Node]) -> int:
    """Number of present edges incident to node"""
    node = check_node(node, state.m, state.n)
    counts = state.degree_u if node.side == 'u' else state.degree_v
    return int(counts[node.index])


def active_degree(state: DynamicGraphState, node: Union[str, Node]) -> int:
    """Number of active neighbours across present edges"""
    node = check_node(node, state.m, state.n)
    counts = state.active_degree_u if node.side == 'u' else state.active_degree_v
    return int(counts[node.index])


def apply_edge_flip(state: DynamicGraphState, edge: Tuple[int, int]) -> FlipEffect:
    """
    Toggle the presence of edge (i, j) and apply the appear/disappear scenario rules.
    An edge appearing between two active endpoints deactivates the U-endpoint.
    """
    i, j = int(edge[0]), int(edge[1])
    check_node(u(i), state.m, state.n)
    check_node(v(j), state.m, state.n)
    u_active = bool(state.activity.active_u[i])
    v_active = bool(state.activity.active_v[j])
    appeared = not bool(state.presence[i, j])
    scenario = _scenario(appeared, u_active, v_active)
    forced = None

    if appeared:
        if u_active and v_active:
            # U-endpoint yields before the edge is counted
            state.set_active(u(i), False)
            forced = u(i)
        state.presence[i, j] = True
        state.degree_u[i] += 1
        state.degree_v[j] += 1
        if state.activity.active_v[j]:
            state.active_degree_u[i] += 1
        if state.activity.active_u[i]:
            state.active_degree_v[j] += 1
    else:
        state.presence[i, j] = False
        state.degree_u[i] -= 1
        state.degree_v[j] -= 1
        if v_active:
            state.active_degree_u[i] -= 1
        if u_active:
            state.active_degree_v[j] -= 1

    return FlipEffect(edge=(i, j), appeared=appeared, scenario=scenario, forced_deactivation=forced)


def is_transition_complete(state: DynamicGraphState) -> bool:
    """All V-nodes active; vacuously true when V is empty"""
    return bool(np.all(state.activity.active_v))


def random_bipartite_graphs(count: int, max_m: int, max_n: int, seed: int,
                            min_n: int = 1) -> List[BipartiteGraph]:
    """Random small graphs for exhaustive checks"""
    rng = np.random.default_rng(seed)
    graphs = []
    for _ in range(count):
        m = int(rng.integers(1, max_m + 1))
        n = int(rng.integers(min_n, max_n + 1))
        p = float(rng.choice([0.3, 0.5, 0.7, 0.9]))
        graphs.append(random_graph(m, n, p, int(rng.integers(2 ** 31))))
    return graphs
