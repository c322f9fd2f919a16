import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from graph_model import (
    SCENARIOS,
    ActivityState,
    BipartiteGraph,
    DynamicGraphState,
    GraphError,
    active_degree,
    apply_edge_flip,
    complete_graph,
    degree,
    disjoint_union,
    empty_graph,
    graph_from_spec,
    is_transition_complete,
    parse_node,
    random_bipartite_graphs,
    u,
    v,
)


def _state(graph, active_u=(), active_v=()):
    activity = ActivityState.idle(graph.m, graph.n)
    activity.active_u[list(active_u)] = True
    activity.active_v[list(active_v)] = True
    return DynamicGraphState.initial(graph, activity)


class TestDegrees:

    def test_complete_graph_degree(self, k22):
        state = DynamicGraphState.initial(k22)
        assert degree(state, v(0)) == 2
        assert degree(state, v(1)) == 2

    def test_empty_graph_degree(self):
        state = DynamicGraphState.initial(empty_graph(3, 2))
        assert all(degree(state, node) == 0 for node in [u(0), u(2), v(1)])

    def test_direct_count(self):
        state = _state(BipartiteGraph(2, 2, {(0, 0), (0, 1)}))
        assert degree(state, 'u0') == 2
        assert degree(state, 'u1') == 0

    def test_active_degree_from_all_u(self, k22):
        state = DynamicGraphState.initial(k22, ActivityState.all_u(2, 2))
        assert active_degree(state, v(0)) == 2

    def test_active_degree_from_all_v(self, k22):
        state = DynamicGraphState.initial(k22, ActivityState.all_v(2, 2))
        assert active_degree(state, v(1)) == 0

    def test_active_degree_single_edge(self):
        state = _state(BipartiteGraph(1, 1, {(0, 0)}), active_u=[0])
        assert active_degree(state, v(0)) == 1
        assert active_degree(state, u(0)) == 0

    def test_invalid_node(self, k22):
        state = DynamicGraphState.initial(k22)
        with pytest.raises(GraphError):
            degree(state, v(5))
        with pytest.raises(GraphError):
            active_degree(state, 'w1')


class TestEdgeFlip:

    def test_appear_between_active_nodes_deactivates_u(self):
        state = _state(empty_graph(1, 1), active_u=[0], active_v=[0])
        effect = apply_edge_flip(state, (0, 0))
        assert effect.appeared
        assert effect.scenario == 'appear-••'
        assert effect.forced_deactivation == u(0)
        assert not state.is_active(u(0))
        assert state.is_active(v(0))
        state.check_feasible()

    def test_disappear_keeps_activity(self):
        state = _state(BipartiteGraph(1, 1, {(0, 0)}), active_u=[0])
        effect = apply_edge_flip(state, (0, 0))
        assert not effect.appeared
        assert effect.scenario == 'disappear-•∘'
        assert state.is_active(u(0))
        assert degree(state, v(0)) == 0
        assert active_degree(state, v(0)) == 0

    def test_appear_between_inactive_nodes(self):
        state = _state(empty_graph(1, 1))
        effect = apply_edge_flip(state, (0, 0))
        assert effect.scenario == 'appear-∘∘'
        assert effect.forced_deactivation is None
        assert degree(state, u(0)) == 1

    def test_all_seven_scenarios_reachable(self):
        seen = set()
        for appeared in (True, False):
            for au in (False, True):
                for av in (False, True):
                    if not appeared and au and av:
                        continue
                    edges = set() if appeared else {(0, 0)}
                    state = _state(BipartiteGraph(1, 1, edges),
                                   active_u=[0] if au else [], active_v=[0] if av else [])
                    seen.add(apply_edge_flip(state, (0, 0)).scenario)
        assert seen == set(SCENARIOS)

    def test_flip_twice_restores_presence(self, k22):
        state = DynamicGraphState.initial(k22)
        before = state.presence.copy()
        apply_edge_flip(state, (1, 0))
        apply_edge_flip(state, (1, 0))
        assert np.array_equal(state.presence, before)

    @given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2), st.booleans(), st.booleans()),
                    max_size=60))
    def test_random_mutations_keep_feasibility_and_counters(self, ops):
        state = DynamicGraphState.initial(complete_graph(3, 3), ActivityState.all_u(3, 3))
        for i, j, flip, toggle_v in ops:
            if flip:
                apply_edge_flip(state, (i, j))
            else:
                node = v(j) if toggle_v else u(i)
                if state.is_active(node):
                    state.set_active(node, False)
                elif active_degree(state, node) == 0:
                    state.set_active(node, True)
            state.check_feasible()
            assert state.counters_consistent()
            assert np.all(state.active_degree_u <= state.degree_u)
            assert np.all(state.active_degree_v <= state.degree_v)
        assert state.l == int(state.presence.sum())


class TestActivity:

    def test_set_active_refuses_infeasible(self, k22):
        state = DynamicGraphState.initial(k22, ActivityState.all_u(2, 2))
        with pytest.raises(GraphError):
            state.set_active(v(0), True)

    def test_deactivation_updates_active_degrees(self, k22):
        state = DynamicGraphState.initial(k22, ActivityState.all_u(2, 2))
        state.set_active(u(0), False)
        assert active_degree(state, v(0)) == 1
        assert active_degree(state, v(1)) == 1

    def test_infeasible_initial_activity(self, k22):
        activity = ActivityState(np.array([True, False]), np.array([True, False]))
        with pytest.raises(GraphError):
            DynamicGraphState.initial(k22, activity)

    def test_counts(self, k22):
        state = DynamicGraphState.initial(k22, ActivityState.all_u(2, 2))
        assert (state.h, state.k, state.l) == (2, 0, 4)


class TestTransitionComplete:

    def test_all_v(self, k22):
        assert is_transition_complete(DynamicGraphState.initial(k22, ActivityState.all_v(2, 2)))

    def test_all_u(self, k22):
        assert not is_transition_complete(DynamicGraphState.initial(k22, ActivityState.all_u(2, 2)))

    def test_residual_isolated_u(self):
        graph = BipartiteGraph(2, 1, {(0, 0)})
        state = _state(graph, active_u=[1], active_v=[0])
        assert is_transition_complete(state)

    def test_no_v_nodes(self):
        assert is_transition_complete(DynamicGraphState.initial(empty_graph(2, 0)))


class TestGraphSpec:

    def test_explicit_edges_and_labels(self):
        graph = graph_from_spec({'m': 2, 'n': 2, 'edges': [[0, 0], ['u1', 'v1']]})
        assert graph.edges == frozenset({(0, 0), (1, 1)})

    def test_complete_topology(self):
        assert graph_from_spec({'m': 2, 'n': 3, 'topology': 'complete'}) == complete_graph(2, 3)

    def test_random_topology_is_seeded(self):
        spec = {'m': 4, 'n': 3, 'topology': {'random_p': 0.5, 'seed': 7}}
        assert graph_from_spec(spec) == graph_from_spec(spec)

    def test_from_file(self, tmp_path):
        path = tmp_path / 'g.json'
        path.write_text(json.dumps({'m': 1, 'n': 1, 'edges': [[0, 0]]}))
        assert graph_from_spec(str(path)).edges == frozenset({(0, 0)})

    @pytest.mark.parametrize('spec', [
        {'m': 1, 'n': 1, 'edges': [[0, 0], [0, 0]]},
        {'m': 1, 'n': 1, 'edges': [[0, 3]]},
        {'m': 1, 'n': 1, 'edges': [['v0', 'u0']]},
        {'m': 1, 'n': 1, 'topology': 'ring'},
        {'n': 1},
    ])
    def test_rejects_bad_specs(self, spec):
        with pytest.raises(GraphError):
            graph_from_spec(spec)

    def test_parse_node(self):
        assert parse_node('v12') == v(12)
        with pytest.raises(GraphError):
            parse_node('x1')

    def test_disjoint_union(self):
        graph = disjoint_union(complete_graph(1, 1), complete_graph(1, 1))
        assert graph.edges == frozenset({(0, 0), (1, 1)})

    def test_random_graph_family(self):
        graphs = random_bipartite_graphs(20, 4, 5, seed=3)
        assert len(graphs) == 20
        assert all(1 <= g.m <= 4 and 1 <= g.n <= 5 for g in graphs)
