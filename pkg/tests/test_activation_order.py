from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from activation_order import (
    PATH_COLUMNS,
    ClassificationError,
    InconsistentPathsError,
    PathCapacityError,
    Regime,
    classify_regime,
    d_hat,
    enumerate_paths,
    first_activation_mechanism,
    min_max_residual_degree,
    overtaking_step,
    path_table,
    predict_dynamic,
    predict_fixed_arbitrary,
    predict_fixed_complete,
    run_algorithm,
    sample_path_frequencies,
)
from ctmc_engine import DynamicsLaw
from graph_model import BipartiteGraph, complete_graph, disjoint_union, random_bipartite_graphs
from queue_dynamics import QueueParams

STAIRCASE = BipartiteGraph(3, 3, {(0, 0), (0, 1), (1, 1), (1, 2), (2, 2)})


class TestAlgorithm:

    def test_complete_graph(self):
        result = run_algorithm(complete_graph(3, 2), np.random.default_rng(0))
        assert result.d_bars == (3, 0)
        assert result.d_star == 3
        assert result.steps[0].n_k == 2

    def test_isolated_v_first(self):
        graph = BipartiteGraph(2, 2, {(0, 0), (1, 0)})
        result = run_algorithm(graph, np.random.default_rng(1))
        assert result.order[0] == 1
        assert result.steps[0].d_bar == 0

    def test_no_v_nodes(self):
        result = run_algorithm(complete_graph(2, 0), np.random.default_rng(0))
        assert result.steps == ()
        assert result.d_star == 0

    def test_label(self):
        result = run_algorithm(BipartiteGraph(1, 1, {(0, 0)}), np.random.default_rng(0))
        assert result.label() == 'v0'


class TestEnumeration:

    def test_complete_2x2(self, k22):
        paths = enumerate_paths(k22)
        assert sorted(p.order for p in paths) == [(0, 1), (1, 0)]
        assert all(p.probability == Fraction(1, 2) for p in paths)
        assert {p.d_star for p in paths} == {2}

    def test_union_of_single_edges(self):
        graph = disjoint_union(complete_graph(1, 1), complete_graph(1, 1))
        paths = enumerate_paths(graph)
        assert len(paths) == 2
        assert {p.d_star for p in paths} == {1}

    def test_single_path(self):
        paths = enumerate_paths(STAIRCASE)
        assert len(paths) == 1
        assert paths[0].probability == 1
        assert all(step.n_k == 1 for step in paths[0].steps)

    def test_probabilities_sum_to_one(self):
        for graph in random_bipartite_graphs(50, 5, 6, seed=8):
            assert sum((p.probability for p in enumerate_paths(graph)), Fraction(0)) == 1

    def test_capacity(self):
        with pytest.raises(PathCapacityError):
            enumerate_paths(complete_graph(1, 13))
        with pytest.raises(PathCapacityError):
            enumerate_paths(complete_graph(2, 6), max_paths=10)

    def test_greedy_is_consistent_and_optimal(self):
        for graph in random_bipartite_graphs(200, 6, 6, seed=99):
            d_values = {p.d_star for p in enumerate_paths(graph)}
            assert len(d_values) == 1
            assert d_values.pop() == min_max_residual_degree(graph)

    def test_brute_force_limit(self):
        with pytest.raises(PathCapacityError):
            min_max_residual_degree(complete_graph(1, 9))

    def test_sampled_frequencies_match_probabilities(self):
        graph = BipartiteGraph(2, 3, {(0, 0), (1, 1), (0, 2), (1, 2)})
        paths = enumerate_paths(graph)
        assert 1 < len(paths) <= 6
        runs = 100_000
        counts = sample_path_frequencies(graph, runs, seed=4)
        assert set(counts) <= {p.order for p in paths}
        observed = [counts[p.order] for p in paths]
        expected = [float(p.probability) * runs for p in paths]
        assert stats.chisquare(observed, expected).pvalue > 0.001


class TestRegimes:

    @pytest.mark.parametrize('d_star, beta, regime', [
        (2, 0.5, Regime.SUBCRITICAL),
        (2, 1.0, Regime.CRITICAL),
        (3, 1.0, Regime.SUPERCRITICAL),
        (3, 0.5, Regime.CRITICAL),
        (1, 50.0, Regime.SUBCRITICAL),
        (0, 2.0, Regime.SUBCRITICAL),
    ])
    def test_classify(self, d_star, beta, regime):
        assert classify_regime(d_star, beta) == regime

    def test_classify_rejects(self):
        with pytest.raises(ClassificationError):
            classify_regime(2, 0.0)


class TestFixedPredictions:

    def test_complete_subcritical(self, unit_queues):
        pred = predict_fixed_complete(2, 0.5, unit_queues.with_r(1e4))
        assert pred.regime == Regime.SUBCRITICAL
        assert pred.prefactor == pytest.approx(0.5)
        assert pred.exponent == pytest.approx(0.5)
        assert pred.mean_prediction == pytest.approx(50.0)

    def test_complete_single_node(self, unit_queues):
        pred = predict_fixed_complete(1, 3.0, unit_queues.with_r(1e6))
        assert pred.mean_prediction == pytest.approx(1.0)

    def test_complete_supercritical(self):
        params = QueueParams(arrival_rate=0.5, r=100.0)
        pred = predict_fixed_complete(2, 2.0, params)
        assert pred.uses_TU
        assert pred.mean_prediction == pytest.approx(200.0)
        assert pred.at(1e3) == pytest.approx(2e3)

    def test_complete_critical(self, unit_queues):
        pred = predict_fixed_complete(3, 0.5, unit_queues.with_r(10.0))
        assert pred.regime == Regime.CRITICAL
        assert pred.exponent == 1.0
        assert pred.prefactor == pytest.approx(1 / 3)

    def test_arbitrary_complete_2x2(self, k22, unit_queues):
        pred = predict_fixed_arbitrary(enumerate_paths(k22), 0.5, unit_queues.with_r(1e4))
        assert pred.prefactor == pytest.approx(0.25)
        assert pred.mean_prediction == pytest.approx(25.0)
        assert [row['prefactor'] for row in pred.conditional] == pytest.approx([0.25, 0.25])

    def test_arbitrary_single_edge(self, unit_queues):
        pred = predict_fixed_arbitrary(enumerate_paths(complete_graph(1, 1)), 0.5, unit_queues.with_r(1e4))
        assert pred.prefactor == pytest.approx(1.0)
        assert pred.exponent == 0.0
        assert pred.mean_prediction == pytest.approx(1.0)

    def test_arbitrary_supercritical(self):
        params = QueueParams(arrival_rate=0.5, r=10.0)
        pred = predict_fixed_arbitrary(enumerate_paths(complete_graph(3, 2)), 1.0, params)
        assert pred.regime == Regime.SUPERCRITICAL
        assert pred.mean_prediction == pytest.approx(20.0)

    def test_critical_clamps_to_drain_time(self, k22):
        params = QueueParams(gamma_u=0.1, r=10.0)
        pred = predict_fixed_arbitrary(enumerate_paths(k22), 1.0, params)
        assert pred.regime == Regime.SUPERCRITICAL
        assert pred.uses_TU
        assert pred.prefactor == pytest.approx(0.1)

    def test_inconsistent_paths(self, k22, unit_queues):
        mixed = enumerate_paths(k22) + enumerate_paths(complete_graph(1, 1))
        with pytest.raises(InconsistentPathsError):
            predict_fixed_arbitrary(mixed, 0.5, unit_queues)

    def test_empty_paths(self, unit_queues):
        with pytest.raises(ClassificationError):
            predict_fixed_arbitrary([], 0.5, unit_queues)


class TestDynamicPredictions:

    def test_fast(self, unit_queues):
        pred = predict_dynamic(2, 0.5, DynamicsLaw('fast', exponent=1.0), unit_queues.with_r(100.0))
        assert pred.case == 'FD'
        assert pred.exponent == -1.0
        assert pred.mean_prediction == pytest.approx(0.01)

    def test_regular(self, unit_queues):
        pred = predict_dynamic(2, 0.5, DynamicsLaw('regular', constant=4.0), unit_queues.with_r(100.0))
        assert pred.case == 'RD'
        assert pred.mean_prediction == pytest.approx(0.25)

    def test_slow_competitive(self, unit_queues):
        pred = predict_dynamic(2, 0.5, DynamicsLaw('slow', exponent=0.3), unit_queues.with_r(1e4))
        assert pred.case == 'SDc'
        assert pred.exponent == pytest.approx(0.3)

    def test_slow_supercritical_uses_drain_time(self):
        params = QueueParams(arrival_rate=0.5, r=100.0)
        pred = predict_dynamic(2, 2.0, DynamicsLaw('slow', exponent=2.0), params)
        assert pred.uses_TU
        assert pred.mean_prediction == pytest.approx(200.0)

    def test_slow_noncompetitive_delegates(self, k22, unit_queues):
        paths = enumerate_paths(k22)
        params = unit_queues.with_r(1e4)
        pred = predict_dynamic(2, 0.5, DynamicsLaw('slow', exponent=2.0), params, paths=paths)
        static = predict_fixed_arbitrary(paths, 0.5, params)
        assert pred.case == 'SDnc'
        assert pred.mean_prediction == pytest.approx(static.mean_prediction)

    def test_slow_noncompetitive_needs_paths(self, unit_queues):
        with pytest.raises(ClassificationError):
            predict_dynamic(2, 0.5, DynamicsLaw('slow', exponent=2.0), unit_queues)

    def test_static_needs_paths(self, unit_queues):
        with pytest.raises(ClassificationError):
            predict_dynamic(2, 0.5, DynamicsLaw(), unit_queues)

    def test_to_dict(self, unit_queues):
        data = predict_dynamic(2, 0.5, DynamicsLaw('slow', exponent=0.3), unit_queues).to_dict()
        assert data['regime'] == 'subcritical'
        assert data['case'] == 'SDc'


class TestThresholds:

    @pytest.mark.parametrize('beta, alpha, expected', [(0.5, 0.8, 2), (1.0, 0.5, 1), (0.25, 1.0, 4)])
    def test_d_hat(self, beta, alpha, expected):
        assert d_hat(beta, alpha) == expected

    def test_d_hat_rejects(self):
        with pytest.raises(ValueError):
            d_hat(0.5, 0.0)

    @pytest.mark.parametrize('d, beta, law, expected', [
        (2, 0.5, DynamicsLaw('slow', exponent=0.3), 'disconnection'),
        (2, 0.5, DynamicsLaw('slow', exponent=0.8), 'nucleation'),
        (2, 0.5, DynamicsLaw('slow', exponent=0.5), 'mixed'),
        (3, 2.0, DynamicsLaw('slow', exponent=1.5), 'nucleation'),
        (0, 0.5, DynamicsLaw('slow', exponent=5.0), 'disconnection'),
        (2, 0.5, DynamicsLaw('fast', exponent=1.0), 'disconnection'),
        (2, 0.5, DynamicsLaw(), 'nucleation'),
    ])
    def test_mechanism(self, d, beta, law, expected):
        assert first_activation_mechanism(d, beta, law) == expected


class TestOvertakingStep:

    @pytest.mark.parametrize('alpha, expected', [(0.3, 1), (0.8, None)])
    def test_complete_2x2(self, k22, alpha, expected):
        assert all(overtaking_step(p, 0.5, alpha) == expected for p in enumerate_paths(k22))

    def test_later_step(self):
        graph = BipartiteGraph(3, 2, {(0, 0), (1, 1), (2, 1)})
        (path,) = enumerate_paths(graph)
        assert path.d_bars == (1, 2)
        assert overtaking_step(path, 0.5, 0.3) == 2

    def test_nucleation_keeps_pace(self):
        (path,) = enumerate_paths(STAIRCASE)
        assert overtaking_step(path, 0.5, 0.3) is None


class TestPathTable:

    def test_complete_2x2(self, k22, unit_queues):
        rows, prediction = path_table(enumerate_paths(k22), 0.5, unit_queues.with_r(1e4))
        assert prediction.prefactor == pytest.approx(0.25)
        assert [list(row) for row in rows] == [PATH_COLUMNS] * 2
        for row in rows:
            assert row['regime'] == 'subcritical'
            assert row['d_bars'] == '2 0'
            assert row['prefactor'] == pytest.approx(0.25)
            assert row['mean_prediction'] == pytest.approx(25.0)
            assert row['d_hat'] is None and row['overtaking_step'] is None

    def test_slow_dynamics_columns(self, k22, unit_queues):
        rows, _ = path_table(enumerate_paths(k22), 0.5, unit_queues.with_r(1e4), alpha=0.3)
        assert [(row['d_hat'], row['overtaking_step']) for row in rows] == [(1, 1), (1, 1)]

    def test_supercritical_rows_use_drain_time(self):
        params = QueueParams(arrival_rate=0.5, r=100.0)
        rows, prediction = path_table(enumerate_paths(complete_graph(2, 2)), 2.0, params)
        assert prediction.uses_TU
        assert all(row['mean_prediction'] == pytest.approx(200.0) for row in rows)
