"""
End-to-end scaling checks against the leading-order predictions.
Each test simulates thousands of transitions; run with `pytest -m slow`.
"""

import numpy as np
import pytest

from config import parse_config
from main import paired_static_ratio, simulate_grid
from queue_dynamics import expected_hitting_time_TU
from utils import fit_exponent, summarize_replications

pytestmark = pytest.mark.slow

K22 = {'m': 2, 'n': 2, 'topology': 'complete'}
FIXED_RATES = {'mode': 'fixed', 'beta': 0.5, 'beta_prime': 2.0}


def _sweep(**fields):
    config = parse_config({'graph': K22, 'rates': FIXED_RATES, **fields})
    replications = simulate_grid(config.build_graph(), config)
    return config, replications, summarize_replications(replications)


def _fit(summary):
    return fit_exponent(list(zip(summary['r'], summary['mean_T'])))


def test_complete_graph_subcritical_scaling():
    _, _, summary = _sweep(r_grid=[100, 1000, 10000], replications=2000, seed=101)
    assert summary['mean_T'].iloc[-1] == pytest.approx(50.0, rel=0.1)
    assert _fit(summary).slope == pytest.approx(0.5, abs=0.1)


def test_complete_graph_supercritical_mean():
    _, _, summary = _sweep(
        rates={'mode': 'fixed', 'beta': 2.0, 'beta_prime': 3.5},
        queues={'arrival_rate': 0.5},
        r_grid=[10000], replications=200, seed=102,
    )
    assert summary['mean_T'].iloc[0] == pytest.approx(2e4, rel=0.1)


def test_single_edge_ratio_tends_to_one():
    _, _, summary = _sweep(graph={'m': 1, 'n': 1, 'topology': 'complete'},
                           r_grid=[100, 1000, 10000], replications=2000, seed=103)
    assert summary['mean_T'].iloc[-1] == pytest.approx(1.0, abs=0.1)


def test_competitive_slow_dynamics_scaling():
    config, replications, summary = _sweep(
        rates={'mode': 'queue', 'beta': 0.5, 'beta_prime': 2.0},
        dynamics={'kind': 'slow', 'alpha': 0.3},
        r_grid=[1e4, 1e6, 1e8], replications=200, seed=104,
    )
    assert _fit(summary).slope == pytest.approx(0.3, abs=0.1)
    first = replications[replications['r'] == 1e4]['transition_time']
    tu = expected_hitting_time_TU(config.model_params(1e4).queues)
    assert (first < tu).mean() >= 0.95


def test_fast_dynamics_mean_times_rate_is_bounded():
    _, _, summary = _sweep(dynamics={'kind': 'fast', 'a': 1.0},
                           r_grid=[100, 1000, 10000], replications=300, seed=105)
    scaled = summary['mean_T'] * summary['r']
    assert scaled.max() / scaled.min() <= 2.0


def test_regular_dynamics_mean_is_bounded():
    _, _, summary = _sweep(dynamics={'kind': 'regular', 'C': 1.0},
                           r_grid=[100, 1000, 10000], replications=300, seed=106)
    assert summary['mean_T'].max() / summary['mean_T'].min() <= 2.0


def test_noncompetitive_slow_dynamics_match_static():
    config = parse_config({'graph': K22, 'rates': FIXED_RATES, 'dynamics': {'kind': 'slow', 'alpha': 2.0},
                           'r_grid': [100, 1000, 10000], 'replications': 500, 'seed': 107})
    ratios = paired_static_ratio(config)
    assert np.all(np.abs(ratios['ratio'] - 1.0) <= 0.15)
