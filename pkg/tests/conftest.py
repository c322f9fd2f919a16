import os
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

settings.register_profile('default', deadline=None, max_examples=60)
settings.load_profile(os.getenv('HYPOTHESIS_PROFILE', 'default'))

from graph_model import complete_graph  # noqa: E402
from queue_dynamics import FIXED, QueueParams, RateFunctions  # noqa: E402


@pytest.fixture
def k22():
    return complete_graph(2, 2)


@pytest.fixture
def fixed_rates():
    return RateFunctions(mode=FIXED, beta=0.5, beta_prime=2.0)


@pytest.fixture
def unit_queues():
    return QueueParams()
