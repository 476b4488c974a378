"""
Shared fixtures for the test suite.
"""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from backend.oracle import build_oracle  # noqa: E402
from shared.models import InstanceSpec  # noqa: E402

DESK_LOG_ROUND = {"family": "log_round", "params": {"ell": 8, "ell_prime": 4, "k": 200, "epsilon": 0.02}, "seed": 7}
DESK_POLY_ROUND = {"family": "poly_round", "params": {"r": 8, "ell_prime": 4, "k": 200, "delta": 0.4}, "seed": 7}
SYMMETRY_LOG_ROUND = {"family": "log_round", "params": {"ell": 4, "ell_prime": 2, "k": 4000, "epsilon": 0.1}, "seed": 3}
SYMMETRY_POLY_ROUND = {"family": "poly_round",
                       "params": {"r": 4, "ell_prime": 2, "k": 4000, "delta": 0.4, "epsilon": 0.1}, "seed": 3}
TOY_LOG_ROUND = {"family": "log_round", "params": {"layer_sizes": [4, 4], "block_sizes": [2, 2], "k": 2}, "seed": 1}
DIRECTED_CUT = {"family": "directed_cut", "seed": 5}


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: runs at full experiment scale")


def make_oracle(data):
    return build_oracle(InstanceSpec.from_dict(data))


@pytest.fixture(scope="session")
def desk_log_oracle():
    return make_oracle(DESK_LOG_ROUND)


@pytest.fixture(scope="session")
def desk_poly_oracle():
    return make_oracle(DESK_POLY_ROUND)


@pytest.fixture(scope="session")
def toy_log_oracle():
    return make_oracle(TOY_LOG_ROUND)


@pytest.fixture
def directed_cut_oracle():
    return make_oracle(DIRECTED_CUT)
