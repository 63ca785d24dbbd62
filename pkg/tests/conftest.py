import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from spotcov import HestonConfig, build_uniform_grid, log_returns, simulate_heston2d


@pytest.fixture(scope="session")
def heston_sim_small():
    """One modest simulated market shared by estimator-level tests."""
    grid = build_uniform_grid(2.0, 1440)
    return simulate_heston2d(HestonConfig(), grid, seed=20240803)


@pytest.fixture(scope="session")
def increments_small(heston_sim_small):
    return log_returns(heston_sim_small.prices)
