import pytest

from pansketch.stable import StableParams, calibrate

# small matrix for unit tests: p log2(10) = 0.166 < 0.25
SMALL = dict(p=0.05, r=64, m=2000, master_seed=11)

# the acceptance setup: p log2(100) = 0.2498 < 0.25
LARGE = dict(p=0.0376, r=800, m=100_000, master_seed=2024)


@pytest.fixture(scope="session")
def small_cal():
    return calibrate(StableParams(**SMALL), n_samples=200_000, seed=3)


@pytest.fixture(scope="session")
def large_cal():
    return calibrate(StableParams(**LARGE), n_samples=1_000_000, seed=5)
