import pytest

from condaalen.simulate import default_scenario, simulate_sample


@pytest.fixture(scope="session")
def sim_sample():
    """Moderate simulated sample shared across test modules."""
    sc = default_scenario(n=150, seed=42)
    return simulate_sample(sc["intensity"], sc["censoring"], 150, 42)


@pytest.fixture(scope="session")
def sim_scenario():
    return default_scenario(n=150, seed=42)
