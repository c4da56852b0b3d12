import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def tiny_scenario():
    """A fast multi-study draw shared by transfer/baseline tests.

    Treated as read-only by every consumer.
    """
    from targeted_psm.simulate import generate_scenario, scenario_preset

    config = scenario_preset("figure1-mini", n0=220, n_k=180, K=2, p=15, seed=99)
    data, truth = generate_scenario(config)
    return config, data, truth
