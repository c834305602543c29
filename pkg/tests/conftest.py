import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from modechoice.data import N_MODES, Dataset
from modechoice.synthetic import SyntheticConfig, generate_synthetic

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_dataset(n, seed=0, labels=None):
    """Small random dataset with valid ranges; labels uniform unless given."""
    rng = np.random.default_rng(seed)
    chosen = rng.integers(1, N_MODES + 1, size=n) if labels is None else np.asarray(labels)
    return Dataset(
        ids=np.arange(1, n + 1),
        age=rng.integers(18, 66, size=n).astype(float),
        gender=rng.integers(0, 2, size=n).astype(float),
        hh_income=np.round(rng.uniform(2000, 15000, size=n)),
        n_two_wheelers=rng.integers(0, 3, size=n).astype(float),
        metro_avail=rng.integers(0, 2, size=n).astype(float),
        pop_density=np.round(rng.uniform(5000, 30000, size=n)),
        emp_density=np.round(rng.uniform(1000, 20000, size=n)),
        tt=np.round(rng.uniform(5, 90, size=(n, N_MODES)), 2),
        tc=np.round(rng.uniform(0, 150, size=(n, N_MODES)), 2),
        chosen=chosen,
    )


@pytest.fixture(scope="session")
def survey():
    """Synthetic survey of 1500 trips drawn from the default logit truth."""
    return generate_synthetic(SyntheticConfig(1500, rng_seed=11))


@pytest.fixture
def tiny():
    return make_dataset(12, seed=3)


def pytest_terminal_summary(terminalreporter):
    # acceptance lines are printed again here so they survive output capture
    mod = next((m for name, m in __import__("sys").modules.items()
                if name.endswith("test_acceptance") and hasattr(m, "RESULTS")), None)
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
