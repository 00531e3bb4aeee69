import numpy as np
import pytest
from hypothesis import settings

from advbeam.channel import build_scenario
from advbeam.experiments import build_dataset, split_dataset, train_undefended
from advbeam.nn import TrainConfig

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture(scope="session")
def desk():
    return build_scenario("outdoor-o1", scale="desk")


@pytest.fixture(scope="session")
def small_run(desk):
    """A quickly trained undefended model on a small desk dataset."""
    ds = build_dataset(desk, 600, seed=3)
    tr, va, te = split_dataset(ds, 3)
    model, history = train_undefended(tr, va, TrainConfig(epochs=5, seed=3))
    return ds, tr, va, te, model, history


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance
    lines = getattr(test_acceptance, "VERDICTS", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
