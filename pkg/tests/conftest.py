import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


@pytest.fixture(scope="session")
def small_synth():
    """Seeded synthetic cohort, small enough for unit tests."""
    from ecgpd.synth import SyntheticSpec, generate

    spec = SyntheticSpec(split_sizes={"train": 1500, "validation": 400, "internal_test": 400}, seed=11)
    return generate(spec)


@pytest.fixture(scope="session")
def small_model(small_synth):
    """A fixed-hyperparameter GBDT on the small cohort."""
    from ecgpd.tabular import train_gbdt

    m, c = small_synth.matrix, small_synth.cohort
    X, y = _xy(m, c, "train")
    vX, vy = _xy(m, c, "validation")
    return train_gbdt(X, y, vX, vy, learning_rate=0.2, max_depth=3, n_estimators=60, feature_codes=m.catalog.codes)


def _xy(matrix, cohort, split):
    rows = cohort.split(split)
    return matrix.rows([r.record_id for r in rows]), np.array([r.label for r in rows])


@pytest.fixture
def xy():
    return _xy


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[n])
