import numpy as np
import pytest

import helpers
from jwdm.data import gen_domain_pair
from jwdm.trainer import TrainConfig
from jwdm.data import DomainSpec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_spec():
    return DomainSpec("gauss-mix", {}, 256, 3)


@pytest.fixture(scope="session")
def small_data(small_spec):
    return gen_domain_pair(small_spec.kind, small_spec.params, small_spec.n, small_spec.seed)


@pytest.fixture(scope="session")
def tiny_config(small_spec):
    """A few cheap epochs on a small dataset."""
    return TrainConfig(epochs=6, decay_start=3, batch_size=32, hidden=(16, 16), latent_dim=4,
                       seed=7, dataset=small_spec)


def pytest_terminal_summary(terminalreporter):
    if not helpers.ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(helpers.ACCEPTANCE):
        ok, detail = helpers.ACCEPTANCE[k]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}")
