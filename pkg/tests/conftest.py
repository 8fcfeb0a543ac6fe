import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mmwpos.arraymodel import ArrayModel
from mmwpos.scenario import reference_scenario

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")

LAM = 10.7e-3


@pytest.fixture
def scenario():
    return reference_scenario()


@pytest.fixture
def ideal32():
    return ArrayModel.ideal(32, LAM)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: reduced-scale training runs (minutes each)")


@pytest.fixture(scope="session")
def reduced_scenario():
    """Desk-scale geometry used by the training checks."""
    return reference_scenario(n_tx=16, n_transmissions=10)


@pytest.fixture(scope="session")
def trainer(reduced_scenario):
    """Cached reduced-scale trainings keyed by (kind, snr, impairment, seed)."""
    from mmwpos.e2e import TrainConfig, train_aod_ae, train_pos_ae
    from mmwpos.evaluation import stream
    from mmwpos.impairments import ImpairmentSpec

    cache = {}

    def run(kind, snr_db, impairment=ImpairmentSpec(), seed=0):
        key = (kind, snr_db, impairment, seed)
        if key not in cache:
            cfg = TrainConfig.reduced(reduced_scenario, snr_db=snr_db, impairment=impairment, seed=seed)
            arrays = impairment.true_arrays(2, 16, reduced_scenario.wavelength, stream(seed, 1))
            fn = train_aod_ae if kind == "aod" else train_pos_ae
            cache[key] = fn(cfg, stream(seed, 3), arrays)
        return cache[key]

    return run


_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def report():
    """Record one PASS/FAIL line for an acceptance criterion."""

    def add(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return add


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
