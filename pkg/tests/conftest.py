import numpy as np
import pytest

from relm.config import RelmConfig
from relm.controller import generate_synthetic_drift

# filled by test_acceptance.py, printed at the end of the run
ACCEPTANCE_RESULTS: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k.split()[0])):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_config() -> RelmConfig:
    """Small network and short runs for unit-level controller tests."""
    cfg = RelmConfig()
    cfg.topology.hidden = (6, 3)
    cfg.cmaes.max_generations = 25
    cfg.cmaes.sigma0 = 1.0
    cfg.recalibration.max_generations = 15
    cfg.environment.batch_size = 256
    cfg.latent.mute = True
    cfg.runtime.workers = 1
    return cfg


@pytest.fixture
def fast_config():
    return small_config()


@pytest.fixture(scope="session")
def make_config():
    return small_config


@pytest.fixture(scope="session")
def blobs():
    """Pre-drift period 0 plus a 90-degree rotated continuation."""
    return generate_synthetic_drift(2, 400, 4, "rotation", 90.0, seed=7, drift_period=2)
