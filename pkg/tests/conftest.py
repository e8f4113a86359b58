import numpy as np
import pytest

from quasireal.config import ExperimentConfig
from quasireal.experiments import build_model
from quasireal.gp import Observations, posterior
from quasireal.kernels import KernelSpec, MeanSpec


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria")
    config.stash[_ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = sorted(config.stash.get(_ACCEPTANCE, []))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, text in lines:
            terminalreporter.write_line(text)


@pytest.fixture
def acceptance_report(request):
    """``report(number, ok, detail, seconds)`` prints and records one criterion line."""

    def report(number: int, ok: bool, detail: str, seconds: float) -> None:
        text = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}  [{seconds:.1f} s]"
        print(text)
        request.config.stash[_ACCEPTANCE].append((number, text))

    return report


@pytest.fixture(scope="session")
def branin_model():
    """The n=20 Branin surrogate (maximin LHS, Matérn 3/2, ML fit), seed 0."""
    return build_model(ExperimentConfig())


@pytest.fixture
def toy_gp():
    """A small 2-D ordinary-kriging model with hand-picked hyperparameters."""
    rng = np.random.default_rng(11)
    X = rng.uniform(size=(8, 2))
    y = np.sin(4 * X[:, 0]) + X[:, 1] ** 2
    kern = KernelSpec("matern52", 1.3, (0.4, 0.6))
    return posterior(Observations(X, y), kern, MeanSpec(0.0, True))
