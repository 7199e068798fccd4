import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mvlse.model import ModelSpec, ThetaBox, build_example_model
from mvlse.segment_path import Grid

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def example():
    return build_example_model("sincos")


@pytest.fixture(scope="session")
def theta0():
    return np.array([1.0, 0.5])


@pytest.fixture
def small_grid():
    return Grid.from_horizon(1.0, 0.25, 40)


def linear_model(theta_box=None, xi_value=0.0, sigma=1.0):
    """``dX = theta dt + eps * sigma dB`` with no path or measure dependence."""
    box = theta_box or ThetaBox([-5.0], [5.0])
    return ModelSpec(
        drift=lambda seg, mu, th: np.array([th[0]]),
        diffusion=lambda seg, mu: np.array([[sigma]]),
        theta_box=box,
        xi=lambda s: np.full(np.shape(s), xi_value),
        dims=(1, 1, 1),
        affine=True,
        drift_grad_theta=lambda seg, mu, th: np.array([[1.0]]),
    )


def zero_model(sigma=0.0):
    return ModelSpec(
        drift=lambda seg, mu, th: np.zeros(1),
        diffusion=lambda seg, mu: np.array([[sigma]]),
        theta_box=ThetaBox([-1.0], [1.0]),
        xi=lambda s: 0.5 + 0.0 * np.asarray(s),
        dims=(1, 1, 1),
    )


_ACCEPTANCE_LINES = []


@pytest.fixture
def report_line(capsys):
    """Print one verdict line (shown live and repeated in the summary)."""

    def _emit(k, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return _emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
