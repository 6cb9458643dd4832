import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from holocrack.elastic import PolynomialSupplier
from holocrack.experiments import build_experiment, generate_target
from holocrack.inverse import Crack, Evaluation

settings.register_profile("holocrack", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("holocrack")


def random_poly(rng, degree=3, scale=1.0):
    c = rng.normal(size=degree + 1) + 1j * rng.normal(size=degree + 1)
    return PolynomialSupplier(c * scale)


class DistanceEvaluator:
    """Cheap stand-in for a forward solver: fitness grows with the tip distance to a target.

    Module-level so worker processes can unpickle it.
    """

    name = "distance"

    def __init__(self, target: Crack, floor: float = 0.0):
        self.target = target
        self.floor = floor
        self.calls = 0

    def evaluate(self, crack, sensors, warm_state=None, epochs=None, early_stop_loss=None):
        self.calls += 1
        d = crack.tip_distance(self.target)
        fit = self.floor + d * d
        strains = np.zeros((len(sensors), 3))
        state = {"crack": crack.to_dict(), "warm": warm_state is not None}
        return Evaluation(fit, strains, state=state, epochs_run=1 if warm_state else int(epochs or 1),
                          final_loss=fit, loss_history=[fit, fit])


@pytest.fixture(scope="session")
def exp1():
    return build_experiment("I")


@pytest.fixture(scope="session")
def exp2():
    return build_experiment("II")


@pytest.fixture(scope="session")
def exp3():
    return build_experiment("III")


_TARGETS = {}


def target_for(spec):
    if spec.id not in _TARGETS:
        _TARGETS[spec.id] = generate_target(spec)
    return _TARGETS[spec.id]


@pytest.fixture(scope="session")
def target1(exp1):
    return target_for(exp1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def rel_l2(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))



ACCEPTANCE_LINES = []


def record_criterion(number, title, passed, detail):
    """Print one verdict line and keep it for the terminal summary."""
    line = f"criterion {number} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
