import numpy as np
import pytest

from cssl import protocol
from cssl.learners import TrainConfig
from cssl.streamgen import (
    battery_class_means, drift_preset, make_classification_stream, make_regression_stream,
    regression_preset,
)


def small_classification(seed=0, preset="short-gap", sizes=(300, 300, 300), C=4, d=5,
                         sequence_id="seq"):
    n = sum(sizes)
    base = battery_class_means(C, d, 1.0, seed)
    sch = drift_preset(preset, base, n, (sizes[0], sizes[0] + sizes[1]), seed + 1)
    return make_classification_stream(sch, n, d, C, seed + 2, sequence_id, None)


def small_regression(seed=0, sizes=(100, 200, 200), d=4, sequence_id="reg"):
    n = sum(sizes)
    path = regression_preset("short-gap", d, n, (sizes[0], sizes[0] + sizes[1]), seed)
    return make_regression_stream(path, 0.5, n, d, seed + 1, sequence_id)


@pytest.fixture
def cls_split():
    return protocol.split_folds(small_classification(), (300, 300, 300))


@pytest.fixture
def cls_warm(cls_split):
    s = cls_split.S
    return protocol.warm_up(s.x, s.y, "classification", s.d, s.n_classes,
                            TrainConfig(0.1, 20, 32, 0))


@pytest.fixture
def reg_split():
    return protocol.split_folds(small_regression(), (100, 200, 200))


@pytest.fixture
def reg_warm(reg_split):
    s = reg_split.S
    return protocol.warm_up(s.x, s.y, "regression", s.d, None, TrainConfig(0.01, 50, 16, 0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def check(ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {request.node.name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, detail

    return check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
