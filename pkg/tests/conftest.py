import time
from dataclasses import dataclass

import pytest

from seqtag import synthetic
from seqtag.model import SequenceModel
from seqtag.training import LearningCurve, TrainingConfig, train

from factories import fresh_model, scaled_config


@dataclass
class Trained:
    data: synthetic.SyntheticData
    config: TrainingConfig
    model: SequenceModel
    curve: LearningCurve
    seconds: float


@pytest.fixture(scope="session")
def converged() -> Trained:
    """The unambiguous synthetic corpus, trained once with the scaled config."""
    data = synthetic.unambiguous(n_train=500, n_dev=50, n_test=50, vocab_size=200, seed=0)
    config = scaled_config(seed=0)
    start = time.perf_counter()
    model, curve = train(fresh_model(data, config), data.train, data.dev, config)
    return Trained(data, config, model, curve, time.perf_counter() - start)


# ---- one PASS/FAIL line per acceptance criterion

_criteria: dict[int, tuple[str, str, list[str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion this test checks")


@pytest.fixture
def detail(request):
    """Append a measured value to this criterion's summary line."""
    def add(text: str) -> None:
        request.node.user_properties.append(("detail", text))
        print(text)
    return add


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (rep.when != "call" and not rep.failed):
        return
    number, title = marker.args
    details = [v for k, v in item.user_properties if k == "detail"]
    status = "PASS" if rep.passed else "FAIL"
    _criteria[number] = (status, title, details)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        status, title, details = _criteria[number]
        extra = f" ({'; '.join(details)})" if details else ""
        terminalreporter.write_line(f"[{status}] criterion {number}: {title}{extra}")
