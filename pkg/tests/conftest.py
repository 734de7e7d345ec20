import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from synthetic import make_hierarchy  # noqa: E402

from granuscore.anchors import AnchorStrategy, FeatureConfig, build_index  # noqa: E402
from granuscore.datasets import split_by_realization  # noqa: E402
from granuscore.scorer.ensemble import RegressorConfig  # noqa: E402

SMALL_REGRESSOR = RegressorConfig(max_iterations=300, num_leaves=15, min_data_in_leaf=5, num_threads=1,
                                  early_stopping_rounds=50)

_ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        detail = dict(item.user_properties).get("detail", "")
        if rep.failed and call.excinfo is not None:
            detail = str(call.excinfo.value).strip().splitlines()[0][:160]
        prev = _ACCEPTANCE.get(n)
        if prev is None or prev[0] == "PASS":
            _ACCEPTANCE[n] = (status, title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        status, title, detail = _ACCEPTANCE[n]
        line = f"criterion {n:2d} {status}: {title}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def hierarchy():
    return make_hierarchy(0)


@pytest.fixture(scope="session")
def provider(hierarchy):
    return hierarchy.provider()


@pytest.fixture(scope="session")
def index(hierarchy, provider):
    return build_index(hierarchy.names, provider, len(hierarchy.names), seed=0, source_id="synthetic")


@pytest.fixture(scope="session")
def entries(hierarchy):
    return hierarchy.entries(0)


@pytest.fixture(scope="session")
def splits(entries):
    return split_by_realization(entries, (0.8, 0.1, 0.1), seed=0)


@pytest.fixture(scope="session")
def trained(entries, splits, provider, index, hierarchy):
    """A small calibrated model trained end to end on the synthetic hierarchy."""
    from granuscore.pipeline import calibrate, train_granuscore

    features = FeatureConfig(AnchorStrategy("random_fixed", 32, 0))
    model, result = train_granuscore(splits.entries(entries, "train"), splits.entries(entries, "dev"),
                                     provider, index, features, SMALL_REGRESSOR, {"dataset": "synthetic"})
    model, _ = calibrate(model, provider, hierarchy.names, "synthetic-vocabulary")
    return model, result


@pytest.fixture(scope="session")
def scorer(trained, provider):
    from granuscore.api import Granuscore

    return Granuscore(trained[0], provider)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
