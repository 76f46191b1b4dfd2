import numpy as np
import pytest

from tinyadv import data, models

np.seterr(over="ignore", under="ignore")


@pytest.fixture(scope="session")
def splits():
    return data.make_splits(2000, 400, seed=0, n_calib=200)


@pytest.fixture(scope="session")
def toy_model(splits):
    """Toy ResNet trained on the 10-class synthetic set (~15 s)."""
    cfg = models.TrainConfig(epochs=10, lr=0.01, seed=0)
    model, _ = models.train(models.build_toy_resnet(seed=0), splits["train"], cfg)
    return model


@pytest.fixture(scope="session")
def small_splits():
    return data.make_splits(300, 60, classes=4, side=8, seed=5, n_calib=40)


@pytest.fixture(scope="session")
def small_model(small_splits):
    """4-class 8x8 model for fast attack and harness tests."""
    cfg = models.TrainConfig(epochs=10, lr=0.05, seed=1, clip_norm=1.0)
    model, _ = models.train(models.build_toy_resnet((8, 8, 3), 4, width=8, seed=1), small_splits["train"], cfg)
    return model


# one PASS/FAIL line per acceptance criterion, printed at the end of the run
_CRITERIA = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if item.module.__name__.endswith("test_acceptance") and (rep.when == "call" or rep.failed):
        title = (item.function.__doc__ or item.name).strip().splitlines()[0]
        _CRITERIA.append((title, "PASS" if rep.passed else "FAIL", rep.duration))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for title, status, secs in _CRITERIA:
        terminalreporter.write_line(f"{status}  {title}  ({secs:.1f}s)")
