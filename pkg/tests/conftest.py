import numpy as np
import pytest

from costq import data as data_mod
from costq.nn import init_params


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(number, name): acceptance criterion identity")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    status = "PASS" if report.passed else "FAIL"
    reporter = item.config.pluginmanager.get_plugin("terminalreporter")
    if reporter is not None:
        number, name = marker.args
        reporter.write_line(f"acceptance criterion {number:2d} ({name}): {status}")


def make_tiny_dataset(n_samples=600, seed=7):
    """Synthetic two-feature binary problem: feature 0 equals the class,
    feature 1 is coin-flip noise. Returned normalized with 60/20/20 splits."""
    rng = np.random.default_rng(seed)
    y = rng.integers(2, size=n_samples)
    f0 = y.astype(np.float64)
    f1 = rng.integers(2, size=n_samples).astype(np.float64)
    dataset = data_mod.Dataset(
        features=np.column_stack([f0, f1]),
        labels=y.astype(np.int64),
        class_labels=["0", "1"],
        feature_names=["f0", "f1"],
    )
    splits = data_mod.make_splits(dataset, seed=0)
    return data_mod.normalize(dataset, splits["train"]), splits


def write_tiny_csv(path, n_samples=600, seed=7):
    """Same synthetic problem as make_tiny_dataset, as a CSV file on disk."""
    rng = np.random.default_rng(seed)
    y = rng.integers(2, size=n_samples)
    f1 = rng.integers(2, size=n_samples)
    lines = ["f0,f1,label"]
    lines += [f"{y[i]},{f1[i]},c{y[i]}" for i in range(n_samples)]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def tiny_dataset():
    return make_tiny_dataset()


@pytest.fixture
def small_net():
    rng = np.random.default_rng(123)
    return init_params(n_features=3, n_actions=5, hidden_sizes=(8, 6, 4), rng=rng)
