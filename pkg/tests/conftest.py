from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cropgen.calib import synth_table_diagonal
from cropgen.illuminants import IlluminantSpec, diagonal_sensor

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def make_illums(rgbs) -> list[IlluminantSpec]:
    return [IlluminantSpec.from_rgb(f"e{i:02d}", "grid", rgb) for i, rgb in enumerate(rgbs)]


@pytest.fixture(scope="session")
def ten_illums() -> list[IlluminantSpec]:
    rng = np.random.default_rng(7)
    return make_illums(rng.uniform(0.2, 1.0, size=(10, 3)))


@pytest.fixture(scope="session")
def noisy_table(ten_illums):
    """10 illuminants, sigma 0.02, 8 samples per cell."""
    return synth_table_diagonal(ten_illums, diagonal_sensor(), noise=0.02, S=8, seed=11)


@pytest.fixture(scope="session")
def clean_table(ten_illums):
    return synth_table_diagonal(ten_illums, diagonal_sensor(), noise=0.0, S=2, seed=0)


# -- one summary line per acceptance criterion ----------------------------------

_criteria: dict[str, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if "test_acceptance.py" not in item.nodeid:
        return
    title = (item.function.__doc__ or item.name).strip().splitlines()[0]
    failed = report.failed
    if report.when == "call" or failed:
        prev = _criteria.get(item.name, ("PASS", title))[0]
        _criteria[item.name] = ("FAIL" if failed or prev == "FAIL" else "PASS", title)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria):
        status, title = _criteria[name]
        terminalreporter.write_line(f"{status}  {title}")
