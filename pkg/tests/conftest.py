import datetime as dt

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from haulcast.ingest import ShiftRecord
from haulcast.simdata import SimConfig, simulate_shifts

settings.register_profile(
    "default", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def make_records(payload, trucks=None, rain=None, shovels=None, crews=("A", "B", "C", "D")):
    """Consecutive shift records with chosen payload/trucks/rain columns."""
    n = len(payload)
    trucks = [10] * n if trucks is None else trucks
    rain = [0.0] * n if rain is None else rain
    shovels = [4] * n if shovels is None else shovels
    start = dt.date(2022, 1, 1)
    return [
        ShiftRecord(
            shift_index=i,
            date=start + dt.timedelta(days=i // 2),
            shift_kind="night" if i % 2 else "day",
            crew=crews[i % len(crews)],
            working_trucks=int(trucks[i]),
            working_shovels=int(shovels[i]),
            cycle_count=100,
            payload=float(payload[i]),
            cycle_time=64.0,
            precipitation=float(rain[i]),
        )
        for i in range(n)
    ]


@pytest.fixture(scope="session")
def sim_records():
    return simulate_shifts(SimConfig(seed=11, n_shifts=1000))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance gate reporting ----------------------------------------------

GATE_DETAILS: dict[int, str] = {}
_GATE_OUTCOMES: dict[int, tuple[str, str]] = {}


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or (call.when != "call" and call.excinfo is None):
        return
    number, title = marker.args
    _GATE_OUTCOMES[number] = (title, "PASS" if call.excinfo is None else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _GATE_OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_GATE_OUTCOMES):
        title, verdict = _GATE_OUTCOMES[number]
        detail = GATE_DETAILS.get(number, "")
        terminalreporter.write_line(f"criterion {number:2d} {verdict}  {title}: {detail}")
