import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from eccentricity.ingest import EventTable  # noqa: E402


def make_table(events) -> EventTable:
    users, items, values, ts = zip(*events)
    return EventTable.from_columns(list(users), list(items), np.array(values, dtype=float),
                                   np.array(ts, dtype=np.int64))


@pytest.fixture
def tiny_events():
    # two windows of 7 days starting 2014-01-01
    t0 = 1_388_534_400
    day = 86_400
    return [
        ("a", "x", 1.0, t0), ("b", "x", 2.0, t0 + day), ("c", "x", 1.0, t0 + 2 * day),
        ("a", "y", 1.0, t0 + 3 * day), ("b", "y", 1.0, t0 + 3 * day),
        ("c", "z", 4.0, t0 + 4 * day),
        ("a", "x", 1.0, t0 + 8 * day), ("c", "z", 1.0, t0 + 9 * day), ("b", "w", 1.0, t0 + 10 * day),
    ]


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
