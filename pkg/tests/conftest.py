import sys
import time
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

SESSION_START = time.perf_counter()

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
    derandomize=True,
)
settings.load_profile("default")


def pytest_configure(config):
    config.addinivalue_line("markers", "runs_last: schedule after every other test")


def pytest_collection_modifyitems(session, config, items):
    # the wall-clock criterion must observe the whole run, so it goes last
    last = [it for it in items if it.get_closest_marker("runs_last")]
    items[:] = [it for it in items if not it.get_closest_marker("runs_last")] + last


@pytest.fixture
def session_elapsed():
    return lambda: time.perf_counter() - SESSION_START
