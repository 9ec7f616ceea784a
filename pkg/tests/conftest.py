import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

from dfibridge.phy import LaneSkew  # noqa: E402
from dfibridge.sim import SimConfig, Simulator  # noqa: E402


@pytest.fixture
def ready_sim():
    """Initialized device, calibrated PHY, zero skew."""
    return Simulator(SimConfig(device_preinit=True, phy_ready=True))


def make_sim(read_ps=None, write_ps=None, eye=60.0, **kw) -> Simulator:
    skew = LaneSkew(list(read_ps or [0.0] * 32), None if write_ps is None else list(write_ps), eye)
    kw.setdefault("trace", False)
    return Simulator(SimConfig(skew=skew, **kw))


# -- acceptance summary ---------------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """``acceptance(n, title, ok, detail)`` records the verdict line for criterion ``n``."""

    def record(n: int, title: str, ok: bool, detail: str) -> None:
        ACCEPTANCE[n] = f"[{n}] {title}: {'PASS' if ok else 'FAIL'} ({detail})"

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
