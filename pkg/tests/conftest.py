import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo", deadline=None, derandomize=True, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")

SEED = 0x5EED


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


# criterion label -> (status, detail), filled by test_acceptance
ACCEPTANCE: dict[str, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE, key=lambda s: (int(s.split()[0].rstrip("ab")), s)):
        status, detail = ACCEPTANCE[label]
        terminalreporter.write_line(f"{status} {label}: {detail}")
