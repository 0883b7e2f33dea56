import pytest
from hypothesis import HealthCheck, settings

from signshift import lab

settings.register_profile(
    "signshift", derandomize=True, deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("signshift")

STABLE_FIXTURES = ("cor0_contrast3", "cor1_annulus_contrast3", "cor3_sigma_0.5")
RESONANT_FIXTURE = "kelvin_annulus_resonant"

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def sweep_cache():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = lab.run_sweep(lab.load_scenario(name))
        return cache[name]

    return get


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
