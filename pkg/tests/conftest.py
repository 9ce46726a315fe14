import pytest
from hypothesis import HealthCheck, settings

from poleinspect.corpus import ImbalanceConfig, SceneParams, generate_corpus
from poleinspect.geometry import ImageExtent

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SMALL_SCENE = SceneParams(extent=ImageExtent(384, 512), pole_width_fraction=(0.04, 0.07))


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """30 small scenes (6 cap-missing) for detector and pipeline tests."""
    out = tmp_path_factory.mktemp("small_corpus")
    return generate_corpus(ImbalanceConfig(6, 4), SMALL_SCENE, 21, out)


@pytest.fixture(scope="session")
def small_heldout(tmp_path_factory):
    out = tmp_path_factory.mktemp("small_heldout")
    return generate_corpus(ImbalanceConfig(2, 4), SMALL_SCENE, 9000, out)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Append one pass/fail line per acceptance criterion; printed in the terminal summary."""
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
