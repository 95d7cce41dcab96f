import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    key = (marker.args[0], marker.args[1])
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        _criteria[key] = "PASS" if rep.passed else "FAIL"


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for (num, title), status in sorted(_criteria.items()):
        terminalreporter.write_line(f"criterion {num:2d} [{status}] {title}")


@pytest.fixture(scope="session")
def mesh16():
    from amgeredist.meshtopo import build_mesh
    return build_mesh(2, 16)


@pytest.fixture(scope="session")
def hier16(mesh16):
    from amgeredist.amge import HierarchyConfig, build_hierarchy
    return build_hierarchy(mesh16, HierarchyConfig(n_levels=3, factor=8))
