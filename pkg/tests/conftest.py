import pytest

from occlabel.synth import SCENARIOS, write_scene

_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(name, passed, detail)``."""

    def record(name, passed, detail=""):
        _ACCEPTANCE.append((name, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")


@pytest.fixture(scope="session")
def scenes(tmp_path_factory):
    """Every built-in synthetic scenario written once per session, seed 0."""
    root = tmp_path_factory.mktemp("scenes")
    return {name: (root / name, write_scene(root / name, name, seed=0)) for name in SCENARIOS}
