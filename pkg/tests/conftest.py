import pathlib

import pytest

from vemstokes.mesh import load_mesh

DATA = pathlib.Path(__file__).parent / "data"
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def voronoi():
    return load_mesh(DATA / "voronoi_40.json")
