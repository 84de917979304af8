import pytest

from rltsdp.instance import parse_instance

EXAMPLE1 = """# two plus loops joined by an edge
n 2
d 1 2
d 2 3
q 1 2 -5
c 1 1
c 2 -1
"""

EXAMPLE2 = """n 3
d 1 5080
d 2 5
d 3 -40
q 1 2 -5849
q 1 3 5767
q 2 3 -1824
c 1 -254
c 2 1824
c 3 37
"""

EXAMPLE3 = """n 3
d 1 8
d 2 11
d 3 3500
q 1 2 2732
q 1 3 -4923
q 2 3 -5960
c 1 2
c 2 140
c 3 4523
"""


@pytest.fixture(scope="session")
def ex1():
    return parse_instance(EXAMPLE1)


@pytest.fixture(scope="session")
def ex2():
    return parse_instance(EXAMPLE2)


@pytest.fixture(scope="session")
def ex3():
    return parse_instance(EXAMPLE3)


@pytest.fixture
def instance_files(tmp_path):
    paths = {}
    for name, text in (("ex1", EXAMPLE1), ("ex2", EXAMPLE2), ("ex3", EXAMPLE3)):
        p = tmp_path / f"{name}.qp"
        p.write_text(text)
        paths[name] = str(p)
    return paths


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines):
        terminalreporter.write_line(lines[key])
