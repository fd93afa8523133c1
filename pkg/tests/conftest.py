import sys
import textwrap

import pytest

from spacefill.domains import make_builtin_domain


@pytest.fixture
def triangle():
    return make_builtin_domain("triangle2d")


@pytest.fixture
def unit_square():
    return make_builtin_domain("hypercube", lower=[0.0, 0.0], upper=[1.0, 1.0])


@pytest.fixture
def unit_interval():
    return make_builtin_domain("hypercube", lower=[0.0], upper=[1.0])


def write_indicator_script(tmp_path, body: str, name: str = "indicator.py") -> list[str]:
    """Drop a line-protocol indicator script into tmp_path, return its command."""
    path = tmp_path / name
    path.write_text(textwrap.dedent(body))
    return [sys.executable, "-u", str(path)]


TRIANGLE_INDICATOR = """
    import sys
    for line in sys.stdin:
        x = [float(v) for v in line.split()]
        sys.stdout.write("1\\n" if x[0] > x[1] else "0\\n")
        sys.stdout.flush()
"""

MALFORMED_INDICATOR = """
    import sys
    for line in sys.stdin:
        sys.stdout.write("2\\n")
        sys.stdout.flush()
"""

COUNTING_INDICATOR = """
    import sys
    count_path = sys.argv[1]
    seen = 0
    for line in sys.stdin:
        seen += 1
        with open(count_path, "w") as fh:
            fh.write(str(seen))
        x = [float(v) for v in line.split()]
        sys.stdout.write("1\\n" if x[0] > x[1] else "0\\n")
        sys.stdout.flush()
"""
