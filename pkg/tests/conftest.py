import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ROOT = Path(__file__).resolve().parents[1]
DATA_DIR = ROOT / "data" / "mnist"


@pytest.fixture(scope="session")
def mnist():
    from qae.data import load_mnist
    return load_mnist(DATA_DIR)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
        for line in getattr(mod, "NOTES", []):
            terminalreporter.write_line(line)
