import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from seqreject import HypothesisTree, HypothesisUniverse, LogicalStructure, pairwise_equality  # noqa: E402


def mu_sum_structure():
    """H1: mu1 <= 0, H2: mu2 <= 0, H3: mu1 + mu2 <= 0.

    Enumerating the sign patterns of (mu1, mu2, mu1 + mu2) gives the
    possible true sets below; H1 and H2 true force H3 true, and H3 false
    forces one of H1, H2 false.
    """
    universe = HypothesisUniverse(("H1", "H2", "H3"))
    return LogicalStructure(universe, [[0, 1, 2], [0, 2], [0], [1, 2], [1], []])


def delta_structure():
    """H1: theta <= D, H2: theta >= -D, H12 = H1 and H2, with three regions of theta."""
    universe = HypothesisUniverse(("H1", "H2", "H12"))
    return LogicalStructure(universe, [[1], [0, 1, 2], [0]])


@pytest.fixture
def pairwise3():
    return pairwise_equality(3)


@pytest.fixture
def mu_sum():
    return mu_sum_structure()


@pytest.fixture
def delta():
    return delta_structure()


@pytest.fixture
def fig_tree():
    """Symmetric binary tree with four levels: 15 nodes, 8 leaves."""
    return HypothesisTree.perfect_binary(4)


@pytest.fixture
def small_tree():
    return HypothesisTree.perfect_binary(3)


# one line per acceptance criterion, shown at the end of the run even when
# output is captured
ACCEPTANCE: dict[int, str] = {}


def record(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
