import random

import pytest

from gfflush.gf2 import BitMatrix, BitVector


def random_matrix(rng: random.Random, nrows: int, ncols: int, density: float = 0.5) -> BitMatrix:
    rows = []
    for _ in range(nrows):
        r = 0
        for j in range(ncols):
            if rng.random() < density:
                r |= 1 << j
        rows.append(r)
    return BitMatrix(nrows, ncols, tuple(rows))


def random_vector(rng: random.Random, n: int) -> BitVector:
    return BitVector(n, rng.getrandbits(n) if n else 0)


def naive_mul(a: list[list[int]], b: list[list[int]]) -> list[list[int]]:
    n, k, m = len(a), len(b), len(b[0]) if b else 0
    return [[sum(a[i][t] * b[t][j] for t in range(k)) % 2 for j in range(m)] for i in range(n)]


@pytest.fixture
def rng():
    return random.Random(20210120)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
