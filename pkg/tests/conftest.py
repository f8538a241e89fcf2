import random
from fractions import Fraction as F

import pytest

from carpetdim.rifs import BoxLikeMap, Ifs, Rifs

ACCEPTANCE_LINES: list[str] = []

SCALES = [F(1, 2), F(1, 3), F(1, 4), F(2, 5), F(1, 5), F(3, 7)]


def random_system(rng: random.Random, *, swaps: bool = True, wide: bool = False,
                  max_ifs: int = 3, max_maps: int = 3, allow_empty: bool = False) -> Rifs:
    """Random rational system; translations are zero (they do not matter for Psi)."""
    n = rng.randint(1, max_ifs)
    ifss = []
    for _ in range(n):
        size = rng.randint(0 if allow_empty else 1, max_maps)
        maps = []
        for _ in range(size):
            a, b = rng.choice(SCALES), rng.choice(SCALES)
            if wide and a < b:
                a, b = b, a
            maps.append(BoxLikeMap(a, b, swap=swaps and rng.random() < 0.4))
        ifss.append(Ifs(tuple(maps)))
    weights = [rng.randint(1, 5) for _ in range(n)]
    total = sum(weights)
    return Rifs(tuple(ifss), tuple(F(w, total) for w in weights))


@pytest.fixture
def rng():
    return random.Random(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
