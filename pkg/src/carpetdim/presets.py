"""Ready-made systems used by the CLI, the tests and the reproduction run."""
from __future__ import annotations

from fractions import Fraction as F

from .rifs import BoxLikeMap, Ifs, Rifs


def grid_map(n: int, m: int, col: int, row: int) -> BoxLikeMap:
    """Map onto cell (col, row) of an n-by-m grid (n columns of width 1/n)."""
    return BoxLikeMap(F(1, n), F(1, m), u=F(col, n), v=F(row, m))


def bm_ifs(n: int, m: int, cells) -> Ifs:
    return Ifs(tuple(grid_map(n, m, c, r) for c, r in cells))


def bm_carpet(n: int, m: int, cells) -> Rifs:
    """Deterministic Bedford-McMullen carpet on an n-by-m grid."""
    return Rifs((bm_ifs(n, m, cells),), (F(1),))


def mixed_grids() -> Rifs:
    """Two carpets on 2x3 and 2x4 grids chosen with equal probability.

    The first uses two cells in different columns, the second three cells,
    two of them stacked in the left column.
    """
    first = bm_ifs(2, 3, [(0, 0), (1, 1)])
    second = bm_ifs(2, 4, [(0, 0), (0, 2), (1, 1)])
    return Rifs((first, second), (F(1, 2), F(1, 2)))


def transposed_grids() -> Rifs:
    """A 2x3 carpet and its transpose (3x2), each with two diagonal cells."""
    first = bm_ifs(2, 3, [(0, 0), (1, 1)])
    second = bm_ifs(3, 2, [(0, 0), (1, 1)])
    return Rifs((first, second), (F(1, 2), F(1, 2)))


def full_square(n: int = 2) -> Rifs:
    return bm_carpet(n, n, [(c, r) for c in range(n) for r in range(n)])


PRESETS = {
    "mixed-grids": mixed_grids,
    "transposed-grids": transposed_grids,
    "bm-2x3": lambda: bm_carpet(2, 3, [(0, 0), (1, 1)]),
    "full-square": full_square,
}
