"""Empirical box counting on sampled realisations, plus PGM rendering.

A realisation is either a letter sequence (one-variable: every node on
level d uses IFS ``letters[d]``) or an explicit coding tree.  Both are
walked level by level with vectorised affine maps.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import stats

from .rifs import Rifs, WordGeometry, extend
from .sampling import CodingTree

LOG_EPS = 1e-12


class Rule(str, Enum):
    SHORT_SIDE = "short_side"
    LONG_SIDE = "long_side"


class ShallowRealization(ValueError):
    """The realisation ends before every branch crossed the threshold."""


def required_depth(rifs: Rifs, delta: float, rule: Rule) -> int:
    """Depth after which every rectangle has crossed delta (either rule).

    Both sides of a level-d rectangle are at most alpha_max**d.
    """
    _, amax = rifs.alpha_bounds()
    return math.ceil(math.log(delta) / math.log(amax) - LOG_EPS)


def _depth(realization) -> int:
    if isinstance(realization, CodingTree):
        return realization.depth
    return len(realization.letters)


def _children(rifs: Rifs, realization, d: int, nodes: np.ndarray):
    """(parent position, ifs, map, child node index) for the children of ``nodes`` on level d."""
    sizes = np.asarray(rifs.sizes)
    if isinstance(realization, CodingTree):
        labels = realization.levels[d].labels[nodes]
        starts = realization.child_offsets(d)[nodes]
    else:
        labels = np.full(len(nodes), realization.letters[d])
        starts = np.zeros(len(nodes), dtype=np.int64)
    n = sizes[labels]
    parent = np.repeat(np.arange(len(nodes)), n)
    first = (np.cumsum(n) - n).astype(np.int64)
    slot = np.arange(int(n.sum())) - np.repeat(first, n)
    return parent, labels[parent], slot, starts[parent] + slot


@dataclass(frozen=True)
class StoppingSet:
    rule: Rule
    delta: float
    words: tuple[WordGeometry, ...]

    def __len__(self) -> int:
        return len(self.words)


def stopping_set(rifs: Rifs, realization, delta: float, rule: Rule | str = Rule.SHORT_SIDE) -> StoppingSet:
    """Words whose rectangle side first drops to delta or below.

    ShortSide uses the shorter side, LongSide the longer one.  Expansion is
    breadth first with :func:`extend`.
    """
    rule = Rule(rule)
    log_delta = math.log(delta)
    depth = _depth(realization)

    def side(g: WordGeometry) -> float:
        return g.log_alpha_min if rule is Rule.SHORT_SIDE else g.log_alpha_max

    out = []
    queue = deque([(WordGeometry(), 0, 0)])
    while queue:
        geom, d, node = queue.popleft()
        if side(geom) <= log_delta + LOG_EPS:
            out.append(geom)
            continue
        if d >= depth:
            raise ShallowRealization(
                f"realisation depth {depth} too small for delta={delta:g}; "
                f"need up to {required_depth(rifs, delta, rule)} levels"
            )
        parent, ifs, slot, child = _children(rifs, realization, d, np.array([node]))
        for i, j, c in zip(ifs, slot, child):
            queue.append((extend(geom, (int(i), int(j)), rifs), d + 1, int(c)))
    return StoppingSet(rule, delta, tuple(out))


# ---------------------------------------------------------------------------
# vectorised rectangles


def _map_table(rifs: Rifs):
    """Flat (ifs, map) -> affine coefficients lookup."""
    offsets = np.concatenate(([0], np.cumsum(rifs.sizes))).astype(np.int64)
    rows = [(*f.linear(), float(f.u), float(f.v)) for _, _, f in rifs.all_maps()]
    table = np.array(rows, dtype=float).reshape(len(rows), 6)
    return offsets, table


def _compose(aff: np.ndarray, maps: np.ndarray) -> np.ndarray:
    """Row-wise aff o maps for (n, 6) arrays of (m00, m01, m10, m11, tx, ty)."""
    a00, a01, a10, a11, atx, aty = aff.T
    b00, b01, b10, b11, btx, bty = maps.T
    return np.stack([
        a00 * b00 + a01 * b10,
        a00 * b01 + a01 * b11,
        a10 * b00 + a11 * b10,
        a10 * b01 + a11 * b11,
        a00 * btx + a01 * bty + atx,
        a10 * btx + a11 * bty + aty,
    ], axis=1)


def _sides(aff: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.abs(aff[:, 0]) + np.abs(aff[:, 1]), np.abs(aff[:, 2]) + np.abs(aff[:, 3])


def _rects(aff: np.ndarray) -> np.ndarray:
    """(n, 4) array of x0, x1, y0, y1."""
    m00, m01, m10, m11, tx, ty = aff.T
    return np.stack([
        tx + np.minimum(m00, 0) + np.minimum(m01, 0),
        tx + np.maximum(m00, 0) + np.maximum(m01, 0),
        ty + np.minimum(m10, 0) + np.minimum(m11, 0),
        ty + np.maximum(m10, 0) + np.maximum(m11, 0),
    ], axis=1)


def stopped_rects(rifs: Rifs, realization, delta: float, rule: Rule | str = Rule.LONG_SIDE) -> np.ndarray:
    """Rectangles of the delta-stopping of a realisation, as an (n, 4) array."""
    rule = Rule(rule)
    offsets, table = _map_table(rifs)
    depth = _depth(realization)
    aff = np.array([[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]])
    nodes = np.zeros(1, dtype=np.int64)
    done = []
    thresh = delta * (1 + LOG_EPS)
    for d in range(depth + 1):
        w, h = _sides(aff)
        side = np.maximum(w, h) if rule is Rule.LONG_SIDE else np.minimum(w, h)
        stop = side <= thresh
        done.append(aff[stop])
        aff, nodes = aff[~stop], nodes[~stop]
        if len(aff) == 0:
            break
        if d == depth:
            raise ShallowRealization(
                f"realisation depth {depth} too small for delta={delta:g}; "
                f"need up to {required_depth(rifs, delta, rule)} levels"
            )
        parent, ifs, slot, child = _children(rifs, realization, d, nodes)
        aff = _compose(aff[parent], table[offsets[ifs] + slot])
        nodes = child
    return _rects(np.concatenate(done)) if done else np.zeros((0, 4))


def level_rects(rifs: Rifs, realization, depth: int) -> np.ndarray:
    """All live rectangles on one level of a realisation."""
    offsets, table = _map_table(rifs)
    aff = np.array([[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]])
    nodes = np.zeros(1, dtype=np.int64)
    for d in range(depth):
        parent, ifs, slot, child = _children(rifs, realization, d, nodes)
        aff = _compose(aff[parent], table[offsets[ifs] + slot])
        nodes = child
    return _rects(aff)


def _cell_range(lo: np.ndarray, hi: np.ndarray, cells: int) -> tuple[np.ndarray, np.ndarray]:
    """First and last grid index whose open interior meets [lo, hi]."""
    a, b = lo * cells, hi * cells
    a = np.where(np.abs(a - np.round(a)) < 1e-9, np.round(a), a)
    b = np.where(np.abs(b - np.round(b)) < 1e-9, np.round(b), b)
    first = np.floor(a).astype(np.int64)
    last = np.ceil(b).astype(np.int64) - 1
    last = np.maximum(last, first)  # degenerate (zero length) intervals keep one cell
    return np.clip(first, 0, cells - 1), np.clip(last, 0, cells - 1)


def count_cells(rects: np.ndarray, j: int) -> int:
    """Number of cells of the 2**-j mesh whose interior meets some rectangle.

    Each rectangle is assumed to have sides <= 2**-j so it meets at most
    two columns and two rows.
    """
    if len(rects) == 0:
        return 0
    cells = 1 << j
    c0, c1 = _cell_range(rects[:, 0], rects[:, 1], cells)
    r0, r1 = _cell_range(rects[:, 2], rects[:, 3], cells)
    if np.any(c1 - c0 > 1) or np.any(r1 - r0 > 1):
        raise ValueError("rectangle wider than one mesh cell")
    codes = []
    for c in (c0, c1):
        for r in (r0, r1):
            codes.append(c * cells + r)
    return int(len(np.unique(np.concatenate(codes))))


def box_count(rifs: Rifs, realization, delta: float) -> int:
    """Marked cells of the delta mesh (delta = 2**-j) over the LongSide stopping."""
    j = round(-math.log2(delta))
    if not math.isclose(2.0**-j, delta, rel_tol=1e-12):
        raise ValueError(f"delta must be a power of two (got {delta})")
    return count_cells(stopped_rects(rifs, realization, delta, Rule.LONG_SIDE), j)


@dataclass(frozen=True)
class BoxCountSeries:
    js: tuple[int, ...]
    counts: tuple[int, ...]
    descriptor: dict = field(default_factory=dict)

    @property
    def deltas(self) -> tuple[float, ...]:
        return tuple(2.0**-j for j in self.js)

    def to_csv(self) -> str:
        lines = ["# j,count"] + [f"{j},{c}" for j, c in zip(self.js, self.counts)]
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def box_count_series(rifs: Rifs, realization, j_min: int = 6, j_max: int = 12,
                     descriptor: dict | None = None) -> BoxCountSeries:
    js = tuple(range(j_min, j_max + 1))
    counts = tuple(box_count(rifs, realization, 2.0**-j) for j in js)
    return BoxCountSeries(js, counts, dict(descriptor or {}))


def empirical_dim(series: BoxCountSeries, confidence: float = 0.95) -> tuple[float, float]:
    """OLS slope of log2(count) on j and the half-width of its confidence interval."""
    if len(series.js) < 4:
        raise ValueError("need at least 4 points")
    y = np.log2(np.asarray(series.counts, dtype=float))
    if np.ptp(y) == 0:
        raise ValueError("counts are constant; the slope is degenerate")
    fit = stats.linregress(np.asarray(series.js, dtype=float), y)
    t = stats.t.ppf(0.5 + confidence / 2, len(y) - 2)
    return float(fit.slope), float(t * fit.stderr)


# ---------------------------------------------------------------------------
# rendering

MAX_RESOLUTION = 1 << 13


def auto_depth(rifs: Rifs, realization, resolution: int) -> int:
    """Deepest level whose rectangles are all at least one pixel thick."""
    offsets, table = _map_table(rifs)
    aff = np.array([[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]])
    nodes = np.zeros(1, dtype=np.int64)
    depth = _depth(realization)
    for d in range(depth):
        parent, ifs, slot, child = _children(rifs, realization, d, nodes)
        if len(parent) == 0:
            return d + 1  # extinct: the empty level renders white
        nxt = _compose(aff[parent], table[offsets[ifs] + slot])
        w, h = _sides(nxt)
        if np.min(np.minimum(w, h)) * resolution < 1 - 1e-9:
            return d
        aff, nodes = nxt, child
    return depth


def raster(rects: np.ndarray, resolution: int) -> np.ndarray:
    """Boolean image; True where a rectangle contains the pixel centre.  Row 0 is the top."""
    img = np.zeros((resolution + 1, resolution + 1), dtype=np.int64)
    if len(rects):
        r = resolution
        c0 = np.ceil(rects[:, 0] * r - 0.5 - 1e-9).astype(np.int64)
        c1 = np.floor(rects[:, 1] * r - 0.5 + 1e-9).astype(np.int64)
        # rows count downwards from y = 1
        w0 = np.ceil((1 - rects[:, 3]) * r - 0.5 - 1e-9).astype(np.int64)
        w1 = np.floor((1 - rects[:, 2]) * r - 0.5 + 1e-9).astype(np.int64)
        c0, w0 = np.clip(c0, 0, r), np.clip(w0, 0, r)
        c1, w1 = np.clip(c1, -1, r - 1), np.clip(w1, -1, r - 1)
        ok = (c0 <= c1) & (w0 <= w1)
        c0, c1, w0, w1 = c0[ok], c1[ok], w0[ok], w1[ok]
        np.add.at(img, (w0, c0), 1)
        np.add.at(img, (w0, c1 + 1), -1)
        np.add.at(img, (w1 + 1, c0), -1)
        np.add.at(img, (w1 + 1, c1 + 1), 1)
    return img.cumsum(axis=0).cumsum(axis=1)[:resolution, :resolution] > 0


def to_pgm(mask: np.ndarray) -> bytes:
    h, w = mask.shape
    pixels = np.where(mask, 0, 255).astype(np.uint8)
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def render(rifs: Rifs, realization, resolution: int, depth: int | None = None) -> bytes:
    """Binary PGM of a level-``depth`` prefractal (auto depth by default)."""
    if not 1 <= resolution <= MAX_RESOLUTION:
        raise ValueError(f"resolution must lie in 1..{MAX_RESOLUTION}")
    if depth is None:
        depth = auto_depth(rifs, realization, resolution)
    depth = min(depth, _depth(realization))
    return to_pgm(raster(level_rects(rifs, realization, depth), resolution))


__all__ = [
    "BoxCountSeries",
    "Rule",
    "ShallowRealization",
    "StoppingSet",
    "box_count",
    "box_count_series",
    "count_cells",
    "empirical_dim",
    "render",
    "stopped_rects",
    "stopping_set",
]
