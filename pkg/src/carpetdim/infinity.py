"""Infinite-variable (random recursive) carpets: level sums over coding trees,
the expectation criterion, the additive closed form and fractal percolation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import logsumexp

from .pressure import DimResult, MsvfContext, _additive_terms, log_msvf, long_axis
from .projection import build_projection, proj_dim_infty
from .rifs import BoxLikeMap, Ifs, Rifs, SpecError, classify_separation, expected_offspring, scalar_le
from .rng import mix, generator
from .roots import bisect_decreasing
from .sampling import CodingTree, extinction_prob

TREE_BATCH = 256
COUNT_LIMIT = 1 << 60


class ExtinctionError(SpecError):
    """Mean offspring <= 1, so the random construction dies out almost surely."""


def context_infty(rifs: Rifs) -> MsvfContext:
    proj = proj_dim_infty(build_projection(rifs), rifs.probs)
    return MsvfContext(proj.s_x, proj.s_y, classify_separation(rifs))


def require_supercritical(rifs: Rifs) -> None:
    mean = expected_offspring(rifs)
    if scalar_le(mean, 1):
        raise ExtinctionError(f"extinction almost sure (expected offspring {float(mean):.6g} <= 1)")


# ---------------------------------------------------------------------------
# explicit trees


@dataclass(frozen=True)
class TreeLevelSum:
    k: int
    y_value: float
    tree_seed: int


def tree_geometry(rifs: Rifs, tree: CodingTree):
    """Per level arrays (log_w, log_h, parity) of the rectangles of the live nodes."""
    la = [np.log([float(f.a) for f in ifs]) if len(ifs) else np.zeros(0) for ifs in rifs.ifss]
    lb = [np.log([float(f.b) for f in ifs]) if len(ifs) else np.zeros(0) for ifs in rifs.ifss]
    sw = [np.array([f.swap for f in ifs], dtype=bool) for ifs in rifs.ifss]
    offsets = np.concatenate(([0], np.cumsum(rifs.sizes)))
    flat_a, flat_b = np.concatenate(la), np.concatenate(lb)
    flat_s = np.concatenate(sw) if sum(rifs.sizes) else np.zeros(0, dtype=bool)
    out = [(np.zeros(1), np.zeros(1), np.zeros(1, dtype=bool))]
    for d in range(1, tree.depth + 1):
        lv, prev = tree.levels[d], tree.levels[d - 1]
        pw, ph, pp = out[-1]
        w, h, par = pw[lv.parent], ph[lv.parent], pp[lv.parent]
        idx = offsets[prev.labels[lv.parent]] + lv.slot
        a, b, s = flat_a[idx], flat_b[idx], flat_s[idx]
        out.append((w + np.where(par, b, a), h + np.where(par, a, b), par ^ s))
    return out


def tree_psi_sum(rifs: Rifs, tree: CodingTree, s: float, ctx: MsvfContext) -> list[TreeLevelSum]:
    """Y_k for every level k of an explicit tree; extinct levels give 0."""
    out = []
    for k, (w, h, _) in enumerate(tree_geometry(rifs, tree)):
        y = float(np.sum(np.exp(log_msvf(w, h, s, ctx)))) if len(w) else 0.0
        out.append(TreeLevelSum(k, y, tree.seed))
    return out


# ---------------------------------------------------------------------------
# grouped simulation of many trees


@dataclass(frozen=True)
class LevelProfile:
    """Live rectangles of one level for a batch of trees, grouped by shape."""

    tree: np.ndarray
    log_w: np.ndarray
    log_h: np.ndarray
    count: np.ndarray
    trees: int

    def y_values(self, s: float, ctx: MsvfContext) -> np.ndarray:
        """Y(s) per tree as (scaled sums, log scale) so that the range stays safe."""
        if len(self.count) == 0:
            return np.zeros(self.trees), 0.0
        lt = np.log(self.count.astype(float)) + log_msvf(self.log_w, self.log_h, s, ctx)
        shift = float(lt.max())
        return np.bincount(self.tree, weights=np.exp(lt - shift), minlength=self.trees), shift

    def root_values(self, s: float, ctx: MsvfContext, k: int) -> np.ndarray:
        """Y(s)**(1/k) per tree (0 for trees extinct at this level)."""
        if len(self.count) == 0:
            return np.zeros(self.trees)
        y, shift = self.y_values(s, ctx)
        with np.errstate(divide="ignore"):
            return np.exp((np.log(y) + shift) / k)


class _Shapes:
    def __init__(self, rifs: Rifs):
        shapes: dict = {}
        rows = []
        for ifs in rifs.ifss:
            row: dict = {}
            for f in ifs:
                d = shapes.setdefault((f.a, f.b, f.swap), len(shapes))
                row[d] = row.get(d, 0) + 1
            rows.append(row)
        self.incidence = np.zeros((rifs.n, max(1, len(shapes))), dtype=np.int64)
        for i, row in enumerate(rows):
            for d, c in row.items():
                self.incidence[i, d] = c
        keys = list(shapes) or [(1, 1, False)]
        self.la = np.log([float(a) for a, _, _ in keys])
        self.lb = np.log([float(b) for _, b, _ in keys])
        self.swap = np.array([s for _, _, s in keys], dtype=bool)


def simulate_levels(rifs: Rifs, depth: int, trees: int, seed: int, keep=None) -> dict[int, LevelProfile]:
    """Grouped simulation of ``trees`` independent coding trees to ``depth``.

    Nodes of a tree sharing a rectangle shape are kept as one row with a
    count.  Their labels are drawn as one multinomial, and the children of a
    shape are produced by a single label-count by incidence product, which
    has the same law as labelling every node separately.  Trees are handled
    in batches of TREE_BATCH; batch b draws from the stream mix(seed, b).
    Returns the profiles of the levels listed in ``keep`` (default: all).
    """
    keep = set(range(depth + 1)) if keep is None else set(keep)
    shapes = _Shapes(rifs)
    probs = np.asarray(rifs.float_probs())
    probs = probs / probs.sum()
    parts: dict[int, list] = {d: [] for d in keep}
    for b, start in enumerate(range(0, trees, TREE_BATCH)):
        n = min(TREE_BATCH, trees - start)
        rng = generator(mix(seed, b))
        tree = np.arange(n)
        lw, lh = np.zeros(n), np.zeros(n)
        par = np.zeros(n, dtype=bool)
        cnt = np.ones(n, dtype=np.int64)
        for d in range(depth + 1):
            if d in keep:
                parts[d].append((tree + start, lw, lh, cnt))
            if d == depth:
                break
            labels = rng.multinomial(cnt, probs)
            kids = labels @ shapes.incidence
            if kids.size and int(kids.max()) > COUNT_LIMIT:
                raise OverflowError("node counts too large for 64-bit integers; lower the depth")
            p = par[:, None]
            nw = lw[:, None] + np.where(p, shapes.lb, shapes.la)
            nh = lh[:, None] + np.where(p, shapes.la, shapes.lb)
            npar = p ^ shapes.swap
            nt = np.broadcast_to(tree[:, None], kids.shape)
            live = kids > 0
            tree, lw, lh, par, cnt = _merge(nt[live], nw[live], nh[live], npar[live], kids[live])
    out = {}
    for d, chunks in parts.items():
        if chunks:
            t, w, h, c = (np.concatenate(x) for x in zip(*chunks))
        else:
            t = w = h = c = np.zeros(0)
        out[d] = LevelProfile(t.astype(np.int64), w, h, c.astype(np.int64), trees)
    return out


def _merge(tree, lw, lh, par, cnt):
    if len(tree) == 0:
        return tree, lw, lh, par, cnt
    key = np.stack([tree, np.round(lw * 1e9).astype(np.int64),
                    np.round(lh * 1e9).astype(np.int64), par.astype(np.int64)], axis=1)
    uniq, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
    total = np.zeros(len(uniq), dtype=np.int64)
    np.add.at(total, inv.ravel(), cnt)
    return tree[first], lw[first], lh[first], par[first], total


def expected_root_mean(
    rifs: Rifs,
    s: float,
    k: int,
    reps: int,
    seed: int,
    ctx: MsvfContext | None = None,
    conditional: bool = False,
) -> tuple[float, float]:
    """Monte Carlo estimate of E[Y_k(s)**(1/k)] and its standard error.

    Extinct trees contribute 0 unless ``conditional`` restricts the mean to
    trees alive at level k.
    """
    ctx = context_infty(rifs) if ctx is None else ctx
    level = simulate_levels(rifs, k, reps, seed, keep=[k])[k]
    z = level.root_values(s, ctx, k)
    if conditional:
        z = z[z > 0]
    if len(z) < 2:
        raise ExtinctionError("fewer than two surviving trees")
    return float(np.mean(z)), float(np.std(z, ddof=1) / math.sqrt(len(z)))


class _ExpectationProblem:
    """Linear extrapolation in 1/k of the mean of Y**(1/k) from levels k1 < k."""

    def __init__(self, levels: dict, k1: int, k: int, ctx: MsvfContext, conditional: bool):
        self.levels, self.k1, self.k, self.ctx = levels, k1, k, ctx
        alive = levels[k].root_values(0.0, ctx, k) > 0
        self.mask = alive if conditional else np.ones_like(alive)

    def per_tree(self, s: float, depth: int) -> np.ndarray:
        return self.levels[depth].root_values(s, self.ctx, depth)[self.mask]

    def extrapolated(self, s: float) -> np.ndarray:
        zk, z1 = self.per_tree(s, self.k), self.per_tree(s, self.k1)
        return (self.k * zk - self.k1 * z1) / (self.k - self.k1)

    def __call__(self, s: float) -> float:
        return float(np.mean(self.extrapolated(s))) - 1.0

    def at_depth(self, s: float) -> float:
        return float(np.mean(self.per_tree(s, self.k))) - 1.0


def dim_infty(
    rifs: Rifs,
    k: int = 16,
    trees: int = 10_000,
    seed: int = 0,
    tol: float = 1e-4,
    conditional: bool = True,
) -> DimResult:
    """Root of the expectation criterion for the infinite-variable carpet.

    Trees are simulated once to depth k; the mean of Y_j(s)**(1/j) at
    j = k//2 and j = k is extrapolated linearly in 1/j and the root in s of
    the extrapolated mean minus 1 is found by bisection.  By default the mean
    runs over trees alive at level k.  The uncertainty combines the Monte
    Carlo error of the root with the shift that the extrapolation applied.
    """
    require_supercritical(rifs)
    if k < 2:
        raise ValueError("k must be at least 2")
    ctx = context_infty(rifs)
    k1 = k // 2
    levels = simulate_levels(rifs, k, trees, seed, keep=[k1, k])
    problem = _ExpectationProblem(levels, k1, k, ctx, conditional)
    survivors = int(problem.mask.sum())
    if survivors < 2:
        raise ExtinctionError("fewer than two trees survived to the requested depth")
    root = bisect_decreasing(problem, tol=tol)
    plain = bisect_decreasing(problem.at_depth, tol=tol)
    flags = []
    if root.below_bracket:
        flags.append("expected root mean <= 1 at s = 0")
    h = 1e-4
    z = problem.extrapolated(root.value)
    slope = (problem(root.value + h) - problem(root.value - h)) / (2 * h)
    mc = float(np.std(z, ddof=1) / math.sqrt(len(z))) / abs(slope)
    residual = abs(root.value - plain.value)
    q = extinction_prob(rifs)
    details = {
        "k": k,
        "k_half": k1,
        "trees": trees,
        "survivors": survivors,
        "conditional": conditional,
        "mc_stderr": mc,
        "extrapolation_residual": residual,
        "root_at_depth": plain.value,
        "extinction_q": q.q,
    }
    return DimResult(root.value, math.hypot(mc, residual, tol), "expectation-mc", ctx.s_x, ctx.s_y,
                     details, tuple(flags))


def dim_infty_additive(rifs: Rifs, tol: float = 1e-12) -> DimResult:
    """Closed form: sum_i p_i sum_e alpha_M^sbar alpha_m^(s - sbar) = 1."""
    require_supercritical(rifs)
    axis = long_axis(rifs)
    proj = proj_dim_infty(build_projection(rifs), rifs.probs)
    sbar = proj.s_x if axis == "x" else proj.s_y
    terms = _additive_terms(rifs, axis)
    p = rifs.float_probs()

    def f(s):
        logs = [math.log(pi) + float(logsumexp(sbar * lM + (s - sbar) * lm))
                for pi, (lM, lm) in zip(p, terms) if len(lM)]
        return float(logsumexp(logs))

    root = bisect_decreasing(f, tol=tol)
    return DimResult(root.value, "exact", "additive-closed-form", proj.s_x, proj.s_y,
                     {"long_axis": axis}, proj.flags)


# ---------------------------------------------------------------------------
# fractal percolation


@dataclass(frozen=True)
class PercolationSpec:
    """Keep each cell of an n-column, m-row grid independently with prob p."""

    n: int
    m: int
    p_retain: Fraction | float

    def __post_init__(self):
        if self.n < 2 or self.m < 2:
            raise SpecError("percolation needs n, m >= 2 so that cells are strict contractions")
        if not 0 < self.p_retain <= 1:
            raise SpecError("retention probability must lie in (0, 1]")


MAX_PRESET_CELLS = 16


def percolation_preset(spec: PercolationSpec) -> Rifs:
    """One IFS per subset of cells, with binomial probabilities.

    Subsets are listed in increasing bitmask order (bit c*m + r is cell
    (c, r)); subsets of probability zero are left out.
    """
    n, m, p = spec.n, spec.m, spec.p_retain
    cells = n * m
    if cells > MAX_PRESET_CELLS:
        raise SpecError(f"enumerated preset limited to {MAX_PRESET_CELLS} cells (got {cells})")
    grid = [BoxLikeMap(Fraction(1, n), Fraction(1, m), u=Fraction(c, n), v=Fraction(r, m))
            for c in range(n) for r in range(m)]
    ifss, probs = [], []
    for mask in range(1 << cells):
        size = bin(mask).count("1")
        prob = p**size * (1 - p) ** (cells - size)
        if prob == 0:
            continue
        ifss.append(Ifs(tuple(grid[j] for j in range(cells) if mask >> j & 1)))
        probs.append(prob)
    return Rifs(tuple(ifss), tuple(probs))


def percolation_dim(spec: PercolationSpec) -> DimResult:
    """Closed form for fractal percolation on an n by m grid."""
    n, m, p = spec.n, spec.m, float(spec.p_retain)
    if n * m * p <= 1:
        raise ExtinctionError(f"extinction almost sure (n*m*p = {n * m * p:.6g} <= 1)")
    # the long side of every cell is the side of length 1/min(n, m)
    wide, tall = (n, m) if n <= m else (m, n)
    flags = []
    raw = math.log(wide * (1 - (1 - p) ** tall)) / math.log(wide)
    s_long = min(max(raw, 0.0), 1.0)
    if s_long != raw:
        flags.append(f"projection dimension {raw:.6g} clamped to [0, 1]")
    s = s_long + (math.log(n * m * p) - s_long * math.log(wide)) / math.log(tall)
    # the short-side projection does not enter the formula but is reported
    s_short_raw = math.log(tall * (1 - (1 - p) ** wide)) / math.log(tall)
    s_short = min(max(s_short_raw, 0.0), 1.0)
    s_x, s_y = (s_long, s_short) if n <= m else (s_short, s_long)
    return DimResult(s, "exact", "percolation-closed-form", s_x, s_y,
                     {"n": n, "m": m, "p": p}, tuple(flags))


__all__ = [
    "ExtinctionError",
    "LevelProfile",
    "PercolationSpec",
    "TreeLevelSum",
    "context_infty",
    "dim_infty",
    "dim_infty_additive",
    "expected_root_mean",
    "percolation_dim",
    "percolation_preset",
    "simulate_levels",
    "tree_geometry",
    "tree_psi_sum",
]
