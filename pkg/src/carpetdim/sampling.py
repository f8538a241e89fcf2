"""Random realisations: letter sequences (one-variable) and coding trees."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .rifs import Rifs, expected_offspring, scalar_eq, scalar_lt
from .rng import generator, replica_generator

MAX_TREE_NODES = 10**6


def _cdf(rifs: Rifs) -> np.ndarray:
    cdf = np.cumsum(rifs.float_probs())
    cdf[-1] = 1.0
    return cdf


def draw_labels(rng: np.random.Generator, cdf: np.ndarray, size: int) -> np.ndarray:
    u = rng.random(size)
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)


@dataclass(frozen=True)
class WordSample:
    """IFS indices for levels 1..k of a one-variable realisation."""

    letters: tuple[int, ...]
    seed: int
    k: int

    def __len__(self) -> int:
        return self.k


def sample_word(rifs: Rifs, k: int, seed: int) -> WordSample:
    """i.i.d. letters with law ``rifs.probs``.

    Letter j only depends on the j-th uniform of the stream, so a longer
    sample with the same seed extends a shorter one.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    letters = draw_labels(generator(seed), _cdf(rifs), k)
    return WordSample(tuple(int(x) for x in letters), seed, k)


@dataclass(frozen=True)
class TreeLevel:
    labels: np.ndarray  # IFS index of every live node on this level
    parent: np.ndarray  # index of the parent on the previous level
    slot: np.ndarray  # map index, within the parent's IFS, of the edge above

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class CodingTree:
    """Pruned labelled tree of an infinite-variable realisation.

    Level 0 holds the root.  A node labelled i has exactly ``#IFS_i``
    children, stored contiguously on the next level in map order; branches
    of absent maps are simply not materialised.
    """

    levels: tuple[TreeLevel, ...]
    seed: int
    sizes: tuple[int, ...] = field(default=())

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    def counts(self) -> list[int]:
        return [len(lv) for lv in self.levels]

    def extinct_by(self) -> int | None:
        """First level without live nodes, or None if level ``depth`` is alive."""
        for d, lv in enumerate(self.levels):
            if len(lv) == 0:
                return d
        return None

    def child_offsets(self, d: int) -> np.ndarray:
        """Start index on level d+1 of the children of every node on level d."""
        n_children = np.asarray(self.sizes)[self.levels[d].labels]
        return (np.cumsum(n_children) - n_children).astype(np.int64)

    def letters(self, d: int, index: int) -> tuple[tuple[int, int], ...]:
        """Word of (ifs, map) letters from the root to node ``index`` on level d."""
        out = []
        while d > 0:
            lv = self.levels[d]
            p = int(lv.parent[index])
            out.append((int(self.levels[d - 1].labels[p]), int(lv.slot[index])))
            index, d = p, d - 1
        return tuple(reversed(out))

    def to_nested(self, d: int = 0, index: int = 0):
        """JSON form: ``[label, [child, ...]]``; pruned branches are omitted."""
        label = int(self.levels[d].labels[index])
        if d == self.depth:
            return [label, []]
        start = int(self.child_offsets(d)[index])
        kids = [self.to_nested(d + 1, start + j) for j in range(self.sizes[label])]
        return [label, kids]

    def to_text(self) -> str:
        lines = []

        def walk(d, index, slot):
            label = int(self.levels[d].labels[index])
            tag = "root" if slot is None else f"map {slot}"
            lines.append(f"{'  ' * d}{tag}: ifs {label}")
            if d < self.depth:
                start = int(self.child_offsets(d)[index])
                for j in range(self.sizes[label]):
                    walk(d + 1, start + j, j)

        walk(0, 0, None)
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "depth": self.depth, "tree": self.to_nested()})


def sample_tree(rifs: Rifs, depth: int, seed: int, max_nodes: int = MAX_TREE_NODES) -> CodingTree:
    """Coding tree to ``depth``, materialised level by level."""
    if depth < 0:
        raise ValueError("depth must be non-negative")
    rng = generator(seed)
    cdf = _cdf(rifs)
    sizes = np.asarray(rifs.sizes, dtype=np.int64)
    empty = np.zeros(0, dtype=np.int64)
    levels = [TreeLevel(draw_labels(rng, cdf, 1), empty, empty)]
    for _ in range(depth):
        labels = levels[-1].labels
        n_children = sizes[labels]
        total = int(n_children.sum())
        if total > max_nodes:
            raise MemoryError(f"tree level would hold {total} nodes (cap {max_nodes})")
        parent = np.repeat(np.arange(len(labels)), n_children)
        starts = np.cumsum(n_children) - n_children
        slot = np.arange(total) - np.repeat(starts, n_children)
        levels.append(TreeLevel(draw_labels(rng, cdf, total), parent, slot))
    return CodingTree(tuple(levels), seed, tuple(rifs.sizes))


# ---------------------------------------------------------------------------
# extinction


@dataclass(frozen=True)
class ExtinctionResult:
    q: float
    iterations: int
    residual: float
    critical: bool = False


class ConvergenceError(RuntimeError):
    pass


def offspring_pgf(rifs: Rifs, x: float) -> float:
    return float(sum(float(p) * x ** len(ifs) for p, ifs in zip(rifs.probs, rifs.ifss)))


def extinction_prob(rifs: Rifs, tol: float = 1e-13, max_iter: int = 10**6) -> ExtinctionResult:
    """Smallest fixed point in [0, 1] of the offspring generating function.

    Iterates x <- g(x) from 0.  At exact criticality (mean offspring 1 with
    some variance) the answer is 1 and is returned without iterating.
    """
    sizes = rifs.sizes
    if all(n == 1 for n in sizes):
        return ExtinctionResult(0.0, 0, 0.0)
    mean = expected_offspring(rifs)
    if scalar_eq(mean, Fraction(1)):
        return ExtinctionResult(1.0, 0, 0.0, critical=True)
    x = 0.0
    for it in range(1, max_iter + 1):
        nxt = offspring_pgf(rifs, x)
        if abs(nxt - x) < tol:
            q = nxt
            result = ExtinctionResult(q, it, abs(offspring_pgf(rifs, q) - q))
            supercritical = scalar_lt(Fraction(1), mean)
            assert (q < 1 - 1e-9) == supercritical or abs(float(mean) - 1) < 1e-6, (q, mean)
            return result
        x = nxt
    raise ConvergenceError(
        f"extinction probability did not converge in {max_iter} iterations "
        "(tolerance too small for a near-critical system?)"
    )


def simulate_survival(rifs: Rifs, depth: int, trees: int, seed: int) -> tuple[float, float]:
    """Fraction of trees alive at ``depth`` and its binomial standard error.

    Only population sizes are simulated: the labels of c nodes are a
    multinomial draw, which has the same law as labelling them one by one.
    """
    rng = replica_generator(seed, 0)
    probs = np.asarray(rifs.float_probs())
    probs = probs / probs.sum()
    sizes = np.asarray(rifs.sizes, dtype=np.int64)
    counts = np.ones(trees, dtype=np.int64)
    cap = np.iinfo(np.int64).max // (2 * max(1, sizes.max()))
    for _ in range(depth):
        # a population this large can no longer die out in practice
        counts = np.minimum(counts, min(cap, 10**12))
        labels = rng.multinomial(counts, probs)
        counts = labels @ sizes
    alive = float(np.mean(counts > 0))
    return alive, float(np.sqrt(max(alive * (1 - alive), 1e-300) / trees))
