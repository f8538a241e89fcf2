"""Dimensions of the horizontal and vertical projections.

Without swapping maps each axis carries its own self-similar random system
(ratio ``a`` on x, ``b`` on y).  With swapping maps the two axes are coupled
into a random graph-directed system on the vertices (H, V): a non-swapping
map gives the loops H->H (ratio a) and V->V (ratio b), a swapping map the
edges H->V (ratio a) and V->H (ratio b).  Identical induced maps inside one
edge set are merged, which is what turns stacked cells of a grid into a
single column.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .rifs import Rifs, Scalar, has_swaps, is_exact, scalar_lt
from .rng import replica_generator
from .roots import bisect_decreasing
from .sampling import draw_labels

H, V = 0, 1
AXES = {"x": H, "y": V}


class ProjKind(str, Enum):
    SEPARATED = "separated"
    GRAPH = "graph"


class ProjMethod(str, Enum):
    CLOSED_FORM = "closed_form"
    LYAPUNOV = "lyapunov"
    SPECTRAL = "spectral"


@dataclass(frozen=True)
class InducedMap:
    ratio: Scalar
    translation: Scalar
    sign: int

    def interval(self) -> tuple[Scalar, Scalar]:
        if self.sign > 0:
            return self.translation, self.translation + self.ratio
        return self.translation - self.ratio, self.translation

    def key(self):
        def k(x):
            return x if is_exact(x) else round(float(x), 12)

        return (k(self.ratio), k(self.translation), self.sign)


@dataclass(frozen=True)
class ProjectedSystem:
    kind: ProjKind
    # edges[i][(v, w)] -> deduplicated induced maps from vertex v to w for IFS i
    edges: tuple[dict, ...]
    sizes: tuple[int, ...]
    warnings: tuple[str, ...] = ()

    def ratios(self, i: int, v: int, w: int) -> tuple[float, ...]:
        return tuple(float(m.ratio) for m in self.edges[i].get((v, w), ()))

    def axis_ratios(self, axis: str) -> list[tuple[float, ...]]:
        """Per-IFS ratios of one axis (separated systems only)."""
        if self.kind is not ProjKind.SEPARATED:
            raise ValueError("axis ratios are only defined for separated projections")
        z = AXES[axis]
        return [self.ratios(i, z, z) for i in range(len(self.edges))]

    def matrices(self, s: float) -> np.ndarray:
        """M(i, s)[v, w] = sum of r**s over the edges v -> w of IFS i."""
        out = np.zeros((len(self.edges), 2, 2))
        for i, es in enumerate(self.edges):
            for (v, w), maps in es.items():
                out[i, v, w] = sum(float(m.ratio) ** s for m in maps)
        return out


def _induced(f) -> tuple[tuple[int, int, InducedMap], tuple[int, int, InducedMap]]:
    x_map = InducedMap(f.a, f.u, f.sign_x)
    y_map = InducedMap(f.b, f.v, f.sign_y)
    if f.swap:
        return (H, V, x_map), (V, H, y_map)
    return (H, H, x_map), (V, V, y_map)


def build_projection(rifs: Rifs) -> ProjectedSystem:
    kind = ProjKind.GRAPH if has_swaps(rifs) else ProjKind.SEPARATED
    edges, warnings = [], []
    for i, ifs in enumerate(rifs.ifss):
        sets: dict[tuple[int, int], dict] = {}
        for f in ifs:
            for v, w, m in _induced(f):
                sets.setdefault((v, w), {}).setdefault(m.key(), m)
        es = {vw: tuple(d.values()) for vw, d in sets.items()}
        for (v, w), maps in es.items():
            for p in range(len(maps)):
                for q in range(p + 1, len(maps)):
                    (a0, a1), (b0, b1) = maps[p].interval(), maps[q].interval()
                    if scalar_lt(a0, b1) and scalar_lt(b0, a1):
                        warnings.append(
                            f"IFS {i}: induced maps on edge {'HV'[v]}->{'HV'[w]} overlap partially"
                        )
        edges.append(es)
    return ProjectedSystem(kind, tuple(edges), tuple(rifs.sizes), tuple(dict.fromkeys(warnings)))


@dataclass(frozen=True)
class ProjDim:
    s_x: float
    s_y: float
    method: ProjMethod
    stderr: float = 0.0
    raw_x: float = float("nan")
    raw_y: float = float("nan")
    flags: tuple[str, ...] = field(default=())

    @property
    def exact(self) -> bool:
        return self.method is not ProjMethod.LYAPUNOV

    def to_dict(self) -> dict:
        unc = "exact" if self.exact else self.stderr
        return {
            "s_x": {"value": self.s_x, "uncertainty": unc},
            "s_y": {"value": self.s_y, "uncertainty": unc},
            "method": self.method.value,
            "raw_x": self.raw_x,
            "raw_y": self.raw_y,
            "flags": list(self.flags),
        }


def _clamp(raw: float, below: bool, axis: str, flags: list) -> float:
    if below or raw <= 0:
        flags.append(f"{axis}: root at or below 0, clamped to 0")
        return 0.0
    if raw > 1:
        flags.append(f"{axis}: root {raw:.6g} exceeds 1, clamped to 1")
        return 1.0
    return raw


def moran_root(ratios, tol: float = 1e-12) -> float:
    """Solution of sum r**s = 1 (deterministic self-similar dimension)."""
    r = np.asarray(ratios, dtype=float)
    root = bisect_decreasing(lambda s: float(np.sum(r**s)) - 1.0, tol=tol)
    return root.value


def proj_dim_1var(
    ps: ProjectedSystem,
    probs,
    k: int = 10_000,
    reps: int = 64,
    seed: int = 0,
    tol: float | None = None,
) -> ProjDim:
    """Almost sure projection dimensions of the one-variable carpet."""
    p = np.array([float(x) for x in probs])
    flags: list[str] = []
    if ps.kind is ProjKind.SEPARATED:
        tol = 1e-12 if tol is None else tol
        raws, vals = [], []
        for axis in ("x", "y"):
            ratio_sets = [np.asarray(r) for r in ps.axis_ratios(axis)]
            if any(len(r) == 0 for r in ratio_sets):
                raise ValueError("empty IFS in a one-variable system")

            def f(s, ratio_sets=ratio_sets):
                return float(sum(pi * math.log(np.sum(r**s)) for pi, r in zip(p, ratio_sets)))

            root = bisect_decreasing(f, tol=tol)
            raws.append(root.value)
            vals.append(_clamp(root.value, root.below_bracket, axis, flags))
        return ProjDim(vals[0], vals[1], ProjMethod.CLOSED_FORM, 0.0, raws[0], raws[1], tuple(flags))

    tol = 1e-3 if tol is None else tol
    est = LyapunovEstimator(ps, p, k, reps, seed)
    root = bisect_decreasing(est.mean, tol=tol)
    stderr = est.root_stderr(root.value) if not root.below_bracket else 0.0
    val = _clamp(root.value, root.below_bracket, "x=y", flags)
    return ProjDim(val, val, ProjMethod.LYAPUNOV, stderr, root.value, root.value, tuple(flags))


class LyapunovEstimator:
    """Top Lyapunov exponent of random products of M(i, s).

    The letter sequences are drawn once, so every evaluation in s reuses the
    same products and the estimate is a smooth decreasing function of s.
    """

    RENORM_EVERY = 32

    def __init__(self, ps: ProjectedSystem, probs: np.ndarray, k: int, reps: int, seed: int):
        self.ps = ps
        self.k = k
        cdf = np.cumsum(probs)
        cdf[-1] = 1.0
        self.letters = np.stack(
            [draw_labels(replica_generator(seed, r), cdf, k) for r in range(reps)]
        )

    def per_replica(self, s: float) -> np.ndarray:
        m = self.ps.matrices(s)
        g = [m[:, a, b][self.letters] for a in (0, 1) for b in (0, 1)]
        m00, m01, m10, m11 = g
        reps = self.letters.shape[0]
        v0, v1 = np.ones(reps), np.ones(reps)
        acc = np.zeros(reps)
        for t in range(self.k):
            v0, v1 = v0 * m00[:, t] + v1 * m10[:, t], v0 * m01[:, t] + v1 * m11[:, t]
            if (t + 1) % self.RENORM_EVERY == 0:
                norm = v0 + v1
                acc += np.log(norm)
                v0, v1 = v0 / norm, v1 / norm
        acc += np.log(v0 + v1)
        return acc / self.k

    def mean(self, s: float) -> float:
        return float(np.mean(self.per_replica(s)))

    def root_stderr(self, s: float, h: float = 1e-3) -> float:
        vals = self.per_replica(s)
        se = float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
        slope = (self.mean(s + h) - self.mean(max(s - h, 0.0))) / (s + h - max(s - h, 0.0))
        return se / abs(slope) if slope != 0 else float("inf")


def spectral_radius_2x2(m: np.ndarray) -> float:
    tr = m[0, 0] + m[1, 1]
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    disc = max(tr * tr - 4 * det, 0.0)
    return 0.5 * (tr + math.sqrt(disc))


def proj_dim_infty(ps: ProjectedSystem, probs, tol: float = 1e-12) -> ProjDim:
    """Almost sure projection dimensions of the infinite-variable carpet."""
    p = np.array([float(x) for x in probs])
    flags: list[str] = []
    mean = float(np.dot(p, ps.sizes))
    if mean <= 1:
        flags.append(f"subcritical: expected offspring {mean:.6g} <= 1")
    if ps.kind is ProjKind.SEPARATED:
        raws, vals = [], []
        for axis in ("x", "y"):
            ratio_sets = [np.asarray(r) for r in ps.axis_ratios(axis)]

            def f(s, ratio_sets=ratio_sets):
                return float(sum(pi * np.sum(r**s) for pi, r in zip(p, ratio_sets))) - 1.0

            root = bisect_decreasing(f, tol=tol)
            raws.append(root.value)
            vals.append(_clamp(root.value, root.below_bracket, axis, flags))
        return ProjDim(vals[0], vals[1], ProjMethod.CLOSED_FORM, 0.0, raws[0], raws[1], tuple(flags))

    def g(s):
        return spectral_radius_2x2(np.tensordot(p, ps.matrices(s), axes=1)) - 1.0

    root = bisect_decreasing(g, tol=tol)
    val = _clamp(root.value, root.below_bracket, "x=y", flags)
    return ProjDim(val, val, ProjMethod.SPECTRAL, 0.0, root.value, root.value, tuple(flags))


def projection_dims(rifs: Rifs, model: str, **opts) -> ProjDim:
    ps = build_projection(rifs)
    if model == "one_var":
        return proj_dim_1var(ps, rifs.probs, **opts)
    if model == "infty_var":
        return proj_dim_infty(ps, rifs.probs)
    raise ValueError(f"unknown model {model!r}")


__all__ = [
    "InducedMap",
    "LyapunovEstimator",
    "ProjDim",
    "ProjKind",
    "ProjMethod",
    "ProjectedSystem",
    "build_projection",
    "moran_root",
    "proj_dim_1var",
    "proj_dim_infty",
    "projection_dims",
    "spectral_radius_2x2",
]
