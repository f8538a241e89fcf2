"""Modified singular value function, the sums Psi, pressure and the
one-variable box dimension.

A k-level word of a realisation only enters Psi through its rectangle
(log width, log height).  Every backend therefore reduces a letter sequence
to a *profile*: arrays ``log_w``, ``log_h`` and ``log_mult`` listing the
distinct rectangles with their (log) multiplicities or importance weights.
A profile is built once per sampled sequence and then reused for every
probe of the root search in s.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import lru_cache, partial

import numpy as np
from scipy.special import logsumexp

from .projection import build_projection, proj_dim_1var, ProjDim
from .rifs import (
    Ifs,
    Rifs,
    Separation,
    SpecError,
    WordGeometry,
    check_uorc,
    classify_separation,
    has_swaps,
    scalar_eq,
    square_system,
)
from .rng import mix, ordered_map, replica_generator
from .roots import bisect_decreasing
from .sampling import sample_word

DEFAULT_BUDGET = 10**7
MC_SAMPLES = 4096
LATTICE_STATES = 5000


@dataclass(frozen=True)
class MsvfContext:
    s_x: float
    s_y: float
    separation: Separation = Separation.SEPARATED

    def __post_init__(self):
        if self.separation is Separation.NON_SEPARATED and abs(self.s_x - self.s_y) > 1e-12:
            raise ValueError("non-separated systems need s_x == s_y")


def log_msvf(log_w, log_h, s: float, ctx: MsvfContext):
    """log of alpha_M**sbar * alpha_m**(s - sbar), vectorised over rectangles."""
    log_w = np.asarray(log_w, dtype=float)
    log_h = np.asarray(log_h, dtype=float)
    horizontal = log_w >= log_h
    sbar = np.where(horizontal, ctx.s_x, ctx.s_y)
    hi = np.maximum(log_w, log_h)
    lo = np.minimum(log_w, log_h)
    return sbar * hi + (s - sbar) * lo


def msvf(geom: WordGeometry, s: float, ctx: MsvfContext) -> float:
    return math.exp(float(log_msvf(geom.log_w, geom.log_h, s, ctx)))


# ---------------------------------------------------------------------------
# profiles


class Backend(str, Enum):
    EXACT = "exact"
    LATTICE = "lattice"
    MC = "mc"
    AUTO = "auto"


class BudgetExceeded(RuntimeError):
    pass


class LatticeUnavailable(RuntimeError):
    pass


@dataclass(frozen=True)
class Profile:
    log_w: np.ndarray
    log_h: np.ndarray
    log_mult: np.ndarray
    backend: Backend

    def log_psi(self, s: float, ctx: MsvfContext) -> float:
        return float(logsumexp(self.log_mult + log_msvf(self.log_w, self.log_h, s, ctx)))

    def psi(self, s: float, ctx: MsvfContext) -> float:
        return math.exp(self.log_psi(s, ctx))

    def __len__(self) -> int:
        return len(self.log_w)


def _shapes(ifs: Ifs) -> list[tuple[float, float, bool, int]]:
    """Distinct (log a, log b, swap) of an IFS with multiplicities."""
    counts: dict = {}
    for f in ifs:
        key = (f.a, f.b, f.swap)
        counts[key] = counts.get(key, 0) + 1
    return [(math.log(a), math.log(b), sw, c) for (a, b, sw), c in counts.items()]


def word_count(rifs: Rifs, word) -> int:
    return math.prod(rifs.sizes[i] for i in word)


def profile_exact(rifs: Rifs, word, budget: int = DEFAULT_BUDGET) -> Profile:
    """Enumerate all level-k words of the realisation (letters outermost first)."""
    total = word_count(rifs, word)
    if total > budget:
        raise BudgetExceeded(
            f"{total} words exceed the enumeration budget {budget}; use the lattice or mc backend"
        )
    lw, lh = np.zeros(1), np.zeros(1)
    lm = np.zeros(1)
    par = np.zeros(1, dtype=bool)
    for i in word:
        shapes = _shapes(rifs.ifss[i])
        la = np.array([s[0] for s in shapes])
        lb = np.array([s[1] for s in shapes])
        sw = np.array([s[2] for s in shapes])
        lc = np.log([s[3] for s in shapes])
        p = par[:, None]
        lw = (lw[:, None] + np.where(p, lb, la)).ravel()
        lh = (lh[:, None] + np.where(p, la, lb)).ravel()
        lm = (lm[:, None] + lc).ravel()
        par = (p ^ sw).ravel()
    return Profile(lw, lh, lm, Backend.EXACT)


@lru_cache(maxsize=4096)
def _factor(n: int) -> dict[int, int]:
    out: dict[int, int] = {}
    d = 2
    while d * d <= n:
        while n % d == 0:
            out[d] = out.get(d, 0) + 1
            n //= d
        d += 1
    if n > 1:
        out[n] = out.get(n, 0) + 1
    return out


def _exponents(x: Fraction) -> dict[int, int]:
    e = dict(_factor(x.numerator))
    for p, k in _factor(x.denominator).items():
        e[p] = e.get(p, 0) - k
    return e


class Lattice:
    """Prime-exponent coordinates for the scales of a rational system.

    Every rational a is prod p**e_p, so log a is an integer vector against
    log p.  Words with equal exponent vectors have equal rectangles, which
    lets Psi be computed by grouping instead of enumerating.
    """

    def __init__(self, rifs: Rifs):
        if not rifs.is_rational():
            raise LatticeUnavailable("lattice backend needs rational scales")
        primes = set()
        for _, _, f in rifs.all_maps():
            primes |= set(_exponents(f.a)) | set(_exponents(f.b))
        self.primes = tuple(sorted(primes))
        self.log_primes = np.log(np.array(self.primes, dtype=float)) if self.primes else np.zeros(0)
        self.shapes = []
        for ifs in rifs.ifss:
            counts: dict = {}
            for f in ifs:
                key = (self.vector(f.a), self.vector(f.b), f.swap)
                counts[key] = counts.get(key, 0) + 1
            self.shapes.append(tuple((ea, eb, sw, c) for (ea, eb, sw), c in counts.items()))

    def vector(self, x: Fraction) -> tuple[int, ...]:
        e = _exponents(x)
        return tuple(e.get(p, 0) for p in self.primes)

    def profile(self, word) -> tuple[Profile, int]:
        """Profile of the realisation and the largest number of DP states seen."""
        dim = len(self.primes)
        states: dict = {((0,) * dim, (0,) * dim, False): 1}
        peak = 1
        for i in word:
            nxt: dict = {}
            for (ew, eh, par), count in states.items():
                for ea, eb, sw, c in self.shapes[i]:
                    if par:
                        key = (_add(ew, eb), _add(eh, ea), par ^ sw)
                    else:
                        key = (_add(ew, ea), _add(eh, eb), par ^ sw)
                    nxt[key] = nxt.get(key, 0) + count * c
            states = nxt
            peak = max(peak, len(states))
        ew = np.array([k[0] for k in states], dtype=float).reshape(len(states), dim)
        eh = np.array([k[1] for k in states], dtype=float).reshape(len(states), dim)
        lm = np.array([math.log(c) for c in states.values()])
        prof = Profile(ew @ self.log_primes, eh @ self.log_primes, lm, Backend.LATTICE)
        return prof, peak


def _add(x: tuple, y: tuple) -> tuple:
    return tuple(p + q for p, q in zip(x, y))


def profile_mc(rifs: Rifs, word, samples: int, seed: int) -> Profile:
    """Uniform random map choices; weights make the sum an unbiased Psi estimate."""
    if samples < 2:
        raise ValueError("need at least 2 samples")
    rng = replica_generator(seed, 1)
    lw, lh = np.zeros(samples), np.zeros(samples)
    par = np.zeros(samples, dtype=bool)
    for i in word:
        ifs = rifs.ifss[i]
        la = np.log([float(f.a) for f in ifs])
        lb = np.log([float(f.b) for f in ifs])
        sw = np.array([f.swap for f in ifs])
        j = rng.integers(0, len(ifs), samples)
        lw, lh = lw + np.where(par, lb[j], la[j]), lh + np.where(par, la[j], lb[j])
        par = par ^ sw[j]
    log_weight = sum(math.log(rifs.sizes[i]) for i in word) - math.log(samples)
    return Profile(lw, lh, np.full(samples, log_weight), Backend.MC)


def psi_sum_exact(rifs: Rifs, word, s: float, ctx: MsvfContext, budget: int = DEFAULT_BUDGET) -> float:
    return profile_exact(rifs, _letters(word), budget).psi(s, ctx)


def psi_sum_lattice(rifs: Rifs, word, s: float, ctx: MsvfContext) -> float:
    prof, _ = Lattice(rifs).profile(_letters(word))
    return prof.psi(s, ctx)


def psi_sum_mc(rifs: Rifs, word, s: float, ctx: MsvfContext, samples: int, seed: int) -> tuple[float, float]:
    """Unbiased estimate of Psi and its standard error."""
    word = _letters(word)
    prof = profile_mc(rifs, word, samples, seed)
    vals = np.exp(log_msvf(prof.log_w, prof.log_h, s, ctx))
    total = word_count(rifs, word)
    return total * float(np.mean(vals)), total * float(np.std(vals, ddof=1)) / math.sqrt(samples)


def _letters(word) -> tuple[int, ...]:
    return tuple(getattr(word, "letters", word))


def lattice_state_bound(rifs: Rifs, k: int) -> int:
    """Upper bound on the DP states of a depth-k lattice profile.

    States are sums of k shape vectors, so there are at most
    C(k + S - 1, S - 1) of them for S distinct shapes and at most
    (k + 1)**rank when the shape vectors span a rank-r lattice.
    """
    lat = Lattice(rifs)
    shapes = {(ea, eb, sw) for per in lat.shapes for ea, eb, sw, _ in per}
    swaps = 2 if any(sw for _, _, sw in shapes) else 1
    vectors = [ea + eb for ea, eb, _ in shapes]
    rank = int(np.linalg.matrix_rank(np.array(vectors, dtype=float))) if vectors and vectors[0] else 0
    multisets = math.comb(k + len(shapes) - 1, max(len(shapes) - 1, 0)) if shapes else 1
    return swaps * min(multisets, (k + 1) ** rank)


def choose_backend(rifs: Rifs, k: int, budget: int = DEFAULT_BUDGET,
                   lattice_states: int = LATTICE_STATES) -> Backend:
    if max(rifs.sizes) ** k <= budget:
        return Backend.EXACT
    if rifs.is_rational() and lattice_state_bound(rifs, k) <= lattice_states:
        return Backend.LATTICE
    return Backend.MC


class ProfileBuilder:
    """Builds profiles for one system with a fixed backend."""

    def __init__(self, rifs: Rifs, backend: Backend | str, budget: int = DEFAULT_BUDGET,
                 samples: int = MC_SAMPLES):
        self.rifs = rifs
        self.backend = Backend(backend)
        self.budget = budget
        self.samples = samples
        self._lattice = Lattice(rifs) if self.backend is Backend.LATTICE else None

    def __call__(self, word, seed: int = 0) -> Profile:
        if self.backend is Backend.EXACT:
            return profile_exact(self.rifs, word, self.budget)
        if self.backend is Backend.LATTICE:
            return self._lattice.profile(word)[0]
        return profile_mc(self.rifs, word, self.samples, seed)


# ---------------------------------------------------------------------------
# pressure and the one-variable dimension


@dataclass(frozen=True)
class PressureEstimate:
    s: float
    value: float
    stderr: float
    k: int
    reps: int
    backend: Backend

    def to_dict(self) -> dict:
        return {"s": self.s, "value": {"value": self.value, "uncertainty": self.stderr},
                "k": self.k, "reps": self.reps, "backend": self.backend.value}


def context_1var(rifs: Rifs, k: int = 10_000, reps: int = 64, seed: int = 0) -> tuple[MsvfContext, ProjDim]:
    proj = proj_dim_1var(build_projection(rifs), rifs.probs, k=k, reps=reps, seed=seed)
    return MsvfContext(proj.s_x, proj.s_y, classify_separation(rifs)), proj


def _one_profile(builder: ProfileBuilder, k: int, word_seed: int) -> Profile:
    word = sample_word(builder.rifs, k, word_seed).letters
    return builder(word, word_seed)


def _word_profiles(rifs: Rifs, k: int, reps: int, seed: int, builder: ProfileBuilder):
    """Profiles of ``reps`` sampled sequences; sequence r uses seed mix(seed, r)."""
    return ordered_map(partial(_one_profile, builder, k), [mix(seed, r) for r in range(reps)])


def pressure(
    rifs: Rifs,
    s: float,
    k: int,
    reps: int,
    seed: int,
    backend: Backend | str = Backend.AUTO,
    ctx: MsvfContext | None = None,
    budget: int = DEFAULT_BUDGET,
) -> PressureEstimate:
    """exp(E[(1/k) log Psi_k(s)]) over ``reps`` sampled letter sequences."""
    if k < 1:
        raise ValueError("k must be at least 1")
    backend = Backend(backend)
    if backend is Backend.AUTO:
        backend = choose_backend(rifs, k, budget)
    if ctx is None:
        ctx = context_1var(rifs, seed=seed)[0]
    builder = ProfileBuilder(rifs, backend, budget)
    x = np.array([p.log_psi(s, ctx) / k for p in _word_profiles(rifs, k, reps, seed, builder)])
    value = math.exp(float(np.mean(x)))
    stderr = value * float(np.std(x, ddof=1)) / math.sqrt(reps) if reps > 1 else 0.0
    return PressureEstimate(s, value, stderr, k, reps, backend)


@dataclass(frozen=True)
class DimResult:
    """A dimension value with its provenance."""

    value: float
    uncertainty: float | str  # "exact" for closed forms
    method: str
    s_x: float
    s_y: float
    details: dict = field(default_factory=dict)
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "s_B": {"value": self.value, "uncertainty": self.uncertainty},
            "method": self.method,
            "s_x": self.s_x,
            "s_y": self.s_y,
            "details": self.details,
            "flags": list(self.flags),
        }


class _RootProblem:
    """Mean of (1/k) log Psi over fixed profiles, as a function of s."""

    def __init__(self, profiles, k: int, ctx: MsvfContext):
        self.profiles, self.k, self.ctx = profiles, k, ctx

    def per_replica(self, s: float) -> np.ndarray:
        return np.array([p.log_psi(s, self.ctx) for p in self.profiles]) / self.k

    def __call__(self, s: float) -> float:
        return float(np.mean(self.per_replica(s)))

    def stderr(self, s: float, h: float = 1e-4) -> float:
        x = self.per_replica(s)
        if len(x) < 2:
            return 0.0
        slope = (self(s + h) - self(s - h)) / (2 * h)
        return float(np.std(x, ddof=1)) / math.sqrt(len(x)) / abs(slope)


def dim_1var(
    rifs: Rifs,
    k: int = 200,
    reps: int = 64,
    seed: int = 0,
    backend: Backend | str = Backend.AUTO,
    budget: int = DEFAULT_BUDGET,
    tol: float = 1e-3,
    k_max: int | None = None,
    sensitivity: float = 0.005,
    proj_k: int = 10_000,
    proj_reps: int = 64,
) -> DimResult:
    """Almost sure box dimension of the one-variable carpet by root search on P.

    The same sampled letter sequences are used at depth k and 2k (the shorter
    ones are prefixes of the longer ones).  While the two roots differ by more
    than ``sensitivity`` and 4k <= k_max, k is doubled.  The gap between the
    last two roots is reported as the truncation uncertainty.
    """
    k_max = 2 * k if k_max is None else k_max
    ctx, proj = context_1var(rifs, proj_k, proj_reps, seed)
    backend = Backend(backend)
    if backend is Backend.AUTO:
        backend = choose_backend(rifs, 2 * k, budget)
    builder = ProfileBuilder(rifs, backend, budget)
    flags = list(proj.flags)
    if not all(check_uorc(ifs) for ifs in rifs.ifss):
        flags.append("UORC fails: value is an upper bound only")

    def root_at(depth):
        problem = _RootProblem(_word_profiles(rifs, depth, reps, seed, builder), depth, ctx)
        root = bisect_decreasing(problem, lo=0.0, hi=2.0, tol=tol / 4)
        return root, problem

    short, _ = root_at(k)
    long_, problem = root_at(2 * k)
    while abs(long_.value - short.value) > sensitivity and 4 * k <= k_max:
        k *= 2
        short = long_
        long_, problem = root_at(2 * k)
    if long_.below_bracket:
        flags.append("P(0) <= 1: dimension 0")
        return DimResult(0.0, 0.0, f"pressure-{backend.value}", proj.s_x, proj.s_y,
                         {"k": 2 * k, "reps": reps}, tuple(flags))
    truncation = abs(long_.value - short.value)
    mc = problem.stderr(long_.value)
    value = long_.value
    if value > proj.s_x + proj.s_y + 1e-9:
        flags.append("estimate exceeds s_x + s_y")
    details = {
        "k": 2 * k,
        "reps": reps,
        "backend": backend.value,
        "mc_stderr": mc,
        "truncation": truncation,
        "root_half_depth": short.value,
        "projection_method": proj.method.value,
        "projection_stderr": proj.stderr,
    }
    return DimResult(value, math.hypot(mc, truncation, tol), f"pressure-{backend.value}",
                     proj.s_x, proj.s_y, details, tuple(flags))


# ---------------------------------------------------------------------------
# additive closed forms


class HypothesisError(SpecError):
    """The system does not satisfy the hypotheses of a closed form."""


def long_axis(rifs: Rifs) -> str:
    """'x' if every map is at least as wide as tall, 'y' if every map is at least
    as tall as wide (and some map strictly so); raise otherwise."""
    if has_swaps(rifs):
        raise HypothesisError("closed form needs a swap-free system")
    maps = [f for _, _, f in rifs.all_maps()]
    if all(f.a >= f.b for f in maps):
        return "x"
    if all(f.b >= f.a for f in maps):
        return "y"
    raise HypothesisError("maps disagree on the long axis (some wider, some taller)")


def additive_hypothesis(rifs: Rifs) -> tuple[bool, str]:
    try:
        long_axis(rifs)
    except HypothesisError as exc:
        return False, str(exc)
    return True, ""


def _additive_terms(rifs: Rifs, axis: str):
    """Per IFS arrays of (log alpha_M, log alpha_m)."""
    out = []
    for ifs in rifs.ifss:
        lw = np.log([float(f.a) for f in ifs]) if len(ifs) else np.zeros(0)
        lh = np.log([float(f.b) for f in ifs]) if len(ifs) else np.zeros(0)
        out.append((lw, lh) if axis == "x" else (lh, lw))
    return out


def dim_1var_additive(rifs: Rifs, tol: float = 1e-12) -> DimResult:
    """Closed form: sum_i p_i log(sum_e alpha_M^sbar alpha_m^(s-sbar)) = 0."""
    if has_swaps(rifs) and all(f.swap for _, _, f in rifs.all_maps()):
        result = dim_1var_additive(square_system(rifs), tol)
        return DimResult(result.value, "exact", "additive-closed-form", result.s_x, result.s_y,
                         {"squared": True}, result.flags)
    axis = long_axis(rifs)
    proj = proj_dim_1var(build_projection(rifs), rifs.probs)
    sbar = proj.s_x if axis == "x" else proj.s_y
    terms = _additive_terms(rifs, axis)
    p = rifs.float_probs()

    def f(s):
        return sum(pi * float(logsumexp(sbar * lM + (s - sbar) * lm)) for pi, (lM, lm) in zip(p, terms))

    root = bisect_decreasing(f, tol=tol)
    return DimResult(root.value, "exact", "additive-closed-form", proj.s_x, proj.s_y,
                     {"long_axis": axis}, proj.flags)


def single_ifs(rifs: Rifs, i: int) -> Rifs:
    return Rifs((rifs.ifss[i],), (Fraction(1),))


@dataclass(frozen=True)
class GuiLiReport:
    mean_dim: float
    individual: tuple[float, ...]
    s_B: float
    common_short_side: bool
    projection_mean: bool
    projection_log_mean: bool
    equals_s_B: bool

    @property
    def certified(self) -> bool:
        return self.common_short_side and self.projection_mean and self.projection_log_mean

    def to_dict(self) -> dict:
        return {
            "mean_dim": {"value": self.mean_dim, "uncertainty": "exact"},
            "individual": [{"value": d, "uncertainty": "exact"} for d in self.individual],
            "s_B": {"value": self.s_B, "uncertainty": "exact"},
            "conditions": {
                "common_short_side": self.common_short_side,
                "projection_mean": self.projection_mean,
                "projection_log_mean": self.projection_log_mean,
            },
            "certified": self.certified,
            "equals_s_B": self.equals_s_B,
        }


def dim_gui_li(rifs: Rifs, tol: float = 1e-10) -> GuiLiReport:
    """Compare s_B with the p-weighted mean of the dimensions of the single IFSs.

    The mean is guaranteed to equal s_B when all maps share one short side
    eta, the projection dimension is the p-mean of the individual ones, and
    the expected log column sums agree at both projection exponents.
    """
    axis = long_axis(rifs)
    s_B = dim_1var_additive(rifs).value
    p = rifs.float_probs()
    individual = tuple(dim_1var_additive(single_ifs(rifs, i)).value for i in range(rifs.n))
    mean_dim = float(np.dot(p, individual))

    shorts = [(f.b if axis == "x" else f.a) for _, _, f in rifs.all_maps()]
    common = all(scalar_eq(x, shorts[0]) for x in shorts)

    def proj_of(r):
        d = proj_dim_1var(build_projection(r), r.probs)
        return d.s_x if axis == "x" else d.s_y

    s_proj = proj_of(rifs)
    s_ind = [proj_of(single_ifs(rifs, i)) for i in range(rifs.n)]
    proj_mean = abs(s_proj - float(np.dot(p, s_ind))) <= tol
    terms = _additive_terms(rifs, axis)
    lhs = sum(pi * float(logsumexp(s_proj * lM)) for pi, (lM, _) in zip(p, terms))
    rhs = sum(pi * float(logsumexp(si * lM)) for pi, si, (lM, _) in zip(p, s_ind, terms))
    log_mean = abs(lhs - rhs) <= tol
    return GuiLiReport(mean_dim, individual, s_B, common, proj_mean, log_mean,
                       abs(mean_dim - s_B) <= tol)
