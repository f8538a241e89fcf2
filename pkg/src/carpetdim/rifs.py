"""Box-like random iterated function systems.

A box-like map sends the unit square onto an axis-aligned rectangle::

    f(x) = diag(a, b) @ Q @ x + (u, v)

where ``Q`` is one of the eight signed permutation matrices of the dihedral
group of the square.  ``Q`` is encoded by three flags: ``swap`` selects the
antidiagonal form, ``flip_x``/``flip_y`` negate the first/second row.

Scalars are either :class:`fractions.Fraction` (exact) or ``float``.  Indices
of IFSs and of maps inside an IFS are 0-based throughout the package.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Sequence, Union

Scalar = Union[Fraction, float]

FLOAT_TOL = 1e-12

_RATIONAL_RE = re.compile(r"^\s*([+-]?\d+)\s*(?:/\s*(\d+)\s*)?$")


class SpecError(ValueError):
    """Malformed system description (bad scalar, empty IFS, unknown key...)."""


def parse_scalar(value) -> Scalar:
    """Convert a JSON-ish value into a Scalar.

    Integers and ``"p/q"`` strings become exact fractions, floats stay floats.
    """
    if isinstance(value, bool):
        raise SpecError(f"boolean is not a scalar: {value!r}")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise SpecError(f"non-finite scalar: {value!r}")
        return value
    if isinstance(value, str):
        m = _RATIONAL_RE.match(value)
        if m is None:
            raise SpecError(f"malformed rational string: {value!r}")
        num, den = int(m.group(1)), int(m.group(2) or 1)
        if den == 0:
            raise SpecError(f"zero denominator: {value!r}")
        return Fraction(num, den)
    raise SpecError(f"unsupported scalar type {type(value).__name__}: {value!r}")


def format_scalar(value: Scalar):
    """Inverse of :func:`parse_scalar` for JSON output."""
    if isinstance(value, Fraction):
        if value.denominator == 1:
            return value.numerator
        return f"{value.numerator}/{value.denominator}"
    return float(value)


def is_exact(value: Scalar) -> bool:
    return isinstance(value, Fraction)


def scalar_le(x: Scalar, y: Scalar) -> bool:
    """``x <= y``, exact for fractions and with FLOAT_TOL slack otherwise."""
    if is_exact(x) and is_exact(y):
        return x <= y
    return float(x) <= float(y) + FLOAT_TOL


def scalar_lt(x: Scalar, y: Scalar) -> bool:
    if is_exact(x) and is_exact(y):
        return x < y
    return float(x) < float(y) - FLOAT_TOL


def scalar_eq(x: Scalar, y: Scalar) -> bool:
    if is_exact(x) and is_exact(y):
        return x == y
    return abs(float(x) - float(y)) <= FLOAT_TOL


@dataclass(frozen=True)
class BoxLikeMap:
    a: Scalar
    b: Scalar
    swap: bool = False
    flip_x: bool = False
    flip_y: bool = False
    u: Scalar = Fraction(0)
    v: Scalar = Fraction(0)

    @property
    def sign_x(self) -> int:
        return -1 if self.flip_x else 1

    @property
    def sign_y(self) -> int:
        return -1 if self.flip_y else 1

    def linear(self) -> tuple[float, float, float, float]:
        """Row-major entries (m00, m01, m10, m11) of diag(a, b) @ Q."""
        a, b = float(self.a), float(self.b)
        if self.swap:
            return (0.0, a * self.sign_x, b * self.sign_y, 0.0)
        return (a * self.sign_x, 0.0, 0.0, b * self.sign_y)

    def rect(self) -> tuple[Scalar, Scalar, Scalar, Scalar]:
        """Image of the unit square as (x0, x1, y0, y1), exact when possible."""
        x0, x1 = (self.u, self.u + self.a) if self.sign_x > 0 else (self.u - self.a, self.u)
        y0, y1 = (self.v, self.v + self.b) if self.sign_y > 0 else (self.v - self.b, self.v)
        return x0, x1, y0, y1

    def is_contraction(self) -> bool:
        return all(scalar_lt(0, s) and scalar_lt(s, 1) for s in (self.a, self.b))

    def is_contained(self) -> bool:
        x0, x1, y0, y1 = self.rect()
        return all((scalar_le(0, x0), scalar_le(x1, 1), scalar_le(0, y0), scalar_le(y1, 1)))

    def __call__(self, x: float, y: float) -> tuple[float, float]:
        m00, m01, m10, m11 = self.linear()
        return (m00 * x + m01 * y + float(self.u), m10 * x + m11 * y + float(self.v))


@dataclass(frozen=True)
class Ifs:
    maps: tuple[BoxLikeMap, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "maps", tuple(self.maps))

    def __len__(self) -> int:
        return len(self.maps)

    def __iter__(self):
        return iter(self.maps)

    def __getitem__(self, j: int) -> BoxLikeMap:
        return self.maps[j]


@dataclass(frozen=True)
class Rifs:
    """A finite collection of box-like IFSs with a probability vector."""

    ifss: tuple[Ifs, ...]
    probs: tuple[Scalar, ...]

    def __post_init__(self):
        ifss = tuple(i if isinstance(i, Ifs) else Ifs(tuple(i)) for i in self.ifss)
        object.__setattr__(self, "ifss", ifss)
        object.__setattr__(self, "probs", tuple(self.probs))
        if len(self.ifss) == 0:
            raise SpecError("a RIFS needs at least one IFS")
        if len(self.ifss) != len(self.probs):
            raise SpecError(
                f"probs has {len(self.probs)} entries but there are {len(self.ifss)} IFSs"
            )

    @property
    def n(self) -> int:
        return len(self.ifss)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(i) for i in self.ifss)

    def float_probs(self) -> list[float]:
        return [float(p) for p in self.probs]

    def all_maps(self) -> Iterable[tuple[int, int, BoxLikeMap]]:
        for i, ifs in enumerate(self.ifss):
            for j, f in enumerate(ifs):
                yield i, j, f

    def is_rational(self) -> bool:
        return all(is_exact(f.a) and is_exact(f.b) for _, _, f in self.all_maps())

    def alpha_bounds(self) -> tuple[float, float]:
        """(smallest short side, largest long side) over the individual maps."""
        sides = [(float(f.a), float(f.b)) for _, _, f in self.all_maps()]
        if not sides:
            return (1.0, 1.0)
        return min(min(s) for s in sides), max(max(s) for s in sides)

    def map_at(self, letter: tuple[int, int]) -> BoxLikeMap:
        i, j = letter
        if not 0 <= i < self.n:
            raise IndexError(f"IFS index {i} out of range 0..{self.n - 1}")
        if not 0 <= j < len(self.ifss[i]):
            raise IndexError(f"map index {j} out of range for IFS {i} ({len(self.ifss[i])} maps)")
        return self.ifss[i][j]


# ---------------------------------------------------------------------------
# word geometry

IDENTITY_AFFINE = (1.0, 0.0, 0.0, 1.0, 0.0, 0.0)


@dataclass(frozen=True)
class WordGeometry:
    """Summary of the rectangle f(e, unit square) for a finite word e.

    ``letters`` are (ifs, map) pairs, outermost first.  ``affine`` holds the
    composed map as (m00, m01, m10, m11, tx, ty).
    """

    log_w: float = 0.0
    log_h: float = 0.0
    parity: bool = False
    letters: tuple[tuple[int, int], ...] = ()
    affine: tuple[float, float, float, float, float, float] = IDENTITY_AFFINE

    @property
    def width(self) -> float:
        return math.exp(self.log_w)

    @property
    def height(self) -> float:
        return math.exp(self.log_h)

    @property
    def horizontal(self) -> bool:
        """True when the long side is horizontal (ties count as horizontal)."""
        return self.log_w >= self.log_h

    @property
    def log_alpha_max(self) -> float:
        return max(self.log_w, self.log_h)

    @property
    def log_alpha_min(self) -> float:
        return min(self.log_w, self.log_h)

    @property
    def alpha_max(self) -> float:
        return math.exp(self.log_alpha_max)

    @property
    def alpha_min(self) -> float:
        return math.exp(self.log_alpha_min)

    def rect(self) -> tuple[float, float, float, float]:
        m00, m01, m10, m11, tx, ty = self.affine
        x0 = tx + min(0.0, m00) + min(0.0, m01)
        x1 = tx + max(0.0, m00) + max(0.0, m01)
        y0 = ty + min(0.0, m10) + min(0.0, m11)
        y1 = ty + max(0.0, m10) + max(0.0, m11)
        return x0, x1, y0, y1


def _compose_affine(outer, inner):
    """outer o inner for (m00, m01, m10, m11, tx, ty) tuples."""
    a00, a01, a10, a11, atx, aty = outer
    b00, b01, b10, b11, btx, bty = inner
    return (
        a00 * b00 + a01 * b10,
        a00 * b01 + a01 * b11,
        a10 * b00 + a11 * b10,
        a10 * b01 + a11 * b11,
        a00 * btx + a01 * bty + atx,
        a10 * btx + a11 * bty + aty,
    )


def _map_affine(f: BoxLikeMap):
    return (*f.linear(), float(f.u), float(f.v))


def compose(rifs: Rifs, letters: Sequence[tuple[int, int]]) -> WordGeometry:
    """Geometry of the word ``letters`` (outermost first).

    Letters are applied from the innermost (last) outwards starting from the
    unit square; a swapping map exchanges the roles of width and height.
    """
    log_w = log_h = 0.0
    parity = False
    affine = IDENTITY_AFFINE
    letters = tuple((int(i), int(j)) for i, j in letters)
    for letter in reversed(letters):
        f = rifs.map_at(letter)
        la, lb = math.log(f.a), math.log(f.b)
        if f.swap:
            log_w, log_h = la + log_h, lb + log_w
        else:
            log_w, log_h = la + log_w, lb + log_h
        parity ^= f.swap
        affine = _compose_affine(_map_affine(f), affine)
    return WordGeometry(log_w, log_h, parity, letters, affine)


def extend(geom: WordGeometry, letter: tuple[int, int], rifs: Rifs) -> WordGeometry:
    """Append an inner letter: the geometry of ``geom.letters + (letter,)``."""
    f = rifs.map_at(letter)
    la, lb = math.log(f.a), math.log(f.b)
    if geom.parity:
        log_w, log_h = geom.log_w + lb, geom.log_h + la
    else:
        log_w, log_h = geom.log_w + la, geom.log_h + lb
    return WordGeometry(
        log_w,
        log_h,
        geom.parity ^ f.swap,
        geom.letters + ((int(letter[0]), int(letter[1])),),
        _compose_affine(geom.affine, _map_affine(f)),
    )


# ---------------------------------------------------------------------------
# classification and validation


class Separation(str, Enum):
    SEPARATED = "separated"
    NON_SEPARATED = "non_separated"


class Mode(str, Enum):
    ONE_VAR = "one_var"
    INFTY_VAR = "infty_var"


def classify_separation(rifs: Rifs) -> Separation:
    swaps = {f.swap for _, _, f in rifs.all_maps()}
    if swaps == {True, False}:
        return Separation.NON_SEPARATED
    return Separation.SEPARATED


def has_swaps(rifs: Rifs) -> bool:
    return any(f.swap for _, _, f in rifs.all_maps())


def check_uorc(ifs: Ifs) -> bool:
    """Open image rectangles of the maps are pairwise disjoint."""
    return not uorc_violations(ifs)


def uorc_violations(ifs: Ifs) -> list[tuple[int, int]]:
    bad = []
    rects = [f.rect() for f in ifs]
    for (j, r), (l, s) in combinations(enumerate(rects), 2):
        overlap_x = scalar_lt(r[0], s[1]) and scalar_lt(s[0], r[1])
        overlap_y = scalar_lt(r[2], s[3]) and scalar_lt(s[2], r[3])
        if overlap_x and overlap_y:
            bad.append((j, l))
    return bad


def expected_offspring(rifs: Rifs) -> Scalar:
    """Mean number of maps of a randomly chosen IFS."""
    return sum((p * len(ifs) for p, ifs in zip(rifs.probs, rifs.ifss)), Fraction(0))


def probability_problems(probs: Sequence[Scalar]) -> list[str]:
    problems = []
    for i, p in enumerate(probs):
        if not scalar_lt(0, p):
            problems.append(f"probs[{i}] = {format_scalar(p)} is not positive")
    total = sum(probs, Fraction(0))
    if not scalar_eq(total, Fraction(1)):
        problems.append(f"probs sum to {float(total)!r}, not 1")
    return problems


@dataclass
class Check:
    name: str
    ok: bool
    severity: str  # "error" | "warning" | "info"
    message: str = ""
    indices: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "ok": self.ok,
            "severity": self.severity,
            "message": self.message,
            "indices": [list(i) if isinstance(i, tuple) else i for i in self.indices],
        }


@dataclass
class ValidationReport:
    mode: Mode
    checks: list[Check]
    separation: Separation
    expected_offspring: float
    non_extinguishing: bool

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks if c.severity == "error")

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.ok and c.severity == "error"]

    @property
    def warnings(self) -> list[Check]:
        return [c for c in self.checks if not c.ok and c.severity == "warning"]

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "ok": self.ok,
            "separation": self.separation.value,
            "expected_offspring": self.expected_offspring,
            "non_extinguishing": self.non_extinguishing,
            "checks": [c.to_dict() for c in self.checks],
        }


def validate(rifs: Rifs, mode: Mode | str = Mode.ONE_VAR) -> ValidationReport:
    """Run every structural check and collect the outcomes.

    Containment, contraction and the probability vector are hard failures.
    UORC is only a warning: the dimension formulas remain upper bounds
    without it.  Non-extinction is hard in the infinite-variable mode only.
    """
    mode = Mode(mode)
    if mode is Mode.ONE_VAR:
        empty = [i for i, ifs in enumerate(rifs.ifss) if len(ifs) == 0]
        if empty:
            raise SpecError(f"IFS {empty} empty; empty IFSs are only allowed in infty_var mode")
    checks = []

    bad = [(i, j) for i, j, f in rifs.all_maps() if not f.is_contraction()]
    checks.append(Check("contraction", not bad, "error",
                        "" if not bad else f"maps {bad} need 0 < a, b < 1", bad))

    bad = [(i, j) for i, j, f in rifs.all_maps() if not f.is_contained()]
    checks.append(Check("containment", not bad, "error",
                        "" if not bad else f"maps {bad} leave the unit square", bad))

    problems = probability_problems(rifs.probs)
    checks.append(Check("probs", not problems, "error", "; ".join(problems)))

    bad = [i for i, ifs in enumerate(rifs.ifss) if not check_uorc(ifs)]
    checks.append(Check("uorc", not bad, "warning",
                        "" if not bad else f"IFSs {bad} have overlapping open rectangles; "
                        "computed dimensions are upper bounds only", bad))

    if mode is Mode.ONE_VAR:
        nontrivial = any(len(ifs) >= 2 for ifs in rifs.ifss)
        checks.append(Check("nontrivial", nontrivial, "warning",
                            "" if nontrivial else "no IFS has two maps; the attractor is a point"))

    mean = expected_offspring(rifs)
    surviving = scalar_lt(1, mean)
    checks.append(Check("non_extinguishing", surviving,
                        "error" if mode is Mode.INFTY_VAR else "info",
                        f"expected offspring {float(mean):.12g}"))

    return ValidationReport(mode, checks, classify_separation(rifs), float(mean), surviving)


def require_valid(rifs: Rifs, mode: Mode | str) -> ValidationReport:
    report = validate(rifs, mode)
    if not report.ok:
        names = ", ".join(f"{c.name}: {c.message}" for c in report.failures)
        raise SpecError(f"validation failed ({names})")
    return report


def square_system(rifs: Rifs) -> Rifs:
    """Two-step system over pairs of IFSs; composes every pair of maps.

    For a fully swapped system the squared maps are swap free.  The
    one-variable attractor of the squared system is the attractor of the
    original one along even-length words.
    """
    ifss, probs = [], []
    for i, (pi, outer_ifs) in enumerate(zip(rifs.probs, rifs.ifss)):
        for k, (pk, inner_ifs) in enumerate(zip(rifs.probs, rifs.ifss)):
            maps = [_compose_maps(f, g) for f in outer_ifs for g in inner_ifs]
            ifss.append(Ifs(tuple(maps)))
            probs.append(pi * pk)
    return Rifs(tuple(ifss), tuple(probs))


def _compose_maps(f: BoxLikeMap, g: BoxLikeMap) -> BoxLikeMap:
    """The box-like map f o g, kept exact for rational inputs."""
    # linear parts as signed (row -> column) permutations with scales
    def parts(h: BoxLikeMap):
        if h.swap:
            return {(0, 1): h.a * h.sign_x, (1, 0): h.b * h.sign_y}
        return {(0, 0): h.a * h.sign_x, (1, 1): h.b * h.sign_y}

    pf, pg = parts(f), parts(g)
    prod = {}
    for (r, c), x in pf.items():
        for (r2, c2), y in pg.items():
            if c == r2:
                prod[(r, c2)] = x * y
    swap = (0, 1) in prod
    m0 = prod[(0, 1)] if swap else prod[(0, 0)]
    m1 = prod[(1, 0)] if swap else prod[(1, 1)]
    # translation: f(g(0)) = L_f t_g + t_f
    tg = (g.u, g.v)
    tx = sum(x * tg[c] for (r, c), x in pf.items() if r == 0) + f.u
    ty = sum(x * tg[c] for (r, c), x in pf.items() if r == 1) + f.v
    return BoxLikeMap(abs(m0), abs(m1), swap, m0 < 0, m1 < 0, tx, ty)
