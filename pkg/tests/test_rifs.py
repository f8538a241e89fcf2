import math
import random
from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from carpetdim.presets import bm_carpet, mixed_grids, transposed_grids
from carpetdim.rifs import (
    BoxLikeMap,
    Ifs,
    Mode,
    Rifs,
    Separation,
    SpecError,
    WordGeometry,
    check_uorc,
    classify_separation,
    compose,
    expected_offspring,
    extend,
    has_swaps,
    parse_scalar,
    square_system,
    validate,
)
from carpetdim.specio import dumps, loads

from conftest import random_system


def test_mixed_grids_validates():
    report = validate(mixed_grids(), Mode.ONE_VAR)
    assert report.ok and not report.warnings
    assert report.separation is Separation.SEPARATED
    assert report.expected_offspring == 2.5


def test_single_map_not_surviving():
    rifs = Rifs((Ifs((BoxLikeMap(F(1, 2), F(1, 2)),)),), (F(1),))
    report = validate(rifs, "one_var")
    assert report.ok
    assert report.non_extinguishing is False
    assert report.check("nontrivial").ok is False


def test_containment_failure_names_map():
    bad = BoxLikeMap(F(1, 2), F(1, 2), u=F(3, 4))
    rifs = Rifs((Ifs((BoxLikeMap(F(1, 2), F(1, 2)), bad)),), (F(1),))
    report = validate(rifs, "one_var")
    assert not report.ok
    assert report.check("containment").indices == [(0, 1)]


def test_probability_failure():
    rifs = Rifs((Ifs((BoxLikeMap(F(1, 2), F(1, 2)),)),), (0.9,))
    report = validate(rifs, "one_var")
    assert [c.name for c in report.failures] == ["probs"]


def test_empty_ifs_rejected_in_one_variable_mode():
    rifs = Rifs((Ifs(()), Ifs((BoxLikeMap(F(1, 2), F(1, 2)),) * 2)), (F(1, 3), F(2, 3)))
    with pytest.raises(SpecError):
        validate(rifs, "one_var")
    assert validate(rifs, "infty_var").expected_offspring == pytest.approx(4 / 3)


def test_classification():
    assert classify_separation(transposed_grids()) is Separation.SEPARATED
    mixed = Rifs((Ifs((BoxLikeMap(F(1, 2), F(1, 3), swap=True), BoxLikeMap(F(1, 2), F(1, 3)))),), (F(1),))
    assert classify_separation(mixed) is Separation.NON_SEPARATED
    swapped = Rifs((Ifs((BoxLikeMap(F(1, 2), F(1, 3), swap=True),
                         BoxLikeMap(F(1, 3), F(1, 2), swap=True, u=F(1, 2)))),), (F(1),))
    assert classify_separation(swapped) is Separation.SEPARATED
    assert not has_swaps(square_system(swapped))


def test_classification_invariant_under_reordering(rng):
    for _ in range(30):
        rifs = random_system(rng)
        ifss = [Ifs(tuple(reversed(i.maps))) for i in reversed(rifs.ifss)]
        shuffled = Rifs(tuple(ifss), tuple(reversed(rifs.probs)))
        assert classify_separation(shuffled) is classify_separation(rifs)


def test_uorc():
    assert check_uorc(bm_carpet(2, 3, [(0, 0), (1, 1)]).ifss[0])
    f = BoxLikeMap(F(1, 2), F(1, 2))
    assert not check_uorc(Ifs((f, f)))
    tiles = Ifs(tuple(BoxLikeMap(F(1, 2), F(1, 2), u=F(c, 2), v=F(r, 2)) for c in (0, 1) for r in (0, 1)))
    assert check_uorc(tiles)


def test_expected_offspring():
    f = BoxLikeMap(F(1, 2), F(1, 2))
    assert expected_offspring(Rifs((Ifs((f,)),), (F(1),))) == 1
    assert expected_offspring(Rifs((Ifs(()), Ifs((f, f))), (F(1, 3), F(2, 3)))) == F(4, 3)


def test_compose_examples():
    f = BoxLikeMap(F(1, 2), F(1, 3))
    rifs = Rifs((Ifs((f,)),), (F(1),))
    g = compose(rifs, [(0, 0), (0, 0)])
    assert g.alpha_max == pytest.approx(1 / 4) and g.alpha_min == pytest.approx(1 / 9)
    s = Rifs((Ifs((BoxLikeMap(F(1, 2), F(1, 3), swap=True),)),), (F(1),))
    sq = compose(s, [(0, 0), (0, 0)])
    assert sq.width == pytest.approx(1 / 6) and sq.height == pytest.approx(1 / 6)
    assert compose(rifs, []) == WordGeometry()


def test_compose_transposed_grids_counts():
    rifs = transposed_grids()
    rnd = random.Random(5)
    for _ in range(20):
        letters = [(rnd.randint(0, 1), rnd.randint(0, 1)) for _ in range(7)]
        n1 = sum(1 for i, _ in letters if i == 0)
        n2 = len(letters) - n1
        g = compose(rifs, letters)
        assert g.width == pytest.approx(2.0**-n1 * 3.0**-n2)
        assert g.height == pytest.approx(3.0**-n1 * 2.0**-n2)


def _random_letters(rifs, rnd, n):
    out = []
    for _ in range(n):
        i = rnd.randrange(rifs.n)
        out.append((i, rnd.randrange(len(rifs.ifss[i]))))
    return out


def test_extend_matches_compose(rng):
    for _ in range(40):
        rifs = random_system(rng)
        letters = _random_letters(rifs, rng, 5)
        g = WordGeometry()
        for letter in letters:
            g = extend(g, letter, rifs)
        ref = compose(rifs, letters)
        assert g.log_w == pytest.approx(ref.log_w, abs=1e-12)
        assert g.log_h == pytest.approx(ref.log_h, abs=1e-12)
        assert g.parity == ref.parity
        assert g.affine == pytest.approx(ref.affine, abs=1e-12)


def test_extend_single_letter():
    rifs = mixed_grids()
    assert extend(WordGeometry(), (1, 2), rifs) == compose(rifs, [(1, 2)])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_alpha_sub_and_supermultiplicative(seed):
    rnd = random.Random(seed)
    rifs = random_system(rnd)
    e, g = _random_letters(rifs, rnd, 4), _random_letters(rifs, rnd, 3)
    ge, gg, both = compose(rifs, e), compose(rifs, g), compose(rifs, e + g)
    assert both.log_alpha_max <= ge.log_alpha_max + gg.log_alpha_max + 1e-12
    assert both.log_alpha_min >= ge.log_alpha_min + gg.log_alpha_min - 1e-12
    if not has_swaps(rifs):
        assert both.log_w == pytest.approx(ge.log_w + gg.log_w, abs=1e-12)


def test_rect_matches_affine():
    f = BoxLikeMap(F(1, 2), F(1, 3), swap=True, flip_x=True, u=F(1, 2), v=F(1, 3))
    rifs = Rifs((Ifs((f,)),), (F(1),))
    g = compose(rifs, [(0, 0)])
    assert g.rect() == pytest.approx(tuple(float(x) for x in f.rect()))


def test_square_system_composes_maps():
    f = BoxLikeMap(F(1, 2), F(1, 3), swap=True, flip_y=True, u=F(1, 4), v=F(1, 2))
    g = BoxLikeMap(F(1, 4), F(1, 5), swap=True, u=F(1, 8), v=F(1, 10))
    rifs = Rifs((Ifs((f, g)),), (F(1),))
    sq = square_system(rifs)
    assert sq.sizes == (4,)
    for idx, (p, q) in enumerate([(0, 0), (0, 1), (1, 0), (1, 1)]):
        h = sq.ifss[0][idx]
        ref = compose(rifs, [(0, p), (0, q)])
        assert compose(sq, [(0, idx)]).affine == pytest.approx(ref.affine)
        assert not h.swap


def test_parse_scalar():
    assert parse_scalar("1/3") == F(1, 3)
    assert parse_scalar(2) == F(2)
    assert isinstance(parse_scalar(0.5), float)
    for bad in ("1/0", "abc", True, float("nan")):
        with pytest.raises(SpecError):
            parse_scalar(bad)


def test_spec_round_trip():
    for rifs in (mixed_grids(), transposed_grids()):
        text = dumps(rifs)
        assert loads(text) == rifs
        assert dumps(loads(text)) == text
    assert '"1/3"' in dumps(mixed_grids())


def test_unknown_key_rejected():
    with pytest.raises(SpecError, match="rotation"):
        loads('{"ifss": [[{"a": "1/2", "b": "1/2", "rotation": 90}]], "probs": [1]}')


def test_parse_error_reports_position():
    with pytest.raises(SpecError, match="line 1"):
        loads('{"ifss": [}')


def test_float_probability_tolerance():
    f = BoxLikeMap(0.5, 0.5)
    rifs = Rifs((Ifs((f, f)), Ifs((f,))), (0.3, 0.7 + 1e-13))
    assert validate(rifs, "one_var").check("probs").ok
    assert math.isclose(float(sum(rifs.probs)), 1.0)
