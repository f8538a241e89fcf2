import math
import random
from fractions import Fraction as F

import numpy as np
import pytest
from scipy.optimize import brentq

from carpetdim.presets import mixed_grids, transposed_grids
from carpetdim.projection import (
    H,
    V,
    ProjKind,
    ProjMethod,
    build_projection,
    moran_root,
    proj_dim_1var,
    proj_dim_infty,
)
from carpetdim.rifs import BoxLikeMap, Ifs, Rifs

from conftest import random_system

LOG4_6 = math.log(4) / math.log(6)


def test_stacked_cells_merge_into_one_column():
    ps = build_projection(Rifs((mixed_grids().ifss[1],), (F(1),)))
    assert ps.kind is ProjKind.SEPARATED
    assert ps.ratios(0, H, H) == (0.5, 0.5)
    assert len(ps.ratios(0, V, V)) == 3


def test_single_map_ratios():
    ps = build_projection(Rifs((Ifs((BoxLikeMap(F(1, 2), F(1, 3)),)),), (F(1),)))
    assert ps.axis_ratios("x") == [(0.5,)] and ps.axis_ratios("y") == [(1 / 3,)]


def test_swap_map_edges():
    rifs = Rifs((Ifs((BoxLikeMap(F(1, 2), F(1, 3), swap=True), BoxLikeMap(F(1, 4), F(1, 5), v=F(1, 2)))),), (F(1),))
    ps = build_projection(rifs)
    assert ps.kind is ProjKind.GRAPH
    assert ps.ratios(0, H, V) == (0.5,) and ps.ratios(0, V, H) == (1 / 3,)
    assert ps.ratios(0, H, H) == (0.25,) and ps.ratios(0, V, V) == (0.2,)


def test_partial_overlap_warns():
    ifs = Ifs((BoxLikeMap(F(1, 2), F(1, 4)), BoxLikeMap(F(1, 2), F(1, 4), u=F(1, 4), v=F(1, 2))))
    assert build_projection(Rifs((ifs,), (F(1),))).warnings


def test_transposed_grids_one_variable():
    rifs = transposed_grids()
    res = proj_dim_1var(build_projection(rifs), rifs.probs)
    assert res.method is ProjMethod.CLOSED_FORM
    assert res.s_x == pytest.approx(LOG4_6, abs=1e-10)
    assert res.s_y == pytest.approx(LOG4_6, abs=1e-10)


def test_mixed_grids_horizontal_projection_is_full():
    rifs = mixed_grids()
    assert proj_dim_1var(build_projection(rifs), rifs.probs).s_x == pytest.approx(1.0, abs=1e-10)


def test_transposed_grids_infinite_variable():
    rifs = transposed_grids()
    res = proj_dim_infty(build_projection(rifs), rifs.probs)
    oracle = brentq(lambda s: 2.0**-s + 3.0**-s - 1, 0, 1, xtol=1e-14)
    assert res.s_x == pytest.approx(oracle, abs=1e-10)
    assert res.s_x == pytest.approx(0.78788, abs=1e-5)


def test_clamped_to_one():
    # three distinct half-width columns overlap, so the raw root exceeds 1
    maps = tuple(BoxLikeMap(F(1, 2), F(1, 8), u=F(c, 4), v=F(r, 8)) for c, r in [(0, 0), (1, 2), (2, 4), (2, 6)])
    rifs = Rifs((Ifs(maps),), (F(1),))
    res = proj_dim_infty(build_projection(rifs), rifs.probs)
    assert res.raw_x == pytest.approx(math.log(3) / math.log(2))
    assert res.s_x == 1.0 and res.flags


def test_single_map_gives_zero():
    rifs = Rifs((Ifs((BoxLikeMap(F(1, 2), F(1, 2)),)),), (F(1),))
    res = proj_dim_infty(build_projection(rifs), rifs.probs)
    assert res.s_x == 0.0 and res.flags


def test_deterministic_reduces_to_moran(rng):
    for _ in range(20):
        rifs = random_system(rng, swaps=False, max_ifs=1)
        ps = build_projection(rifs)
        one = proj_dim_1var(ps, rifs.probs)
        inf = proj_dim_infty(ps, rifs.probs)
        for axis, val in (("x", one.raw_x), ("y", one.raw_y)):
            ref = moran_root(ps.axis_ratios(axis)[0])
            assert val == pytest.approx(ref, abs=1e-9)
        assert inf.raw_x == pytest.approx(one.raw_x, abs=1e-9)


def test_geometric_mean_root_below_arithmetic(rng):
    for _ in range(30):
        rifs = random_system(rng, swaps=False)
        ps = build_projection(rifs)
        one, inf = proj_dim_1var(ps, rifs.probs), proj_dim_infty(ps, rifs.probs)
        assert one.raw_x <= inf.raw_x + 1e-9 and one.raw_y <= inf.raw_y + 1e-9


def test_dedup_irrelevant_when_maps_distinct(rng):
    for _ in range(10):
        rifs = random_system(rng, swaps=False)
        nudged = Rifs(tuple(Ifs(tuple(BoxLikeMap(f.a, f.b, u=F(j, 1000), v=F(j, 1000)) for j, f in enumerate(ifs)))
                            for ifs in rifs.ifss), rifs.probs)
        base = proj_dim_infty(build_projection(nudged), rifs.probs)
        again = proj_dim_infty(build_projection(nudged), rifs.probs)
        assert base == again
        counts = [len(build_projection(nudged).ratios(i, H, H)) for i in range(rifs.n)]
        assert counts == list(rifs.sizes)


def symmetric_swap_system():
    """Square maps with mirrored swap maps; each M(i, s) is [[A, B], [B, A]]."""
    third = F(1, 3)
    ifs1 = Ifs((BoxLikeMap(third, third), BoxLikeMap(third, third, swap=True, u=2 * third, v=2 * third)))
    q = F(1, 4)
    ifs2 = Ifs((BoxLikeMap(q, q), BoxLikeMap(q, q, u=3 * q, v=3 * q), BoxLikeMap(q, q, swap=True, u=q, v=q)))
    return Rifs((ifs1, ifs2), (F(1, 2), F(1, 2)))


def test_lyapunov_symmetric_system():
    rifs = symmetric_swap_system()
    res = proj_dim_1var(build_projection(rifs), rifs.probs, k=2000, reps=16, seed=5)
    assert res.method is ProjMethod.LYAPUNOV
    # symmetrised separated system: 2 columns of 1/3 and 3 columns of 1/4
    expected = math.log(6) / math.log(12)
    assert abs(res.s_x - expected) <= max(2 * res.stderr, 1e-3)


def test_lyapunov_deterministic_graph_matches_spectral_radius():
    ifs = Ifs((BoxLikeMap(F(1, 2), F(1, 3)), BoxLikeMap(F(1, 3), F(1, 4), swap=True, u=F(1, 2), v=F(1, 2))))
    rifs = Rifs((ifs,), (F(1),))
    ps = build_projection(rifs)
    oracle = brentq(lambda s: max(abs(np.linalg.eigvals(ps.matrices(s)[0]))) - 1, 0, 2, xtol=1e-12)
    res = proj_dim_1var(ps, rifs.probs, k=4000, reps=8, seed=1)
    assert abs(res.raw_x - oracle) < 2e-3
    spec = proj_dim_infty(ps, rifs.probs)
    assert spec.raw_x == pytest.approx(oracle, abs=1e-9)


def test_lyapunov_reproducible():
    rifs = symmetric_swap_system()
    ps = build_projection(rifs)
    a = proj_dim_1var(ps, rifs.probs, k=500, reps=4, seed=3)
    b = proj_dim_1var(ps, rifs.probs, k=500, reps=4, seed=3)
    assert a == b


def test_graph_projection_dims_in_unit_interval():
    rnd = random.Random(8)
    for _ in range(10):
        rifs = random_system(rnd, swaps=True)
        ps = build_projection(rifs)
        if ps.kind is not ProjKind.GRAPH:
            continue
        res = proj_dim_infty(ps, rifs.probs)
        assert 0.0 <= res.s_x <= 1.0
