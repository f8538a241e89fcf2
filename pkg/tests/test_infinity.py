import math
from fractions import Fraction as F

import numpy as np
import pytest

from carpetdim.infinity import (
    ExtinctionError,
    PercolationSpec,
    context_infty,
    dim_infty,
    dim_infty_additive,
    expected_root_mean,
    percolation_dim,
    percolation_preset,
    simulate_levels,
    tree_psi_sum,
)
from carpetdim.pressure import MsvfContext, dim_1var_additive
from carpetdim.presets import full_square, mixed_grids, transposed_grids
from carpetdim.rifs import BoxLikeMap, Ifs, Rifs, SpecError
from carpetdim.sampling import sample_tree

S_INF = 0.7878849110261399


def test_path_tree_level_sums():
    rifs = Rifs((Ifs((BoxLikeMap(F(1, 2), F(1, 3)),)), Ifs((BoxLikeMap(F(1, 2), F(1, 3), u=F(1, 2)),))),
                (F(1, 2), F(1, 2)))
    ctx = MsvfContext(0.4, 0.4)
    sums = tree_psi_sum(rifs, sample_tree(rifs, 8, 3), 1.1, ctx)
    for lvl in sums:
        assert lvl.y_value == pytest.approx(0.5 ** (0.4 * lvl.k) * (1 / 3) ** (0.7 * lvl.k))


def test_extinct_tree_sums_vanish():
    rifs = Rifs((Ifs(()), Ifs((BoxLikeMap(F(1, 2), F(1, 2)), BoxLikeMap(F(1, 2), F(1, 2), u=F(1, 2))))),
                (F(1, 3), F(2, 3)))
    ctx = MsvfContext(1.0, 1.0)
    seen = 0
    for seed in range(50):
        tree = sample_tree(rifs, 10, seed)
        gone = tree.extinct_by()
        if gone is None:
            continue
        seen += 1
        assert all(lvl.y_value == 0.0 for lvl in tree_psi_sum(rifs, tree, 1.0, ctx)[gone:])
    assert seen > 5


def test_level_three_counts_are_binomial():
    # each level-3 node carries i letters from the first IFS; E[count] = C(3, i)
    rifs = transposed_grids()
    trees = 4000
    level = simulate_levels(rifs, 3, trees, 9, keep=[3])[3]
    i = np.rint((level.log_w - 3 * math.log(1 / 3)) / math.log(1.5)).astype(int)
    for n1 in range(4):
        per_tree = np.bincount(level.tree, weights=level.count * (i == n1), minlength=trees)
        se = per_tree.std(ddof=1) / math.sqrt(trees)
        assert abs(per_tree.mean() - math.comb(3, n1)) <= 4 * se


@pytest.mark.parametrize("n", [3, 5])
def test_expected_level_sum_matches_binomial_formula(n):
    rifs = transposed_grids()
    s = 1.0
    ctx = MsvfContext(S_INF, S_INF)
    level = simulate_levels(rifs, n, 6000, 4, keep=[n])[n]
    y, shift = level.y_values(s, ctx)
    y = y * math.exp(shift)
    expect = 0.0
    for i in range(n + 1):
        w, h = 2.0**-i * 3.0 ** -(n - i), 2.0 ** -(n - i) * 3.0**-i
        hi, lo = max(w, h), min(w, h)
        expect += math.comb(n, i) * hi**S_INF * lo ** (s - S_INF)
    assert abs(y.mean() - expect) <= 4 * y.std(ddof=1) / math.sqrt(len(y))


def test_grouped_simulation_matches_explicit_trees():
    # same law, so the mean level sizes agree
    rifs = mixed_grids()
    grouped = simulate_levels(rifs, 4, 3000, 1, keep=[4])[4]
    sizes = np.bincount(grouped.tree, weights=grouped.count, minlength=3000)
    explicit = [sample_tree(rifs, 4, s).counts()[4] for s in range(600)]
    assert sizes.mean() == pytest.approx(2.5**4, rel=0.05)
    assert np.mean(explicit) == pytest.approx(2.5**4, rel=0.1)


def test_simulation_deterministic_and_batched():
    rifs = mixed_grids()
    a = simulate_levels(rifs, 5, 300, 12, keep=[5])[5]
    b = simulate_levels(rifs, 5, 300, 12, keep=[5])[5]
    c = simulate_levels(rifs, 5, 256, 12, keep=[5])[5]
    assert np.array_equal(a.count, b.count) and np.array_equal(a.log_w, b.log_w)
    first = a.tree < 256
    assert np.array_equal(a.count[first], c.count)


def test_full_binary_offspring_at_zero():
    rifs = Rifs((Ifs((BoxLikeMap(F(1, 2), F(1, 2)), BoxLikeMap(F(1, 2), F(1, 2), u=F(1, 2)))),), (F(1),))
    est, se = expected_root_mean(rifs, 0.0, 10, 50, 0, ctx=MsvfContext(1.0, 1.0))
    assert est == pytest.approx(2.0) and se == pytest.approx(0.0, abs=1e-12)


def test_additive_root_mean_tends_to_one():
    rifs = mixed_grids()
    root = dim_infty_additive(rifs).value
    gaps = [abs(expected_root_mean(rifs, root, k, 4000, 1)[0] - 1) for k in (8, 24)]
    assert gaps[1] < gaps[0] < 0.01


def test_transposed_grids_root_mean_near_one():
    est, _ = expected_root_mean(transposed_grids(), S_INF, 12, 4000, 5)
    assert abs(est - 1) < 0.05


def test_context_uses_arithmetic_root():
    ctx = context_infty(transposed_grids())
    assert ctx.s_x == pytest.approx(S_INF, abs=1e-10)


def test_dim_infty_small_run():
    res = dim_infty(transposed_grids(), k=12, trees=2000, seed=3)
    assert abs(res.value - S_INF) < 0.05
    assert res.details["survivors"] == 2000


def test_dim_infty_full_square():
    res = dim_infty(full_square(), k=8, trees=64)
    assert res.value == pytest.approx(2.0, abs=1e-3)


def test_dim_infty_rejects_subcritical():
    rifs = Rifs((Ifs(()), Ifs((BoxLikeMap(F(1, 2), F(1, 2)),) * 2)), (F(1, 2), F(1, 2)))
    with pytest.raises(ExtinctionError):
        dim_infty(rifs, k=4, trees=10)


def test_dim_infty_with_extinction():
    f = [BoxLikeMap(F(1, 2), F(1, 2), u=F(c, 2), v=F(r, 2)) for c in (0, 1) for r in (0, 1)]
    rifs = Rifs((Ifs(()), Ifs(tuple(f))), (F(1, 2), F(1, 2)))
    # surviving trees are Galton-Watson with mean 2 on squares of side 1/2: dimension 1
    res = dim_infty(rifs, k=14, trees=3000, seed=2)
    assert abs(res.value - 1.0) < 0.05
    q = res.details["extinction_q"]
    assert 0 < q < 1 and 0.5 + 0.5 * q**4 == pytest.approx(q, abs=1e-9)


def test_one_variable_below_infinite_variable():
    # additive mixed grids: 1-variable value never exceeds the infinite one
    assert dim_1var_additive(mixed_grids()).value <= dim_infty_additive(mixed_grids()).value


@pytest.mark.parametrize("n,m", [(2, 2), (2, 3), (3, 2), (3, 3), (2, 4)])
@pytest.mark.parametrize("p", [F(3, 5), F(4, 5), F(1)])
def test_percolation_closed_form_matches_enumeration(n, m, p):
    spec = PercolationSpec(n, m, p)
    if n * m * p <= 1:
        return
    closed = percolation_dim(spec).value
    enum = dim_infty_additive(percolation_preset(spec)).value
    assert closed == pytest.approx(enum, abs=1e-9)


def test_percolation_values():
    assert percolation_dim(PercolationSpec(2, 2, 0.8)).value == pytest.approx(math.log(3.2) / math.log(2))
    # p = 1 keeps the whole square
    assert percolation_dim(PercolationSpec(3, 2, 1)).value == pytest.approx(2.0)


def test_percolation_preset_shape():
    rifs = percolation_preset(PercolationSpec(2, 2, F(4, 5)))
    assert rifs.n == 16 and sum(rifs.probs) == 1
    assert rifs.sizes[0] == 0 and rifs.sizes[-1] == 4
    assert len(percolation_preset(PercolationSpec(2, 2, 1)).ifss) == 1


def test_percolation_errors():
    with pytest.raises(ExtinctionError):
        percolation_dim(PercolationSpec(2, 2, 0.25))
    with pytest.raises(SpecError):
        PercolationSpec(1, 3, 0.5)
    with pytest.raises(SpecError):
        percolation_preset(PercolationSpec(5, 4, 0.5))
