"""Box-counting dimensions of random box-like self-affine carpets.

One-variable carpets use a single random IFS per construction level, the
infinite-variable model draws an independent IFS at every node.
"""
__version__ = "0.1.0"

from .rifs import (
    BoxLikeMap,
    Ifs,
    Mode,
    Rifs,
    Separation,
    SpecError,
    WordGeometry,
    classify_separation,
    compose,
    expected_offspring,
    extend,
    validate,
)
from .specio import dumps, load_spec, loads, save_spec
from .projection import build_projection, proj_dim_1var, proj_dim_infty
from .pressure import (
    MsvfContext,
    dim_1var,
    dim_1var_additive,
    dim_gui_li,
    msvf,
    pressure,
    psi_sum_exact,
    psi_sum_lattice,
    psi_sum_mc,
)
from .infinity import (
    PercolationSpec,
    dim_infty,
    dim_infty_additive,
    expected_root_mean,
    percolation_dim,
    percolation_preset,
    tree_psi_sum,
)
from .boxcount import box_count, box_count_series, empirical_dim, render, stopping_set
from .sampling import extinction_prob, sample_tree, sample_word

__all__ = [
    "__version__",
    "BoxLikeMap",
    "Ifs",
    "Mode",
    "MsvfContext",
    "PercolationSpec",
    "Rifs",
    "Separation",
    "SpecError",
    "WordGeometry",
    "box_count",
    "box_count_series",
    "build_projection",
    "classify_separation",
    "compose",
    "dim_1var",
    "dim_1var_additive",
    "dim_gui_li",
    "dim_infty",
    "dim_infty_additive",
    "dumps",
    "empirical_dim",
    "expected_offspring",
    "expected_root_mean",
    "extend",
    "extinction_prob",
    "load_spec",
    "loads",
    "msvf",
    "percolation_dim",
    "percolation_preset",
    "pressure",
    "proj_dim_1var",
    "proj_dim_infty",
    "psi_sum_exact",
    "psi_sum_lattice",
    "psi_sum_mc",
    "render",
    "sample_tree",
    "sample_word",
    "save_spec",
    "stopping_set",
    "tree_psi_sum",
    "validate",
]
