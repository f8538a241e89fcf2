"""Command line interface: ``carpetdim <command> [options]``.

Every command prints a JSON result document (or writes it to ``--out``).
Exit codes: 0 success, 1 invalid input or failed validation, 2 solver did
not converge, 3 I/O error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from fractions import Fraction
from pathlib import Path

from . import __version__
from .boxcount import ShallowRealization, box_count_series, empirical_dim, render
from .infinity import (
    ExtinctionError,
    PercolationSpec,
    dim_infty,
    dim_infty_additive,
    percolation_dim,
    percolation_preset,
)
from .pressure import (
    DEFAULT_BUDGET,
    HypothesisError,
    additive_hypothesis,
    dim_1var,
    dim_1var_additive,
    dim_gui_li,
)
from .presets import PRESETS
from .projection import build_projection, proj_dim_1var, proj_dim_infty
from .rifs import Mode, Rifs, SpecError, classify_separation, has_swaps, validate
from .rng import parse_seed
from .roots import BracketError, MonotonicityError
from .sampling import ConvergenceError, sample_tree, sample_word
from .specio import dumps, load_spec

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _load(args) -> Rifs:
    if getattr(args, "preset", None):
        return PRESETS[args.preset]()
    if not getattr(args, "spec", None):
        raise CliError("a spec file or --preset is required", EXIT_INVALID)
    return load_spec(args.spec)


def _checked(args) -> Rifs:
    rifs = _load(args)
    report = validate(rifs, args.model)
    if not report.ok:
        names = "; ".join(f"{c.name}: {c.message}" for c in report.failures)
        raise CliError(f"validation failed ({names})", EXIT_INVALID)
    return rifs


def _config(args) -> dict:
    keys = ("spec", "preset", "model", "seed", "k", "reps", "budget", "tol", "delta_min",
            "resolution", "method", "depth", "unconditional")
    out = {key: getattr(args, key) for key in keys if getattr(args, key, None) is not None}
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args) -> tuple[dict, int]:
    rifs = _load(args)
    report = validate(rifs, args.model)
    code = EXIT_OK if report.ok else EXIT_INVALID
    if not report.ok:
        names = ", ".join(c.name for c in report.failures)
        print(f"validation failed: {names}", file=sys.stderr)
    return report.to_dict(), code


def cmd_classify(args) -> tuple[dict, int]:
    rifs = _load(args)
    additive, why = additive_hypothesis(rifs)
    return {
        "separation": classify_separation(rifs).value,
        "has_swaps": has_swaps(rifs),
        "additive": additive,
        "additive_reason": why,
    }, EXIT_OK


def cmd_proj_dim(args) -> tuple[dict, int]:
    rifs = _checked(args)
    ps = build_projection(rifs)
    if args.model == Mode.ONE_VAR.value:
        res = proj_dim_1var(ps, rifs.probs, k=args.k or 10_000, reps=args.reps or 64, seed=args.seed)
    else:
        res = proj_dim_infty(ps, rifs.probs)
    out = res.to_dict()
    out["kind"] = ps.kind.value
    out["warnings"] = list(ps.warnings)
    return out, EXIT_OK


def _dimension(rifs: Rifs, args) -> dict:
    additive, why = additive_hypothesis(rifs)
    use_closed = args.method == "closed-form" or (args.method == "auto" and additive)
    if args.method == "closed-form" and not additive:
        raise HypothesisError(why)
    one = args.model == Mode.ONE_VAR.value
    if use_closed:
        res = dim_1var_additive(rifs) if one else dim_infty_additive(rifs)
    elif one:
        res = dim_1var(rifs, k=args.k or 200, reps=args.reps or 64, seed=args.seed,
                       budget=args.budget, tol=args.tol or 1e-3)
    else:
        res = dim_infty(rifs, k=args.k or 16, trees=args.reps or 10_000, seed=args.seed,
                        tol=args.tol or 1e-4, conditional=not args.unconditional)
    out = res.to_dict()
    out["backend"] = res.method
    out["additive"] = additive
    return out


def cmd_dim(args) -> tuple[dict, int]:
    rifs = _checked(args)
    return _dimension(rifs, args), EXIT_OK


def cmd_gui_li(args) -> tuple[dict, int]:
    rifs = _checked(args)
    return dim_gui_li(rifs).to_dict(), EXIT_OK


def _realization(rifs: Rifs, args, depth: int):
    if args.model == Mode.ONE_VAR.value:
        return sample_word(rifs, depth, args.seed)
    return sample_tree(rifs, depth, args.seed)


def cmd_empirical(args) -> tuple[dict, int]:
    rifs = _checked(args)
    j_max = round(-math.log2(args.delta_min))
    j_min = args.j_min
    _, amax = rifs.alpha_bounds()
    depth = math.ceil(j_max * math.log(2) / -math.log(amax) - 1e-12)
    real = _realization(rifs, args, depth)
    series = box_count_series(rifs, real, j_min, j_max,
                              {"seed": args.seed, "model": args.model, "depth": depth})
    if args.csv:
        series.write_csv(args.csv)
    slope, half = empirical_dim(series)
    return {
        "slope": {"value": slope, "uncertainty": half},
        "series": [{"j": j, "count": c} for j, c in zip(series.js, series.counts)],
        "depth": depth,
    }, EXIT_OK


def cmd_render(args) -> tuple[dict, int]:
    rifs = _checked(args)
    if not args.image:
        raise CliError("render needs --image PATH", EXIT_INVALID)
    _, amax = rifs.alpha_bounds()
    max_depth = args.depth if args.depth is not None else math.ceil(
        math.log(args.resolution) / -math.log(amax))
    real = _realization(rifs, args, max_depth)
    data = render(rifs, real, args.resolution, args.depth)
    Path(args.image).write_bytes(data)
    return {"image": str(args.image), "resolution": args.resolution, "bytes": len(data)}, EXIT_OK


def cmd_percolation(args) -> tuple[dict, int]:
    p = Fraction(args.p) if "/" in args.p else float(args.p)
    spec = PercolationSpec(args.n, args.m, p)
    res = percolation_dim(spec)
    out = res.to_dict()
    if args.spec_out:
        Path(args.spec_out).write_text(dumps(percolation_preset(spec)), encoding="utf-8")
        out["spec_file"] = str(args.spec_out)
    return out, EXIT_OK


REPRO_TOL = 0.03


def cmd_repro(args) -> tuple[dict, int]:
    """Both worked examples end to end, with a comparison table on stderr."""
    seed = args.seed
    mixed, trans = PRESETS["mixed-grids"](), PRESETS["transposed-grids"]()
    rows = []

    def row(name, got, want, tol, unc):
        rows.append({"check": name, "value": got, "target": want, "tolerance": tol,
                     "uncertainty": unc, "pass": abs(got - want) <= tol})

    s51 = dim_1var_additive(mixed).value
    row("mixed grids s_B (one-variable)", s51, math.log(18) / math.log(12), 1e-9, "exact")
    for i, want in enumerate((1.0, math.log(6) / math.log(4))):
        single = Rifs((mixed.ifss[i],), (Fraction(1),))
        row(f"mixed grids IFS {i} alone", dim_1var_additive(single).value, want, 1e-9, "exact")
    gl = dim_gui_li(mixed)
    row("Gui-Li mean", gl.mean_dim, (1 + math.log(6) / math.log(4)) / 2, 1e-9, "exact")
    rows.append({"check": "Gui-Li mean differs from s_B", "value": not gl.equals_s_B,
                 "target": True, "pass": not gl.equals_s_B})
    one = dim_1var(trans, k=200, reps=64, seed=seed)
    row("transposed grids s_B (one-variable)", one.value, math.log(4) / math.log(6), REPRO_TOL,
        one.uncertainty)
    s_p = proj_dim_infty(build_projection(trans), trans.probs).s_x
    inf = dim_infty(trans, k=16, trees=10_000, seed=seed)
    row("transposed grids s_B (infinite-variable)", inf.value, s_p, REPRO_TOL, inf.uncertainty)

    width = max(len(r["check"]) for r in rows)
    for r in rows:
        print(f"{r['check']:<{width}}  {str(r['value']):<22} target {r['target']!s:<22} "
              f"{'PASS' if r['pass'] else 'FAIL'}", file=sys.stderr)
    ok = all(r["pass"] for r in rows)
    return {"rows": rows, "all_pass": ok}, EXIT_OK if ok else EXIT_SOLVER


def cmd_sample(args) -> tuple[dict, int]:
    rifs = _checked(args)
    depth = args.k if args.k is not None else 4
    if args.model == Mode.ONE_VAR.value:
        word = sample_word(rifs, depth, args.seed)
        return {"letters": list(word.letters), "seed": args.seed, "k": depth}, EXIT_OK
    tree = sample_tree(rifs, depth, args.seed)
    if args.format == "text":
        sys.stdout.write(tree.to_text())
        return None, EXIT_OK
    return {"seed": args.seed, "depth": depth, "tree": tree.to_nested()}, EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "classify": cmd_classify,
    "proj-dim": cmd_proj_dim,
    "dim": cmd_dim,
    "gui-li": cmd_gui_li,
    "empirical": cmd_empirical,
    "render": cmd_render,
    "percolation": cmd_percolation,
    "repro-paper": cmd_repro,
    "sample": cmd_sample,
}


def positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", choices=[m.value for m in Mode], default=Mode.ONE_VAR.value)
    common.add_argument("--seed", type=parse_seed, default=0, help="decimal or 0x-prefixed hex")
    common.add_argument("--k", type=int, help="word length or tree depth")
    common.add_argument("--reps", type=int, help="replicas (words or trees)")
    common.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="enumeration budget")
    common.add_argument("--tol", type=positive_float, help="root tolerance")
    common.add_argument("--out", help="write the result document here instead of stdout")
    common.add_argument("--threads", type=int, help="worker processes (default $CARPETDIM_THREADS or 1)")

    parser = argparse.ArgumentParser(prog="carpetdim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def spec_cmd(name, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("spec", nargs="?", help="system description (JSON)")
        p.add_argument("--preset", choices=sorted(PRESETS))
        return p

    spec_cmd("validate", "structural checks")
    spec_cmd("classify", "separation class and closed-form eligibility")
    spec_cmd("proj-dim", "projection dimensions")
    p = spec_cmd("dim", "box-counting dimension")
    p.add_argument("--method", choices=["auto", "closed-form", "mc"], default="auto")
    p.add_argument("--unconditional", action="store_true",
                   help="infinite-variable mean over all trees, extinct ones counting 0")
    spec_cmd("gui-li", "compare with the mean of the individual dimensions")
    p = spec_cmd("empirical", "box counting on a sampled realisation")
    p.add_argument("--delta-min", type=positive_float, default=2.0**-12)
    p.add_argument("--j-min", type=int, default=6)
    p.add_argument("--csv", help="also write the (j, count) series here")
    p = spec_cmd("render", "PGM picture of a sampled prefractal")
    p.add_argument("--resolution", type=int, default=512)
    p.add_argument("--depth", type=int)
    p.add_argument("--image", help="output PGM path")
    p = sub.add_parser("percolation", parents=[common], help="fractal percolation closed form")
    p.add_argument("--n", type=int, required=True, help="columns")
    p.add_argument("--m", type=int, required=True, help="rows")
    p.add_argument("--p", required=True, help="retention probability (decimal or p/q)")
    p.add_argument("--spec-out", help="write the enumerated system description here")
    sub.add_parser("repro-paper", parents=[common], help="run the two worked examples")
    p = spec_cmd("sample", "dump a sampled word or coding tree")
    p.add_argument("--format", choices=["json", "text"], default="json")
    return parser


def _emit(doc: dict, path: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n"
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _jsonable(x):
    if isinstance(x, Fraction):
        return float(x)
    if hasattr(x, "item"):
        return x.item()
    if hasattr(x, "value"):
        return x.value
    raise TypeError(f"cannot serialise {type(x).__name__}")


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads:
        os.environ["CARPETDIM_THREADS"] = str(args.threads)
    start = time.perf_counter()
    try:
        result, code = COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SpecError, ExtinctionError, HypothesisError, ShallowRealization) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ConvergenceError, BracketError, MonotonicityError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if result is not None:
        doc = {
            "command": args.command,
            "config": _config(args),
            "result": result,
            "timing": {"seconds": round(time.perf_counter() - start, 6)},
        }
        try:
            _emit(doc, args.out)
        except OSError as exc:
            print(f"I/O error: {exc}", file=sys.stderr)
            return EXIT_IO
    return code


def main() -> None:
    sys.exit(run())
