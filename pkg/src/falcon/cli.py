"""Batch command-line front end.

Exit codes: 0 success, 1 usage, 2 format error, 3 infeasible or degenerate
input, 4 stage-provider failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .bundle import read_bundle, read_mask, write_result
from .dfo import DfoConfig, bso_dfo
from .errors import DomainError, FormatError, SizeError, StageError
from .knapsack import brute_force_ilp, solve_ilp
from .model import Budgets, eval_mask
from .multistage import (StaticProvider, SubprocessProvider, falcon_pp,
                         schedule_budgets)
from .quadratic import build_model

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FORMAT = 2
EXIT_INFEASIBLE = 3
EXIT_STAGE = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


class _UsageError(Exception):
    pass


def _parse_budget(text: str | None, total, integral: bool):
    """Absolute value, or a fraction of the dense total like ``0.2x``."""
    if text is None:
        return None
    try:
        if text.endswith("x"):
            frac = float(text[:-1])
            if frac < 0:
                raise ValueError
            value = frac * total
        else:
            value = float(text)
    except ValueError:
        raise _UsageError(f"invalid budget value: {text!r}") from None
    return int(round(value)) if integral else value


def _budgets(args, bundle) -> Budgets:
    if args.nnz is None and args.flops is None:
        raise _UsageError("at least one of --nnz / --flops is required")
    total_flops = float(bundle.group_flop_cost @ np.diff(bundle.group_offsets))
    nnz = _parse_budget(args.nnz, bundle.p, integral=True)
    flops = _parse_budget(args.flops, total_flops, integral=False)
    if (nnz is not None and nnz < 0) or (flops is not None and flops < 0):
        raise DomainError("budgets must be nonnegative")
    return Budgets(nnz=nnz, flops=flops)


def _set_threads(args):
    n = args.threads
    if n is None:
        n = os.environ.get("FALCON_THREADS")
        n = int(n) if n else None
    if n is not None:
        try:
            import threadpoolctl
            threadpoolctl.threadpool_limits(limits=n)
        except ImportError:
            pass  # reductions are fixed-order; results do not depend on threads


def _default_out(bundle_path: str, suffix: str) -> str:
    return os.path.abspath(bundle_path.rstrip("/")) + f".{suffix}"


def _model_params(args):
    return dict(ridge=args.ridge, rho=args.rho, block_size=args.bsize)


def _dfo_config(args) -> DfoConfig:
    return DfoConfig(tau=args.tau, inner_iters=args.inner_iters,
                     max_rounds=args.rounds)


def _emit(out_dir, mask, weights, scalars, inst, quiet=False):
    write_result(out_dir, mask, weights, scalars, inst)
    if not quiet:
        for key, value in scalars.items():
            print(f"{key} {value}")
        print(f"result {out_dir}")


def _selection_scalars(report, sel, q_l):
    return {
        "nnz": report.nnz,
        "flops": report.flops,
        "objective": sel.objective,
        "dual_value": sel.upper_bound,
        "gap_bound": sel.gap_bound,
        "q_l": q_l,
    }


def cmd_prune_mp(args) -> int:
    bundle = read_bundle(args.bundle)
    b = _budgets(args, bundle)
    inst = bundle.instance()
    sel = solve_ilp(inst, b, args.eps)
    report = eval_mask(sel.mask, inst, b)
    weights = np.asarray(bundle.weights, dtype=np.float64) * sel.mask
    m = build_model(bundle, ridge=0.0, rho=1.0, block_size=args.bsize)
    scalars = _selection_scalars(report, sel, m.objective(weights))
    _emit(args.out or _default_out(args.bundle, "mp"), sel.mask,
          weights, scalars, inst)
    return EXIT_OK


def cmd_prune(args) -> int:
    bundle = read_bundle(args.bundle)
    b = _budgets(args, bundle)
    inst = bundle.instance()
    m = build_model(bundle, **_model_params(args))
    w, trace = bso_dfo(m, m.w_bar.copy(), _dfo_config(args), inst, b)
    mask = (w != 0).astype(np.uint8)
    report = eval_mask(mask, inst, b)
    scalars = {
        "nnz": report.nnz,
        "flops": report.flops,
        "q_l": m.objective(w),
        "rounds": len(trace.rounds),
    }
    _emit(args.out or _default_out(args.bundle, "pruned"), mask, w, scalars, inst)
    return EXIT_OK


def cmd_prune_multi(args) -> int:
    bundle = read_bundle(args.bundle)
    b = _budgets(args, bundle)
    dense_flops = float(bundle.group_flop_cost @ np.diff(bundle.group_offsets))
    schedule = schedule_budgets(
        nnz_init=None if b.nnz is None else bundle.p,
        nnz=b.nnz,
        flops_init=None if b.flops is None else dense_flops,
        flops=b.flops,
        stages=args.stages, exponent=args.exponent)
    if args.provider:
        provider = SubprocessProvider(args.provider, bundle)
    else:
        provider = StaticProvider(bundle)
    w, traces = falcon_pp(provider, schedule, cfg=_dfo_config(args),
                          **_model_params(args))
    inst = bundle.instance()
    mask = (w != 0).astype(np.uint8)
    report = eval_mask(mask, inst, b)
    scalars = {
        "nnz": report.nnz,
        "flops": report.flops,
        "stages": args.stages,
        "rounds": sum(len(t.rounds) for t in traces),
    }
    _emit(args.out or _default_out(args.bundle, "pruned"), mask, w, scalars, inst)
    return EXIT_OK


def cmd_project(args) -> int:
    from .projection import project_select
    bundle = read_bundle(args.bundle)
    b = _budgets(args, bundle)
    inst = bundle.instance()
    w_bar = np.asarray(bundle.weights, dtype=np.float64)
    sel = project_select(w_bar, inst, b, args.eps)
    w = w_bar * sel.mask
    report = eval_mask(sel.mask, inst, b)
    scalars = _selection_scalars(report, sel, 0.0)
    del scalars["q_l"]
    _emit(args.out or _default_out(args.bundle, "projected"), sel.mask,
          w, scalars, inst)
    return EXIT_OK


def cmd_eval(args) -> int:
    bundle = read_bundle(args.bundle)
    mask = read_mask(args.mask, bundle.p)
    b = Budgets(
        nnz=_parse_budget(args.nnz, bundle.p, integral=True),
        flops=_parse_budget(
            args.flops,
            float(bundle.group_flop_cost @ np.diff(bundle.group_offsets)),
            integral=False))
    inst = bundle.instance()
    report = eval_mask(mask, inst, b)
    m = build_model(bundle, ridge=0.0, rho=1.0, block_size=args.bsize)
    w = np.asarray(bundle.weights, dtype=np.float64) * mask
    print(f"nnz {report.nnz}")
    print(f"flops {report.flops}")
    print(f"objective {report.objective}")
    print(f"feasible {str(report.feasible).lower()}")
    print(f"q_l {m.objective(w)}")
    return EXIT_OK


def cmd_verify(args) -> int:
    bundle = read_bundle(args.bundle)
    if bundle.p > 25:
        raise SizeError(f"verify requires p <= 25, got {bundle.p}")
    b = _budgets(args, bundle)
    inst = bundle.instance()
    exact = brute_force_ilp(inst, b)
    approx = solve_ilp(inst, b, args.eps)
    gap = 0.0
    if exact.objective > 0:
        gap = (exact.objective - approx.objective) / exact.objective
    print(f"exact_objective {exact.objective}")
    print(f"solver_objective {approx.objective}")
    print(f"relative_gap {gap}")
    print(f"gap_bound {approx.gap_bound}")
    print(f"within_bound {str(gap <= approx.gap_bound + 1e-9).lower()}")
    return EXIT_OK


def _add_budget_flags(sub, required=True):
    sub.add_argument("--nnz", help="NNZ budget: absolute or fraction like 0.5x")
    sub.add_argument("--flops", help="FLOP budget: absolute or fraction like 0.2x")


def _add_model_flags(sub):
    sub.add_argument("--ridge", type=float, default=1e-4,
                     help="per-sample ridge strength (default 1e-4)")
    sub.add_argument("--rho", type=float, default=1.0,
                     help="curvature scaling factor (default 1)")
    sub.add_argument("--bsize", type=int, default=2000,
                     help="max curvature block size (default 2000)")


def _add_dfo_flags(sub):
    sub.add_argument("--tau", type=float, default=1e-3,
                     help="DFO step size (default 1e-3)")
    sub.add_argument("--T", dest="inner_iters", type=int, default=1,
                     help="inner DFO iterations per round (default 1)")
    sub.add_argument("--rounds", type=int, default=20,
                     help="max active-set rounds (default 20)")


def build_parser() -> _Parser:
    parser = _Parser(prog="falcon",
                     description="Prune parameter vectors under joint "
                                 "NNZ and FLOP budgets.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--threads", type=int, default=None,
                        help="thread cap (or env FALCON_THREADS); "
                             "1 gives bit-exact reproducibility mode")
    subs = parser.add_subparsers(dest="command", required=True)

    def add_parser(*a, **kw):
        # accept --threads after the subcommand as well
        sub = subs.add_parser(*a, **kw)
        sub.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                         help=argparse.SUPPRESS)
        return sub

    s = add_parser("prune-mp", help="generalized magnitude pruning")
    s.add_argument("bundle")
    _add_budget_flags(s)
    s.add_argument("--eps", type=float, default=None, help="dual search tolerance")
    s.add_argument("--bsize", type=int, default=2000, help=argparse.SUPPRESS)
    s.add_argument("--out")
    s.set_defaults(func=cmd_prune_mp)

    s = add_parser("prune", help="single-stage model-based pruning")
    s.add_argument("bundle")
    _add_budget_flags(s)
    _add_model_flags(s)
    _add_dfo_flags(s)
    s.add_argument("--out")
    s.set_defaults(func=cmd_prune)

    s = add_parser("prune-multi", help="multi-stage pruning")
    s.add_argument("bundle")
    _add_budget_flags(s)
    _add_model_flags(s)
    _add_dfo_flags(s)
    s.add_argument("--stages", type=int, default=20,
                   help="number of stages (default 20)")
    s.add_argument("--exponent", type=float, default=3.0,
                   help="budget schedule exponent (default 3)")
    s.add_argument("--provider",
                   help="stage-provider command (default: reuse the bundle)")
    s.add_argument("--out")
    s.set_defaults(func=cmd_prune_multi)

    s = add_parser("project", help="budgeted projection of the weights")
    s.add_argument("bundle")
    _add_budget_flags(s)
    s.add_argument("--eps", type=float, default=None)
    s.add_argument("--out")
    s.set_defaults(func=cmd_project)

    s = add_parser("eval", help="evaluate a mask against a bundle")
    s.add_argument("bundle")
    s.add_argument("mask", help="mask.bin file or result directory")
    _add_budget_flags(s, required=False)
    s.add_argument("--bsize", type=int, default=2000, help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_eval)

    s = add_parser("verify", help="compare against the exhaustive oracle")
    s.add_argument("bundle")
    _add_budget_flags(s)
    s.add_argument("--eps", type=float, default=None)
    s.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    _set_threads(args)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except StageError as exc:
        print(f"stage error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (DomainError, SizeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
