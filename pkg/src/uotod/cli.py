"""Command line interface: ``uotod {match,bench,sweep,gen}``.

Exit codes: 0 success, 2 malformed input or flags, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .analysis import epsilon_rule, unbalanced_objective
from .cost import CostMatrix, background_marginals, build_cost, uniform_marginals
from .exact import assignment_to_plan, closest_per_groundtruth, closest_per_prediction, hungarian
from .harness import BENCH_SOLVERS, SWEEP_PARAMS, generated_problems, run_bench, run_sweep
from .mining import count_positives_negatives
from .scaling import (
    BatchSolveError,
    NumericalInstabilityError,
    SolverConfig,
    dual_softmax,
    sinkhorn,
    softmax_limit,
    unbalanced_scaling,
)
from .synthetic import PlacementError, generate_predictions, generate_scene

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
SOLVERS = ("hungarian", "sinkhorn", "unbalanced", "closest-pred", "closest-gt", "softmax", "dual-softmax")


class InputError(ValueError):
    pass


def _tau(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'inf', got {text!r}") from None
    if math.isnan(value) or value < 0:
        raise argparse.ArgumentTypeError(f"must be in [0, inf], got {text!r}")
    return value


def _positive(text: str) -> float:
    value = _tau(text)
    if value <= 0 or math.isinf(value):
        raise argparse.ArgumentTypeError(f"must be positive and finite, got {text!r}")
    return value


def _int_list(text: str) -> list[int]:
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return values


def _float_list(text: str) -> list[float]:
    return [_tau(x) for x in text.split(",") if x.strip()]


def _str_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _load_cost(args) -> CostMatrix:
    try:
        if args.cost:
            return fileio.read_cost_csv(args.cost)
        costs = fileio.load_problems(args.problem)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        raise InputError(str(exc)) from exc
    if len(costs) != 1:
        raise InputError(f"{args.problem}: expected a single problem, got {len(costs)}")
    return costs[0]


def _marginals(cost: CostMatrix):
    if cost.background:
        if cost.n_gt > cost.n_pred:
            raise InputError(f"{cost.n_gt} ground truths exceed {cost.n_pred} predictions")
        return background_marginals(cost.n_pred, cost.n_gt)
    return uniform_marginals(*cost.shape)


def _solve(cost: CostMatrix, marg, args):
    """Return ``(plan, extras)`` for the chosen solver."""
    eps = args.eps if args.eps is not None else epsilon_rule(cost.n_pred)
    cfg = SolverConfig(
        epsilon=eps,
        tau1=args.tau1,
        tau2=args.tau2,
        max_iters=args.iters,
        residual_tol=args.tol,
        stabilized=not args.plain,
    )
    extras: dict = {"solver": args.solver, "epsilon": eps}
    if args.solver == "hungarian":
        a = hungarian(cost)
        extras["assignment"] = {int(j): int(i) for j, i in enumerate(a.gt_to_pred)}
        extras["assignment_cost"] = a.total_cost
        if cost.background:
            plan = assignment_to_plan(a, cost.n_pred, cost.n_gt)
        else:
            plan = np.zeros(cost.shape)
            plan[a.gt_to_pred, np.arange(cost.n_gt)] = 1.0 / cost.n_gt
        return plan, cfg, extras
    if args.solver in ("sinkhorn", "unbalanced"):
        if args.solver == "sinkhorn":
            cfg = SolverConfig(epsilon=eps, max_iters=args.iters, residual_tol=args.tol, stabilized=not args.plain)
            plan, state = sinkhorn(cost, marg, cfg)
        else:
            plan, state = unbalanced_scaling(cost, marg, cfg)
        extras["iterations_run"] = state.iterations_run
        extras["final_residual"] = state.final_residual
        return plan, cfg, extras
    if args.solver == "closest-pred":
        return closest_per_prediction(cost, marg), cfg, extras
    if args.solver == "closest-gt":
        return closest_per_groundtruth(cost, marg), cfg, extras
    if args.solver == "softmax":
        return softmax_limit(cost, marg, eps, over=args.over), cfg, extras
    return dual_softmax(cost, eps), cfg, extras


def _summary(plan, cost: CostMatrix, marg, cfg) -> dict:
    obj = unbalanced_objective(plan, cost, marg, cfg)
    out = {
        "transport_cost": float((plan * cost.values).sum()),
        "objective": obj.as_dict(),
        "row_residual_l1": float(np.abs(plan.sum(axis=1) - marg.alpha).sum()),
        "col_residual_l1": float(np.abs(plan.sum(axis=0) - marg.beta).sum()),
    }
    if cost.background:
        n_pos, n_neg = count_positives_negatives(plan)
        out["n_pos"], out["n_neg"] = n_pos, n_neg
    return out


def cmd_match(args) -> int:
    cost = _load_cost(args)
    marg = _marginals(cost)
    plan, cfg, extras = _solve(cost, marg, args)
    summary = {**extras, **_summary(plan, cost, marg, cfg)}
    if args.format == "json":
        text = fileio.plan_to_json(plan, summary=summary)
    else:
        text = fileio.write_plan_csv(plan, cost.background)
    if args.out:
        Path(args.out).write_text(text)
        print(json.dumps(summary, indent=1))
    else:
        sys.stdout.write(text + ("\n" if args.format == "json" else ""))
        if args.format == "csv":
            print(json.dumps(summary, indent=1), file=sys.stderr)
    return EXIT_OK


def _write_rows(path, fields, rows) -> None:
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(fields)
        w.writerows(rows)
    finally:
        if path:
            fh.close()


def cmd_bench(args) -> int:
    records = run_bench(
        args.np, args.ng, args.batch, args.iters, args.repeats, args.solvers, args.seed, args.workers
    )
    _write_rows(args.out, records[0].FIELDS, [r.row() for r in records])
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.problems == "generated":
        costs = generated_problems(args.n_problems, args.np, args.seed)
    else:
        try:
            costs = fileio.load_problems(args.problems)
        except (OSError, ValueError, json.JSONDecodeError) as exc:
            raise InputError(str(exc)) from exc
    rows = run_sweep(args.param, args.values, costs)
    _write_rows(args.out, rows[0].FIELDS, [r.row() for r in rows])
    return EXIT_OK


def cmd_gen(args) -> int:
    problems = []
    for k in range(args.n_problems):
        scene = generate_scene(args.seed + k)
        preds = generate_predictions(scene, args.np, args.noise, args.seed + k, args.per_gt)
        problems.append(fileio.problem_to_dict(preds, scene.gts))
    if args.out:
        fileio.save_problems(args.out, problems)
    else:
        print(json.dumps(problems[0] if len(problems) == 1 else problems, indent=1))
    if args.cost_out:
        preds, gts, weights = fileio.problem_from_dict(problems[0])
        fileio.write_cost_csv(args.cost_out, build_cost(preds, gts, weights))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uotod", description="Transport-based matching for detection.")
    sub = parser.add_subparsers(dest="command", required=True)

    m = sub.add_parser("match", help="solve one matching problem")
    src = m.add_mutually_exclusive_group(required=True)
    src.add_argument("--cost", help="cost CSV (header ending in 'background' marks the background column)")
    src.add_argument("--problem", help="problem JSON")
    m.add_argument("--solver", choices=SOLVERS, default="unbalanced")
    m.add_argument("--eps", type=_positive, default=None, help="entropic parameter (default: scaled with Np)")
    m.add_argument("--tau1", type=_tau, default=math.inf)
    m.add_argument("--tau2", type=_tau, default=math.inf)
    m.add_argument("--iters", type=int, default=1000)
    m.add_argument("--tol", type=float, default=1e-9, help="residual stopping tolerance (0 disables)")
    m.add_argument("--plain", action="store_true", help="scale in the linear domain (fails on underflow)")
    m.add_argument("--over", choices=("predictions", "ground_truths"), default="predictions",
                   help="normalization axis of --solver softmax")
    m.add_argument("--out")
    m.add_argument("--format", choices=("json", "csv"), default="json")
    m.set_defaults(func=cmd_match)

    b = sub.add_parser("bench", help="time batched matching")
    b.add_argument("--np", type=_int_list, default=[100, 300, 8732])
    b.add_argument("--ng", type=int, default=20)
    b.add_argument("--batch", type=int, default=16)
    b.add_argument("--iters", type=int, default=20)
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--solvers", type=_str_list, default=list(BENCH_SOLVERS))
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--workers", type=int, default=None, help="threads (default: $UOTOD_THREADS or CPU count)")
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("sweep", help="match statistics across parameter values")
    s.add_argument("--param", choices=SWEEP_PARAMS, required=True)
    s.add_argument("--values", type=_float_list, required=True)
    s.add_argument("--problems", default="generated", help="problem JSON or 'generated'")
    s.add_argument("--n-problems", type=int, default=8)
    s.add_argument("--np", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    g = sub.add_parser("gen", help="write synthetic problems")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--np", type=int, default=100)
    g.add_argument("--noise", type=float, default=0.05)
    g.add_argument("--per-gt", type=int, default=1)
    g.add_argument("--n-problems", type=int, default=1)
    g.add_argument("--out")
    g.add_argument("--cost-out", help="also write the first problem's cost CSV")
    g.set_defaults(func=cmd_gen)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (NumericalInstabilityError, FloatingPointError) as exc:
        print(f"uotod: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except BatchSolveError as exc:
        code = EXIT_NUMERIC if isinstance(exc.error, NumericalInstabilityError) else EXIT_INPUT
        print(f"uotod: {exc}", file=sys.stderr)
        return code
    except (InputError, ValueError, PlacementError, OSError) as exc:
        print(f"uotod: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
