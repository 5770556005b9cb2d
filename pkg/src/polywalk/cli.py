"""Command line entry point: ``polywalk <command> --input FILE [options]``.

Commands
--------
solve-gap-cap   round the capped scheduling relaxation
solve-outlier   round the scheduling-with-outliers relaxation
solve-maxmin    max-min allocation (capacitated when the file has ``caps``)
oracle          exhaustive optimum for tiny instances
montecarlo      empirical per-edge marginals of the randomised rounding

Exit status: 0 ok, 2 infeasible, 3 parse error, 4 budget exceeded,
5 internal invariant violated, 1 any other input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import (
    BudgetExceededError,
    InfeasibleInstanceError,
    InternalInvariantError,
    InvalidInputError,
    ParseError,
)
from .gapcap import derandomize_cost, min_feasible_T, sched_cap_round, solve_lp_cap
from .instances import GapInstance, MaxMinInstance, OutlierInstance, load_instance
from .maxmin import (
    FlowMatchGraph,
    default_parameters,
    maxmin_cap_round,
    maxmin_solve,
    sample_matching,
    search_threshold,
    solve_capacitated_lp,
)
from .oracle import exact_gap_cap, exact_maxmin, exact_outlier_optimum
from .outlier import min_feasible_outlier_lp, sched_outlier_round, solve_outlier

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_PARSE, EXIT_BUDGET, EXIT_INVARIANT = 0, 1, 2, 3, 4, 5


def trial_generator(seed: int, trial: int = 0) -> np.random.Generator:
    """Sub-stream ``trial`` of the Philox stream keyed by ``seed``."""
    bits = np.random.Philox(key=seed)
    return np.random.Generator(bits.jumped(trial) if trial else bits)


def _num(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isfinite(x) and x == int(x) and abs(x) < 2**53:
            return int(x)
        return round(x, 12)
    return x


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return _num(obj)


def _schedule_report(sched, n_jobs) -> dict:
    return {
        "assignment": sched.labels(n_jobs),
        "makespan": sched.makespan,
        "cost": sched.cost,
        "loads": sched.loads,
        "iterations": sched.iterations,
    }


def _expect(inst, kind):
    if not isinstance(inst, kind):
        raise InvalidInputError(f"this command needs a {kind.__name__}, got {type(inst).__name__}")


def _override_epsilon(inst, args):
    if args.epsilon is not None:
        if not 0 < args.epsilon < 1:
            raise InvalidInputError("--epsilon must lie in (0, 1)")
        inst.epsilon = args.epsilon


def cmd_solve_gap_cap(inst, args) -> dict:
    _expect(inst, GapInstance)
    T = inst.makespan_target if inst.makespan_target is not None else min_feasible_T(inst, args.precision)
    sol = solve_lp_cap(inst, T)
    if not sol.is_optimal:
        raise InfeasibleInstanceError(f"LP relaxation infeasible at T = {T}")
    if args.randomized:
        sched = sched_cap_round(inst, sol.values, T, trial_generator(args.seed))
    else:
        sched = derandomize_cost(inst, sol.values, T)
    return {"lp_makespan": T, **_schedule_report(sched, inst.jobs)}


def cmd_solve_outlier(inst, args) -> dict:
    _expect(inst, OutlierInstance)
    _override_epsilon(inst, args)
    rng = trial_generator(args.seed) if args.randomized else None
    sched, lp = solve_outlier(inst, rng, args.precision)
    return {
        "lp_makespan": lp.T,
        "profit": sched.profit,
        "guess": [list(e) for e in lp.guess.ones],
        **_schedule_report(sched, inst.jobs),
    }


def _allocation_report(alloc) -> dict:
    return {
        "threshold": alloc.T,
        "owner": alloc.owner,
        "utilities": alloc.utilities,
        "min_utility": alloc.min_utility,
        "ratio": alloc.ratio if math.isfinite(alloc.ratio) else None,
    }


def cmd_solve_maxmin(inst, args) -> dict:
    _expect(inst, MaxMinInstance)
    rng = trial_generator(args.seed)
    if inst.caps is not None:
        T, X = solve_capacitated_lp(inst)
        return {"mode": "capacitated", **_allocation_report(maxmin_cap_round(inst, X, T, rng))}
    eps = 0.05 if args.epsilon is None else args.epsilon
    alloc = maxmin_solve(inst, eps, rng)
    return {
        "mode": "configuration",
        "lambda": alloc.lam,
        "eps1": alloc.eps1,
        "matched": {str(i): j for i, j in sorted(alloc.matched.items())},
        **_allocation_report(alloc),
    }


def cmd_oracle(inst, args) -> dict:
    if isinstance(inst, GapInstance):
        s = exact_gap_cap(inst)
        return {"optimum_makespan": s.makespan, **_schedule_report(s, inst.jobs)}
    if isinstance(inst, OutlierInstance):
        q = exact_outlier_optimum(inst)
        return {
            "optimum_makespan": float(q.makespan),
            "cost": float(q.cost),
            "profit": float(q.profit),
            "assignment": list(q.assign),
        }
    return {"optimum_min_utility": exact_maxmin(inst)}


def _marginal_stats(keys, x_star, hits, trials) -> dict:
    band = 4 * math.sqrt(0.25 / trials)
    edges, worst = [], 0.0
    for e, x, h in zip(keys, x_star, hits):
        mean = h / trials
        dev = mean - x
        worst = max(worst, abs(dev))
        sd = math.sqrt(max(x * (1 - x), 0.0) / trials)
        edges.append({
            "edge": list(e),
            "target": x,
            "mean": mean,
            "deviation": dev,
            "z": dev / sd if sd > 0 else (0.0 if dev == 0 else None),
        })
    return {"trials": trials, "band": band, "max_abs_deviation": worst, "within_band": worst <= band, "edges": edges}


def cmd_montecarlo(inst, args) -> dict:
    N = args.trials
    if N < 1:
        raise InvalidInputError("--trials must be positive")
    if isinstance(inst, GapInstance):
        T = inst.makespan_target if inst.makespan_target is not None else min_feasible_T(inst, args.precision)
        x = {e: v for e, v in solve_lp_cap(inst, T).values.items() if isinstance(e, tuple)}
        keys = sorted(x)
        hits = np.zeros(len(keys))
        for t in range(N):
            lab = sched_cap_round(inst, x, T, trial_generator(args.seed, t)).labels(inst.jobs)
            hits += [lab[j] == i for i, j in keys]
        return {"lp_makespan": T, **_marginal_stats(keys, [x[k] for k in keys], hits, N)}
    if isinstance(inst, OutlierInstance):
        _override_epsilon(inst, args)
        lp = min_feasible_outlier_lp(inst, args.precision)
        x = {e: v for e, v in lp.solution.values.items() if isinstance(e, tuple)}
        keys = sorted(x)
        hits = np.zeros(len(keys))
        for t in range(N):
            lab = sched_outlier_round(inst, x, lp.T, trial_generator(args.seed, t)).labels(inst.jobs)
            hits += [lab[j] == i for i, j in keys]
        return {"lp_makespan": lp.T, **_marginal_stats(keys, [x[k] for k in keys], hits, N)}
    lam, _ = default_parameters(inst.persons)
    eps = 0.05 if args.epsilon is None else args.epsilon
    g = FlowMatchGraph.from_lp(search_threshold(inst, lam, eps), inst.u)
    keys = [tuple(map(int, e)) for e in zip(*np.nonzero(g.is_matching))]
    hits = np.zeros(len(keys))
    for t in range(N):
        match = sample_matching(g, trial_generator(args.seed, t))
        hits += [match.get(i) == j for i, j in keys]
    return _marginal_stats(keys, [g.w[k] for k in keys], hits, N)


COMMANDS = {
    "solve-gap-cap": cmd_solve_gap_cap,
    "solve-outlier": cmd_solve_outlier,
    "solve-maxmin": cmd_solve_maxmin,
    "oracle": cmd_oracle,
    "montecarlo": cmd_montecarlo,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polywalk", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--input", required=True, type=Path)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--trials", type=int, default=1000)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--precision", type=float)
        p.add_argument("--output", type=Path)
        p.add_argument("--format", choices=["text", "structured"], default="text")
        p.add_argument("--randomized", action="store_true",
                       help="seeded random rounding instead of the cost-derandomised walk")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _text(report: dict, prefix: str = "") -> list[str]:
    lines = []
    for k in sorted(report):
        v = report[k]
        if isinstance(v, dict):
            lines += _text(v, f"{prefix}{k}.")
        elif isinstance(v, list) and v and isinstance(v[0], dict):
            for n, item in enumerate(v):
                lines.append(f"{prefix}{k}[{n}]: " + " ".join(f"{a}={item[a]}" for a in sorted(item)))
        else:
            lines.append(f"{prefix}{k}: {json.dumps(v)}")
    return lines


def render(report: dict, fmt: str) -> str:
    report = _clean(report)
    if fmt == "structured":
        return json.dumps(report, sort_keys=True, indent=2) + "\n"
    return "\n".join(_text(report)) + "\n"


def run(argv=None) -> tuple[int, dict, str]:
    """Parse ``argv`` and run the command.

    Returns ``(exit_status, report, rendered_report)``.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    report = {"command": args.command, "seed": args.seed}
    status = EXIT_OK
    try:
        if not 0 <= args.seed < 2**64:
            raise InvalidInputError("--seed must fit in an unsigned 64-bit integer")
        inst = load_instance(args.input)
        report["kind"] = inst.to_dict()["kind"]
        report.update(COMMANDS[args.command](inst, args))
        report["status"] = "ok"
    except ParseError as exc:
        status, report["status"], report["reason"] = EXIT_PARSE, "parse-error", str(exc)
    except InfeasibleInstanceError as exc:
        status, report["status"], report["reason"] = EXIT_INFEASIBLE, "infeasible", str(exc)
    except BudgetExceededError as exc:
        status, report["status"], report["reason"] = EXIT_BUDGET, "budget-exceeded", str(exc)
    except InternalInvariantError as exc:
        status, report["status"], report["reason"] = EXIT_INVARIANT, "invariant-violation", str(exc)
        report["diagnostics"] = repr(exc.diagnostics)
    except (InvalidInputError, OSError) as exc:
        status, report["status"], report["reason"] = EXIT_INPUT, "input-error", str(exc)
    text = render(report, args.format)
    if args.output is not None:
        args.output.write_text(text)
    return status, report, text


def main(argv=None) -> int:
    status, report, text = run(argv)
    if "--output" not in (sys.argv[1:] if argv is None else argv):
        sys.stdout.write(text)
    if status != EXIT_OK:
        sys.stderr.write(f"polywalk: {report['status']}: {report['reason']}\n")
    return status
