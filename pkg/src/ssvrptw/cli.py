"""Command-line entry point.

Every run writes a manifest (JSON) holding the command, its parameters,
the seed, the package version, wall time and the files produced.  Results
tables are comma-separated.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

from . import __version__
from .bench import gain, generate_instance, load_pool, performance_profile, synthetic_pool
from .expect import evaluate
from .model import (
    BudgetExceeded,
    ConfigError,
    InfeasibleSolution,
    ModelError,
    ParseError,
    check_solution,
    read_instance,
    read_solution,
    rescale_solution,
    scale_instance,
    write_instance,
    write_solution,
)
from .search import (
    SEARCH_STRATEGIES,
    SearchConfig,
    dumps_log,
    parse_phases,
    report_cost,
    scheduled_search,
    solve_exact,
)
from .simulate import (
    GATES,
    STRATEGIES,
    RecourseCost,
    WaitAndServeCost,
    monte_carlo,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_INFEASIBLE = 4
EXIT_BUDGET = 5
EXIT_CHECK = 6

RESULT_FIELDS = ["instance", "strategy", "scale", "multiple", "cost", "gain"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _capacity(text):
    if text in ("inf", "none"):
        return None
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("capacity must be >= 0 or 'inf'")
    return value


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser():
    p = _Parser(prog="ssvrptw", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, output=True):
        sp.add_argument("--manifest", help="manifest path (default: next to the output)")
        if output:
            sp.add_argument("-o", "--output", required=True)

    g = sub.add_parser("generate", help="generate a benchmark instance")
    g.add_argument("--customers", type=_positive, required=True)
    g.add_argument("--waiting", type=_positive)
    g.add_argument("--mode", choices=("separated", "colocated"), default="separated")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--vehicles", type=_positive, default=2)
    g.add_argument("--capacity", type=_capacity, default=None)
    g.add_argument("--sigma", type=float, default=8.0)
    g.add_argument("--horizon", type=_positive, default=480)
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--pool", help="travel-time matrix file of the address pool")
    src.add_argument("--synthetic-pool", action="store_true")
    common(g)

    e = sub.add_parser("evaluate", help="expected cost of a solution")
    e.add_argument("instance")
    e.add_argument("solution")
    e.add_argument("--strategy", choices=STRATEGIES, default="rq")
    e.add_argument("--scale", type=_positive, help="default: the solution's recorded scale")
    e.add_argument("--true-cost", action="store_true", help="rescale and report at scale 1")
    e.add_argument("--gate", choices=GATES, default="next")
    common(e, output=False)

    s = sub.add_parser("solve", help="simulated-annealing local search")
    s.add_argument("instance")
    s.add_argument("--strategy", choices=SEARCH_STRATEGIES, default="rq")
    s.add_argument("--phases", default="1:10", help="scale:multiple[:fraction],...")
    s.add_argument("--time-limit", type=float)
    s.add_argument("--iterations", type=int)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--threads", type=_positive, default=1)
    s.add_argument("--log", help="run log (JSON lines)")
    s.add_argument("--results", help="append a row to this CSV table")
    s.add_argument("--ws-samples", type=int, default=0, help="wait-and-serve samples for the gain")
    s.add_argument("--gate", choices=GATES, default="next")
    common(s)

    x = sub.add_parser("exact", help="enumerate all solutions of a tiny instance")
    x.add_argument("instance")
    x.add_argument("--strategy", choices=STRATEGIES, default="rq")
    x.add_argument("--multiple", type=_positive, default=60)
    x.add_argument("--scale", type=_positive, default=1)
    x.add_argument("--budget", type=int, default=200_000)
    x.add_argument("--gate", choices=GATES, default="next")
    common(x)

    m = sub.add_parser("simulate", help="Monte Carlo cost of a policy")
    m.add_argument("instance")
    m.add_argument("--solution")
    m.add_argument("--policy", choices=("ws",) + STRATEGIES, required=True)
    m.add_argument("--samples", type=_positive, required=True)
    m.add_argument("--seed", type=int, required=True)
    m.add_argument("--threads", type=_positive, default=1)
    m.add_argument("--scale", type=_positive, default=1)
    m.add_argument("--check", action="store_true", help="compare with the closed form (4 s.e.)")
    m.add_argument("--gate", choices=GATES, default="next")
    common(m, output=False)

    f = sub.add_parser("profile", help="performance-profile data from a results table")
    f.add_argument("results")
    f.add_argument("--by", default="strategy", help="column naming the approach")
    common(f)
    return p


def _load_solution(args, inst):
    sol, meta = read_solution(args.solution)
    scale = args.scale or int(meta.get("scale", 1))
    return sol, scale


def cmd_generate(args):
    pool = synthetic_pool() if args.synthetic_pool else load_pool(args.pool)
    colocated = args.mode == "colocated"
    if not colocated and args.waiting is None:
        raise ConfigError("--waiting is required in separated mode")
    inst = generate_instance(
        args.customers,
        args.waiting,
        seed=args.seed,
        colocated=colocated,
        vehicles=args.vehicles,
        capacity=args.capacity,
        sigma=args.sigma,
        pool=pool,
        horizon=args.horizon,
    )
    write_instance(inst, args.output)
    print(f"{inst.name}: {len(inst.requests)} potential requests -> {args.output}")
    return {"outputs": [args.output], "instance": inst.name}


def cmd_evaluate(args):
    inst = read_instance(args.instance)
    sol, scale = _load_solution(args, inst)
    if args.true_cost:
        full = rescale_solution(sol, scale)
        check_solution(inst, full)
        cost = report_cost(inst, full, args.gate)
        print(f"{cost!r}")
        return {"cost": cost, "strategy": "rq+", "scale": 1}
    inst_s = scale_instance(inst, scale)
    check_solution(inst_s, sol)
    cost = evaluate(inst_s, sol, args.strategy, args.gate).cost
    print(f"{cost!r}")
    return {"cost": cost, "strategy": args.strategy, "scale": scale}


def cmd_solve(args):
    inst = read_instance(args.instance)
    phases = parse_phases(args.phases)
    iterations = args.iterations
    if iterations is None and args.time_limit is None:
        iterations = 1000
    config = SearchConfig(
        strategy=args.strategy,
        time_limit=args.time_limit,
        iterations=iterations,
        phases=phases,
        gate=args.gate,
    )
    res = scheduled_search(inst, config, args.seed)
    last = phases[-1]
    meta = {
        "strategy": args.strategy,
        "scale": 1,
        "seed": args.seed,
        "reported_cost": repr(res.reported_cost),
    }
    write_solution(res.solution, args.output, meta)
    outputs = [args.output]
    if args.log:
        Path(args.log).write_text(dumps_log(res.log))
        outputs.append(args.log)
    gain_value = ""
    if args.ws_samples:
        avg, _ = monte_carlo(inst, WaitAndServeCost(inst), args.ws_samples, args.seed, args.threads)
        try:
            gain_value = repr(gain(avg, res.reported_cost))
        except ConfigError:
            gain_value = "undefined"
    if args.results:
        path = Path(args.results)
        new = not path.exists() or path.stat().st_size == 0
        with path.open("a", newline="") as fh:
            w = csv.writer(fh)
            if new:
                w.writerow(RESULT_FIELDS)
            w.writerow([inst.name, args.strategy, last.scale, last.multiple, repr(res.reported_cost), gain_value])
        outputs.append(args.results)
    print(f"{res.reported_cost!r}")
    phases_log = [e for e in res.log if e.get("event")]
    return {
        "outputs": outputs,
        "cost": res.reported_cost,
        "iterations": res.iterations,
        "phases": phases_log,
    }


def cmd_exact(args):
    inst = read_instance(args.instance)
    if args.multiple % args.scale:
        raise ConfigError("the waiting multiple must be a multiple of the scale")
    inst_s = scale_instance(inst, args.scale)
    sol, cost = solve_exact(inst_s, args.strategy, args.multiple // args.scale, args.budget, args.gate)
    write_solution(sol, args.output, {"strategy": args.strategy, "scale": args.scale, "cost": repr(cost)})
    print(f"{cost!r}")
    return {"outputs": [args.output], "cost": cost}


def cmd_simulate(args):
    inst = read_instance(args.instance)
    if args.policy == "ws":
        if args.check:
            raise ConfigError("--check needs a recourse policy")
        fn = WaitAndServeCost(inst)
        target = inst
    else:
        if not args.solution:
            raise ConfigError("a solution is required for recourse policies")
        sol, _ = read_solution(args.solution)
        target = scale_instance(inst, args.scale)
        fn = RecourseCost(target, sol, args.policy, args.gate)
    mean, se = monte_carlo(target, fn, args.samples, args.seed, args.threads)
    print(f"mean,stderr\n{mean!r},{se!r}")
    info = {"mean": mean, "stderr": se}
    if args.check:
        exact = evaluate(target, sol, args.policy, args.gate).cost
        ok = abs(exact - mean) <= 4 * se
        print(f"closed_form,{exact!r},{'agree' if ok else 'DISAGREE'}")
        info.update(closed_form=exact, agree=ok)
        if not ok:
            info["exit"] = EXIT_CHECK
    return info


def cmd_profile(args):
    with open(args.results, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or args.by not in rows[0] or "cost" not in rows[0]:
        raise ParseError(f"results table needs '{args.by}' and 'cost' columns")
    instances = sorted({r["instance"] for r in rows})
    names = sorted({r[args.by] for r in rows})
    table = {n: [float("inf")] * len(instances) for n in names}
    for r in rows:
        j = instances.index(r["instance"])
        table[r[args.by]][j] = min(table[r[args.by]][j], float(r["cost"]))
    curves = performance_profile(table)
    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["approach", "x", "fraction"])
        for name, pts in curves.items():
            for x, y in pts:
                w.writerow([name, repr(x), repr(y)])
    return {"outputs": [args.output]}


COMMANDS = {
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "solve": cmd_solve,
    "exact": cmd_exact,
    "simulate": cmd_simulate,
    "profile": cmd_profile,
}


def _write_manifest(args, info, wall):
    params = {k: v for k, v in vars(args).items() if k != "manifest"}
    manifest = {
        "command": args.command,
        "parameters": params,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "wall_time": wall,
        "outputs": info.pop("outputs", []),
        "result": info,
    }
    text = json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n"
    path = args.manifest
    if path is None and getattr(args, "output", None):
        path = str(args.output) + ".manifest.json"
    if path is None:
        sys.stderr.write(text)
    else:
        Path(path).write_text(text)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    start = time.monotonic()
    try:
        info = COMMANDS[args.command](args) or {}
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InfeasibleSolution as exc:
        print(f"infeasible solution: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except BudgetExceeded as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ConfigError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    code = info.pop("exit", EXIT_OK)
    _write_manifest(args, info, time.monotonic() - start)
    return code


if __name__ == "__main__":
    sys.exit(main())
