"""Command-line front end.

Exit codes: 0 success, 1 input error, 2 numeric failure, 3 certificate failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import bounds as bd
from .certify import certify_k, certify_linear_lb, certify_vertex_bound
from .engine import EngineError, simulate
from .instance import (BernoulliInstance, GeneralInstance, InstanceError, build_from_3sat, formula_from_dict,
                       gen_random, gen_rescale_example, gen_uniform_star, read_json, validate, write_json)
from .lp import check_feasibility, solve_lp, solve_lp_general
from .oracle import (MAX_N, OracleError, hardness_sandwich, opt_online, opt_online_general,
                     opt_stochastic_3sat, prophet_value_mc)
from .pivotal import ps_exact_distribution
from .simplex import SolverError

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_CERT = 0, 1, 2, 3

RATIO_COLUMNS = ["instance", "algorithm", "reps", "seed", "mean", "stderr", "lp", "opt_on",
                 "ratio_lp", "ratio_opt", "last_match_freq"]


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _load_json(path: str):
    p = Path(path)
    if not p.is_file():
        raise InputError(f"no such file: {path}")
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON: {exc}") from exc


def _load_instance(path: str):
    p = Path(path)
    if not p.is_file():
        raise InputError(f"no such file: {path}")
    try:
        return read_json(p.read_text(encoding="utf-8"))
    except InstanceError as exc:
        raise InputError(f"{path}: {exc}") from exc


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


# ---------------------------------------------------------------- commands

def cmd_gen(args) -> int:
    if args.kind == "rescale":
        inst = gen_rescale_example(args.n, args.W)
    elif args.kind == "star":
        inst = gen_uniform_star(args.n)
    elif args.kind == "random":
        if args.seed is None:
            raise InputError("gen random requires --seed")
        inst = gen_random(args.n, args.T, args.density, (args.wmin, args.wmax), args.vertex_weighted, args.seed)
    else:
        if not args.formula:
            raise InputError("gen 3sat requires --formula")
        inst = build_from_3sat(formula_from_dict(_load_json(args.formula)), args.p)
    _emit(write_json(inst), args.out)
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = _load_instance(args.instance)
    if isinstance(inst, GeneralInstance):
        sol = solve_lp_general(inst)
        summary = f"objective={sol.objective:.6f}"
    else:
        sol = solve_lp(inst)
        rep = check_feasibility(sol.x, inst)
        p = inst.p_array
        slack1 = float(np.min(p - sol.x.sum(axis=0))) if inst.T else 0.0
        slack2 = float(np.min(p[None, :] * (1 - sol.y) - sol.x)) if sol.x.size else 0.0
        summary = (f"objective={sol.objective:.6f} min_slack_capacity={slack1:.3g} "
                   f"min_slack_availability={slack2:.3g} fractional_r={sol.fractional_count()} "
                   f"feasible={rep.ok}")
    if args.out:
        _emit(sol.to_json(), args.out)
    print(summary)
    return EXIT_OK


def cmd_simulate(args) -> int:
    inst = _load_instance(args.instance)
    rep = simulate(inst, args.algorithm, args.reps, args.seed, args.workers)
    doc = {"algorithm": rep.algorithm, "reps": rep.replications, "seed": rep.seed, "mean": rep.mean,
           "stderr": rep.stderr, "lp": rep.lp_value,
           "match_freq": rep.match_freq.tolist(), "free_prob": rep.free_prob.tolist()}
    _emit(json.dumps(doc, indent=1), args.out)
    return EXIT_OK


def ratio_row(name: str, inst, algorithm: str, reps: int, seed: int, workers: int = 1) -> dict:
    rep = simulate(inst, algorithm, reps, seed, workers)
    opt = None
    if inst.n <= MAX_N:
        opt = opt_online_general(inst).value if isinstance(inst, GeneralInstance) else opt_online(inst).value
    last = rep.step_match_freq(inst.T - 1, inst if isinstance(inst, GeneralInstance) else None) if inst.T else 0.0
    return {"instance": name, "algorithm": algorithm, "reps": reps, "seed": seed,
            "mean": rep.mean, "stderr": rep.stderr, "lp": rep.lp_value,
            "opt_on": "unavailable" if opt is None else opt,
            "ratio_lp": rep.mean / rep.lp_value if rep.lp_value > 0 else float("nan"),
            "ratio_opt": "unavailable" if opt is None else (rep.mean / opt if opt > 0 else float("nan")),
            "last_match_freq": last}


def cmd_ratio(args) -> int:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=RATIO_COLUMNS, lineterminator="\n")
    w.writeheader()
    for path in args.instance:
        inst = _load_instance(path)
        w.writerow(ratio_row(Path(path).stem, inst, args.algorithm, args.reps, args.seed, args.workers))
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    if bool(args.instance) == bool(args.sat):
        raise InputError("oracle needs exactly one of --instance or --3sat")
    doc = {}
    if args.sat:
        f = formula_from_dict(_load_json(args.sat))
        doc["opt"] = opt_stochastic_3sat(f)
        if args.reduce is not None:
            inst = build_from_3sat(f, args.reduce)
            sw = hardness_sandwich(f, args.reduce)
            v = opt_online(inst).value
            doc.update({"p": args.reduce, "opt_on": v, "lower": sw.lower, "upper": sw.upper,
                        "inside": sw.contains(v)})
    else:
        inst = _load_instance(args.instance)
        if isinstance(inst, GeneralInstance):
            doc["opt_on"] = opt_online_general(inst).value
        else:
            doc["opt_on"] = opt_online(inst).value
            if args.prophet:
                if args.seed is None:
                    raise InputError("--prophet requires --seed")
                est = prophet_value_mc(inst, args.reps, args.seed, args.workers)
                doc["prophet"] = {"mean": est.mean, "stderr": est.stderr, "reps": est.replications}
    _emit(json.dumps(doc, indent=1), args.out)
    return EXIT_OK


def _load_system(path: str) -> bd.WeightedBernoulliSystem:
    """System document: {"c": [...], "q": [...], "correlation": "independent" | "pivotal"}."""
    doc = _load_json(path)
    if not isinstance(doc, dict):
        raise InputError(f"{path}: system must be an object")
    extra = set(doc) - {"c", "q", "correlation"}
    if extra:
        raise InputError(f"{path}: unknown field(s) {sorted(extra)}")
    if "c" not in doc or "q" not in doc:
        raise InputError(f"{path}: system needs fields 'c' and 'q'")
    corr = doc.get("correlation", "independent")
    if corr == "independent":
        return bd.WeightedBernoulliSystem(tuple(doc["c"]), tuple(doc["q"]))
    if corr == "pivotal":
        return bd.WeightedBernoulliSystem.explicit(tuple(doc["c"]), ps_exact_distribution(doc["q"]))
    raise InputError(f"{path}: unknown correlation {corr!r}")


def cmd_bounds(args) -> int:
    system = _load_system(args.system)
    reports = bd.all_bounds(system, args.theta)
    doc = {"n": system.n, "mean": system.mean(), "theta": args.theta,
           "exact": reports[0].exact,
           "bounds": {r.name: r.value for r in reports}}
    _emit(json.dumps(doc, indent=1), args.out)
    return EXIT_OK


def cmd_certify(args) -> int:
    targets = ["k", "vertex", "linear"] if args.target == "all" else [args.target]
    reports = []
    for tgt in targets:
        if tgt == "k":
            reports.append(certify_k(args.eps, args.delta, args.spacing or 1e-4,
                                     0.678 if args.tau is None else args.tau, args.curve, args.workers))
        elif tgt == "vertex":
            reports.append(certify_vertex_bound(args.spacing or 1e-4, 0.685 if args.tau is None else args.tau,
                                                args.workers))
        else:
            consts = tuple(float(v) for v in args.constants.split(","))
            if len(consts) != 3:
                raise InputError("--constants needs three comma-separated numbers")
            reports.append(certify_linear_lb(args.spacing or 1e-3, consts, args.workers,
                                             0.0 if args.tau is None else args.tau))
    for r in reports:
        print(r.summary())
    if args.out:
        _emit(json.dumps([r.to_dict() for r in reports], indent=1, default=float), args.out)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_CERT


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="stochmatch", description="Online stochastic matching: LP, algorithms, oracles, certificates.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate an instance as JSON")
    g.add_argument("kind", choices=["rescale", "star", "random", "3sat"])
    g.add_argument("--n", type=_positive_int, default=4)
    g.add_argument("--T", type=_positive_int, default=4)
    g.add_argument("--W", type=float, default=1000.0, help="final-node weight of the rescale example")
    g.add_argument("--density", type=float, default=0.5)
    g.add_argument("--wmin", type=float, default=0.0)
    g.add_argument("--wmax", type=float, default=1.0)
    g.add_argument("--vertex-weighted", action="store_true")
    g.add_argument("--formula", help="formula JSON for the 3sat construction")
    g.add_argument("--p", type=float, default=0.05, help="clause arrival probability for 3sat")
    g.add_argument("--seed", type=int)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="solve the LP relaxation")
    s.add_argument("--instance", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    for name, func, help_ in (("simulate", cmd_simulate, "Monte Carlo run of one algorithm"),
                              ("ratio", cmd_ratio, "CSV of algorithm value against LP and optimum online")):
        p = sub.add_parser(name, help=help_)
        if name == "ratio":
            p.add_argument("--instance", required=True, action="append")
        else:
            p.add_argument("--instance", required=True)
        p.add_argument("--algorithm", default="core",
                       help='"core", "core-independent", "edge-weighted[:eps,delta]", "vertex-weighted", "general"')
        p.add_argument("--reps", type=_positive_int, default=10_000)
        p.add_argument("--seed", type=int, required=True)
        p.add_argument("--workers", type=_positive_int, default=1)
        p.add_argument("--out")
        p.set_defaults(func=func)

    o = sub.add_parser("oracle", help="optimum online value, stochastic SAT value, prophet baseline")
    o.add_argument("--instance")
    o.add_argument("--3sat", dest="sat")
    o.add_argument("--reduce", type=float, help="clause probability p for the reduction sandwich")
    o.add_argument("--prophet", action="store_true")
    o.add_argument("--reps", type=_positive_int, default=10_000)
    o.add_argument("--seed", type=int)
    o.add_argument("--workers", type=_positive_int, default=1)
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)

    b = sub.add_parser("bounds", help="lower bounds on E[min(1, X)] for a weighted Bernoulli system")
    b.add_argument("--system", required=True)
    b.add_argument("--theta", type=float, default=0.5)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bounds)

    c = sub.add_parser("certify", help="Lipschitz grid certificates")
    c.add_argument("target", choices=["k", "vertex", "linear", "all"])
    c.add_argument("--eps", type=float, default=0.11)
    c.add_argument("--delta", type=float, default=0.18)
    c.add_argument("--tau", type=float)
    c.add_argument("--spacing", type=float)
    c.add_argument("--constants", default="0.614,0.122,0.197")
    c.add_argument("--curve", help="CSV path for the (z, k) curve")
    c.add_argument("--workers", type=_positive_int, default=1)
    c.add_argument("--out")
    c.set_defaults(func=cmd_certify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    # LinAlgError subclasses ValueError, so the numeric branch comes first
    except (SolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, InstanceError, EngineError, OracleError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
