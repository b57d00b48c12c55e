"""Command-line entry point.

Exit codes: 0 success, 1 invalid invocation or input, 2 failed check.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .ann_core import Activation, load_document, param_count, realize, to_document
from .approx_spaces import (
    FunctionFamily,
    GrowthBudget,
    IndexGrid,
    NetworkFamilyBuilder,
    SamplePlan,
    WeightKappa,
    check_membership,
    fitted_constant,
)
from .errors import AnnCalcError, BoundViolated, FileNotFound, MissingFlag, UnknownCommand
from .flow_builder import (
    DEFAULT_TERMINAL,
    FIELDS,
    TERMINALS,
    FlowBuildConfig,
    build_flow_network,
    canonical_family,
    fit_scaling_exponents,
    relu_flow_exponents,
    sweep,
)
from .ode_flow import flow_operator_eval, verify_euler_convergence

COMMANDS = ("build", "eval", "certify", "sweep", "euler-check")

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _parser() -> _Parser:
    p = _Parser(prog="anncalc", description="ReLU network calculus and transport-flow certification")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, samples=512, radius=10.0):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--radius", type=float, default=radius)
        sp.add_argument("--samples", type=int, default=samples)
        sp.add_argument("--tol", type=float, default=1e-10)

    def flow(sp):
        sp.add_argument("--problem", choices=sorted(FIELDS))
        sp.add_argument("--g", choices=sorted(TERMINALS), default=None)
        sp.add_argument("--T", type=float, default=1.0)
        sp.add_argument("--kappa", type=float, default=1.0)
        sp.add_argument("--c", type=float, default=1.0)

    b = sub.add_parser("build", help="build one flow network")
    flow(b)
    common(b)
    b.add_argument("--d", type=int)
    b.add_argument("--eps", type=float)
    b.add_argument("--out")
    b.add_argument("--report")

    e = sub.add_parser("eval", help="evaluate a saved network")
    e.add_argument("--net")
    e.add_argument("--point")

    for name in ("certify", "sweep"):
        s = sub.add_parser(name)
        flow(s)
        common(s)
        s.add_argument("--d", "--d-list", dest="d_list", type=_ints)
        s.add_argument("--eps", "--eps-list", dest="eps_list", type=_floats)
        if name == "certify":
            s.add_argument("--K", type=float, default=None)
            s.add_argument("--report")
        else:
            s.add_argument("--csv")

    ec = sub.add_parser("euler-check", help="Euler convergence against the error bound")
    ec.add_argument("--problem", choices=sorted(FIELDS))
    ec.add_argument("--d", type=int, default=2)
    ec.add_argument("--T", type=float, default=1.0)
    ec.add_argument("--n-list", dest="n_list", type=_ints, default=[8, 16, 32, 64, 128])
    common(ec, samples=32, radius=5.0)
    ec.add_argument("--csv")
    return p


REQUIRED = {
    "build": ("problem", "d", "eps", "out"),
    "eval": ("net", "point"),
    "certify": ("problem", "d_list", "eps_list"),
    "sweep": ("problem", "d_list", "eps_list", "csv"),
    "euler-check": ("problem", "csv"),
}


def _require(args):
    for name in REQUIRED[args.command]:
        if getattr(args, name, None) is None:
            raise MissingFlag(f"{args.command}: missing required flag --{name.replace('_', '-')}")


def _plan(args) -> SamplePlan:
    return SamplePlan(radius=args.radius, n_random=args.samples, seed=args.seed)


def _flow_config(args, eps: float) -> FlowBuildConfig:
    return FlowBuildConfig(T=args.T, eps=eps, kappa=WeightKappa(args.kappa), c=args.c,
                           sample_plan=_plan(args), reference_tol=args.tol)


def _resolved(args) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items())}
    if cfg.get("problem") is not None and "g" in cfg and cfg["g"] is None:
        cfg["g"] = DEFAULT_TERMINAL[cfg["problem"]]
    return cfg


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _write(path: str, text: str):
    Path(path).write_text(text, encoding="utf-8")


def _cmd_build(args) -> int:
    fam = canonical_family(args.problem, args.g)
    cfg = _flow_config(args, args.eps)
    rep = build_flow_network(fam.f_builder, fam.g_builder, fam.problem(args.d, args.T), cfg, rates=fam.rates)
    config = _resolved(args)
    doc = to_document(rep.network, Activation.rectifier().hint)
    doc["config"] = config
    _write(args.out, json.dumps(doc, sort_keys=True, allow_nan=False) + "\n")
    if args.report:
        body = rep.to_dict()
        body["network_path"] = args.out
        body["resolved_config"] = config
        _write(args.report, _dump(body))
    print(f"n={rep.n_chosen} params={rep.params} weighted_error={rep.measured_weighted_error!r} "
          f"pass={'true' if rep.passed else 'false'}")
    return EXIT_OK if rep.passed else EXIT_FAILED


def _cmd_eval(args) -> int:
    path = Path(args.net)
    if not path.is_file():
        raise FileNotFound(f"network file {args.net!r} does not exist")
    ann, hint = load_document(path.read_bytes())
    try:
        x = np.array([float(v) for v in args.point.split(",")])
    except ValueError:
        raise ValueError(f"--point must be comma-separated decimals, got {args.point!r}")
    y = realize(ann, Activation.from_hint(hint), x)
    print(",".join(repr(float(v)) for v in y))
    return EXIT_OK


def _cmd_certify(args) -> int:
    fam = canonical_family(args.problem, args.g)
    grid = IndexGrid.dimensions(args.d_list, out_dim=1)
    plan = _plan(args)
    base = _flow_config(args, 1.0)

    def build(d, eps):
        cfg = FlowBuildConfig(base.T, eps, base.kappa, base.c, base.budget_split, base.n_cap, plan, base.reference_tol)
        return build_flow_network(fam.f_builder, fam.g_builder, fam.problem(d, args.T), cfg, measure=False).network

    builder = NetworkFamilyBuilder(build, Activation.rectifier(), None, "flow")
    family = FunctionFamily(lambda d, X: flow_operator_eval(fam.problem(d, args.T), X, args.tol), name="flow")
    r = fam.rates
    eps_exp, d_exp = relu_flow_exponents(r.r0, r.r[0], r.alpha[0], r.beta[0], r.rho, args.kappa)
    K = args.K
    if K is None:
        # no user constant: budget with the smallest K fitting every grid point
        K = max(fitted_constant(param_count(builder.build(d, e)), e, (d,), eps_exp, (d_exp,))
                for d in grid.indices for e in args.eps_list)
    budget = GrowthBudget(K, eps_exp, (d_exp,))
    rep = check_membership(builder, family, budget, WeightKappa(args.kappa), grid, args.eps_list, plan)
    body = rep.to_dict()
    body["budget"] = {"K": K, "K_source": "user" if args.K is not None else "fitted", "r0": eps_exp, "r": [d_exp]}
    body["resolved_config"] = _resolved(args)
    text = _dump(body)
    if args.report:
        _write(args.report, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if rep.passed else EXIT_FAILED


def _cmd_sweep(args) -> int:
    fam = canonical_family(args.problem, args.g)
    table = sweep(fam.f_builder, fam.g_builder, lambda d: fam.problem(d, args.T), args.d_list, args.eps_list,
                  _flow_config(args, max(args.eps_list)))
    header = {"resolved_config": _resolved(args)}
    try:
        fit = fit_scaling_exponents(table.rows)
        header["fit"] = {"eps_exponent": fit.eps_exponent, "d_exponent": fit.d_exponent,
                         "min_r_squared": fit.min_r_squared}
    except AnnCalcError:
        header["fit"] = None
    _write(args.csv, "# " + json.dumps(header, sort_keys=True) + "\n" + table.to_csv())
    print(f"rows={len(table.rows)} pass={'true' if table.passed else 'false'}")
    return EXIT_OK if table.passed else EXIT_FAILED


def _cmd_euler_check(args) -> int:
    field = FIELDS[args.problem](args.d)
    pts = ball_points(args.samples, args.d, args.radius, args.seed)
    header = "# " + json.dumps({"resolved_config": _resolved(args)}, sort_keys=True) + "\n"
    try:
        rep = verify_euler_convergence(field, pts, args.T, args.n_list, args.tol)
    except BoundViolated as exc:
        _write(args.csv, header)
        print(f"bound violated: {exc}", file=sys.stderr)
        return EXIT_FAILED
    _write(args.csv, header + rep.to_csv())
    ok = math.isnan(rep.slope) or -1.2 <= rep.slope <= -0.8
    print(f"slope={rep.slope!r} r_squared={rep.r_squared!r}")
    return EXIT_OK if ok else EXIT_FAILED


def ball_points(m: int, d: int, radius: float, seed: int) -> np.ndarray:
    """m points uniform in the closed ball of the given radius."""
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((m, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return radius * rng.uniform(size=(m, 1)) ** (1.0 / d) * g


HANDLERS = {
    "build": _cmd_build,
    "eval": _cmd_eval,
    "certify": _cmd_certify,
    "sweep": _cmd_sweep,
    "euler-check": _cmd_euler_check,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        if not argv or argv[0].startswith("-"):
            raise UnknownCommand(f"expected a command, one of {', '.join(COMMANDS)}")
        if argv[0] not in COMMANDS:
            raise UnknownCommand(f"unknown command {argv[0]!r}; expected one of {', '.join(COMMANDS)}")
        args = _parser().parse_args(argv)
        _require(args)
        return HANDLERS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (AnnCalcError, ValueError, KeyError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
