"""Command-line front end: ``kpz-ldp <subcommand> [options]``.

Every table goes to CSV (with a schema comment line) or, with ``--json``,
to a JSON array of records. ``--config FILE`` reads ``key = value`` lines
whose keys are option names (dashes or underscores); explicit flags win.
Exit codes: 0 success, 2 invalid input, 3 numerical non-convergence,
1 failed self-test.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigurationError, DomainError, NumericalError
from .parallel import THREADS_ENV

EXIT_OK, EXIT_FAILED, EXIT_INVALID, EXIT_NONCONVERGED = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _positive(kind):
    def parse(text):
        value = kind(text)
        if not value > 0:
            raise argparse.ArgumentTypeError(f"{text} is not positive")
        return value
    return parse


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _output_options(p):
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--json", action="store_true", help="write JSON records instead of CSV")
    p.add_argument("--svg", help="also write an 800x600 SVG figure")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kpz-ldp", description="Rate function, instanton and tail computations for narrow-wedge KPZ.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="key = value file; explicit flags take precedence")
    parser.add_argument("--workers", type=_positive(int), help=f"worker threads (default: {THREADS_ENV} or all cores)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("phi", help="rate-function sweep")
    p.add_argument("--from", dest="lam_from", type=float, default=-2.0)
    p.add_argument("--to", dest="lam_to", type=float, default=2.0)
    p.add_argument("--step", type=_positive(float), default=0.1)
    p.add_argument("--methods", default="exact,quadratic,power",
                   help="comma list from exact, quadratic, power, optimizer")
    p.add_argument("--log-exponent", type=_positive(float), default=1.5,
                   help="exponent on -log(-z) in the above-critical branch")
    _output_options(p)

    p = sub.add_parser("instanton", help="profile functions and the optimal deviation")
    p.add_argument("--check", action="store_true", help="print the integral residuals")
    p.add_argument("--n-t", type=_positive(int), default=400)
    p.add_argument("--n-xi", type=_positive(int), default=65)
    p.add_argument("--kappa", type=_positive(float), default=1.0, help="scale the dumped deviation")
    p.add_argument("--convention", choices=("inverse_sqrt", "sqrt"), default="inverse_sqrt")
    p.add_argument("--field-out", help="write the deviation as a scalar-field CSV")
    _output_options(p)

    p = sub.add_parser("geodesic", help="minimising path to (t, x) or the path family")
    p.add_argument("--t", type=float, default=2.0)
    p.add_argument("--x", type=float, default=0.0)
    p.add_argument("--family", action="store_true", help="the family into (2, 0) plus tangent examples")
    p.add_argument("--nodes", type=_positive(int), default=1001)
    p.add_argument("--descent", action="store_true", help="use direct minimisation instead of the closed form")
    p.add_argument("--seed", type=int, default=0)
    _output_options(p)

    p = sub.add_parser("solve", help="forward PDE for a deviation field")
    p.add_argument("--rho", help="scalar-field CSV or binary file (default: built-in bump)")
    p.add_argument("--amplitude", type=float, default=0.3, help="amplitude of the built-in bump")
    for key, kind in (("nt", int), ("nx", int), ("L", float), ("t0", float), ("theta", float)):
        p.add_argument(f"--{key}", type=kind)
    p.add_argument("--gradient", action="store_true", help="also report the functional gradient norm")
    p.add_argument("--field-out", help="write Z as a scalar-field CSV")
    _output_options(p)

    p = sub.add_parser("optimize", help="minimal-energy deviation for a tail event")
    p.add_argument("--lam", type=_positive(float), required=True)
    p.add_argument("--tail", choices=("lower", "upper"), default="lower")
    p.add_argument("--scaled", action="store_true", help="scaled deep-tail problem at viscosity 1/lam")
    p.add_argument("--max-iter", type=_positive(int), default=200)
    p.add_argument("--field-out", help="write the optimal deviation as a scalar-field CSV")
    _output_options(p)

    p = sub.add_parser("simulate", help="SHE tail probabilities")
    p.add_argument("--eps", type=_positive(float), default=0.05)
    p.add_argument("--lam", type=_float_list, default=[0.5], help="comma list of tail levels")
    p.add_argument("--tail", choices=("lower", "upper"), default="lower")
    p.add_argument("--n", type=_positive(int), default=4000)
    p.add_argument("--tilt", choices=("instanton", "none"), default="instanton")
    p.add_argument("--seed", type=int, default=0)
    _output_options(p)

    p = sub.add_parser("selftest", help="run the acceptance checks")
    p.add_argument("--criteria", default="", help="comma list of criterion numbers (default: all)")
    p.add_argument("--quick", action="store_true", help="skip the criteria that take minutes")
    return parser


# config handling -------------------------------------------------------------
def _explicit_dests(parser: argparse.ArgumentParser, argv) -> set:
    given = set()
    for action in parser._actions:
        for opt in action.option_strings:
            if any(a == opt or a.startswith(opt + "=") for a in argv):
                given.add(action.dest)
    return given


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def apply_config(parser, args, argv) -> argparse.Namespace:
    """Fill options not given on the command line from ``--config``."""
    if not args.config:
        return args
    from .pde_solver.config import parse_key_values

    values = parse_key_values(Path(args.config).read_text())
    sub = _subparser(parser, args.command)
    given = _explicit_dests(parser, argv) | _explicit_dests(sub, argv)
    by_dest = {a.dest: a for a in sub._actions + parser._actions}
    for key, raw in values.items():
        dest = key.replace("-", "_")
        dest = {"from": "lam_from", "to": "lam_to"}.get(dest, dest)
        if dest not in by_dest:
            raise ConfigurationError(f"unknown config key {key!r} for {args.command}")
        if dest in given:
            continue
        action = by_dest[dest]
        if isinstance(action, argparse._StoreTrueAction):
            value = raw.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            try:
                value = action.type(raw)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise ConfigurationError(f"bad value for {key}: {raw!r}") from exc
        else:
            value = raw
        if action.choices is not None and value not in action.choices:
            raise ConfigurationError(f"{key} must be one of {sorted(action.choices)}")
        setattr(args, dest, value)
    return args


# output ------------------------------------------------------------------------
def _emit(args, schema, columns, rows):
    from .tables import format_table, records_json

    text = records_json(columns, rows) + "\n" if args.json else format_table(schema, columns, rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _summary(payload: dict, stream=None):
    clean = {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in payload.items()}
    print(json.dumps(clean, sort_keys=True), file=stream or sys.stdout)


def _write_svg(path, *a, **kw):
    from .svg import line_plot

    Path(path).write_text(line_plot(*a, **kw))


# subcommands -------------------------------------------------------------------
def cmd_phi(args) -> int:
    from .rate_function import phi_asymptotic, phi_exact
    from .variational_optimizer import deep_tail_scaled_value, minimize_rate

    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = set(methods) - {"exact", "quadratic", "power", "optimizer"}
    if unknown:
        raise ConfigurationError(f"unknown methods: {sorted(unknown)}")
    if args.lam_to < args.lam_from:
        raise ConfigurationError("--to must not be below --from")
    count = int(math.floor((args.lam_to - args.lam_from) / args.step + 1e-9)) + 1
    lams = [round(args.lam_from + k * args.step, 12) + 0.0 for k in range(count)]
    rows = []
    for lam in lams:
        row = {"lambda": lam}
        if "exact" in methods:
            ev = phi_exact(lam, args.log_exponent)
            row.update(exact=ev.value, branch=ev.branch)
        if "quadratic" in methods:
            row["quadratic"] = phi_asymptotic(lam, "quadratic")
        if "power" in methods:
            row["power_law"] = 0.0 if lam == 0 else phi_asymptotic(lam, "lower-5/2" if lam < 0 else "upper-3/2")
        if "optimizer" in methods:
            if lam == 0:
                row["optimizer"] = 0.0
            elif lam <= -2.0:
                row["optimizer"] = deep_tail_scaled_value(-lam).rate_value * (-lam) ** 2.5
            else:
                row["optimizer"] = minimize_rate(abs(lam), "lower" if lam < 0 else "upper").rate_value
        rows.append(row)
    columns = ["lambda"] + [c for c in ("exact", "branch", "quadratic", "power_law", "optimizer") if c in rows[0]]
    _emit(args, "phi", columns, rows)
    if args.svg:
        series = [(c, lams, [r[c] for r in rows]) for c in columns if c not in ("lambda", "branch")]
        _write_svg(args.svg, series, "rate function", "lambda", "Phi")
    return EXIT_OK


def cmd_instanton(args) -> int:
    from .deviation_field import (cumulative_r, ell, ell_prime, instanton_grid, integral_r, l2_norm_sq,
                                  rho_star_field, scale_deviation, solve_r)

    if args.check:
        int_r = integral_r(0.0, 2.0)
        energy = 0.5 * l2_norm_sq(rho_star_field(instanton_grid()))
        print(f"int_0^2 r dt = {int_r:.15f}  residual vs 2 pi: {int_r - 2 * math.pi:+.3e}")
        print(f"(1/2)|rho*|^2 = {energy:.15f}  residual vs 4/(15 pi): {energy - 4 / (15 * math.pi):+.3e}")
    n = args.n_t
    t = 2.0 * (np.arange(n) + 0.5) / n
    rows = [{"t": float(ti), "r": float(solve_r(ti)), "ell": float(ell(ti)), "ell_prime": float(ell_prime(ti)),
             "cumulative_r": float(cumulative_r(ti))} for ti in t]
    if args.out or args.json or not args.check:
        _emit(args, "instanton-profile", ["t", "r", "ell", "ell_prime", "cumulative_r"], rows)
    if args.field_out:
        n_xi = args.n_xi if args.n_xi % 2 else args.n_xi + 1
        field = rho_star_field(instanton_grid(n_t=args.n_t, n_xi=n_xi))
        if args.kappa != 1.0:
            field = scale_deviation(field, args.kappa, args.convention)
        field.to_csv(args.field_out)
    if args.svg:
        _write_svg(args.svg, [("l(t)", list(t), [r["ell"] for r in rows]),
                              ("-l(t)", list(t), [-r["ell"] for r in rows])], "support of the optimal deviation", "t", "x")
    return EXIT_OK


def cmd_geodesic(args) -> int:
    from .geodesics import direct_minimize, geodesic, geodesic_family

    if args.family:
        paths = geodesic_family(n_nodes=min(args.nodes, 801))
        rows = [{"label": lbl, "s": float(s), "gamma": float(g)} for lbl, p in paths for s, g in zip(p.times, p.positions)]
        _emit(args, "path-family", ["label", "s", "gamma"], rows)
        if args.svg:
            _write_svg(args.svg, [(lbl, list(p.times), list(p.positions)) for lbl, p in paths],
                       "optimal paths", "s", "gamma")
        return EXIT_OK
    if args.descent:
        res = direct_minimize(args.t, args.x, n_nodes=args.nodes, seed=args.seed)
        path, info = res.path, {"energy": res.energy, "converged": res.converged, "iterations": res.iterations}
        status = EXIT_OK if res.converged else EXIT_NONCONVERGED
    else:
        g = geodesic(args.t, args.x, n_nodes=args.nodes)
        path = g.path
        info = {"energy": g.energy, "exact_energy": g.exact_energy, "classification": g.classification,
                "alpha": g.alpha, "t_star": g.t_star, "nonunique": g.nonunique}
        status = EXIT_OK
    _emit(args, "path", ["s", "gamma"], [{"s": float(s), "gamma": float(v)} for s, v in zip(path.times, path.positions)])
    _summary({"t": args.t, "x": args.x, **info}, sys.stderr if not args.out else sys.stdout)
    if args.svg:
        _write_svg(args.svg, [("path", list(path.times), list(path.positions))], f"path to ({args.t:g}, {args.x:g})",
                   "s", "gamma")
    return status


def _load_field(path):
    from .fields import ScalarField

    with open(path, "rb") as fh:
        head = fh.read(4)
    return ScalarField.from_binary(path) if head == b"KPZF" else ScalarField.from_csv(path)


def cmd_solve(args) -> int:
    from .pde_solver import gradient_h, params_from_mapping, solve_forward

    params = params_from_mapping({k: str(getattr(args, k)) for k in ("nt", "nx", "L", "t0", "theta")
                                  if getattr(args, k) is not None})
    if args.rho:
        rho = _load_field(args.rho)
    else:
        amp = args.amplitude
        rho = lambda t, x: amp * np.exp(-(np.asarray(t) - 1.0) ** 2 / 0.1 - np.asarray(x) ** 2 / 0.3)
    res = solve_forward(rho, params)
    row = {"h": res.h, "ratio": res.ratio, "z_end": res.z_end, "t0": res.t0,
           "mass_loss": res.diagnostics["mass_loss"], "negative_nodes": res.diagnostics["negative_nodes"]}
    if args.gradient:
        g = gradient_h(rho, params, res)
        row["gradient_norm"] = g.norm()
    _emit(args, "solve", list(row), [row])
    if args.field_out:
        res.z_field.to_csv(args.field_out)
    if args.svg:
        f = res.z_field
        _write_svg(args.svg, [("Z(2, x)", list(f.grid.xi), list(f.values[-1]))], "solution at t = 2", "x", "Z")
    return EXIT_OK


def cmd_optimize(args) -> int:
    from .variational_optimizer import certificate, deep_tail_scaled_value, minimize_rate

    if args.scaled:
        out = deep_tail_scaled_value(args.lam, max_iter=args.max_iter)
    else:
        out = minimize_rate(args.lam, args.tail, max_iter=args.max_iter)
    row = {"lambda": out.lam, "tail": out.tail, "method": out.method, "rate": out.rate_value,
           "constraint": out.constraint_value, "target": out.target, "multiplier": out.multiplier,
           "iterations": out.iterations, "converged": out.converged, "stationarity": out.stationarity,
           "candidate_rate": out.candidate_rate}
    if args.scaled:
        overlap, norm = certificate(out.rho_opt)
        row.update(certificate=overlap, norm=norm, unscaled_rate=out.rate_value * args.lam ** 2.5)
    _emit(args, "optimize", list(row), [row])
    if args.field_out:
        out.rho_opt.to_csv(args.field_out)
    if args.svg:
        its = [h[0] for h in out.history]
        _write_svg(args.svg, [("rate", its, [h[1] for h in out.history])], "optimizer history", "iteration", "rate",
                   markers=True)
    return EXIT_OK if out.converged else EXIT_NONCONVERGED


def cmd_simulate(args) -> int:
    from .she_simulator import TAIL_COLUMNS, estimate_tail

    if any(lam < 0 for lam in args.lam):
        raise ConfigurationError("tail levels must be nonnegative")
    ests = [estimate_tail(args.eps, lam, args.n, args.tilt, args.tail, args.seed, workers=args.workers)
            for lam in args.lam]
    _emit(args, "she-tail", TAIL_COLUMNS, [e.record() for e in ests])
    if args.svg:
        _write_svg(args.svg, [("-eps log P", args.lam, [e.log_rate for e in ests]),
                              ("Phi", args.lam, [e.reference for e in ests])],
                   f"tail rates at eps = {args.eps:g}", "lambda", "rate", markers=True)
    return EXIT_OK


QUICK_CRITERIA = (1, 2, 3, 5, 8, 9)


def cmd_selftest(args) -> int:
    from .acceptance import CRITERIA, run_all

    if args.criteria:
        numbers = [int(v) for v in args.criteria.split(",") if v.strip()]
        bad = [n for n in numbers if n not in CRITERIA]
        if bad:
            raise ConfigurationError(f"unknown criteria: {bad}")
    else:
        numbers = list(QUICK_CRITERIA) if args.quick else sorted(CRITERIA)
    reports = run_all(numbers, echo=lambda line: print(line, flush=True))
    failed = [r.number for r in reports if not r.passed]
    print(f"{len(reports) - len(failed)}/{len(reports)} criteria passed" + (f"; failed: {failed}" if failed else ""))
    return EXIT_FAILED if failed else EXIT_OK


COMMANDS = {"phi": cmd_phi, "instanton": cmd_instanton, "geodesic": cmd_geodesic, "solve": cmd_solve,
            "optimize": cmd_optimize, "simulate": cmd_simulate, "selftest": cmd_selftest}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = apply_config(parser, args, argv)
        if args.workers:
            os.environ[THREADS_ENV] = str(args.workers)
        return COMMANDS[args.command](args)
    except (ConfigurationError, DomainError, ValueError, OSError) as exc:
        print(f"kpz-ldp: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"kpz-ldp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
