"""Command-line entry point.

Exit codes: 0 success, 1 a diagnostic or property check failed, 2 invalid
input, 3 a budget was exhausted.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import inspect
import io
import json
import sys
from pathlib import Path


from . import __version__, gallery
from .mdp import MDPSpec, direct_mdp_values, explore, lift_values, mdp_uniform
from .minavg import w_mn_table, w_n_table
from .model import BudgetExceeded, ModelError, Play, dumps_model, load_model
from .plays import HorizonPolicy, NoBlockFound, certify_lower, shorten, synthesize, verify_guarantee
from .pomdp import POMDPSpec, explore_p
from .transport import TransportError
from .uniform import Budget, check_chain, estimate_vstar, property_suite
from .values import (ValueIterationError, fmt17, table_rows, v_lambda_exact, v_mn_table, v_n_table,
                     write_value_csv)

EXIT_OK, EXIT_FAILED, EXIT_INVALID, EXIT_BUDGET = 0, 1, 2, 3


class CLIError(Exception):
    pass


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _unit(text: str) -> float:
    v = float(text)
    if not 0 <= v <= 1:
        raise argparse.ArgumentTypeError("must lie in [0, 1]")
    return v


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uniformdp", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"uniformdp {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=_positive_int, default=1,
                        help="worker bound; results do not depend on it (default 1)")
    sub = p.add_subparsers(dest="verb", required=True)

    def verb(name, help_text, model=True):
        sp = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        if model:
            sp.add_argument("--model", required=True, type=Path, help="model JSON file")
        return sp

    sp = verb("values", "n-stage, shifted and discounted value tables")
    sp.add_argument("--n", type=_positive_int, required=True)
    sp.add_argument("--m", type=int, default=0, help="also emit v_{m,n} for m <= M")
    sp.add_argument("--lambda", dest="lambdas", type=_unit, action="append", default=[],
                    help="discount factor; repeatable")
    sp.add_argument("--csv", type=Path)

    sp = verb("wvalues", "min-average value tables")
    sp.add_argument("--n", type=_positive_int, required=True)
    sp.add_argument("--m", type=int, default=0)
    sp.add_argument("--tol", type=_positive, default=1e-9)
    sp.add_argument("--csv", type=Path)

    sp = verb("vstar", "uniform value interval with a certified lasso")
    sp.add_argument("--state", type=int)
    sp.add_argument("--gap", type=_positive, default=0.02)
    sp.add_argument("--n-max", type=_positive_int, default=8192)
    sp.add_argument("--out-prefix", type=Path, default=Path("vstar"),
                    help="writes PREFIX.interval.csv and PREFIX.lasso.txt (default vstar)")

    sp = verb("chain", "finite surrogates of the value chain")
    sp.add_argument("--state", type=int)
    sp.add_argument("--m-max", type=int, default=2)
    sp.add_argument("--n-v", type=_positive_int, default=32)
    sp.add_argument("--n-w", type=_positive_int)
    sp.add_argument("--csv", type=Path)

    sp = verb("synth", "synthesize an alpha-optimal lasso play")
    sp.add_argument("--state", type=int)
    sp.add_argument("--alpha", type=_positive, default=0.1)
    sp.add_argument("--n-cap", type=_positive_int, default=1 << 14)
    sp.add_argument("--out", type=Path, help="play file")
    sp.add_argument("--csv", type=Path, help="guarantee report row")

    sp = verb("shorten", "shorten a play while keeping its guarantee")
    sp.add_argument("--play", type=Path, required=True)
    sp.add_argument("--epsilon", type=_positive, required=True)
    sp.add_argument("--level", type=_unit, required=True)
    sp.add_argument("--out", type=Path)

    sp = verb("lift-mdp", "lift a finite MDP and compare with direct recursion", model=False)
    sp.add_argument("--mdp", type=Path, required=True)
    sp.add_argument("--depth", type=_positive_int, default=5)
    sp.add_argument("--delta", type=float, default=0.0)
    sp.add_argument("--exact-tail", type=_positive_int, default=1)
    sp.add_argument("--max-states", type=_positive_int, default=2_000_000)
    sp.add_argument("--uniform", action="store_true", help="also estimate the uniform value")
    sp.add_argument("--gap", type=_positive, default=0.05)
    sp.add_argument("--emit-model", type=Path)
    sp.add_argument("--csv", type=Path)

    sp = verb("lift-pomdp", "lift a POMDP onto measures over beliefs", model=False)
    sp.add_argument("--pomdp", type=Path, required=True)
    sp.add_argument("--depth", type=_positive_int, default=3)
    sp.add_argument("--delta", type=float, default=0.0)
    sp.add_argument("--max-states", type=_positive_int, default=100_000)
    sp.add_argument("--emit-model", type=Path)
    sp.add_argument("--csv", type=Path)

    sp = verb("gallery", "build an example and run its diagnostics", model=False)
    sp.add_argument("name", choices=sorted(gallery.REGISTRY))
    sp.add_argument("--emit-model", type=Path)
    sp.add_argument("--csv", type=Path)

    sp = verb("check", "inequality property suite")
    sp.add_argument("--horizons", type=_positive_int, default=12)
    sp.add_argument("--m-max", type=int, default=3)
    sp.add_argument("--csv", type=Path)
    return p


def gallery_params(name: str, extra: list[str]) -> dict:
    """Parse ``--key=value`` / ``--key value`` pairs against the constructor's parameters."""
    allowed = inspect.signature(gallery.REGISTRY[name]).parameters
    out, i = {}, 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise CLIError(f"unexpected argument {tok!r}")
        key, eq, val = tok[2:].partition("=")
        if not eq:
            if i + 1 >= len(extra):
                raise CLIError(f"--{key} needs a value")
            val = extra[i + 1]
            i += 1
        i += 1
        key = key.replace("-", "_")
        if key not in allowed:
            raise CLIError(f"unknown parameter --{key.replace('_', '-')} for gallery {name}; "
                           f"expected one of {', '.join(sorted(allowed))}")
        try:
            out[key] = json.loads(val)
        except json.JSONDecodeError:
            raise CLIError(f"--{key}: cannot parse {val!r}") from None
    return out


def header(args, extra: dict | None = None) -> str:
    conf = {k: v for k, v in sorted(vars(args).items())}
    conf.update(extra or {})
    lines = [f"# uniformdp {__version__} {args.verb}"]
    lines += [f"# {k} = {'' if v is None else v}" for k, v in sorted(conf.items()) if k != "verb"]
    return "\n".join(lines)


def _read_model(path: Path):
    try:
        text = path.read_text()
    except OSError as exc:
        raise CLIError(f"cannot read {path}: {exc.strerror}") from None
    return load_model(text)


def _state(model, state):
    z = model.initial if state is None else state
    if not 0 <= z < model.n_states:
        raise CLIError(f"--state {z} is not a state of the model")
    return z


def _write(path: Path | None, text: str, out) -> None:
    if path is None:
        out.write(text)
    else:
        path.write_text(text)


def _csv_text(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def _value_csv(rows) -> str:
    buf = io.StringIO()
    write_value_csv(buf, rows)
    return buf.getvalue()


# -- verbs ---------------------------------------------------------------------------------

def cmd_values(args, out):
    model = _read_model(args.model)
    V = v_n_table(model, args.n)
    rows = list(table_rows("vn", V))
    if args.m:
        VM = v_mn_table(model, args.m, V)
        for m in range(1, args.m + 1):
            rows += list(table_rows("vmn", VM[m], m))
    for lam in args.lambdas:
        vl = v_lambda_exact(model, lam)
        rows += [("vlambda", z, None, float(lam), vl[z]) for z in range(model.n_states)]
    _write(args.csv, _value_csv(rows), out)
    return EXIT_OK


def cmd_wvalues(args, out):
    model = _read_model(args.model)
    W = w_n_table(model, args.n, args.tol)
    rows = list(table_rows("wn", W))
    if args.m:
        WM = w_mn_table(model, args.m, W)
        for m in range(1, args.m + 1):
            rows += list(table_rows("wmn", WM[m], m))
    _write(args.csv, _value_csv(rows), out)
    return EXIT_OK


def cmd_vstar(args, out):
    model = _read_model(args.model)
    z = _state(model, args.state)
    iv = estimate_vstar(model, z, target_gap=args.gap, budget=Budget(n_max=args.n_max))
    out.write(f"interval [{fmt17(iv.lower)}, {fmt17(iv.upper)}] gap {fmt17(iv.gap)}"
              f" upper horizon {iv.upper_horizon}{' (budget exhausted)' if iv.exhausted else ''}\n")
    if iv.lower_certificate is None:
        raise CLIError("no lasso certificate was found")
    prefix = str(args.out_prefix)
    Path(prefix + ".lasso.txt").write_text(iv.lower_certificate.dumps() + "report: " + iv.report.csv_row() + "\n")
    rows = [("state", "lower", "upper", "gap", "upper_horizon", "exhausted"),
            (z, fmt17(iv.lower), fmt17(iv.upper), fmt17(iv.gap), iv.upper_horizon, str(iv.exhausted).lower())]
    Path(prefix + ".interval.csv").write_text(_csv_text(rows))
    return EXIT_OK


def cmd_chain(args, out):
    model = _read_model(args.model)
    z = _state(model, args.state)
    rep = check_chain(model, z, m_max=args.m_max, n_v=args.n_v, n_w=args.n_w)
    out.write(rep.table() + "\n")
    if args.csv is not None:
        args.csv.write_text(_csv_text(rep.csv_rows()))
    return EXIT_OK if rep.ok else EXIT_FAILED


def cmd_synth(args, out):
    model = _read_model(args.model)
    z = _state(model, args.state)
    res = synthesize(model, z, args.alpha, HorizonPolicy(n_cap=args.n_cap))
    _write(args.out, res.play.dumps(), out)
    row = "level,epsilon,T1,pass\n" + res.report.csv_row() + "\n"
    if args.csv is not None:
        args.csv.write_text(row)
    else:
        out.write(row)
    return EXIT_OK if res.report.passed else EXIT_FAILED


def cmd_shorten(args, out):
    model = _read_model(args.model)
    try:
        play = Play.loads(args.play.read_text())
    except OSError as exc:
        raise CLIError(f"cannot read {args.play}: {exc.strerror}") from None
    play.validate(model)
    short = shorten(model, play, args.epsilon, args.level)
    rep = (certify_lower(model, short) if short.is_lasso
           else verify_guarantee(model, short, args.level, args.epsilon))
    _write(args.out, short.dumps(), out)
    out.write(f"# length {len(play.steps)} -> {len(short.steps)}; guarantee {rep.csv_row()}\n")
    return EXIT_OK


def cmd_lift_mdp(args, out):
    spec = _read_spec(args.mdp, MDPSpec)
    V, ex = lift_values(spec, args.depth, args.delta, exact_tail=min(args.exact_tail, args.depth),
                        max_states=args.max_states)
    _, mix = direct_mdp_values(spec, args.depth)
    rows = [("n", "lift", "direct", "deviation", "bound")]
    for n in range(1, args.depth + 1):
        rows.append((n, fmt17(V[n]), fmt17(mix[n]), fmt17(abs(V[n] - mix[n])), fmt17(args.depth * args.delta)))
    _write(args.csv, _csv_text(rows), out)
    out.write(f"# retained states {ex.model.n_states}; merges {len(ex.merges)}\n")
    if args.emit_model is not None:
        full = explore(spec, args.depth, args.delta, max_states=args.max_states)
        args.emit_model.write_text(dumps_model(full.model))
    if args.uniform:
        r = mdp_uniform(spec, target_gap=args.gap, delta=args.delta or 1e-3)
        out.write(f"uniform value in [{fmt17(r.lower)}, {fmt17(r.upper)}]\n")
    return EXIT_OK


def cmd_lift_pomdp(args, out):
    spec = _read_spec(args.pomdp, POMDPSpec)
    ex = explore_p(spec, args.depth, args.delta, max_states=args.max_states)
    V = v_n_table(ex.model, args.depth)[:, 0]
    rows = [("n", "value", "bound")] + [(n, fmt17(V[n]), fmt17(ex.error_bound)) for n in range(1, args.depth + 1)]
    _write(args.csv, _csv_text(rows), out)
    out.write(f"# lifted states {ex.model.n_states}; merges {len(ex.merges)}\n")
    if args.emit_model is not None:
        args.emit_model.write_text(dumps_model(ex.model))
    return EXIT_OK


def cmd_gallery(args, out, params):
    try:
        inst = gallery.REGISTRY[args.name](**params)
    except (TypeError, ValueError) as exc:
        raise CLIError(str(exc)) from None
    for d in inst.diagnostics:
        out.write(d.line() + "\n")
    if args.emit_model is not None:
        args.emit_model.write_text(dumps_model(inst.model))
    if args.csv is not None:
        rows = [("example", "diagnostic", "passed", "value")]
        rows += [(inst.name, d.name, str(d.passed).lower(), fmt17(d.value)) for d in inst.diagnostics]
        args.csv.write_text(_csv_text(rows))
    return EXIT_OK if inst.passed else EXIT_FAILED


def cmd_check(args, out):
    model = _read_model(args.model)
    results = property_suite(model, args.horizons, args.m_max)
    for r in results:
        out.write(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.violations} violations in {r.checked} checks\n")
    if args.csv is not None:
        rows = [("property", "passed", "violations", "checked", "worst_excess")]
        rows += [(r.name, str(r.passed).lower(), r.violations, r.checked, fmt17(r.worst)) for r in results]
        args.csv.write_text(_csv_text(rows))
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


def _read_spec(path: Path, cls):
    try:
        text = path.read_text()
    except OSError as exc:
        raise CLIError(f"cannot read {path}: {exc.strerror}") from None
    return cls.loads(text)


COMMANDS = {"values": cmd_values, "wvalues": cmd_wvalues, "vstar": cmd_vstar, "chain": cmd_chain,
            "synth": cmd_synth, "shorten": cmd_shorten, "lift-mdp": cmd_lift_mdp,
            "lift-pomdp": cmd_lift_pomdp, "check": cmd_check}


def main(argv=None, out=None, err=None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        with contextlib.redirect_stderr(err), contextlib.redirect_stdout(out):
            args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.verb == "gallery":
            params = gallery_params(args.name, extra)
            out.write(header(args, params) + "\n")
            return cmd_gallery(args, out, params)
        if extra:
            with contextlib.redirect_stderr(err):
                parser.parse_args(argv)      # reports the unknown flags and exits 2
        out.write(header(args) + "\n")
        return COMMANDS[args.verb](args, out)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (CLIError, ModelError, ValueError) as exc:
        err.write(f"uniformdp: error: {exc}\n")
        return EXIT_INVALID
    except (BudgetExceeded, ValueIterationError, TransportError, NoBlockFound) as exc:
        err.write(f"uniformdp: budget exhausted: {exc}\n")
        return EXIT_BUDGET
