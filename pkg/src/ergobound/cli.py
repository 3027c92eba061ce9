"""Command-line front end.

Every command prints a short human summary and writes a CSV (or, for
``optimize-weights``, a weights JSON file).  CSV files start with ``#``
comment lines echoing the configuration and any condition checks.

Exit codes: 0 success, 1 domain violation, 2 input/parse error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .bounds import envelopes, ergodicity_diagnosis
from .models import ConfigError, ModelError, load_model, validate
from .ode import SolverError, solve_p
from .optimizer import OptimizationProblem, optimize_weights
from .rates import QuadratureError, RateEvaluationError, RateSyntaxError
from .reduction import reduce
from .verify import run_sandwich, spectral_gap_bracket
from .weighting import (
    WeightMatrix,
    WeightShape,
    alpha_profile,
    check_condition_i,
    check_condition_ii,
    default_weights,
    make_H,
)

EXIT_OK, EXIT_DOMAIN, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


class InputError(ValueError):
    pass


def _num(x: float) -> str:
    return repr(float(x))


def _checkpoints(horizon: float, step: float) -> np.ndarray:
    if not (horizon > 0 and step > 0):
        raise InputError("--horizon and --grid must be positive")
    n = int(math.floor(horizon / step + 1e-9))
    return np.array([k * step for k in range(n + 1)])


def _load_weights(path, model) -> WeightMatrix:
    if path is None:
        return default_weights(model)
    try:
        D = WeightMatrix.from_config(json.loads(Path(path).read_text()))
    except (json.JSONDecodeError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from None
    if D.S != model.S:
        raise InputError(f"weights of length {D.S} do not match S={model.S}")
    return D


def _initial(spec: str, n: int) -> np.ndarray:
    if spec.startswith("delta:"):
        try:
            k = int(spec[6:])
        except ValueError:
            raise InputError(f"bad initial distribution {spec!r}") from None
        if not 0 <= k < n:
            raise InputError(f"state {k} outside 0..{n - 1}")
        p = np.zeros(n)
        p[k] = 1.0
        return p
    try:
        p = np.array([float(line) for line in Path(spec).read_text().split()])
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read initial distribution {spec!r}: {exc}") from None
    if p.size != n or p.min() < 0 or abs(p.sum() - 1) > 1e-10:
        raise InputError(f"{spec}: need {n} nonnegative values summing to 1")
    return p


class _Output:
    """Collects comment lines and rows, then writes once."""

    def __init__(self, args, columns):
        self.args = args
        self.columns = columns
        self.comments: list[str] = []
        self.rows: list[list[str]] = []

    def comment(self, text: str):
        self.comments.extend(text.splitlines())

    def row(self, values):
        self.rows.append([v if isinstance(v, str) else _num(v) for v in values])

    def text(self) -> str:
        buf = io.StringIO()
        for c in self.comments:
            buf.write(f"# {c}\n")
        buf.write(",".join(self.columns) + "\n")
        for r in self.rows:
            buf.write(",".join(r) + "\n")
        return buf.getvalue()

    def flush(self):
        _emit(self.args, self.text())


def _emit(args, text: str):
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _say(args, text: str):
    print(text, file=sys.stdout if args.out else sys.stderr)


def _echo(args, out: _Output):
    keys = ["command", "model", "weights", "horizon", "grid", "rtol", "atol", "qtol", "seed"]
    out.comment(" ".join(f"{k}={getattr(args, k)}" for k in keys if getattr(args, k, None) is not None))


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args) -> int:
    m = load_model(args.model, check=False)
    rep = validate(m, args.horizon, args.samples)
    print(rep)
    return EXIT_OK if rep.ok else EXIT_DOMAIN


def _condition_stamp(out: _Output, rs, D, horizon):
    d = check_condition_i(D)
    out.comment(f"condition (i): ||D z|| >= d ||z|| with d = {_num(d)}")
    rep = check_condition_ii(make_H(rs, D), horizon)
    out.comment(str(rep))
    if not rep.passed:
        out.comment("WARNING: D B D^-1 is not essentially nonnegative; envelopes are not guaranteed bounds")
    return rep


def cmd_bounds(args) -> int:
    m = load_model(args.model)
    D = _load_weights(args.weights, m)
    rs = reduce(m)
    out = _Output(args, ["t", "beta_star", "beta_lower", "U", "L"])
    _echo(args, out)
    out.comment(f"weights: {json.dumps(D.to_config())}")
    _condition_stamp(out, rs, D, args.horizon)
    profile = alpha_profile(rs, D)
    ts = _checkpoints(args.horizon, args.grid)
    g = envelopes(profile, args.qtol).grid(ts)
    for k in range(ts.size):
        out.row([g["t"][k], g["beta_star"][k], g["beta_lower"][k], g["U"][k], g["L"][k]])
    out.flush()
    _say(args, str(ergodicity_diagnosis(profile, args.horizon, args.qtol)))
    return EXIT_OK


def cmd_simulate(args) -> int:
    m = load_model(args.model)
    p0 = _initial(args.init, m.n)
    ts = _checkpoints(args.horizon, args.grid)
    traj = solve_p(m, p0, args.horizon, ts, args.rtol, args.atol)
    out = _Output(args, ["t"] + [f"p_{i}" for i in range(m.n)])
    _echo(args, out)
    out.comment(f"initial: {args.init}")
    for t, p in zip(traj.t, traj.y):
        out.row([t, *p])
    out.flush()
    _say(args, f"simulated {m!r} on [0, {args.horizon:g}]: {traj.steps} steps, {traj.rejections} rejected, "
               f"max |sum p - 1| = {traj.max_drift:.2e}")
    return EXIT_OK


def cmd_verify(args) -> int:
    m = load_model(args.model)
    D = _load_weights(args.weights, m)
    pa, pb = _initial(args.init_a, m.n), _initial(args.init_b, m.n)
    ts = _checkpoints(args.horizon, args.grid)
    rep = run_sandwich(m, D, pa, pb, args.horizon, ts, rtol=args.rtol, atol=args.atol, qtol=args.qtol)
    out = _Output(args, ["t", "measured", "upper", "lower", "lower_applicable", "margin_upper", "margin_lower"])
    _echo(args, out)
    out.comment(f"weights: {json.dumps(D.to_config())}; init-a={args.init_a} init-b={args.init_b}")
    for line in rep.header():
        out.comment(line)
    flag = "true" if rep.lower_applicable else "false"
    for r in rep.records:
        out.row([r.t, r.measured, r.upper, r.lower, flag, r.margin_upper, r.margin_lower])
    out.flush()
    ratios = rep.ratios()
    summary = [f"sandwich: {len(rep.violations)} violation(s) over {len(rep.records)} checkpoints"]
    if ratios.size:
        summary.append(f"measured/upper in [{ratios.min():.8f}, {ratios.max():.8f}]")
    _say(args, "; ".join(summary))
    return EXIT_OK if rep.ok else EXIT_DOMAIN


def cmd_optimize(args) -> int:
    m = load_model(args.model)
    prob = OptimizationProblem(m, WeightShape(args.shape), args.horizon, args.grid, budget=args.budget)
    res = optimize_weights(prob, args.seed)
    D = WeightMatrix(prob.shape, res.d)
    _emit(args, json.dumps(D.to_config(), indent=2) + "\n")
    cert = "grid-certified only" if res.grid_certified else "exact (time-homogeneous)"
    _say(args, f"J = {res.J!r} feasible={res.feasible} evaluations={res.iterations} ({cert})")
    return EXIT_OK if res.feasible else EXIT_DOMAIN


def cmd_spectral_gap(args) -> int:
    m = load_model(args.model)
    D = _load_weights(args.weights, m)
    rs = reduce(m)
    cond = check_condition_ii(make_H(rs, D), args.horizon)
    br = spectral_gap_bracket(m, D, args.horizon)
    out = _Output(args, ["beta_star", "gap", "beta_lower", "margin_low", "margin_high", "holds"])
    _echo(args, out)
    out.comment(str(cond))
    out.row([br.beta_star, br.gap, br.beta_lower, br.margin_low, br.margin_high, str(br.holds()).lower()])
    out.flush()
    _say(args, f"gap {br.gap:.6f}; {br}")
    return EXIT_OK if br.holds() and cond.passed else EXIT_DOMAIN


# ---------------------------------------------------------------------------
# parser


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _shared(step: bool) -> argparse.ArgumentParser:
    # built fresh per subcommand: parent actions are shared objects, so a
    # set_defaults on one subparser would otherwise leak into the others
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--model", required=True, help="model config (JSON)")
    shared.add_argument("--weights", help="weights config (JSON); default unit weights")
    shared.add_argument("--horizon", type=_positive, default=2.0)
    shared.add_argument("--rtol", type=_positive, default=1e-10)
    shared.add_argument("--atol", type=_positive, default=1e-12)
    shared.add_argument("--qtol", type=_positive, default=1e-10)
    shared.add_argument("--seed", type=int, default=0)
    shared.add_argument("--out", help="output file (default: standard output)")
    if step:
        shared.add_argument("--grid", type=_positive, default=0.05, help="output grid step")
    return shared


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ergobound", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", parents=[_shared(False)], help="check model invariants on a sample grid")
    s.add_argument("--samples", type=int, default=1000)
    s.set_defaults(func=cmd_validate, horizon=10.0)

    s = sub.add_parser("bounds", parents=[_shared(True)], help="envelope rates and curves")
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("simulate", parents=[_shared(True)], help="integrate the forward equations")
    s.add_argument("--init", default="delta:0", help="'delta:k' or a file with one probability per line")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("verify", parents=[_shared(True)], help="check measured distances against the envelopes")
    s.add_argument("--init-a", default=None, help="default: delta:S")
    s.add_argument("--init-b", default="delta:0")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("optimize-weights", parents=[_shared(False)], help="search weights maximising beta_star")
    s.add_argument("--shape", choices=[w.value for w in WeightShape], default="cumulative-upper")
    s.add_argument("--grid", type=int, default=64, help="number of time points for inhomogeneous models")
    s.add_argument("--budget", type=int, default=2000, help="objective evaluations per restart")
    s.set_defaults(func=cmd_optimize, horizon=10.0)

    s = sub.add_parser("spectral-gap", parents=[_shared(False)], help="decay parameter of a time-homogeneous chain")
    s.set_defaults(func=cmd_spectral_gap, horizon=10.0)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "verify" and args.init_a is None:
            m = load_model(args.model, check=False)
            args.init_a = f"delta:{m.S}"
        return args.func(args)
    except (ConfigError, RateSyntaxError, InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        for v in exc.violations:
            print(f"  {v}", file=sys.stderr)
        return EXIT_DOMAIN
    except (SolverError, QuadratureError, RateEvaluationError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
