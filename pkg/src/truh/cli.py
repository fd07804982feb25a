"""Command-line interface: ``truh {test,constants,experiment,baseline,sweep}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
The effective seed is always printed on stderr so that runs with a
random default seed can be repeated.
"""

from __future__ import annotations

import argparse
import json
import secrets
import sys

from . import __version__
from .core import (DimensionMismatch, EmptyInput, InsufficientBaseline, InvalidAlpha,
                   InvalidTau, IoError, ParseError, RngStream, label, load_csv,
                   result_to_json)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be positive: {text}")
    return value


def _seed(text):
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer seed: {text!r}")
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _probability(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1): {text}")
    return value


def _tau(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not value >= 1.0:
        raise argparse.ArgumentTypeError(f"tau must be >= 1: {text}")
    return value


def _bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}")


def _dims(text):
    """``"1..6"``, ``"2,3,5"`` or a single integer."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            dims = list(range(int(lo), int(hi) + 1))
        else:
            dims = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad dimension list {text!r}")
    if not dims or min(dims) < 1:
        raise argparse.ArgumentTypeError("dimensions must be positive")
    return dims


def build_parser():
    p = _Parser(prog="truh", description="TRUH two-sample test under subpopulation "
                "heterogeneity, with constants, baselines and simulations.")
    p.add_argument("--version", action="version", version=f"truh {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("test", help="run the TRUH test on two CSV files")
    t.add_argument("--uninfected", required=True, help="baseline CSV")
    t.add_argument("--infected", required=True, help="case CSV")
    t.add_argument("--header", action="store_true", help="CSV files start with a header row")
    t.add_argument("--alpha", type=_probability, default=0.05)
    t.add_argument("--tau-fc", type=_tau, default=1.0)
    t.add_argument("--b2", type=_positive_int, default=200)
    t.add_argument("--b1", type=_positive_int, default=None,
                   help="outer draws in Dirichlet mode (default 10)")
    t.add_argument("--mixing", choices=["corners", "dirichlet"], default="corners")
    t.add_argument("--beta", type=float, default=0.1)
    t.add_argument("--k", type=_positive_int, default=None, help="fix the number of classes")
    t.add_argument("--tau-on-observed", type=_bool, default=True, metavar="BOOL",
                   help="apply tau_fc to the observed statistic too (default true)")
    _common(t)

    c = sub.add_parser("constants", help="dimension constants zeta1, zeta2, Delta_d")
    g = c.add_mutually_exclusive_group(required=True)
    g.add_argument("--dim", type=int)
    g.add_argument("--dims", type=_dims)
    c.add_argument("--points", type=_positive_int, default=100_000)
    c.add_argument("--reps", type=_positive_int, default=20)
    c.add_argument("--mode", choices=["cube", "torus", "closed"], default="cube")
    _common(c)

    e = sub.add_parser("experiment", help="rejection rates on a simulated scenario")
    _experiment_flags(e)
    e.add_argument("--name", required=True)
    e.add_argument("--tau-fc", type=_tau, default=1.0)
    e.add_argument("--methods", default="truh,edgecount_asymptotic",
                   help="comma list from truh, edgecount_asymptotic, "
                   "edgecount_permutation, energy")
    e.add_argument("--panel", choices=["left", "center", "right"], default="right",
                   help="Exp1-Fig3 panel")
    e.add_argument("--n-perm", type=_positive_int, default=199)

    s = sub.add_parser("sweep", help="TRUH rejection rates over several tau_fc values")
    _experiment_flags(s)
    s.add_argument("--name", default="Exp2-II")
    s.add_argument("--taus", type=_float_list, default=[1.0, 1.2, 1.4])

    b = sub.add_parser("baseline", help="edge-count or energy test on two CSV files")
    b.add_argument("--uninfected", required=True)
    b.add_argument("--infected", required=True)
    b.add_argument("--header", action="store_true")
    b.add_argument("--method", choices=["edgecount_asymptotic", "edgecount_permutation",
                                        "energy"], default="edgecount_asymptotic")
    b.add_argument("--alpha", type=_probability, default=0.05)
    b.add_argument("--n-perm", type=_positive_int, default=999)
    b.add_argument("--delta", type=float, default=None,
                   help="MST degree variance (default: tabulated for the data dimension)")
    _common(b)
    return p


def _common(sp):
    sp.add_argument("--seed", type=_seed, default=None,
                    help="master seed (default: random, printed)")
    sp.add_argument("--out", default=None, help="JSON output file, '-' for stdout")
    sp.add_argument("--threads", type=_positive_int, default=1)


def _experiment_flags(sp):
    sp.add_argument("--m", type=_positive_int, default=None)
    sp.add_argument("--n", type=_positive_int, default=None)
    sp.add_argument("--d", type=_positive_int, default=None)
    sp.add_argument("--reps", type=_positive_int, default=100)
    sp.add_argument("--alpha", type=_float_list, default=[0.05],
                    help="one level or a comma list")
    sp.add_argument("--b2", type=_positive_int, default=200)
    sp.add_argument("--mixing", choices=["corners", "dirichlet"], default="corners")
    sp.add_argument("--beta", type=float, default=0.1)
    _common(sp)


# ---------------------------------------------------------------------------

def _emit(text, out, stream):
    if out is None:
        return
    if out == "-":
        stream.write(text + "\n")
        return
    try:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {out}: {exc}") from exc


def _mixing(args):
    from .calibrate import Corners, Dirichlet
    if args.mixing == "corners":
        return Corners()
    if not args.beta > 0:
        raise UsageError("--beta must be positive")
    return Dirichlet(args.beta)


def _load_pair(args):
    U = load_csv(args.uninfected, has_header=args.header)
    V = load_csv(args.infected, has_header=args.header)
    if U.d != V.d:
        raise DimensionMismatch(f"uninfected has {U.d} columns, infected has {V.d}")
    return U, V


def cmd_test(args, stdout):
    from .calibrate import BootstrapConfig, truh_test
    try:
        config = BootstrapConfig(alpha=args.alpha, tau_fc=args.tau_fc, b1=args.b1,
                                 b2=args.b2, mixing_mode=_mixing(args), k_override=args.k,
                                 seed=args.seed, tau_on_observed=args.tau_on_observed,
                                 threads=args.threads)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc
    U, V = _load_pair(args)
    result = truh_test(U, V, config)
    verdict = ("REJECT (remodeling)" if result.reject
               else "FAIL TO REJECT (preferential infection / no change)")
    to_stdout = args.out == "-"
    info = sys.stderr if to_stdout else stdout
    info.write(f"m={result.m} n={result.n} d={result.d} k_hat={result.k_hat}\n"
               f"statistic={result.statistic:.6g} cutoff={result.cutoff:.6g} "
               f"p_value={result.p_value:.4g} alpha={result.alpha:g} tau_fc={result.tau_fc:g}\n"
               f"{verdict}\n")
    _emit(result_to_json(result), args.out, stdout)
    return EXIT_OK


def cmd_constants(args, stdout):
    from .constants import (closed_form_constants, ConstantsMode, estimate_constants_mc)
    dims = args.dims if args.dims is not None else [args.dim]
    if min(dims) < 1:
        raise UsageError("dimension must be positive")
    if args.mode != "closed" and args.points < 1000:
        raise UsageError("--points must be at least 1000")
    rows = []
    root = RngStream(args.seed, [label("constants")])
    for d in dims:
        if args.mode == "closed":
            rows.append(closed_form_constants(d))
        else:
            rows.append(estimate_constants_mc(d, args.points, args.reps,
                                              ConstantsMode(args.mode), root.child(d),
                                              args.threads))
    info = sys.stderr if args.out == "-" else stdout
    info.write(f"{'d':>3} {'zeta1':>9} {'zeta2':>9} {'Delta_d':>9} "
               f"{'se1':>9} {'se2':>9} {'se_Delta':>9}\n")
    for c in rows:
        if c.zeta2 is None:
            info.write(f"{c.d:>3} {c.zeta1:>9.6f} {'n/a':>9} {'n/a':>9}\n")
        else:
            info.write(f"{c.d:>3} {c.zeta1:>9.4f} {c.zeta2:>9.4f} {c.delta_d:>9.4f} "
                       f"{c.se_zeta1:>9.5f} {c.se_zeta2:>9.5f} {c.se_delta:>9.5f}\n")
    payload = {"mode": args.mode, "points": args.points, "reps": args.reps,
               "seed": args.seed,
               "rows": [{"d": c.d, "zeta1": c.zeta1, "zeta2": c.zeta2,
                         "delta_d": c.delta_d,
                         "se_zeta1": c.se_zeta1 if c.zeta2 is not None else None,
                         "se_zeta2": c.se_zeta2 if c.zeta2 is not None else None,
                         "se_delta": c.se_delta if c.zeta2 is not None else None}
                        for c in rows]}
    _emit(json.dumps(payload, indent=2), args.out, stdout)
    return EXIT_OK


def _experiment_kwargs(args):
    if not args.alpha or any(not 0 < a < 1 for a in args.alpha):
        raise UsageError("--alpha values must lie in (0, 1)")
    mixing = _mixing(args)
    return dict(m=args.m, n=args.n, d=args.d, reps=args.reps, alpha=args.alpha,
                seed=args.seed, b2=args.b2, mixing=mixing, threads=args.threads)


def cmd_experiment(args, stdout):
    from .simlab import METHODS, run_experiment
    methods = tuple(x.strip() for x in args.methods.split(",") if x.strip())
    bad = [x for x in methods if x not in METHODS]
    if bad or not methods:
        raise UsageError(f"unknown methods {bad}; choose from {', '.join(METHODS)}")
    report = run_experiment(args.name, tau_fc=args.tau_fc, methods=methods,
                            panel=args.panel, n_perm=args.n_perm, **_experiment_kwargs(args))
    info = sys.stderr if args.out == "-" else stdout
    info.write(report.to_table() + "\n")
    _emit(report.to_json(), args.out, stdout)
    return EXIT_OK


def cmd_sweep(args, stdout):
    from .simlab import run_tau_sweep
    if not args.taus or any(not t >= 1.0 for t in args.taus):
        raise UsageError("--taus values must be >= 1")
    reports = run_tau_sweep(args.name, args.taus, **_experiment_kwargs(args))
    info = sys.stderr if args.out == "-" else stdout
    alphas = sorted(reports[0].rates["truh"], key=float)
    info.write(f"{args.name}  tau sweep  reps={args.reps} seed={args.seed}\n")
    info.write(f"{'tau_fc':>8}" + "".join(f"{'a=' + a:>10}" for a in alphas) + "\n")
    for tau, rep in zip(args.taus, reports):
        info.write(f"{tau:>8g}" + "".join(f"{rep.rates['truh'][a]:>10.3f}" for a in alphas)
                   + "\n")
    _emit(json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True),
          args.out, stdout)
    return EXIT_OK


def cmd_baseline(args, stdout):
    from . import baselines
    U, V = _load_pair(args)
    rng = RngStream(args.seed, [label("baseline")])
    if args.method == "edgecount_asymptotic":
        if args.alpha >= 0.5:
            raise UsageError("the asymptotic edge-count test needs alpha < 0.5")
        res = baselines.edgecount_test_asymptotic(U, V, args.alpha, delta_d=args.delta)
    elif args.method == "edgecount_permutation":
        res = baselines.edgecount_test_permutation(U, V, args.alpha, args.n_perm, rng)
    else:
        res = baselines.energy_test(U, V, args.alpha, args.n_perm, rng)
    info = sys.stderr if args.out == "-" else stdout
    info.write(f"{res.method.value}: statistic={res.statistic:.6g} p_value={res.p_value:.4g} "
               f"{'REJECT' if res.reject else 'FAIL TO REJECT'} (alpha={args.alpha:g})\n")
    payload = {"method": res.method.value, "statistic": res.statistic,
               "p_value": res.p_value, "reject": res.reject, "alpha": res.alpha,
               "cutoff": res.cutoff, "n_permutations": res.n_permutations,
               "m": U.n_rows, "n": V.n_rows, "d": U.d, "seed": args.seed}
    _emit(json.dumps(payload, indent=2), args.out, stdout)
    return EXIT_OK


COMMANDS = {"test": cmd_test, "constants": cmd_constants, "experiment": cmd_experiment,
            "sweep": cmd_sweep, "baseline": cmd_baseline}


def main(argv=None, stdout=None):
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) if exc.code in (0, None) else EXIT_USAGE
    if args.seed is None:
        args.seed = secrets.randbits(64)
    sys.stderr.write(f"seed: {args.seed}\n")

    from .simlab import InvalidSpec, UnknownScenario
    from .calibrate import AllDrawsInfeasible
    try:
        return COMMANDS[args.command](args, stdout)
    except (UsageError, UnknownScenario, InvalidSpec, InvalidAlpha, InvalidTau) as exc:
        sys.stderr.write(f"truh {args.command}: error: {exc}\n")
        return EXIT_USAGE
    except (ParseError, EmptyInput, DimensionMismatch, InsufficientBaseline,
            AllDrawsInfeasible, IoError, FileNotFoundError, PermissionError,
            IsADirectoryError) as exc:
        sys.stderr.write(f"truh {args.command}: data error: {exc}\n")
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - last-resort guard
        sys.stderr.write(f"truh {args.command}: internal error: {type(exc).__name__}: {exc}\n")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
