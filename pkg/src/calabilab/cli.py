"""Command-line entry point: ``calabilab <subcommand> [config] [--section.key=value ...]``.

Exit status: 0 when every enabled check passes, 1 for configuration errors
or failed checks, 2 when a flow stalls (partial artifacts are still written).
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
import json
import logging
import sys

import numpy as np

from . import __version__
from .config import parse_config
from .errors import CalabiLabError
from .experiment import (EXIT_FAILED, EXIT_OK, build_initial_state, conventions_hash,
                         futaki_report, invariant_suite, run_experiment)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_FAILED)


def _parser():
    p = _Parser(prog="calabilab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, helptext in (("run", "integrate the flow and write trace.csv / summary.json"),
                           ("gap", "constrained Lichnerowicz gap of the initial state"),
                           ("check", "invariant suite on the initial state (no flow)")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("config")
    sp = sub.add_parser("futaki", help="extremal affine function and Futaki data of a polytope")
    sp.add_argument("polytope")
    sp = sub.add_parser("sweep", help="run several configs concurrently")
    sp.add_argument("configs", nargs="+")
    sp.add_argument("--workers", type=int, default=None)
    sub.add_parser("version", help="package version and conventions hash")
    return p


def _cmd_run(cfg):
    res = run_experiment(cfg)
    s = res.summary
    print(f"status {s['status']}  steps {s['accepted_steps']}  rejected {s['rejected_steps']}  "
          f"t {s['t_final']:.6g}  energy {s['energy_final']:.3e}")
    for name, chk in s["checks"].items():
        print(f"  {name:<15s} {'pass' if chk['passed'] else 'FAIL'}")
    print(f"artifacts in {res.out_dir}")
    return res.status


def _cmd_gap(cfg):
    from .spectral_gap import min_eigenvalue

    state = build_initial_state(cfg)
    rep = min_eigenvalue(state)
    print(f"lambda1 {rep.lambda1:.15g}")
    print(f"residual {rep.residual:.3e}  iterations {rep.iterations}")
    if state.testbed == "torus":
        ref = state.model.lowest_symbol()
        print(f"flat symbol {ref:.15g}  relative difference {abs(rep.lambda1 - ref) / ref:.3e}")
    return EXIT_OK if rep.lambda1 > 0 else EXIT_FAILED


def _cmd_check(cfg):
    results = invariant_suite(cfg)
    for name, ok, value in results:
        print(f"{'pass' if ok else 'FAIL'}  {name:<24s} {value:.3e}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_FAILED


def _cmd_futaki(path):
    from .polytope import Polytope

    P = Polytope.from_file(path)
    rep = futaki_report(P)
    th = rep["theta_X"]
    coef = " ".join(f"{a:.12g}" for a in th["gradient"])
    print(f"theta_X constant {th['constant']:.12g}  gradient {coef}")
    print(f"Sbar {rep['Sbar']:.12g}")
    if rep["symmetric"]:
        print("theta_X is constant (symmetric polytope): the class has vanishing Futaki invariant")
    for j, (f, g) in enumerate(zip(rep["futaki_exact"], rep["modified_futaki_exact"]), 1):
        print(f"F(x_{j}) {f:.12g}  modified {g:.3e}")
    if "futaki_grid" in rep:
        grid = " ".join(f"{v:.12g}" for v in rep["futaki_grid"])
        print(f"F on the grid at u0: {grid}")
    print("B " + json.dumps(np.round(rep["B_exact"], 14).tolist()))
    return EXIT_OK


def _sweep_one(path):
    try:
        return path, _cmd_run(parse_config(path))
    except (CalabiLabError, FileNotFoundError) as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return path, EXIT_FAILED


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    overrides = [a for a in argv if a.startswith("--") and "." in a.split("=", 1)[0]]
    rest = [a for a in argv if a not in overrides]
    args = _parser().parse_args(rest)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "version":
            print(f"calabilab {__version__}")
            print(f"conventions sha256 {conventions_hash()}")
            return EXIT_OK
        if args.command == "futaki":
            return _cmd_futaki(args.polytope)
        if args.command == "sweep":
            with ProcessPoolExecutor(max_workers=args.workers) as ex:
                codes = [code for _, code in ex.map(_sweep_one, args.configs)]
            return max(codes)
        cfg = parse_config(args.config, overrides)
        return {"run": _cmd_run, "gap": _cmd_gap, "check": _cmd_check}[args.command](cfg)
    except (CalabiLabError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
