"""Command-line entry point ``riesz-lake``.

Exit codes: 0 success, 1 a verification check failed, 2 config error,
3 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys

from ..errors import ConfigError, RieszLakeError

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def _run(args):
    from .config import load_config
    from .runner import run_scenario

    raw = load_config(args.config)
    res = run_scenario(raw, out_dir=args.out)
    summary = {"out_dir": str(res.out_dir), "rows": len(res.records), "script_H_T": res.records[-1].script_H}
    if "max_err_vs_exact" in res.meta:
        summary["max_err_vs_exact"] = res.meta["max_err_vs_exact"]
    print(json.dumps(summary))
    return EXIT_OK


def _sweep(args):
    from .config import load_config
    from .sweep import scaling_sweep

    raw = load_config(args.config)
    out = args.out or raw.get("output", {}).get("dir", "out")
    rows = scaling_sweep(raw, out_dir=out, threads=args.threads)
    failed = sum(1 for r in rows if r["error"])
    print(json.dumps({"sweep_csv": f"{out}/sweep.csv", "cells": len(rows), "failed_cells": failed}))
    return EXIT_OK


def _verify(args):
    from ..equilibrium import equilibrium_case, verify_frostman

    try:
        case = equilibrium_case(args.case)
    except RieszLakeError as exc:
        raise ConfigError(str(exc), field="case") from None
    rep = verify_frostman(case.V, case.mu, case.kernel, tol=args.tol, n_points=args.points, case=args.case)
    print(rep.to_json())
    return EXIT_OK if rep.passed else EXIT_CHECK_FAILED


def _oracle(args):
    from ..dynamics import simulate
    from ..equilibrium import Confinement
    from ..exact_1d import ExactInit, max_error
    from ..kernels import Kernel

    if args.N < 1 or not args.epsilon > 0 or args.T < 0:
        raise ConfigError("need N >= 1, epsilon > 0 and T >= 0", field="N/epsilon/T")
    init = ExactInit.critical(args.N, args.epsilon) if args.variant == "critical" else ExactInit.shifted(args.N, args.epsilon)
    dt = args.dt if args.dt is not None else args.epsilon / 100
    traj = simulate(init.to_state(), args.T, dt, Kernel.oned_coulomb(), Confinement.quadratic(1.0), scheme=args.scheme)
    ex, ev = max_error(traj.times, traj.positions, traj.velocities, init)
    amp = math.sqrt(2.0) / (args.N * args.epsilon)
    print(json.dumps({"N": args.N, "epsilon": args.epsilon, "T": args.T, "dt": dt, "scheme": args.scheme,
                      "max_position_error": ex, "max_velocity_error": ev, "amplitude": amp}))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="riesz-lake", description="Supercritical mean-field particle experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario config")
    r.add_argument("config")
    r.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    r.set_defaults(func=_run)

    s = sub.add_parser("sweep", help="run an (N, epsilon_rule) sweep")
    s.add_argument("config")
    s.add_argument("--out", default=None)
    s.add_argument("--threads", type=int, default=None)
    s.set_defaults(func=_sweep)

    v = sub.add_parser("verify-equilibrium", help="Frostman check of a closed-form case")
    v.add_argument("case")
    v.add_argument("--tol", type=float, default=1e-6)
    v.add_argument("--points", type=int, default=1000)
    v.set_defaults(func=_verify)

    o = sub.add_parser("oracle-1d", help="compare the 1D Coulomb simulation with its exact solution")
    o.add_argument("N", type=int)
    o.add_argument("epsilon", type=float)
    o.add_argument("T", type=float)
    o.add_argument("--dt", type=float, default=None)
    o.add_argument("--scheme", choices=("verlet", "yoshida4"), default="yoshida4")
    o.add_argument("--variant", choices=("shifted", "critical"), default="shifted")
    o.set_defaults(func=_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        field = f" [{exc.field}]" if exc.field else ""
        print(f"config error{field}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RieszLakeError as exc:
        when = getattr(exc, "time", None)
        at = f" at t={when}" if when is not None else ""
        print(f"runtime error ({type(exc).__name__}){at}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
