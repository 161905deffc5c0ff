"""Command-line interface.

Subcommands: run, sweep, doptimal, verify, report.
Exit codes: 0 success, 1 validation/usage error, 2 verification failure.
The output directory can be overridden with the SEQGAIN_OUT environment
variable when --out is not given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import read_config
from .errors import SeqgainError, ValidationError
from .harness import (RNG_NAME, read_trace_csv, reference_designs, run_experiment,
                      run_sweep, summary_dict, build_candidates, build_cost,
                      build_model)
from .verification import run_all


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def _build_parser() -> _Parser:
    p = _Parser(prog="seqgain",
                description="Sequential adaptive estimation experiments")
    sub = p.add_subparsers(dest="command")

    run_p = sub.add_parser("run", help="run one experiment from a config file")
    run_p.add_argument("config")
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--out")
    run_p.add_argument("--replicates", type=int)
    run_p.add_argument("--trials", type=int)
    run_p.add_argument("--budget", type=float)
    run_p.add_argument("--quiet", action="store_true")

    sweep_p = sub.add_parser("sweep", help="replicated runs over theta0 values or seeds")
    sweep_p.add_argument("config")
    sweep_p.add_argument("--theta0", help="comma-separated true parameter values")
    sweep_p.add_argument("--seeds", type=int, help="number of consecutive seeds")
    sweep_p.add_argument("--seed", type=int)
    sweep_p.add_argument("--out")
    sweep_p.add_argument("--quiet", action="store_true")

    dopt_p = sub.add_parser("doptimal", help="print the reference design as JSON")
    dopt_p.add_argument("config")

    ver_p = sub.add_parser("verify", help="run the built-in invariant suite")
    ver_p.add_argument("--quiet", action="store_true")

    rep_p = sub.add_parser("report", help="aggregate trace CSVs into plot data")
    rep_p.add_argument("dir")
    rep_p.add_argument("--out")
    return p


def _apply_overrides(cfg, args):
    if getattr(args, "seed", None) is not None:
        cfg.run.seed = args.seed
    if getattr(args, "replicates", None) is not None:
        cfg.run.replicates = args.replicates
    if getattr(args, "trials", None) is not None:
        cfg.run.trials = args.trials
        cfg.run.budget = 0.0
    if getattr(args, "budget", None) is not None:
        cfg.run.budget = args.budget
        cfg.run.trials = 0
    out = getattr(args, "out", None) or os.environ.get("SEQGAIN_OUT") or cfg.output.dir
    if getattr(args, "quiet", False):
        cfg.output.quiet = True
    return out


def _cmd_run(args) -> int:
    cfg = read_config(args.config)
    out = _apply_overrides(cfg, args)
    result = run_experiment(cfg, out_dir=out)
    if not cfg.output.quiet:
        print(json.dumps(summary_dict(result)["aggregate"], indent=2, sort_keys=True))
    return 0


def _cmd_sweep(args) -> int:
    cfg = read_config(args.config)
    out = _apply_overrides(cfg, args)
    theta0_values = None
    seeds = None
    if args.theta0:
        theta0_values = [float(v) for v in args.theta0.split(",") if v.strip()]
    if args.seeds:
        seeds = [cfg.run.seed + i for i in range(args.seeds)]
    result = run_sweep(cfg, theta0_values=theta0_values, seeds=seeds, out_dir=out)
    if not cfg.output.quiet:
        print(json.dumps(result["overall"], indent=2, sort_keys=True))
    return 0


def _cmd_doptimal(args) -> int:
    cfg = read_config(args.config)
    cfg.validate()
    theta0 = cfg.theta0_value()
    if theta0 is None:
        raise ValidationError("run.theta0", "doptimal needs a numeric theta0")
    model = build_model(cfg)
    cost = build_cost(cfg)
    candidates = build_candidates(cfg, model)
    unit, per_cost = reference_designs(model, cost, theta0, candidates)

    def fmt(d):
        if d is None:
            return None
        return {
            "normalization": d.normalization,
            "B_star": np.atleast_2d(d.B_star).tolist(),
            "log_det": d.log_det,
            "H_star_nats": d.H_star_nats,
            "gap": d.gap,
            "converged": d.converged,
            "iterations": d.iterations,
            "top_weights": _top_weights(d),
        }

    payload = {"rng": RNG_NAME, "theta0": np.atleast_1d(theta0).tolist(),
               "unit_cost": fmt(unit), "per_cost": fmt(per_cost)}
    print(json.dumps(payload, indent=2, sort_keys=True))
    if unit is not None and not unit.converged:
        sys.stderr.write("warning: unit-cost design did not reach the gap tolerance\n")
    if per_cost is not None and not per_cost.converged:
        sys.stderr.write("warning: per-cost design did not reach the gap tolerance\n")
    return 0


def _top_weights(design, k: int = 5):
    idx = np.argsort(design.weights)[::-1][:k]
    return [{"index": int(i), "weight": float(design.weights[i])}
            for i in idx if design.weights[i] > 1e-12]


def _cmd_verify(args) -> int:
    results = run_all(quiet=args.quiet)
    failures = [name for name, ok, _ in results if not ok]
    if failures:
        sys.stderr.write("verification failed: " + "; ".join(failures) + "\n")
        return 2
    if not args.quiet:
        print(f"all {len(results)} checks passed")
    return 0


def _cmd_report(args) -> int:
    import glob

    paths = sorted(glob.glob(os.path.join(args.dir, "trace_rep*.csv")))
    if not paths:
        raise ValidationError("report.dir", f"no trace CSVs found in {args.dir}")
    traces = [read_trace_csv(p) for p in paths]
    T = min(len(tr["t"]) for tr in traces)
    if T == 0:
        raise ValidationError("report.dir", "traces are empty")

    def band(key):
        stack = np.stack([tr[key][:T] for tr in traces])
        return (np.median(stack, axis=0),
                np.quantile(stack, 0.25, axis=0),
                np.quantile(stack, 0.75, axis=0))

    res_m, res_lo, res_hi = band("residual_unit")
    det_m, det_lo, det_hi = band("det_Bt_unit")
    x_m, x_lo, x_hi = band("x")
    out_path = args.out or os.path.join(args.dir, "plotdata.csv")
    with open(out_path, "w") as fh:
        fh.write("t,residual_med,residual_q25,residual_q75,"
                 "det_med,det_q25,det_q75,x_med,x_q25,x_q75\n")
        for i in range(T):
            row = [i + 1, res_m[i], res_lo[i], res_hi[i],
                   det_m[i], det_lo[i], det_hi[i], x_m[i], x_lo[i], x_hi[i]]
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    print(out_path)
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "doptimal": _cmd_doptimal,
    "verify": _cmd_verify,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        sys.stderr.write(f"invalid configuration -- {exc}\n")
        return 1
    except SeqgainError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except FileNotFoundError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
