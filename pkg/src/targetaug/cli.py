"""Command line entry point: gen-data, train, eval, sweep, theory.

Exit codes: 0 success, 1 operational error, 2 an acceptance property was violated.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import emtheory, experiment
from .config import ExperimentConfig, MetricsReport
from .seqmodel import SeqModel

log = logging.getLogger("targetaug")

EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "repeats", None):
        cfg = replace(cfg, repeats=args.repeats)
    return cfg


def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    manifest = experiment.gen_data(cfg, args.out_dir)
    print(json.dumps(manifest["counts"], sort_keys=True))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    report = experiment.run(cfg, args.workers, args.out_dir)
    print(json.dumps(report.metrics, sort_keys=True))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    model = SeqModel.load(args.model)
    data = experiment.load_data(cfg)
    metrics = experiment.run_eval(cfg, model, data, args.workers)
    _, _, rmse = experiment.make_filters(cfg, data)
    report = MetricsReport(cfg.to_dict(), cfg.seed, metrics, [], rmse)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / "eval_report.json")
    print(json.dumps(metrics, sort_keys=True))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    rows = experiment.run_sweep(cfg, args.sweep, args.workers, args.out_dir)
    for r in rows:
        print(json.dumps(r, sort_keys=True))
    if args.sweep == "proxy" and not experiment.proxy_shape_ok(rows):
        log.error("success is not non-increasing in proxy RMSE (or oracle/base gap > 5 points)")
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_theory(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.report == "prop1":
        rows = emtheory.prop1_sweep(args.lam, args.alpha0, args.eps)
        experiment.write_rows(out / "prop1_sweep.csv", rows)
        for lam in args.lam:
            for a0 in args.alpha0:
                T = args.T or int(math.ceil(max(emtheory.bound_time(e, a0, lam) for e in args.eps))) + 5
                tr = emtheory.iterate_alpha(a0, lam, T)
                emtheory.write_alpha_report(out / f"alpha_lam{lam:g}_a{a0:g}.csv", tr)
        bad = [r for r in rows if not (r["strictly_increasing"] and r["objective_ascent"] and r["bound_holds"])]
        print(json.dumps({"checked": len(rows), "violations": len(bad)}))
        return EXIT_VIOLATION if bad else EXIT_OK
    tr = emtheory.gaussian_toy(args.T or 10, args.finite_samples, args.seed or 0)
    emtheory.write_gaussian_report(out / "gaussian.csv", tr)
    increasing = all(b > a for a, b in zip(tr.mus, tr.mus[1:]))
    beats = all(m > emtheory.SQRT_2_OVER_PI for m in tr.truncated_means[1:])
    print(json.dumps({"rows": len(tr.mus), "increasing": increasing, "beats_direct_projection": beats}))
    if args.finite_samples is None and not (increasing and beats):
        return EXIT_VIOLATION
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="targetaug", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, workers: bool = True):
        sp.add_argument("--config", help="experiment config (JSON)")
        sp.add_argument("--seed", type=int, help="override the config's master seed")
        sp.add_argument("--out-dir", default="runs/out")
        if workers:
            sp.add_argument("--workers", type=int, default=1)

    sp = sub.add_parser("gen-data", help="synthesize dataset files and a manifest")
    common(sp, workers=False)
    sp.set_defaults(fn=cmd_gen_data)

    sp = sub.add_parser("train", help="train per the config's ablation, evaluate, write report")
    common(sp)
    sp.add_argument("--repeats", type=int, help="independent runs to average (default from config)")
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a saved model")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("sweep", help="train+eval per rung of a K or proxy-RMSE ladder")
    common(sp)
    sp.add_argument("--sweep", choices=("K", "proxy"), required=True)
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("theory", help="numerical reports for the unconditional theory")
    sp.add_argument("report", choices=("prop1", "gaussian"))
    sp.add_argument("--out-dir", default="runs/theory")
    sp.add_argument("--lam", type=float, nargs="+", default=[0.5, 1.0, 5.0])
    sp.add_argument("--alpha0", type=float, nargs="+", default=[0.01, 0.1, 0.5])
    sp.add_argument("--eps", type=float, nargs="+", default=[0.1, 0.01])
    sp.add_argument("--T", type=int, help="iterations (default: enough for the bound, or 10 for gaussian)")
    sp.add_argument("--finite-samples", type=int, help="gaussian: average this many accepted draws per step")
    sp.add_argument("--seed", type=int)
    sp.set_defaults(fn=cmd_theory)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except experiment.PropertyViolation as e:
        log.error("property violation: %s", e)
        return EXIT_VIOLATION
    except (OSError, ValueError, KeyError, RuntimeError) as e:
        log.error("%s", e)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
