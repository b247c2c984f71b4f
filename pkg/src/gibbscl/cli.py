"""Command-line entry point: ``gibbscl {simulate,calibrate,experiment,metrics}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .calibrate import BFGSConfig, calibrate
from .exact import exact_sample
from .experiment import ExperimentConfig, run_experiment, summarize
from .lattice import Lattice, get_model, sufficient_statistics

_EXPERIMENT_MODELS = {1: "ising", 2: "anisotropic", 3: "autologistic"}


def _weight_options(text):
    if text == "all":
        return (1, 2, 3, 4, 5)
    opt = int(text)
    if opt not in (1, 2, 3, 4, 5):
        raise argparse.ArgumentTypeError("weight option must be 1..5 or 'all'")
    return (opt,)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gibbscl", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="draw one exact lattice realisation")
    s.add_argument("--experiment", type=int, choices=(1, 2, 3), help="use this experiment's model and parameter")
    s.add_argument("--model", choices=sorted(_EXPERIMENT_MODELS.values()))
    s.add_argument("--theta", type=float, nargs="+")
    s.add_argument("--rows", type=int, default=16)
    s.add_argument("--cols", type=int, default=16)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", type=Path, help="write the lattice (.csv, otherwise text grid)")

    c = sub.add_parser("calibrate", help="calibrate the composite posterior for one lattice")
    c.add_argument("lattice", type=Path, help="lattice file written by 'simulate'")
    c.add_argument("--model", required=True, choices=sorted(_EXPERIMENT_MODELS.values()))
    c.add_argument("--k", type=int, default=4, help="block side length")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--profile", choices=("paper", "quick"), default="quick")
    c.add_argument("--n-cov-draws", type=int)
    c.add_argument("--n-grad-draws", type=int, default=100)
    c.add_argument("--weight-option", type=_weight_options, default=(1, 2, 3, 4, 5))
    c.add_argument("--out", type=Path, help="write the report as JSON")

    e = sub.add_parser("experiment", help="run a replicated simulation study")
    e.add_argument("--experiment", type=int, choices=(1, 2, 3), required=True)
    e.add_argument("--profile", choices=("paper", "quick"), default="quick")
    e.add_argument("--replicates", type=int)
    e.add_argument("--seed", type=int)
    e.add_argument("--out", type=Path, required=True)
    e.add_argument("--weight-option", type=_weight_options)
    e.add_argument("--config", type=Path, help="JSON config file; command-line flags override it")
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--save-grids", action="store_true", help="also write each reference posterior grid")

    m = sub.add_parser("metrics", help="summarise a finished experiment directory")
    m.add_argument("--out", type=Path, required=True)
    m.add_argument("--json", action="store_true", help="print the summary as JSON")
    return p


def _cmd_simulate(args) -> int:
    if args.experiment:
        model_name = args.model or _EXPERIMENT_MODELS[args.experiment]
        theta = args.theta or list(ExperimentConfig.defaults(args.experiment).theta)
    else:
        if not (args.model and args.theta):
            raise SystemExit("simulate needs --experiment or both --model and --theta")
        model_name, theta = args.model, args.theta
    model = get_model(model_name)
    y = exact_sample(theta, model, args.rows, args.cols, np.random.default_rng(args.seed))
    if args.out:
        y.save(args.out)
    else:
        sys.stdout.write(y.to_text())
    print(json.dumps({"model": model_name, "theta": list(map(float, theta)),
                      "statistics": sufficient_statistics(y, model).tolist()}), file=sys.stderr)
    return 0


def _cmd_calibrate(args) -> int:
    y = Lattice.load(args.lattice)
    model = get_model(args.model)
    n_cov = args.n_cov_draws or (50_000 if args.profile == "paper" else 10_000)
    res = calibrate(y, model, args.k, n_cov, BFGSConfig(n_grad_draws=args.n_grad_draws),
                    np.random.default_rng(args.seed), seed=args.seed)
    report = res.to_dict()
    keep = set(args.weight_option) | ({"0"} if model.d == 1 else set())
    report["weights"] = {k: v for k, v in report["weights"].items() if k in {str(o) for o in keep}}
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_experiment(args) -> int:
    overrides = dict(replicates=args.replicates, seed=args.seed, out=str(args.out))
    if args.weight_option:
        overrides["weight_options"] = args.weight_option
    if args.config:
        base = json.loads(args.config.read_text())
        base.update({k: v for k, v in overrides.items() if v is not None})
        base.setdefault("experiment", args.experiment)
        if base["experiment"] != args.experiment:
            raise SystemExit("--experiment disagrees with the config file")
        defaults = ExperimentConfig.defaults(args.experiment, base.get("profile", args.profile)).to_dict()
        defaults.update(base)
        cfg = ExperimentConfig.from_dict(defaults)
    else:
        cfg = ExperimentConfig.defaults(args.experiment, args.profile, **overrides)

    def progress(i, rec):
        status = rec.get("status")
        logging.info("replicate %d: %s%s", i, status, "" if status == "ok" else f" ({rec.get('error')})")

    summary = run_experiment(cfg, jobs=args.jobs, save_grids=args.save_grids, progress=progress)
    print(format_summary(summary))
    return 0 if not summary["failed"] else 1


def format_summary(summary: dict) -> str:
    lines = [f"experiment {summary['experiment']} ({summary['model']}, theta={summary['theta']}): "
             f"{summary['n_ok']}/{summary['n_replicates']} replicates ok"]
    lines.append(f"{'method':<12}{'RMSE':>10}{'AKLD':>10}{'median ratio':>14}")
    for name, m in summary["methods"].items():
        med = m["ratio_quantiles"]["median"] if m["ratio_quantiles"] else float("nan")
        lines.append(f"{name:<12}{m['rmse']:>10.4f}{m['akld']:>10.4f}{med:>14.4f}")
    return "\n".join(lines)


def _cmd_metrics(args) -> int:
    cfg = ExperimentConfig.load(args.out / "config.json")
    records = []
    for path in sorted((args.out / "records").glob("replicate_*.json")):
        records.append(json.loads(path.read_text())["record"])
    summary = summarize(records, cfg)
    print(json.dumps(summary, indent=2, sort_keys=True) if args.json else format_summary(summary))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    handler = {"simulate": _cmd_simulate, "calibrate": _cmd_calibrate,
               "experiment": _cmd_experiment, "metrics": _cmd_metrics}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
