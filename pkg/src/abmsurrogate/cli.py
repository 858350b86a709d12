"""Command-line front end.

    abmsurrogate [--config FILE] [--seed N] [--jobs N] [--output-dir DIR] COMMAND ...

Exit codes: 0 success, 2 configuration or input error, 3 no positive seed
calibration found.
"""
from __future__ import annotations

import argparse
import csv
import json
import shutil
import sys
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .active import NoPositiveSeedError, predict_positives, run_calibration
from .brock_hommes import bh_simulate, write_series_csv
from .config import ConfigError, RunConfig, load_config
from .criteria import avg_growth_rate
from .harness import run_robustness, run_sweep
from .islands import islands_simulate, write_gdp_csv
from .labelers import BHLabeler, IslandsLabeler, PositiveSet, default_jobs
from .sampling import draw_pool, read_pool_csv
from .surrogate import LogitModel, importance, load_model

EXIT_OK, EXIT_CONFIG, EXIT_NO_SEED = 0, 2, 3


class InputError(ValueError):
    pass


@contextmanager
def staged_directory(target: Path, keep_existing: bool = False):
    """Build output in a sibling temp dir and move it into place on success.

    With ``keep_existing`` the current contents (e.g. label caches) are
    carried into the staging area and restored if the command fails.
    """
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=f".{target.name}.", dir=target.parent))
    backup = None
    if target.exists():
        if keep_existing:
            shutil.rmtree(stage)
            shutil.copytree(target, stage)
        backup = target
    try:
        yield stage
    except BaseException:
        shutil.rmtree(stage, ignore_errors=True)
        raise
    if backup is not None:
        shutil.rmtree(backup)
    stage.rename(target)


def _load(args) -> RunConfig:
    if args.config is None:
        raise ConfigError("--config", "this command needs a configuration file")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.loop["sampler_seed"] = args.seed
        cfg.loop["surrogate_seed"] = args.seed
        if cfg.experiment is not None:
            cfg.experiment["seed"] = args.seed
    return cfg


def _parse_overrides(items, names) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--param {item}", "expected name=value")
        k, v = item.split("=", 1)
        if k not in names:
            raise ConfigError(f"--param {k}", f"unknown parameter (known: {', '.join(names)})")
        try:
            out[k] = float(v)
        except ValueError:
            raise ConfigError(f"--param {k}", f"not a number: {v!r}") from None
    return out


def cmd_simulate(args) -> int:
    cfg = _load(args)
    lab = cfg.labeler()
    space = lab.space
    values = {d.name: 0.5 * (d.lower + d.upper) for d in space.dims}
    values.update(_parse_overrides(args.param, space.names))
    vector = np.array([values[n] for n in space.names])
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    series_path = Path(args.out) if args.out else out_dir / "series.csv"
    try:
        if isinstance(lab, BHLabeler):
            params = lab.params(vector)
            write_series_csv(series_path, bh_simulate(params, seed=lab.abm_seed))
            report = {}
        elif isinstance(lab, IslandsLabeler):
            params = lab.params(vector)
            series = islands_simulate(params, seed=lab.abm_seed)
            write_gdp_csv(series_path, series)
            report = {"agr": avg_growth_rate(series.gdp)}
        else:
            raise ConfigError("model.id", "simulate needs an agent-based model (bh or islands)")
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("--param", str(exc)) from None
    value = lab.safe_label(vector)
    report.update({
        "parameters": {k: float(v) for k, v in values.items()},
        "label_kind": lab.kind,
        "label_value": value,
        "positive": bool(lab.positive.contains([value])[0]),
        "series": str(series_path),
    })
    text = json.dumps(report, indent=1)
    (out_dir / "label.json").write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _load(args)
    if "budget" not in cfg.loop:
        raise ConfigError("loop.budget", "required")
    lab = cfg.labeler()
    loop = cfg.loop_config()
    log = (lambda m: print(m, file=sys.stderr)) if args.verbose else None
    target = Path(args.output_dir) / "run"
    if target.exists() and any(target.iterdir()) and not (target / "run.json").exists():
        raise InputError(f"{target} exists and does not hold a previous run; refusing to replace it")
    try:
        with staged_directory(target) as stage:
            run = run_calibration(lab, loop, jobs=args.jobs, log=log)
            run.write(stage)
    except NoPositiveSeedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_SEED
    print(f"{run.evaluations} evaluations ({run.seed_evaluations} seed, {len(run.rounds)} rounds) -> {target}")
    return EXIT_OK


def _positive_set(model, args, cfg) -> PositiveSet:
    if isinstance(model, LogitModel) or model.loss == "logistic":
        return PositiveSet("binary")
    if args.threshold is not None:
        return PositiveSet("real", args.threshold, args.direction or "above")
    if cfg is not None:
        pos = cfg.labeler().positive
        if args.direction:
            pos = PositiveSet("real", pos.threshold, args.direction)
        return pos
    raise ConfigError("--threshold", "a regression surrogate needs --threshold or --config")


def _read_model(path):
    try:
        return load_model(path)
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"cannot read model {path}: {exc}") from None


def cmd_explore(args) -> int:
    model = _read_model(args.model)
    cfg = _load(args) if args.config else None
    pos = _positive_set(model, args, cfg)
    if args.pool:
        try:
            with open(args.pool, newline="") as fh:
                header = next(csv.reader(fh), [])
            pool = read_pool_csv(args.pool)
        except (OSError, ValueError) as exc:
            raise InputError(f"cannot read pool {args.pool}: {exc}") from None
        names = header[1:] if header[:1] == ["index"] else header
    elif args.draw:
        if cfg is None:
            raise ConfigError("--config", "drawing a pool needs the model's parameter space")
        space = cfg.space()
        pool = draw_pool(space, args.draw, args.scheme, args.pool_seed)
        names = space.names
    else:
        raise ConfigError("--pool", "give a pool CSV or --draw N")
    n_features = model.weights.shape[0] if isinstance(model, LogitModel) else model.n_features
    if len(pool) and pool.shape[1] != n_features:
        raise InputError(f"pool has {pool.shape[1]} columns, model expects {n_features}")
    idx, scores = predict_positives(model, pool, pos) if len(pool) else (np.zeros(0, int), np.zeros(0))
    out = Path(args.out) if args.out else Path(args.output_dir) / "predicted_positives.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", *names, "score"])
        for i, s in zip(idx, scores):
            w.writerow([int(i), *(repr(float(v)) for v in pool[i]), repr(float(s))])
    print(f"{len(idx)} of {len(pool)} pool points predicted positive -> {out}")
    return EXIT_OK


def cmd_importance(args) -> int:
    model = _read_model(args.model)
    if isinstance(model, LogitModel):
        raise InputError("split-count importance needs a tree ensemble")
    try:
        imp = importance(model)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    names = list(model.feature_names or [f"x{i}" for i in range(model.n_features)])
    order = sorted(range(len(imp)), key=lambda i: (-imp[i], i))
    out = Path(args.out) if args.out else Path(args.output_dir) / "importance.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "importance"])
        for i in order:
            w.writerow([names[i], repr(float(imp[i]))])
    for i in order:
        print(f"{names[i]:>12s}  {imp[i]:.4f}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = _load(args)
    plan = cfg.plan()
    target = Path(args.output_dir) / "results" / plan.name
    log = (lambda m: print(m, file=sys.stderr)) if args.verbose else None
    with staged_directory(target, keep_existing=True) as stage:
        if cfg.design == "robustness":
            result = run_robustness(plan, stage, jobs=args.jobs, log=log)
        else:
            result = run_sweep(plan, stage, jobs=args.jobs, log=log)
    print(json.dumps(result, indent=1, default=str))
    return EXIT_OK


def _add_common(p, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), help="run configuration (TOML)")
    p.add_argument("--seed", type=int, default=d(None), help="override every loop/experiment seed")
    p.add_argument("--jobs", type=int, default=d(default_jobs()), help="worker processes for model evaluation")
    p.add_argument("--output-dir", default=d("."), help="where outputs are written")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="abmsurrogate", description="Surrogate calibration of agent-based models.")
    _add_common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one true-model simulation and label it")
    _add_common(p, suppress=True)
    p.add_argument("--param", action="append", metavar="NAME=VALUE", help="parameter override (repeatable)")
    p.add_argument("--out", help="series CSV path (default <output-dir>/series.csv)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="run the active-learning loop; artifacts go to <output-dir>/run")
    _add_common(p, suppress=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("explore", help="list pool points a saved surrogate predicts positive")
    _add_common(p, suppress=True)
    p.add_argument("--model", required=True, help="model.json from a calibration run")
    p.add_argument("--pool", help="pool CSV (index,<dims...>)")
    p.add_argument("--draw", type=int, help="draw a pool of this size from the config's space instead")
    p.add_argument("--scheme", default="sobol", choices=("sobol", "uniform"))
    p.add_argument("--pool-seed", type=int, default=0)
    p.add_argument("--threshold", type=float, help="positive-set threshold for regression surrogates")
    p.add_argument("--direction", choices=("above", "below"))
    p.add_argument("--out", help="output CSV (default <output-dir>/predicted_positives.csv)")
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("importance", help="split-count feature importance of a saved ensemble")
    _add_common(p, suppress=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", help="output CSV (default <output-dir>/importance.csv)")
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("experiment", help="run the config's experiment plan into <output-dir>/results/<name>")
    _add_common(p, suppress=True)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
