"""Command-line entry point: ``rds run | baseline | evaluate``.

Exit codes: 0 success, 2 invalid input (config, data, split file),
3 run aborted (too many failed episodes, diverged policy, no valid split).
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import logging
import math
import sys
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import learners as L
from . import metrics as M
from . import policy as P
from .dataset import DataError, Dataset, TaskKind, load_csv
from .engine import (BASELINE, RunAborted, RunConfig, SplitAssignment,
                     baseline_random, baseline_stratified, evaluate_split,
                     run_rds, stream_seed)

log = logging.getLogger("rds")

EXIT_OK, EXIT_INVALID, EXIT_ABORTED = 0, 2, 3

SPLIT_FILE = "split.csv"
DYNAMICS_FILE = "dynamics.csv"
CHECKPOINT_FILE = "policy.npz"
RESOLVED_FILE = "resolved_config.yaml"
REPORT_FILE = "report.csv"

REQUIRED = object()

# every accepted key with its default; REQUIRED marks keys without one
SCHEMA = {
    "dataset": {"path": REQUIRED, "target": REQUIRED, "id": None, "task": REQUIRED},
    "run": {
        "mechanism": M.DETERMINISTIC,
        "metric": None,
        "ratio": 0.75,
        "episodes": 150,
        "hidden_size": 32,
        "lr": 1e-3,
        "seed": 0,
        "rho": None,
        "knn_k": 1,
        "decode": "constrained",
        "convergence_window": 25,
        "pretrain_passes": 500,
        "baseline_momentum": 0.9,
        "n_jobs": 1,
    },
    "scales": {"alpha": 1.0, "gamma": 0.9, "psi": 0.1},
    "learners": REQUIRED,
    "baseline_subtraction": False,
    "output": {"dir": "rds_output", "timing": False},
}


class ConfigError(ValueError):
    pass


def _resolve(raw, schema, where=""):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where or 'config'} must be a mapping")
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config key '{where}{unknown[0]}'")
    out = {}
    for key, default in schema.items():
        name = f"{where}{key}"
        if isinstance(default, dict):
            out[key] = _resolve(raw.get(key, {}) or {}, default, f"{name}.")
        elif key in raw and raw[key] is not None:
            out[key] = raw[key]
        elif default is REQUIRED:
            raise ConfigError(f"missing required config key {name!r}")
        else:
            out[key] = copy.deepcopy(default)
    return out


def _learner_specs(entries) -> list:
    if not isinstance(entries, list) or not entries:
        raise ConfigError("learners must be a non-empty list")
    specs = []
    for i, entry in enumerate(entries):
        if isinstance(entry, str):
            entry = {"kind": entry}
        if not isinstance(entry, dict) or "kind" not in entry:
            raise ConfigError(f"learners[{i}] needs a 'kind'")
        hyper = {k: v for k, v in entry.items() if k != "kind"}
        try:
            specs.append(L.LearnerSpec(entry["kind"], hyper))
        except ValueError as exc:
            raise ConfigError(f"learners[{i}]: {exc}") from None
    return specs


class Settings:
    """A validated config file: resolved values plus derived objects."""

    def __init__(self, resolved: dict, base_dir: Path):
        self.resolved = resolved
        ds = resolved["dataset"]
        try:
            self.task = TaskKind.parse(str(ds["task"]))
        except ValueError as exc:
            raise ConfigError(f"dataset.task: {exc}") from None
        data_path = Path(ds["path"])
        self.data_path = data_path if data_path.is_absolute() else base_dir / data_path
        out = Path(resolved["output"]["dir"])
        self.output_dir = out if out.is_absolute() else base_dir / out
        self.specs = _learner_specs(resolved["learners"])
        run = resolved["run"]
        if run["metric"] is None:
            run["metric"] = M.default_metric(self.task)
        resolved["learners"] = [{"kind": s.kind, **s.params} for s in self.specs]
        scales = resolved["scales"]
        try:
            self.config = RunConfig(
                learners=self.specs, metric=run["metric"], mechanism=run["mechanism"],
                rho=run["rho"], r=float(run["ratio"]), episodes=int(run["episodes"]),
                alpha=float(scales["alpha"]), gamma=float(scales["gamma"]),
                psi=float(scales["psi"]), knn_k=int(run["knn_k"]),
                hidden_size=int(run["hidden_size"]), lr=float(run["lr"]),
                seed=int(run["seed"]),
                baseline_subtraction=bool(resolved["baseline_subtraction"]),
                baseline_momentum=float(run["baseline_momentum"]),
                convergence_window=int(run["convergence_window"]),
                pretrain_passes=int(run["pretrain_passes"]),
                decode=run["decode"], n_jobs=int(run["n_jobs"]))
            M.check_metric(self.config.metric, self.task)
            for spec in self.specs:
                if not spec.supports(self.task):
                    raise ValueError(f"{spec.kind} learner does not support "
                                     f"{self.task.kind} tasks")
        except (TypeError, M.MetricError) as exc:
            raise ConfigError(str(exc)) from None

    def load_dataset(self) -> Dataset:
        ds = self.resolved["dataset"]
        return load_csv(self.data_path, ds["target"], self.task, id_column=ds["id"])


def load_settings(path) -> Settings:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such config file: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return Settings(_resolve(raw, SCHEMA), path.parent)


# -- file formats -----------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "" if math.isnan(value) else repr(float(value))
    return str(value)


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_split(path, dataset: Dataset, split: SplitAssignment) -> None:
    _write_csv(Path(path), ["id", "assignment"],
               ([i, "train" if a else "test"] for i, a in zip(dataset.ids, split.actions)))


def read_split(path, dataset: Dataset) -> SplitAssignment:
    """Read a split file and align it to ``dataset`` by id."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["id", "assignment"]:
            raise DataError(f"{path}: header must be 'id,assignment'")
        seen = {}
        for n, row in enumerate(reader):
            if not row:
                continue
            if len(row) != 2 or row[1] not in ("train", "test"):
                raise DataError(f"{path}: bad row {n}: {','.join(row)!r}")
            if row[0] in seen:
                raise DataError(f"{path}: duplicate id {row[0]!r}")
            seen[row[0]] = row[1] == "train"
    keys = [str(i) for i in dataset.ids]
    missing = [k for k in keys if k not in seen]
    if missing:
        raise DataError(f"{path}: id {missing[0]!r} missing from split")
    extra = sorted(set(seen) - set(keys))
    if extra:
        raise DataError(f"{path}: id {extra[0]!r} not in dataset")
    return SplitAssignment(np.array([seen[k] for k in keys], dtype=bool))


def dynamics_header(n_learners: int) -> list:
    return (["episode", "reward", "reward_shaped", "ratio", "loss_theta",
             "loss_ratio", "loss_iid"]
            + [f"learner_{k}_metric" for k in range(n_learners)]
            + ["chosen_learner", "seconds"])


def write_dynamics(path, logs, n_learners: int, timing: bool) -> None:
    rows = ([e.episode, e.reward, e.reward_shaped, e.ratio, e.loss_theta,
             e.loss_ratio, e.loss_iid, *e.learner_metrics, e.chosen_learner,
             e.seconds if timing else None] for e in logs)
    _write_csv(Path(path), dynamics_header(n_learners), rows)


# -- commands ---------------------------------------------------------------

def _progress(total):
    def report(entry):
        status = "failed" if entry.failed else f"reward {entry.reward:.4f}"
        log.info("episode %d/%d %s ratio %.3f", entry.episode + 1, total,
                 status, entry.ratio)
    return report


def cmd_run(config_path) -> int:
    settings = load_settings(config_path)
    dataset = settings.load_dataset()
    result = run_rds(dataset, settings.config, progress=_progress(settings.config.episodes))
    out = settings.output_dir
    out.mkdir(parents=True, exist_ok=True)
    write_split(out / SPLIT_FILE, dataset, result.split)
    write_dynamics(out / DYNAMICS_FILE, result.logs, len(settings.specs),
                   settings.resolved["output"]["timing"])
    P.save_checkpoint(result.policy, out / CHECKPOINT_FILE)
    (out / RESOLVED_FILE).write_text(
        yaml.safe_dump(settings.resolved, sort_keys=False), encoding="utf-8")
    n_train, n_test = result.split.counts
    log.info("split %d train / %d test (%s decode) written to %s",
             n_train, n_test, result.decoded_by, out)
    return EXIT_OK


def cmd_baseline(config_path, method: str) -> int:
    settings = load_settings(config_path)
    dataset = settings.load_dataset()
    cfg = settings.config
    seed = stream_seed(cfg.seed, BASELINE)
    if method == "random":
        split = baseline_random(dataset, cfg.r, seed)
    elif method == "stratified":
        split = baseline_stratified(dataset, cfg.r, seed)
    else:
        raise ConfigError(f"unknown baseline {method!r}")
    out = settings.output_dir
    out.mkdir(parents=True, exist_ok=True)
    write_split(out / SPLIT_FILE, dataset, split)
    log.info("%s split %d train / %d test written to %s", method, *split.counts, out)
    return EXIT_OK


def report_rows(dataset: Dataset, settings: Settings, split_paths) -> list:
    specs = settings.config.seeded_learners()
    kinds = [s.kind for s in specs]
    rows = []
    for path in split_paths:
        split = read_split(path, dataset)
        ev = evaluate_split(dataset, split, specs, settings.config.metric,
                            settings.config.n_jobs)
        rows.append(ev.as_row(kinds, name=str(path)))
    return rows


def cmd_evaluate(config_path, split_paths, out=None) -> int:
    settings = load_settings(config_path)
    dataset = settings.load_dataset()
    rows = report_rows(dataset, settings, split_paths)
    header = list(rows[0])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(row[h]) for h in header])
    settings.output_dir.mkdir(parents=True, exist_ok=True)
    (settings.output_dir / REPORT_FILE).write_text(buf.getvalue(), encoding="utf-8")
    (out or sys.stdout).write(buf.getvalue())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-q", "--quiet", action="store_true", default=argparse.SUPPRESS,
                        help="no progress output")
    parser = argparse.ArgumentParser(prog="rds", description=__doc__.splitlines()[0],
                                     parents=[common])
    parser.set_defaults(quiet=False)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", parents=[common],
                         help="train a sampling policy and write the split")
    run.add_argument("config")
    base = sub.add_parser("baseline", parents=[common],
                          help="write a random or stratified split")
    base.add_argument("method", choices=["random", "stratified"])
    base.add_argument("config")
    ev = sub.add_parser("evaluate", parents=[common], help="score one or more split files")
    ev.add_argument("config")
    ev.add_argument("splits", nargs="+")
    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr, force=True)
    try:
        if args.command == "run":
            return cmd_run(args.config)
        if args.command == "baseline":
            return cmd_baseline(args.config, args.method)
        return cmd_evaluate(args.config, args.splits)
    except (RunAborted, P.DivergenceError) as exc:
        print(f"rds: run aborted: {exc}", file=sys.stderr)
        return EXIT_ABORTED
    except (ValueError, L.LearnerError, OSError) as exc:
        print(f"rds: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
