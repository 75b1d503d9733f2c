"""Command-line front end.

Subcommands: ``cohort-stats`` (baseline group statistics), ``nested-cv``
(the full-feature experiment), ``ablation`` (with/without the systolic
time intervals), and ``report`` (re-render tables from a matrix CSV).
Every option can come from a flat ``key = value`` config file; explicit
flags win, and ``AMIRISK_SEED`` overrides the seed only.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

from . import reports
from .datamodel import CohortError, canonical_schema, cohort_summary, load_cohort, load_mapping
from .tuning import (
    ALGORITHMS,
    EXPERIMENT_MASKS,
    CvResultMatrix,
    NestedCvError,
    default_space,
    run_nested_cv,
)

DEFAULT_SEED = 1


def packaged_data_path(name: str) -> Path:
    return Path(resources.files("amirisk").joinpath("data", name))


@dataclass
class RunConfig:
    data: str = ""
    mapping: str = ""
    seed: int = DEFAULT_SEED
    repeats: int = 10
    jobs: int = 1
    models: tuple[str, ...] = ALGORITHMS
    search: str = ""            # "" = per-algorithm defaults
    budget: int = 0             # 0 = per-algorithm defaults
    fixed_params: bool = False
    threshold: float = 0.5
    exclude_features: tuple[str, ...] = ()
    out_dir: str = "out"
    unstratified: bool = False
    resume: bool = False

    def __post_init__(self):
        if not self.data:
            self.data = str(packaged_data_path("ami_cohort.csv"))
        if not self.mapping:
            self.mapping = str(packaged_data_path("ami_mapping.cfg"))
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned value")
        unknown = set(self.models) - set(ALGORITHMS)
        if unknown:
            raise ValueError(f"unknown models: {sorted(unknown)}")
        schema_names = set(canonical_schema().names)
        bad = set(self.exclude_features) - schema_names
        if bad:
            raise ValueError(f"cannot exclude unknown features: {sorted(bad)}")


_CONFIG_KEYS = {f.name for f in fields(RunConfig)}


def _parse_config_file(path: str) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONFIG_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = value
    return out


def _coerce(key: str, value):
    if isinstance(value, str):
        if key in ("seed", "repeats", "jobs", "budget"):
            return int(value)
        if key == "threshold":
            return float(value)
        if key in ("fixed_params", "unstratified", "resume"):
            return value.lower() in ("1", "true", "yes", "on")
        if key in ("models", "exclude_features"):
            return tuple(v.strip() for v in value.split(",") if v.strip())
    return value


def build_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        for key, value in _parse_config_file(args.config).items():
            values[key] = _coerce(key, value)
    env_seed = os.environ.get("AMIRISK_SEED")
    if env_seed is not None:
        values["seed"] = int(env_seed)
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = _coerce(key, flag)
    return RunConfig(**values)


def _load_inputs(config: RunConfig):
    mapping = load_mapping(config.mapping)
    return load_cohort(config.data, mapping)


def _search_overrides(config: RunConfig):
    if not config.search and not config.budget:
        return None
    mode = {"random": "randomized", "randomized": "randomized",
            "exhaustive": "exhaustive"}.get(config.search) if config.search else None
    spaces = {}
    for algorithm in config.models:
        budget = config.budget or None
        spaces[algorithm] = default_space(algorithm, mode=mode, budget=budget)
    return spaces


def _write_run_outputs(config: RunConfig, result, out_dir: Path,
                       experiments: tuple[str, ...]) -> None:
    matrix = result.matrix
    matrix.to_csv(out_dir / "matrix.csv")
    suffix = {"I": "", "II": "_exp2"}
    for experiment in experiments:
        s = suffix[experiment]
        reports.write_text_atomic(out_dir / f"summary{s}.md",
                                  reports.summary_markdown(matrix, experiment))
        reports.write_text_atomic(out_dir / f"summary{s}.csv",
                                  reports.summary_csv(matrix, experiment))
        reports.write_text_atomic(
            out_dir / f"train_summary{s}.md",
            reports.summary_markdown(matrix, experiment, split="train"))
        reports.write_text_atomic(
            out_dir / f"train_summary{s}.csv",
            reports.summary_csv(matrix, experiment, split="train"))
    for model, points in result.mean_roc.items():
        reports.write_text_atomic(out_dir / f"roc_{model}.csv",
                                  reports.roc_points_csv(points))
    for model, report in result.importance.items():
        reports.write_text_atomic(out_dir / f"importance_{model}.csv",
                                  reports.importance_csv(report))
    if len(experiments) > 1:
        reports.write_text_atomic(out_dir / "ablation.md",
                                  reports.ablation_markdown(matrix))
        reports.write_text_atomic(out_dir / "ablation.csv",
                                  reports.ablation_csv(matrix))

    schema = canonical_schema()
    meta = {
        "seed": config.seed,
        "repeats": config.repeats,
        "models": list(config.models),
        "fixed_params": config.fixed_params,
        "threshold": config.threshold,
        "experiments": {
            e: {
                "excluded": sorted(set(EXPERIMENT_MASKS[e])
                                   | set(config.exclude_features)),
                "n_features": len(schema.apply_mask(
                    tuple(set(EXPERIMENT_MASKS[e]) | set(config.exclude_features))
                ).names),
            }
            for e in experiments
        },
    }
    reports.write_text_atomic(out_dir / "meta.json", json.dumps(meta, indent=1) + "\n")


def _run_cv_command(config: RunConfig, experiments: tuple[str, ...]) -> int:
    cohort = _load_inputs(config)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    resume_matrix = None
    matrix_path = out_dir / "matrix.csv"
    if config.resume and matrix_path.exists():
        resume_matrix = CvResultMatrix.from_csv(matrix_path)
    try:
        result = run_nested_cv(
            cohort,
            algorithms=config.models,
            experiments=experiments,
            master_seed=config.seed,
            n_repeats=config.repeats,
            fixed_params=config.fixed_params,
            spaces=_search_overrides(config),
            threshold=config.threshold,
            stratified=not config.unstratified,
            jobs=config.jobs,
            resume=resume_matrix,
            extra_mask=config.exclude_features,
        )
    except NestedCvError as exc:
        exc.partial_matrix.to_csv(matrix_path)
        print(f"error: {exc} (partial matrix kept at {matrix_path})", file=sys.stderr)
        return 1
    _write_run_outputs(config, result, out_dir, experiments)
    return 0


def cmd_cohort_stats(config: RunConfig) -> int:
    cohort = _load_inputs(config)
    summary = cohort_summary(cohort)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports.write_text_atomic(out_dir / "cohort_summary.md",
                              reports.cohort_summary_markdown(summary))
    reports.write_text_atomic(out_dir / "cohort_summary.csv",
                              reports.cohort_summary_csv(summary))
    return 0


def cmd_nested_cv(config: RunConfig) -> int:
    return _run_cv_command(config, ("I",))


def cmd_ablation(config: RunConfig) -> int:
    return _run_cv_command(config, ("I", "II"))


def cmd_report(matrix_path: str, out_dir: str) -> int:
    matrix = CvResultMatrix.from_csv(matrix_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    experiments = matrix.experiments()
    suffix = {"I": "", "II": "_exp2"}
    for experiment in experiments:
        s = suffix.get(experiment, f"_{experiment}")
        reports.write_text_atomic(out / f"summary{s}.md",
                                  reports.summary_markdown(matrix, experiment))
        reports.write_text_atomic(out / f"summary{s}.csv",
                                  reports.summary_csv(matrix, experiment))
        reports.write_text_atomic(out / f"train_summary{s}.md",
                                  reports.summary_markdown(matrix, experiment,
                                                           split="train"))
        reports.write_text_atomic(out / f"train_summary{s}.csv",
                                  reports.summary_csv(matrix, experiment,
                                                      split="train"))
    if set(experiments) >= {"I", "II"}:
        reports.write_text_atomic(out / "ablation.md", reports.ablation_markdown(matrix))
        reports.write_text_atomic(out / "ablation.csv", reports.ablation_csv(matrix))
    return 0


def _add_common_flags(parser: argparse.ArgumentParser, cv: bool) -> None:
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--data", help="cohort CSV path")
    parser.add_argument("--mapping", help="schema mapping file")
    parser.add_argument("--out-dir", dest="out_dir", help="output directory")
    if cv:
        parser.add_argument("--seed", type=int, help="master seed (64-bit unsigned)")
        parser.add_argument("--repeats", type=int, help="number of CV repetitions")
        parser.add_argument("--jobs", type=int, help="worker processes")
        parser.add_argument("--models", help="comma list from rf,adaboost,gradboost,lr")
        parser.add_argument("--search", choices=["exhaustive", "random"],
                            help="override the per-algorithm search mode")
        parser.add_argument("--budget", type=int, help="randomized search budget")
        parser.add_argument("--fixed-params", dest="fixed_params",
                            action="store_const", const=True,
                            help="skip inner search; use the tuned defaults")
        parser.add_argument("--threshold", type=float,
                            help="classification threshold (default 0.5)")
        parser.add_argument("--exclude-features", dest="exclude_features",
                            help="comma list of features to drop everywhere")
        parser.add_argument("--unstratified", action="store_const", const=True,
                            help="plain random folds instead of stratified")
        parser.add_argument("--resume", action="store_const", const=True,
                            help="reuse cells from an existing matrix.csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amirisk",
        description="Tree-ensemble mortality prediction experiments "
                    "on the bundled AMI cohort.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cohort-stats", help="baseline group statistics table")
    _add_common_flags(p, cv=False)

    p = sub.add_parser("nested-cv", help="nested cross-validation, all features")
    _add_common_flags(p, cv=True)

    p = sub.add_parser("ablation", help="experiments with and without bPEP/bET")
    _add_common_flags(p, cv=True)

    p = sub.add_parser("report", help="re-render tables from a matrix CSV")
    p.add_argument("--matrix", required=True, help="matrix CSV path")
    p.add_argument("--out-dir", dest="out_dir", default="out")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(args.matrix, args.out_dir)
        config = build_config(args)
        if args.command == "cohort-stats":
            return cmd_cohort_stats(config)
        if args.command == "nested-cv":
            return cmd_nested_cv(config)
        if args.command == "ablation":
            return cmd_ablation(config)
        raise ValueError(f"unknown command {args.command!r}")
    except (CohortError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
