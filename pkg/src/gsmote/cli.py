"""Experiment runner CLI: single runs, parameter sweeps, dataset conversion.

Config files are flat JSON. Besides the training fields (see
ExperimentConfig), they may carry:
  dataset_dir     path to a dataset directory (edges.tsv/features.csv/labels.csv)
  synthetic_*     n, m, d, intra_p, inter_p, seed - generate a fixture instead
  seeds           list of run seeds (also settable via --seeds)

`run` writes manifest.json and metrics.csv into the output directory;
`sweep` adds one run directory per value plus sweep_summary.csv. The
GSMOTE_THREADS environment variable caps concurrent per-seed workers.

Exit codes: 0 all seeds completed, 2 invalid config, 3 dataset failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .graph import (AttributedGraph, DatasetError, generate_synthetic_graph,
                    load_graph, make_imbalanced_split, prepare_cora)
from .trainer import ConfigError, ExperimentConfig, train

CSV_HEADER = "variant,seed,acc,macro_auc,macro_f"
SYNTHETIC_KEYS = ("synthetic_n", "synthetic_m", "synthetic_d",
                  "synthetic_intra_p", "synthetic_inter_p", "synthetic_seed")


@dataclasses.dataclass
class RunSpec:
    config: ExperimentConfig
    seeds: list[int]
    dataset_dir: str | None
    synthetic: dict | None

    def dataset_label(self) -> str:
        if self.dataset_dir:
            return str(self.dataset_dir)
        return "synthetic:" + ",".join(f"{k}={v}" for k, v in
                                       sorted(self.synthetic.items()))


def parse_config_file(path, seeds_override=None) -> RunSpec:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")

    seeds = raw.pop("seeds", [0])
    dataset_dir = raw.pop("dataset_dir", None)
    synthetic = {k: raw.pop(k) for k in SYNTHETIC_KEYS if k in raw}
    if dataset_dir is None and not synthetic:
        raise ConfigError("config needs dataset_dir or synthetic_* keys")
    if dataset_dir is not None and synthetic:
        raise ConfigError("config sets both dataset_dir and synthetic_* keys")
    if synthetic and set(synthetic) != set(SYNTHETIC_KEYS):
        missing = sorted(set(SYNTHETIC_KEYS) - set(synthetic))
        raise ConfigError(f"incomplete synthetic dataset spec, missing {missing}")

    config = ExperimentConfig.from_dict(raw)
    if seeds_override is not None:
        seeds = seeds_override
    if (not isinstance(seeds, list) or not seeds
            or not all(isinstance(s, int) for s in seeds)):
        raise ConfigError("seeds must be a non-empty list of integers")
    return RunSpec(config=config, seeds=list(seeds),
                   dataset_dir=dataset_dir, synthetic=synthetic or None)


def load_dataset(spec: RunSpec) -> AttributedGraph:
    if spec.dataset_dir:
        return load_graph(spec.dataset_dir,
                          normalize_features=spec.config.normalize_features)
    s = spec.synthetic
    return generate_synthetic_graph(
        seed=int(s["synthetic_seed"]), n=int(s["synthetic_n"]),
        m=int(s["synthetic_m"]), d=int(s["synthetic_d"]),
        intra_p=float(s["synthetic_intra_p"]),
        inter_p=float(s["synthetic_inter_p"]))


def _variant_label(config: ExperimentConfig) -> str:
    return config.variant if config.mixup == "off" else \
        f"{config.variant}+{config.mixup}"


def _run_one_seed(config: ExperimentConfig, graph: AttributedGraph,
                  seed: int) -> dict:
    cfg = dataclasses.replace(config, seed=seed)
    masks = make_imbalanced_split(
        graph, minority_count=cfg.minority_count,
        imbalance_ratio=cfg.imbalance_ratio,
        majority_train_size=cfg.majority_train_size,
        seed=seed, val_fraction=cfg.val_fraction)
    started = time.perf_counter()
    result = train(cfg, graph, masks)
    seconds = time.perf_counter() - started
    return {"seed": seed,
            "accuracy": result.test.accuracy,
            "macro_auc": result.test.macro_auc,
            "macro_f": result.test.macro_f,
            "best_epoch": result.best_epoch,
            "epochs_run": len(result.history),
            "seconds": seconds}


def _worker_count(n_jobs: int) -> int:
    cap = os.environ.get("GSMOTE_THREADS", "1")
    try:
        cap = max(1, int(cap))
    except ValueError:
        cap = 1
    return min(cap, n_jobs)


def _aggregate(rows: list[dict]) -> dict:
    agg = {}
    for key in ("accuracy", "macro_auc", "macro_f"):
        vals = np.array([r[key] for r in rows])
        agg[key] = {"mean": float(vals.mean()), "std": float(vals.std())}
    return agg


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def execute_run(spec: RunSpec, graph: AttributedGraph, out_dir: Path) -> dict:
    """Train/evaluate every seed and write manifest.json plus metrics.csv."""
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    workers = _worker_count(len(spec.seeds))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(
                lambda s: _run_one_seed(spec.config, graph, s), spec.seeds))
    else:
        rows = [_run_one_seed(spec.config, graph, s) for s in spec.seeds]

    label = _variant_label(spec.config)
    csv_lines = [CSV_HEADER]
    for r in rows:
        csv_lines.append(f"{label},{r['seed']},{r['accuracy']!r},"
                         f"{r['macro_auc']!r},{r['macro_f']!r}")
    _atomic_write(out_dir / "metrics.csv", "\n".join(csv_lines) + "\n")

    manifest = {
        "config": spec.config.to_dict(),
        "dataset": spec.dataset_label(),
        "seeds": spec.seeds,
        "results": rows,
        "aggregate": _aggregate(rows),
        "wall_seconds": time.perf_counter() - started,
    }
    _atomic_write(out_dir / "manifest.json",
                  json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def execute_sweep(spec: RunSpec, graph: AttributedGraph, param: str,
                  values: list, out_dir: Path) -> list[dict]:
    """One full run per value; emits sweep_summary.csv for plotting."""
    field_names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    if param not in field_names:
        raise ConfigError(f"unknown sweep parameter {param!r}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    out_dir.mkdir(parents=True, exist_ok=True)
    manifests = []
    summary = [f"{param},acc_mean,acc_std,auc_mean,auc_std,f_mean,f_std"]
    for value in values:
        sub = dataclasses.replace(spec.config, **{param: value})
        try:
            sub.validate()
        except TypeError as e:
            raise ConfigError(f"bad value {value!r} for {param}: {e}") from e
        sub_spec = dataclasses.replace(spec, config=sub)
        manifest = execute_run(sub_spec, graph, out_dir / f"{param}={value}")
        manifests.append(manifest)
        a = manifest["aggregate"]
        summary.append(
            f"{value},{a['accuracy']['mean']!r},{a['accuracy']['std']!r},"
            f"{a['macro_auc']['mean']!r},{a['macro_auc']['std']!r},"
            f"{a['macro_f']['mean']!r},{a['macro_f']['std']!r}")
    _atomic_write(out_dir / "sweep_summary.csv", "\n".join(summary) + "\n")
    return manifests


def _parse_values(text: str) -> list:
    values = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            values.append(json.loads(item))
        except json.JSONDecodeError:
            values.append(item)
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gsmote",
                                     description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="train and evaluate one configuration")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seeds", help="comma-separated seed list override")
    p_run.add_argument("--out", help="output directory")

    p_sweep = sub.add_parser("sweep", help="run a config over parameter values")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--param", required=True)
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated values, JSON-parsed per item")
    p_sweep.add_argument("--out", help="output directory")

    p_cora = sub.add_parser("prepare-cora",
                            help="convert the public Cora distribution")
    p_cora.add_argument("--src", required=True,
                        help="directory holding cora.content and cora.cites")
    p_cora.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "prepare-cora":
            stats = prepare_cora(args.src, args.out)
            print(json.dumps(stats, indent=2))
            return 0

        seeds = None
        if getattr(args, "seeds", None):
            seeds = [int(s) for s in args.seeds.split(",")]
        spec = parse_config_file(args.config, seeds_override=seeds)
        out = Path(args.out) if args.out else \
            Path("runs") / Path(args.config).stem
        try:
            graph = load_dataset(spec)
        except DatasetError as e:
            print(f"dataset error: {e}", file=sys.stderr)
            return 3

        if args.command == "run":
            manifest = execute_run(spec, graph, out)
            agg = manifest["aggregate"]
            print(f"{_variant_label(spec.config)}: "
                  f"acc={agg['accuracy']['mean']:.4f}"
                  f"±{agg['accuracy']['std']:.4f} "
                  f"auc={agg['macro_auc']['mean']:.4f}"
                  f"±{agg['macro_auc']['std']:.4f} "
                  f"f={agg['macro_f']['mean']:.4f}"
                  f"±{agg['macro_f']['std']:.4f}")
            print(f"wrote {out / 'manifest.json'}")
        else:
            execute_sweep(spec, graph, args.param, _parse_values(args.values), out)
            print(f"wrote {out / 'sweep_summary.csv'}")
        return 0
    except (ConfigError, ValueError) as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return 2
    except DatasetError as e:
        print(f"dataset error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
