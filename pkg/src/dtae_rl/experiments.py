"""Multi-seed training runs, sweeps, ablations and their CSV outputs.

Layout of one run directory::

    config.txt          flat key = value snapshot (reloadable)
    seed_<n>.csv        one row per iteration
    seed_<n>.ckpt       final policy and value weights
    aggregate.csv       per-step statistics over seeds
    manifest.json
"""

from __future__ import annotations

import concurrent.futures as cf
import csv
import dataclasses
import json
import math
import os
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import canonical_key, config_keys, load_config, parse_value, save_config
from .exceptions import ConfigError
from .trainer import IterationMetrics, TrainConfig, save_checkpoint, train

CSV_SCHEMA = "dtae_rl.metrics/1"
AGGREGATE_SCHEMA = "dtae_rl.aggregate/1"
AGGREGATE_COLUMNS = ["step", "n_seeds", "mean_return", "min_return", "max_return", "std_return"]
ABLATIONS = (
    ("spod", {}),
    ("gae", {"estimator": "gae"}),
    ("eta0", {"eta_0": 0.0}),
    ("noclip", {"clip": False}),
)


@dataclass
class RunManifest:
    label: str
    config: dict
    seeds: list[int]
    seed_csvs: list[str]
    checkpoints: list[str]
    aggregate_csv: str
    out_dir: str

    @property
    def train_config(self) -> TrainConfig:
        return TrainConfig(**self.config)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))


def parse_seeds(text: str) -> list[int]:
    """``"3"`` -> [3], ``"0..9"`` -> [0, ..., 9] (inclusive)."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise ConfigError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    return [int(text)]


def worker_count(n_jobs: int) -> int:
    cap = os.environ.get("DTAE_RL_THREADS")
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = int(cap)
        except ValueError:
            raise ConfigError(f"DTAE_RL_THREADS must be an integer, got {cap!r}") from None
    return max(1, min(limit, n_jobs))


# --- csv -------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_metrics_csv(path, history: list[IterationMetrics]) -> None:
    with open(path, "w", newline="") as f:
        f.write(f"# schema={CSV_SCHEMA}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(IterationMetrics.columns())
        for m in history:
            w.writerow([_fmt(x) for x in m.row()])


def read_csv(path) -> tuple[list[str], list[list[float]]]:
    """Header and numeric rows of a CSV written by this module."""
    with open(path, newline="") as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, [[float(x) for x in row] for row in reader]


def aggregate_rows(histories: list[list[IterationMetrics]]) -> list[list]:
    """Per-step statistics of ``mean_return`` over seeds.

    Row ``i`` uses only the seeds that have an ``i``-th row with a finite
    return; all seeds share batch sizes, so the step column agrees.
    """
    rows = []
    n_rows = max((len(h) for h in histories), default=0)
    for i in range(n_rows):
        present = [h[i] for h in histories if len(h) > i]
        steps = {m.step for m in present}
        if len(steps) != 1:
            raise ConfigError(f"seeds disagree on the step count at row {i}: {sorted(steps)}")
        vals = np.array([m.mean_return for m in present if math.isfinite(m.mean_return)])
        if vals.size:
            stats = [float(np.mean(vals)), float(np.min(vals)), float(np.max(vals)), float(np.std(vals))]
        else:
            stats = [math.nan] * 4
        rows.append([steps.pop(), int(vals.size), *stats])
    return rows


def write_aggregate_csv(path, rows) -> None:
    with open(path, "w", newline="") as f:
        f.write(f"# schema={AGGREGATE_SCHEMA}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(AGGREGATE_COLUMNS)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


# --- runs ------------------------------------------------------------------


def _run_seed(config: TrainConfig, ckpt_path: str):
    state, history = train(config, diagnostic_dir=str(Path(ckpt_path).parent))
    save_checkpoint(ckpt_path, state.policy, state.value, config.env)
    return history


def run_config(config: TrainConfig, seeds, out_dir, label: str = "run", verbose: bool = False) -> RunManifest:
    """Train one configuration for every seed and write the run directory."""
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ConfigError("at least one seed is required")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(out / "config.txt", config)
    configs = [config.replace(seed=s) for s in seeds]
    ckpts = [str(out / f"seed_{s}.ckpt") for s in seeds]
    workers = worker_count(len(seeds))
    if workers == 1:
        histories = [_run_seed(c, p) for c, p in zip(configs, ckpts)]
    else:
        with cf.ProcessPoolExecutor(max_workers=workers) as pool:
            # map keeps seed order regardless of completion order
            histories = list(pool.map(_run_seed, configs, ckpts))
    csvs = []
    for s, h in zip(seeds, histories):
        path = out / f"seed_{s}.csv"
        write_metrics_csv(path, h)
        csvs.append(path.name)
    rows = aggregate_rows(histories)
    write_aggregate_csv(out / "aggregate.csv", rows)
    manifest = RunManifest(
        label=label,
        config=dataclasses.asdict(config),
        seeds=seeds,
        seed_csvs=csvs,
        checkpoints=[Path(p).name for p in ckpts],
        aggregate_csv="aggregate.csv",
        out_dir=str(out),
    )
    (out / "manifest.json").write_text(manifest.to_json())
    if verbose:
        final = rows[-1][2] if rows else math.nan
        print(f"[{label}] seeds={seeds[0]}..{seeds[-1]} final mean return {final:.3f}")
    return manifest


def run_train(config_path=None, overrides=(), seeds=(0,), out_dir="runs/train", verbose=False, preset=None) -> RunManifest:
    config = load_config(config_path, overrides, preset)
    return run_config(config, seeds, out_dir, "train", verbose)


def sweep_values(axis: str, values) -> tuple[str, list]:
    """Validate a sweep axis and parse its values with the field's type."""
    try:
        key = canonical_key(axis)
    except ConfigError:
        raise ConfigError(f"unknown sweep axis {axis!r}; sweepable keys: {', '.join(config_keys())}") from None
    return key, [parse_value(key, str(v)) for v in values]


def run_sweep(config_path, axis: str, values, overrides=(), seeds=(0,), out_dir="runs/sweep", verbose=False, preset=None):
    """One run per value of ``axis``, all with the same seeds."""
    base = load_config(config_path, overrides, preset)
    key, parsed = sweep_values(axis, values)
    if not parsed:
        warnings.warn(f"sweep over {key!r} has no values; nothing to run")
        return []
    configs = [base.replace(**{key: v}) for v in parsed]
    manifests = []
    for v, cfg in zip(parsed, configs):
        label = f"{key}={v}"
        manifests.append(run_config(cfg, seeds, Path(out_dir) / label, label, verbose))
    return manifests


def ablation_configs(base: TrainConfig) -> list[tuple[str, TrainConfig]]:
    return [(label, base.replace(**changes)) for label, changes in ABLATIONS]


def run_ablate(config_path=None, overrides=(), seeds=(0,), out_dir="runs/ablate", verbose=False, preset=None):
    """Full SPOD first, then the GAE-only, eta=0 and unclipped variants."""
    base = load_config(config_path, overrides, preset)
    return [
        run_config(cfg, seeds, Path(out_dir) / label, label, verbose)
        for label, cfg in ablation_configs(base)
    ]
