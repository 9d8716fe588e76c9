"""
Dreammap harness module. Provides single acquisition runs and benchmark sweeps.

A sweep evaluates every (scale, budget, method, repetition) cell of an `ExperimentSpec`.
Per scale it prepares the dataset, trains (or reloads) the world model and fits (or
reloads) the GP kernel on the evaluation pair's empty map, then evaluates the pending
(budget, repetition) cells on a thread pool. Each finished cell is committed to the
results repository from the calling thread only, and the repository is exported as
`results.csv` at the end. Cells already in the repository under the same seed, settings
digest and dataset digest are skipped, so an interrupted sweep resumes where it stopped
while a changed seed or dataset recomputes everything. Cached models and kernels are reused
only when they were fitted on the same dataset.

Errors are reported in dBm, using the evaluation pair's recorded normalization range.
"""


import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass
from datetime import datetime
from pathlib import Path

import bencodepy

from . import rng as rngs
from .config import worker_threads
from .dreamer import AcquisitionConfig, SelectionRule, save_trace
from .errors import ConfigError, DataError
from .gp import KernelParams, fit_kernel
from .grid import GridMap, Unit, mae, rmse
from .heatmap import export_heatmap
from .mapio import save_map
from .methods import METHOD_ORDER, CellContext, MethodRegister, reconstruct_with
from .repo import ResultsRepo
from .resample import SCALE_FACTORS
from .result import ResultRecord
from .store import RdbmsStore
from .synth import SynthConfig, denormalize_map, load_dataset, make_dataset, write_dataset
from .world_model import TrainConfig, load_model, save_model, train

logger = logging.getLogger(__name__)

DEFAULT_BUDGETS = (1, 2, 5, 10, 15, 20)
RESULTS_CSV = "results.csv"
RESULTS_DB = "results.sqlite"
SWEEP_MANIFEST = "sweep.json"
DIGEST_CHARS = 16


@dataclass(frozen=True)
class ExperimentSpec:
    """
    A benchmark sweep: what data, which scales, budgets and methods, how many repetitions.

    Pairs are synthesized from `synth` unless `dataset_dir` names an existing dataset
    (holding a `scale<s>/` sub-directory per scale, or a single dataset for a single scale).
    `architecture` overrides the default world-model size.
    """

    synth: SynthConfig = SynthConfig()
    dataset_dir: str = None
    n_train: int = 3
    n_eval: int = 1
    eval_index: int = 0
    scales: tuple = (1,)
    budgets: tuple = DEFAULT_BUDGETS
    methods: tuple = METHOD_ORDER
    repetitions: int = 5
    out_dir: str = "out"
    seed: int = 0
    train: TrainConfig = TrainConfig()
    acquisition: AcquisitionConfig = AcquisitionConfig()
    architecture: object = None
    kernel_max_points: int = 1024

    def validate(self):
        if not self.methods:
            raise ConfigError("an experiment needs at least one method")
        for name in self.methods:
            MethodRegister.lookup(name)
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError(f"duplicate methods in {self.methods}")
        if not self.scales or any(s not in SCALE_FACTORS for s in self.scales):
            raise ConfigError(f"scales must be drawn from {SCALE_FACTORS}, got {self.scales}")
        if not self.budgets or min(self.budgets) < 1:
            raise ConfigError(f"budgets must be positive, got {self.budgets}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be at least 1")
        if self.n_train < 1 or self.n_eval < 1:
            raise ConfigError("n_train and n_eval must be at least 1")
        if not 0 <= self.eval_index < self.n_eval:
            raise ConfigError(f"eval_index {self.eval_index} outside the {self.n_eval} evaluation pairs")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

        self.synth.validate()
        self.train.validate()
        self.acquisition.validate()

        return self

    def check_budgets(self, n_cells):
        """Raise unless every budget fits a grid of `n_cells` cells."""

        if max(self.budgets) > n_cells:
            raise ConfigError(f"budget {max(self.budgets)} exceeds the {n_cells} cells of the grid")

    @property
    def ordered_methods(self):
        order = {name: i for i, name in enumerate(METHOD_ORDER)}

        return tuple(sorted(self.methods, key=lambda name: order.get(name, len(order))))

    def config_digest(self):
        """Hex digest of the settings besides the data that shape a cell's results."""

        acquisition = asdict(self.acquisition)
        acquisition["selection_rule"] = SelectionRule(self.acquisition.selection_rule).value
        settings = {
            "seed": self.seed,
            "eval_index": self.eval_index,
            "train": self.train.config_hash(),
            "acquisition": acquisition,
            "architecture": None if self.architecture is None else self.architecture.to_dict(),
            "kernel_max_points": self.kernel_max_points,
        }

        return _digest(settings)


@dataclass(frozen=True)
class SweepSummary:
    computed: int
    skipped: int
    csv_path: Path


def open_repo(out_dir):
    """Results repository backed by the sqlite file of an output directory."""

    path = (Path(out_dir) / RESULTS_DB).resolve()

    return ResultsRepo(RdbmsStore(f"sqlite:///{path}"))


def score_estimate(estimate, pair):
    """RMSE and MAE of an estimate against the occupied map, normalized and in dBm."""

    if pair.unit is not Unit.NORMALIZED:
        raise DataError("scoring needs a normalized pair")

    meta = pair.meta
    if estimate.unit is Unit.DBM:
        normalized = GridMap((estimate.values - meta.dbm_min) / (meta.dbm_max - meta.dbm_min), bounded=False)
        estimate_dbm = estimate
    else:
        normalized = estimate
        estimate_dbm = denormalize_map(estimate, meta)

    truth_dbm = denormalize_map(pair.occupied, meta)

    return {
        "rmse": rmse(normalized, pair.occupied),
        "mae": mae(normalized, pair.occupied),
        "rmse_dbm": rmse(estimate_dbm, truth_dbm),
        "mae_dbm": mae(estimate_dbm, truth_dbm),
    }


def dataset_for_scale(spec, scale):
    """(train pairs, eval pairs) at one scale, loaded from `spec.dataset_dir` or synthesized."""

    if spec.dataset_dir is not None:
        root = Path(spec.dataset_dir)
        directory = root / f"scale{scale}"
        if not (directory / "manifest.json").exists():
            directory = root

        train_pairs, eval_pairs, manifest = load_dataset(directory)
        if manifest.get("scale") != scale:
            raise DataError(f"no dataset for scale {scale} in {root}")
    else:
        pairs = make_dataset(spec.synth, spec.n_train, spec.n_eval, scale)
        write_dataset(Path(spec.out_dir) / "datasets" / f"scale{scale}", pairs, spec.synth, scale)
        train_pairs, eval_pairs = pairs[: spec.n_train], pairs[spec.n_train :]

    if not train_pairs or len(eval_pairs) <= spec.eval_index:
        raise DataError(f"dataset for scale {scale} lacks training pairs or evaluation pair {spec.eval_index}")

    return train_pairs, eval_pairs


def _bencodable(value):
    if isinstance(value, dict):
        return {str(k): _bencodable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_bencodable(v) for v in value]
    if value is None or isinstance(value, (bool, float)):
        return repr(value)

    return value


def _digest(value):
    return hashlib.sha256(bencodepy.encode(_bencodable(value))).hexdigest()[:DIGEST_CHARS]


def dataset_digest(train_pairs, eval_pairs):
    """Hex digest of the training and evaluation pairs of one scale."""

    return _digest(
        {"train": [p.pair_digest() for p in train_pairs], "eval": [p.pair_digest() for p in eval_pairs]}
    )


def model_for_scale(spec, scale, train_pairs, eval_pairs, dataset):
    """Reload the scale's model from the output directory, or train and save it."""

    models = Path(spec.out_dir) / "models"
    path = models / f"scale{scale}.dmwm"

    if path.exists():
        model = load_model(path)
        provenance = model.provenance
        if provenance.get("config_hash") == spec.train.config_hash() and provenance.get("dataset") == dataset:
            logger.info("reusing world model %s", path)
            return model
        logger.warning("world model %s was trained with another config or dataset, retraining", path)

    logger.info("training world model for scale %d", scale)
    model, trace = train(train_pairs, spec.train, holdout=eval_pairs, arch=spec.architecture)
    model.provenance = {**model.provenance, "dataset": dataset}

    models.mkdir(parents=True, exist_ok=True)
    save_model(path, model)
    trace.write_csv(models / f"scale{scale}.loss_trace.csv")

    return model


def kernel_path(spec, scale, dataset):
    """Cache file of the kernel fitted for one scale, dataset and fit setting."""

    key = _digest({"dataset": dataset, "max_points": spec.kernel_max_points, "seed": spec.seed})

    return Path(spec.out_dir) / "models" / f"scale{scale}.kernel.{key}.json"


def kernel_for_scale(spec, scale, pair, dataset):
    """Reload the scale's kernel parameters from the output directory, or fit and save them."""

    path = kernel_path(spec, scale, dataset)

    if path.exists():
        logger.info("reusing kernel %s", path)
        return KernelParams.load(path)

    params = fit_kernel(pair.empty, max_points=spec.kernel_max_points, seed=spec.seed)

    path.parent.mkdir(parents=True, exist_ok=True)
    params.save(path)

    return params


def repetition_seed(spec, scale, budget, rep):
    return rngs.derive(spec.seed, rngs.REPETITION, scale, budget, rep)


def cell_key(spec, scale, budget, method, rep, dataset):
    """Result record key of one method on one cell."""

    return {
        "scale": scale,
        "budget": budget,
        "method": method,
        "rep": rep,
        "seed": spec.seed,
        "config": spec.config_digest(),
        "dataset": dataset,
    }


def evaluate_cell(spec, scale, budget, rep, pair, dataset, model=None, kernel=None):
    """Result records of every method of the experiment on one (scale, budget, rep) cell."""

    ctx = CellContext(
        pair,
        budget,
        repetition_seed(spec, scale, budget, rep),
        model=model,
        kernel=kernel,
        acquisition=spec.acquisition,
        threads=1,
    )

    records = []
    for name in spec.ordered_methods:
        start = datetime.now().timestamp()
        result = reconstruct_with(name, ctx)
        seconds = datetime.now().timestamp() - start

        scores = score_estimate(result.estimate, pair)
        records.append(
            ResultRecord(
                {
                    **cell_key(spec, scale, budget, name, rep, dataset),
                    "rmse": scores["rmse_dbm"],
                    "mae": scores["mae_dbm"],
                    "rmse_norm": scores["rmse"],
                    "mae_norm": scores["mae"],
                    "seconds": seconds,
                    "queries": result.queries,
                    "cells": list(result.cells),
                }
            )
        )

    return records


def run_sweep(spec, threads=None, repo=None):
    """
    Evaluate every pending cell of `spec`, commit the results and export the CSV.

    Stored records only count as done when their seed, settings digest and dataset digest
    match this sweep; the CSV and the `sweep.json` manifest cover this sweep's records only.
    """

    spec.validate()
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    repo = repo or open_repo(out)
    threads = worker_threads(threads)
    methods = spec.ordered_methods
    needs_model = bool({"world_model", "gp_same_points"} & set(methods))
    needs_kernel = bool({"gp_same_points", "gp_random_points"} & set(methods))
    config = spec.config_digest()
    datasets = {}

    computed = skipped = 0
    for scale in spec.scales:
        train_pairs, eval_pairs = dataset_for_scale(spec, scale)
        pair = eval_pairs[spec.eval_index]
        spec.check_budgets(pair.empty.size)
        dataset = datasets[scale] = dataset_digest(train_pairs, eval_pairs)

        pending = []
        for budget in spec.budgets:
            for rep in range(spec.repetitions):
                keys = [cell_key(spec, scale, budget, m, rep, dataset) for m in methods]
                if all(repo.has(key) for key in keys):
                    skipped += 1
                else:
                    pending.append((budget, rep))

        if not pending:
            logger.info("scale %d: all %d cells already stored", scale, skipped)
            continue

        model = model_for_scale(spec, scale, train_pairs, eval_pairs, dataset) if needs_model else None
        kernel = kernel_for_scale(spec, scale, pair, dataset) if needs_kernel else None

        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {
                pool.submit(evaluate_cell, spec, scale, budget, rep, pair, dataset, model, kernel): (budget, rep)
                for budget, rep in pending
            }
            for future in as_completed(futures):
                for record in future.result():
                    repo.apply(record)
                computed += 1

                budget, rep = futures[future]
                logger.info("scale %d budget %d rep %d done (%d/%d)", scale, budget, rep, computed, len(pending))

    def current(data):
        return (
            data["seed"] == spec.seed
            and data["config"] == config
            and data["method"] in methods
            and datasets.get(data["scale"]) == data["dataset"]
        )

    csv_path = out / RESULTS_CSV
    rows = repo.write_csv(csv_path, METHOD_ORDER, select=current)
    logger.info("wrote %d result rows to %s", rows, csv_path)

    manifest = {"seed": spec.seed, "config": config, "datasets": {str(s): d for s, d in datasets.items()}}
    (out / SWEEP_MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    return SweepSummary(computed, skipped, csv_path)


def run_methods(pair, acquisition, methods, out_dir, model=None, kernel=None, threads=None):
    """
    Reconstruct one pair with each method and write the results into `out_dir`.

    Writes `<method>.remap` (normalized estimate) and `<method>.pgm` (heatmap with the
    measured cells crossed) per method, `ground_truth.pgm`, the dreamer's `trace.jsonl`
    when a dreamer-driven method ran, and `summary.json`. Returns the summary.
    """

    acquisition.validate(pair.empty.size)
    for name in methods:
        MethodRegister.lookup(name)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    ctx = CellContext(
        pair,
        acquisition.budget,
        acquisition.seed,
        model=model,
        kernel=kernel,
        acquisition=acquisition,
        threads=worker_threads(threads),
        track_rmse=True,
    )
    order = {name: i for i, name in enumerate(METHOD_ORDER)}

    summary = {
        "budget": acquisition.budget,
        "seed": acquisition.seed,
        "selection_rule": SelectionRule(acquisition.selection_rule).value,
        "shape": list(pair.shape),
        "methods": {},
    }
    export_heatmap(pair.occupied, (), out / "ground_truth.pgm")

    for name in sorted(methods, key=lambda name: order.get(name, len(order))):
        result = reconstruct_with(name, ctx)
        save_map(out / f"{name}.remap", result.estimate)
        export_heatmap(result.estimate, result.cells, out / f"{name}.pgm")

        summary["methods"][name] = {**score_estimate(result.estimate, pair), "cells": list(result.cells)}
        logger.info("%s: rmse %.4f dBm", name, summary["methods"][name]["rmse_dbm"])

    trace = ctx.trace
    if trace is not None:
        reconstruction = "world_model.remap" if "world_model" in methods else None
        save_trace(out / "trace.jsonl", trace, reconstruction)
        summary["queries"] = trace.queries
        summary["rmse_after"] = [step.rmse_after for step in trace.steps]

    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    return summary

