#!/usr/bin/env python3
"""
Training Workflow

Seeded end-to-end runs: split the cube, build the model, train for the
configured number of epochs, evaluate a fixed held-out subset after every
epoch and write the checkpoint, the per-epoch CSV log, the split, the
resolved configuration and a classification map.

Random streams derived from the run seed:
    [seed, 0]  train/test split
    [seed, 1]  parameter initialization
    [seed, 2]  noise space initialization
    [seed, 3]  per-epoch shuffling
    [seed, 4]  held-out evaluation subset
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from config import RunConfig, save_run_config
from models import (
    ModelDims,
    ModelError,
    ModelState,
    StepReport,
    TrainBatch,
    init_model,
    measure_losses,
    predict,
    save_checkpoint,
    train_step,
)
from scenes import HSICube, PatchSet, Split, export_split_csv, extract_patches, split_train_test
from .mapping import predict_map, render_map
from .metrics import MetricsError, MetricsReport, compute_metrics, confusion_matrix

LOG_FIELDS = ("epoch", "ce", "center", "recon", "sparsity", "diversity", "oa")
LOG_FILE = "train_log.csv"
SPLIT_FILE = "split.csv"
CONFIG_FILE = "run_config.toml"
MAP_FILE = "map.ppm"


@dataclass
class EpochRecord:
    """One row of the training log."""
    epoch: int
    ce: float
    center: float
    recon: float
    sparsity: float
    diversity: float
    oa: float

    def as_row(self) -> List[str]:
        return [str(self.epoch)] + [repr(float(getattr(self, name))) for name in LOG_FIELDS[1:]]


@dataclass
class TrainingResult:
    """Final state and artifacts of a training run."""
    state: ModelState
    split: Split
    log: List[EpochRecord] = field(default_factory=list)
    checkpoint_path: Optional[Path] = None
    log_path: Optional[Path] = None
    split_path: Optional[Path] = None
    config_path: Optional[Path] = None
    map_path: Optional[Path] = None

    @property
    def final_oa(self) -> float:
        return self.log[-1].oa if self.log else float("nan")


def model_dims(config: RunConfig, cube: HSICube) -> ModelDims:
    return ModelDims(bands=cube.bands, window=config.neighbor_size, feature_dim=config.d,
                     num_classes=cube.num_classes, num_bases=config.k)


def build_model(config: RunConfig, cube: HSICube) -> ModelState:
    """Freshly initialized model sized for the cube."""
    return init_model(model_dims(config, cube), config.seed, alpha=config.alpha, beta=config.beta,
                      epsilon=config.epsilon, gamma=config.gamma, update_sign=config.update_sign,
                      extractor_gain=config.extractor_gain)


def check_compatible(state: ModelState, cube: HSICube, window: Optional[int] = None) -> None:
    """
    Raises:
        ModelError: If the cube's bands, classes or the patch window differ from the model's
    """
    dims = state.dims
    if cube.bands != dims.bands:
        raise ModelError(f"cube has {cube.bands} bands, model expects {dims.bands}")
    if cube.num_classes != dims.num_classes:
        raise ModelError(f"cube has {cube.num_classes} classes, model expects {dims.num_classes}")
    if window is not None and window != dims.window:
        raise ModelError(f"neighbor size {window} differs from the model's {dims.window}")


def evaluate(state: ModelState, cube: HSICube, coords: np.ndarray, window: Optional[int] = None,
             baseline: bool = False) -> MetricsReport:
    """
    Classify the listed (row, col, class) pixels and score them.

    Raises:
        MetricsError: If no coordinates are given
        ModelError: If the model and cube are dimensionally incompatible
    """
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
    if len(coords) == 0:
        raise MetricsError("no pixels to evaluate")
    check_compatible(state, cube, window)
    patches = extract_patches(cube, coords, state.dims.window)
    return evaluate_patches(state, patches, baseline)


def evaluate_patches(state: ModelState, patches: PatchSet, baseline: bool = False) -> MetricsReport:
    predicted = predict(state, patches.patches, baseline)
    return compute_metrics(confusion_matrix(patches.labels - 1, predicted, state.dims.num_classes))


def eval_subset(split: Split, limit: int, seed: int) -> np.ndarray:
    """At most `limit` test pixels, drawn once and kept in split order."""
    if len(split.test) <= limit:
        return split.test
    rng = np.random.default_rng([seed, 4])
    # sorted so the subset keeps split order
    chosen = np.sort(rng.choice(len(split.test), size=limit, replace=False))
    return split.test[chosen]


def write_log(records: Sequence[EpochRecord], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(LOG_FIELDS)
        for record in records:
            writer.writerow(record.as_row())
    return path


def _mean_report(reports: Sequence[StepReport], field_name: str) -> float:
    total = sum(r.batch_size for r in reports)
    return sum(getattr(r, field_name) * r.batch_size for r in reports) / total


class TrainingWorkflow:
    """Seeded training run driven by a RunConfig."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.logger = logging.getLogger(__name__)

    def batches(self, patches: PatchSet, order: np.ndarray) -> List[TrainBatch]:
        size = self.config.batch
        return [TrainBatch(patches.patches[order[i:i + size]], patches.labels[order[i:i + size]] - 1)
                for i in range(0, len(order), size)]

    def _record(self, epoch: int, reports: Sequence[StepReport], oa: float) -> EpochRecord:
        return EpochRecord(
            epoch=epoch,
            ce=_mean_report(reports, "ce"),
            center=_mean_report(reports, "center"),
            recon=_mean_report(reports, "reconstruction"),
            sparsity=_mean_report(reports, "sparsity"),
            diversity=_mean_report(reports, "diversity"),
            oa=oa,
        )

    def train(self, cube: HSICube, state: Optional[ModelState] = None) -> TrainingResult:
        """
        Train without writing any files.

        Raises:
            SceneError: If a class has too few labeled pixels for the split
            NonFiniteLossError: If a step produces a non-finite loss or parameter
        """
        config = self.config
        split = split_train_test(cube, config.per_class, config.seed)
        state = build_model(config, cube) if state is None else state
        check_compatible(state, cube, config.neighbor_size)

        train_patches = extract_patches(cube, split.train, config.neighbor_size)
        held_out = extract_patches(cube, eval_subset(split, config.eval_limit, config.seed), config.neighbor_size)
        steps_per_epoch = math.ceil(len(train_patches) / config.batch)
        mode = "baseline" if config.baseline else "full"
        self.logger.info(f"Training {mode} model: {len(train_patches)} pixels, {config.epochs} epochs × "
                         f"{steps_per_epoch} steps, k={state.dims.num_bases}, d={state.dims.feature_dim}, "
                         f"w={state.dims.window}")

        # epoch 0 scores the untrained model on unshuffled batches
        in_order = np.arange(len(train_patches))
        initial = [measure_losses(state, batch, config.lambda_c, config.baseline)
                   for batch in self.batches(train_patches, in_order)]
        log = [self._record(0, initial, evaluate_patches(state, held_out, config.baseline).oa)]
        self.logger.info(f"Epoch 0/{config.epochs}: ce={log[0].ce:.4f} oa={log[0].oa:.4f}")

        rng = np.random.default_rng([config.seed, 3])
        # one permutation per epoch from a single stream
        for epoch in range(1, config.epochs + 1):
            reports = []
            for step, batch in enumerate(self.batches(train_patches, rng.permutation(len(train_patches)))):
                try:
                    state, report = train_step(state, batch, config.lr, config.lambda_c, config.baseline)
                except Exception:
                    self.logger.error(f"Training aborted at epoch {epoch}, step {step + 1}/{steps_per_epoch}")
                    raise
                reports.append(report)
            record = self._record(epoch, reports, evaluate_patches(state, held_out, config.baseline).oa)
            log.append(record)
            self.logger.info(f"Epoch {epoch}/{config.epochs}: ce={record.ce:.4f} center={record.center:.4f} "
                             f"recon={record.recon:.4f} oa={record.oa:.4f}")
        return TrainingResult(state=state, split=split, log=log)

    def run(self, cube: HSICube, render: bool = True) -> TrainingResult:
        """Train, then write checkpoint, log, split, resolved config and map."""
        config = self.config
        result = self.train(cube)
        output_dir = Path(config.output_dir)
        checkpoint = Path(config.checkpoint)

        result.checkpoint_path = save_checkpoint(result.state, checkpoint)
        result.config_path = save_run_config(config, checkpoint.parent / CONFIG_FILE)
        result.log_path = write_log(result.log, output_dir / LOG_FILE)
        result.split_path = export_split_csv(result.split, output_dir / SPLIT_FILE)
        if render:
            result.map_path = render_map(predict_map(result.state, cube, config.baseline), output_dir / MAP_FILE)
        self.logger.info(f"Run finished: final OA {result.final_oa:.4f}, outputs in {output_dir}")
        return result


def run_training(config: RunConfig, cube: HSICube, render: bool = True) -> TrainingResult:
    return TrainingWorkflow(config).run(cube, render)
