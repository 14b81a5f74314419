#!/usr/bin/env python3
"""
Ablation Sweeps

Trains the full model and the baseline over a sweep of either the number
of base noises or the neighbor size, repeating every setting over several
seeds, and tabulates mean ± standard deviation of OA, AA and kappa on the
test pixels.
"""

import csv
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from config import RunConfig, build_config
from scenes import HSICube
from .metrics import MetricsReport, MetricsSummary, summarize
from .training import TrainingWorkflow, evaluate

logger = logging.getLogger(__name__)

ABLATION_FIELDS = ("setting", "value", "model", "oa_mean", "oa_std", "aa_mean", "aa_std", "kappa_mean", "kappa_std")
DEFAULT_SEED_COUNT = 3


class AblationKind(str, Enum):
    """Which option a sweep varies."""
    BASE_NOISE = "base-noise"
    NEIGHBOR = "neighbor"

    @property
    def option(self) -> str:
        return "k" if self is AblationKind.BASE_NOISE else "neighbor_size"


DEFAULT_VALUES: Dict[AblationKind, Tuple[int, ...]] = {
    AblationKind.BASE_NOISE: (16, 32, 64, 128),
    AblationKind.NEIGHBOR: (1, 3, 5, 7),
}


@dataclass
class AblationRow:
    setting: AblationKind
    value: int
    model: str
    summary: MetricsSummary

    def as_row(self) -> List[str]:
        stats = self.summary.as_dict()
        return [self.setting.value, str(self.value), self.model] + [repr(stats[name]) for name in ABLATION_FIELDS[3:]]


def default_seeds(config: RunConfig, count: int = DEFAULT_SEED_COUNT) -> List[int]:
    return [config.seed + i for i in range(count)]


def _train_and_score(config: RunConfig, cube: HSICube) -> MetricsReport:
    result = TrainingWorkflow(config).train(cube)
    return evaluate(result.state, cube, result.split.test, config.neighbor_size, config.baseline)


def run_ablation(kind: Union[AblationKind, str], cube: HSICube, config: RunConfig,
                 values: Optional[Sequence[int]] = None,
                 seeds: Optional[Sequence[int]] = None) -> List[AblationRow]:
    """
    Sweep one option for the full model and the baseline.

    The baseline does not use the noise space, so for a base-noise sweep it
    is trained once per seed and reported against every value.

    Raises:
        ConfigError: If a swept value is out of range
    """
    kind = AblationKind(kind)
    values = list(DEFAULT_VALUES[kind] if values is None else values)
    seeds = default_seeds(config) if seeds is None else list(seeds)
    base = config.model_dump()
    baseline_cache: Dict[Tuple[int, int], MetricsReport] = {}
    rows: List[AblationRow] = []

    for value in values:
        for model in ("full", "baseline"):
            reports = []
            for seed in seeds:
                run = build_config({**base, kind.option: value, "seed": seed, "baseline": model == "baseline"})
                # base-noise sweeps share one baseline per seed
                cache_key = (seed, 0 if kind is AblationKind.BASE_NOISE else value)
                if model == "baseline" and cache_key in baseline_cache:
                    reports.append(baseline_cache[cache_key])
                    continue
                report = _train_and_score(run, cube)
                if model == "baseline":
                    baseline_cache[cache_key] = report
                logger.info(f"{kind.value}={value} {model} seed={seed}: {report.summary()}")
                reports.append(report)
            rows.append(AblationRow(setting=kind, value=value, model=model, summary=summarize(reports)))
    return rows


def write_ablation_csv(rows: Sequence[AblationRow], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(ABLATION_FIELDS)
        for row in rows:
            writer.writerow(row.as_row())
    return path
