#!/usr/bin/env python3
"""
Acceptance Runs

Multi-seed end-to-end checks on synthetic scenes. They train full desk-scale
models and take minutes, so they run from `hsi-denoise accept` (or the
HSI_DENOISE_SLOW test switch) rather than with the unit suite.

    noiseless sanity    amplitude = sigma = 0: the full model fits its train pixels
    denoise benefit     baseline median OA in [0.70, 0.90], full median >= baseline median
    neighbor direction  full model, median OA(w=5) >= median OA(w=1)
    training helps      final held-out OA above the epoch-0 OA for every seed
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import RunConfig, build_config
from scenes import HSICube, generate_scene, make_scene_spec
from .training import TrainingResult, TrainingWorkflow, evaluate

BASELINE_BAND = (0.70, 0.90)
DEFAULT_SEEDS = (0, 1, 2)


@dataclass
class AcceptanceResult:
    """Outcome of one acceptance check."""
    name: str
    passed: bool
    medians: Dict[str, float] = field(default_factory=dict)
    per_seed: Dict[str, List[float]] = field(default_factory=dict)

    def line(self) -> str:
        status = "✅" if self.passed else "❌"
        medians = ", ".join(f"{label} {value:.4f}" for label, value in self.medians.items())
        return f"{status} {self.name}: median {medians}"

    def details(self) -> List[str]:
        return [f"   {label}: " + " ".join(f"{v:.4f}" for v in values) for label, values in self.per_seed.items()]


def median(values: Sequence[float]) -> float:
    return float(np.median(np.asarray(values, dtype=np.float64)))


class AcceptanceRunner:
    """
    Trains and scores models for every acceptance check.

    The scene options of ``config`` describe the standard scene; the run
    seed is the scene seed, and ``seeds`` drive the training runs. Runs
    shared between checks are trained once.
    """

    def __init__(self, config: RunConfig, seeds: Sequence[int] = DEFAULT_SEEDS):
        if not seeds:
            raise ValueError("acceptance runs need at least one seed")
        self.config = config
        self.seeds = list(seeds)
        self.logger = logging.getLogger(__name__)
        self._cubes: Dict[Tuple[float, float], HSICube] = {}
        self._runs: Dict[Tuple[int, str], Tuple[RunConfig, TrainingResult]] = {}

    def scene(self, noise_amplitude: Optional[float] = None, white_noise_sigma: Optional[float] = None) -> HSICube:
        c = self.config
        amplitude = c.noise_amplitude if noise_amplitude is None else noise_amplitude
        sigma = c.white_noise_sigma if white_noise_sigma is None else white_noise_sigma
        if (amplitude, sigma) not in self._cubes:
            spec = make_scene_spec(num_classes=c.classes, bands=c.bands, rows=c.rows, cols=c.cols,
                                   num_true_bases=c.true_bases, noise_amplitude=amplitude,
                                   white_noise_sigma=sigma, region_size=c.region_size, seed=c.seed)
            self._cubes[(amplitude, sigma)] = generate_scene(spec)
        return self._cubes[(amplitude, sigma)]

    def train(self, cube: HSICube, seed: int, **overrides) -> Tuple[RunConfig, TrainingResult]:
        config = build_config({**self.config.model_dump(), **overrides, "seed": seed})
        # identical configs on the same cube share one run
        key = (id(cube), config.model_dump_json())
        if key not in self._runs:
            mode = "baseline" if config.baseline else "full"
            self.logger.info(f"Acceptance run: {mode}, seed={seed}, {overrides or 'defaults'}")
            self._runs[key] = (config, TrainingWorkflow(config).train(cube))
        return self._runs[key]

    def held_out_oa(self, cube: HSICube, seed: int, **overrides) -> float:
        config, result = self.train(cube, seed, **overrides)
        return evaluate(result.state, cube, result.split.test, config.neighbor_size, config.baseline).oa

    def check_noiseless(self) -> AcceptanceResult:
        cube = self.scene(noise_amplitude=0.0, white_noise_sigma=0.0)
        train_oa = []
        for seed in self.seeds:
            config, result = self.train(cube, seed, baseline=False)
            train_oa.append(evaluate(result.state, cube, result.split.train, config.neighbor_size).oa)
        return AcceptanceResult("noiseless sanity", median(train_oa) == 1.0,
                                {"train OA": median(train_oa)}, {"train OA": train_oa})

    def check_denoise_benefit(self) -> AcceptanceResult:
        cube = self.scene()
        baseline = [self.held_out_oa(cube, seed, baseline=True) for seed in self.seeds]
        full = [self.held_out_oa(cube, seed, baseline=False) for seed in self.seeds]
        low, high = BASELINE_BAND
        in_band = low <= median(baseline) <= high
        if not in_band:
            self.logger.warning(f"Baseline median OA {median(baseline):.4f} is outside [{low}, {high}]; "
                                f"retune noise_amplitude")
        passed = in_band and median(full) >= median(baseline)
        return AcceptanceResult("denoise benefit", passed,
                                {"baseline": median(baseline), "full": median(full)},
                                {"baseline": baseline, "full": full})

    def check_neighbor_direction(self) -> AcceptanceResult:
        cube = self.scene()
        single = [self.held_out_oa(cube, seed, baseline=False, neighbor_size=1) for seed in self.seeds]
        wide = [self.held_out_oa(cube, seed, baseline=False, neighbor_size=5) for seed in self.seeds]
        return AcceptanceResult("neighbor direction", median(wide) >= median(single),
                                {"w=1": median(single), "w=5": median(wide)},
                                {"w=1": single, "w=5": wide})

    def check_training_helps(self) -> AcceptanceResult:
        cube = self.scene()
        initial, final = [], []
        for seed in self.seeds:
            _, result = self.train(cube, seed, baseline=False)
            initial.append(result.log[0].oa)
            final.append(result.final_oa)
        passed = all(after > before for before, after in zip(initial, final))
        return AcceptanceResult("training helps", passed,
                                {"epoch 0": median(initial), "final": median(final)},
                                {"epoch 0": initial, "final": final})

    def run(self) -> List[AcceptanceResult]:
        results = [self.check_noiseless(), self.check_denoise_benefit(), self.check_neighbor_direction(),
                   self.check_training_helps()]
        for result in results:
            log = self.logger.info if result.passed else self.logger.error
            log(result.line())
        return results


def format_acceptance(results: Sequence[AcceptanceResult]) -> str:
    """Status line per check followed by its per-seed values."""
    lines = []
    for result in results:
        lines.append(result.line())
        lines.extend(result.details())
    return "\n".join(lines)
