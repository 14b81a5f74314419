#!/usr/bin/env python3
"""
Gradient Verification

Finite-difference suites for the tape primitives, the analytic noise-space
gradient, the diversity gradient and the whole classifier, plus the
energy-preservation check of the noise reconstruction. Each suite reports
its maximum relative error against a fixed threshold.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from autodiff import (
    Tape,
    Tensor,
    add,
    backward,
    conv3d,
    dot,
    finite_diff_grad,
    l2_norm,
    matmul,
    mean,
    mul,
    reciprocal,
    relative_error,
    relu,
    reshape,
    scale,
    softmax_cross_entropy,
    sub,
    sum_,
)
from models import CenterBank, ModelDims, ModelState, center_loss, forward, init_model, total_loss
from noise import (
    NoiseSpace,
    diversity_gradient,
    diversity_loss,
    estimate_from_extracted,
    init_noise_space,
    noise_space_gradient,
    reconstruction_loss,
)

GradientFn = Callable[[NoiseSpace, np.ndarray, np.ndarray], np.ndarray]
ScalarFn = Callable[[Tensor], Tensor]

PRIMITIVE_THRESHOLD = 1e-6
NOISE_THRESHOLD = 1e-4
MODEL_THRESHOLD = 1e-3
ENERGY_THRESHOLD = 1e-9


@dataclass
class SuiteResult:
    """Outcome of one verification suite."""
    name: str
    max_rel_err: float
    threshold: float
    cases: int

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_rel_err)) and self.max_rel_err <= self.threshold

    def line(self) -> str:
        status = "✅" if self.passed else "❌"
        return (f"{status} {self.name}: max rel err {self.max_rel_err:.3e} "
                f"(threshold {self.threshold:.0e}, {self.cases} cases)")


def tape_gradient(fn: ScalarFn, x: Tensor) -> Tensor:
    """Gradient of fn at x through one recorded tape."""
    tape = Tape()
    tracked = tape.watch(x)
    return backward(tape, fn(tracked)).wrt(tracked)


def _projection(weights: np.ndarray) -> Callable[[Tensor], Tensor]:
    """Random linear functional reducing any tensor to a scalar."""
    r = Tensor(weights.reshape(-1))
    return lambda y: dot(reshape(y, (y.size,)), r)


def _away_from_zero(rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    return rng.uniform(0.2, 1.0, size=shape) * rng.choice([-1.0, 1.0], size=shape)


class GradientCheckRunner:
    """
    Runs every gradient suite with seeded random instances.

    ``noise_gradient`` is the analytic noise-space gradient under test; it
    defaults to the production implementation and can be replaced to check
    that a broken gradient is caught.
    """

    def __init__(self, seed: int = 0, noise_gradient: Optional[GradientFn] = None,
                 noise_instances: int = 100, energy_instances: int = 10000):
        self.seed = seed
        self.noise_gradient = noise_gradient or noise_space_gradient
        self.noise_instances = noise_instances
        self.energy_instances = energy_instances
        self.logger = logging.getLogger(__name__)

    def _rng(self, stream: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, stream])

    def primitive_cases(self) -> List[Tuple[str, ScalarFn, Tensor]]:
        rng = self._rng(0)
        A = Tensor(rng.normal(size=(3, 4)))
        B = Tensor(rng.normal(size=(4, 2)))
        v = Tensor(rng.normal(size=4))
        u = Tensor(rng.normal(size=5))
        volume = Tensor(rng.normal(size=(2, 4, 3, 3)))
        kernels = Tensor(rng.normal(size=(3, 2, 2, 2, 2)))
        bias = Tensor(rng.normal(size=3))
        p_mat, p_vec, p_conv = _projection(rng.normal(size=6)), _projection(rng.normal(size=3)), _projection(rng.normal(size=36))
        p_u = _projection(rng.normal(size=5))
        away = Tensor(_away_from_zero(rng, (5,)))
        positive = Tensor(rng.uniform(0.5, 2.0, size=5))
        return [
            ("matmul.left", lambda x: p_mat(matmul(x, B)), A),
            ("matmul.right", lambda x: p_mat(matmul(A, x)), B),
            ("matmul.vector", lambda x: p_vec(matmul(A, x)), v),
            ("conv3d.inputs", lambda x: p_conv(conv3d(x, kernels, 1, bias)), volume),
            ("conv3d.kernels", lambda x: p_conv(conv3d(volume, x, 1, bias)), kernels),
            ("conv3d.bias", lambda x: p_conv(conv3d(volume, kernels, 1, x)), bias),
            ("add", lambda x: p_u(add(x, u)), away),
            ("sub", lambda x: p_u(sub(u, x)), away),
            ("mul", lambda x: p_u(mul(x, u)), away),
            ("scale.float", lambda x: p_u(scale(x, -1.7)), away),
            ("scale.tensor", lambda x: p_u(scale(u, sum_(x))), positive),
            ("relu", lambda x: p_u(relu(x)), away),
            ("reciprocal", lambda x: p_u(reciprocal(x)), positive),
            ("reshape", lambda x: _projection(np.arange(5.0))(reshape(x, (5, 1))), away),
            ("sum", lambda x: mul(sum_(x), sum_(x)), away),
            ("mean", lambda x: mul(mean(x), mean(x)), away),
            ("l2_norm", lambda x: l2_norm(x), away),
            ("dot", lambda x: dot(x, x), away),
            ("softmax_cross_entropy", lambda x: softmax_cross_entropy(x, 2), away),
        ]

    def check_primitives(self) -> SuiteResult:
        worst, cases = 0.0, self.primitive_cases()
        for name, fn, x in cases:
            err = relative_error(tape_gradient(fn, x), finite_diff_grad(fn, x))
            self.logger.debug(f"primitive {name}: rel err {err:.3e}")
            worst = max(worst, err)
        return SuiteResult("autodiff primitives", worst, PRIMITIVE_THRESHOLD, len(cases))

    def check_noise_gradient(self) -> SuiteResult:
        """Analytic gradient of the fixed-weight objective against finite differences."""
        rng = self._rng(1)
        worst = 0.0
        for i in range(self.noise_instances):
            k, d = int(rng.integers(2, 9)), int(rng.integers(2, 17))
            space = init_noise_space(k, d, [self.seed, 100 + i], alpha=float(rng.uniform(0.1, 2.0)))
            n_f, weights = rng.normal(size=d), rng.normal(size=k)

            def objective(bases: Tensor) -> float:
                trial = space.with_bases(bases.data)
                return reconstruction_loss(n_f, weights, trial) + trial.alpha * diversity_loss(trial)

            analytic = self.noise_gradient(space, n_f, weights)
            worst = max(worst, relative_error(analytic, finite_diff_grad(objective, Tensor(space.bases))))
        return SuiteResult("noise space gradient", worst, NOISE_THRESHOLD, self.noise_instances)

    def check_diversity(self) -> SuiteResult:
        rng = self._rng(2)
        worst, cases = 0.0, 20
        for i in range(cases):
            space = init_noise_space(int(rng.integers(2, 9)), int(rng.integers(2, 17)), [self.seed, 200 + i])
            numeric = finite_diff_grad(lambda b: diversity_loss(space.with_bases(b.data)), Tensor(space.bases))
            worst = max(worst, relative_error(diversity_gradient(space), numeric))
        return SuiteResult("diversity gradient", worst, PRIMITIVE_THRESHOLD, cases)

    def check_energy(self) -> SuiteResult:
        """| ||n_res|| - ||n_f|| | / ||n_f|| over random non-degenerate estimates."""
        rng = self._rng(3)
        spaces: Dict[Tuple[int, int], NoiseSpace] = {}
        worst, checked = 0.0, 0
        for _ in range(self.energy_instances):
            k, d = int(rng.choice([1, 4, 64])), int(rng.choice([8, 64, 400]))
            if (k, d) not in spaces:
                spaces[(k, d)] = init_noise_space(k, d, [self.seed, 300 + k, d])
            n_f = rng.normal(size=d) * rng.uniform(0.1, 10.0)
            est = estimate_from_extracted(spaces[(k, d)], n_f)
            if est.degenerate:
                continue
            norm_f = np.linalg.norm(n_f)
            worst = max(worst, abs(np.linalg.norm(est.reconstructed) - norm_f) / norm_f)
            checked += 1
        return SuiteResult("energy preservation", worst, ENERGY_THRESHOLD, checked)

    def tiny_model(self) -> Tuple[ModelState, np.ndarray, List[int]]:
        """d=8, k=4, two classes, 4 bands, 3×3 patches, random centers, two samples."""
        rng = self._rng(4)
        dims = ModelDims(bands=4, window=3, feature_dim=8, num_classes=2, num_bases=4)
        # unscaled extractor bound
        state = init_model(dims, self.seed, extractor_gain=1.0)
        state.centers = CenterBank(rng.normal(size=(2, 8)) * 0.1, gamma=state.centers.gamma)
        patches = rng.normal(size=(2, 4, 3, 3))
        return state, patches, [0, 1]

    def check_model(self, lambda_c: float = 0.5) -> SuiteResult:
        """Tape gradient of the total loss for every parameter against finite differences."""
        state, patches, labels = self.tiny_model()

        def loss_with(params: Dict[str, Tensor]) -> Tensor:
            passes = [forward(state, patch, params=params) for patch in patches]
            centers = center_loss([p.clean for p in passes], labels, state.centers)
            return total_loss([p.logits for p in passes], labels, centers, lambda_c)

        tape = Tape()
        tracked = {name: tape.watch(p) for name, p in state.params.items()}
        grads = backward(tape, loss_with(tracked))

        worst = 0.0
        for name, value in state.params.items():
            def perturbed(x: Tensor, name: str = name) -> Tensor:
                return loss_with({**state.params, name: x})

            err = relative_error(grads.wrt(tracked[name]), finite_diff_grad(perturbed, value))
            self.logger.debug(f"parameter {name}: rel err {err:.3e}")
            worst = max(worst, err)
        return SuiteResult("model end-to-end", worst, MODEL_THRESHOLD, len(state.params))

    def run(self) -> List[SuiteResult]:
        results = [self.check_primitives(), self.check_noise_gradient(), self.check_diversity(),
                   self.check_energy(), self.check_model()]
        for result in results:
            log = self.logger.info if result.passed else self.logger.error
            log(result.line())
        return results


def format_report(results: List[SuiteResult]) -> str:
    """One line per suite."""
    return "\n".join(result.line() for result in results)


def check_gradients(seed: int = 0, noise_gradient: Optional[GradientFn] = None) -> Tuple[bool, List[SuiteResult]]:
    results = GradientCheckRunner(seed, noise_gradient).run()
    return all(r.passed for r in results), results
