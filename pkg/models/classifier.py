#!/usr/bin/env python3
"""
Denoise Classifier

Backbone features minus the noise reconstructed in the noise space give
clean features; a linear head classifies them. Training minimizes mean
cross-entropy plus a weighted center loss on the clean features, moves
class centers by a moving average, and updates the noise space through
its self-supervised rule once per batch.
"""

import dataclasses
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from autodiff import Tape, Tensor, add, backward, dot, matmul, scale, softmax_cross_entropy, sub
from noise import (
    NoiseEstimate,
    NoiseSpace,
    UpdateSign,
    batch_gradient,
    diversity_loss,
    extract_noise,
    init_noise_space,
    reconstruct_on_tape,
    self_supervised_update,
)
from .backbone import EXTRACTOR_GAIN, ModelDims, ModelError, backbone_forward, init_parameters

logger = logging.getLogger(__name__)


class NonFiniteLossError(ModelError):
    """Raised when a training step produces a non-finite loss or parameter"""
    def __init__(self, message: str, report: Optional["StepReport"] = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True, eq=False)
class CenterBank:
    """One center per class plus the moving-average rate gamma."""
    centers: np.ndarray
    gamma: float = 0.5

    def __post_init__(self):
        centers = np.array(self.centers, dtype=np.float64)
        if centers.ndim != 2:
            raise ModelError(f"centers must be C×d, got shape {list(centers.shape)}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ModelError(f"gamma must be within [0, 1], got {self.gamma}")
        centers.setflags(write=False)
        object.__setattr__(self, "centers", centers)

    @property
    def num_classes(self) -> int:
        return self.centers.shape[0]


@dataclass(eq=False)
class TrainBatch:
    """B patches with 0-based class indices."""
    patches: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.patches = np.asarray(self.patches, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if len(self.labels) < 1 or len(self.patches) != len(self.labels):
            raise ModelError(f"batch needs matching non-empty patches and labels, "
                             f"got {len(self.patches)} and {len(self.labels)}")

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(eq=False)
class ModelState:
    """Backbone, extractor and head parameters with the noise space and centers."""
    dims: ModelDims
    params: Dict[str, Tensor]
    noise_space: NoiseSpace
    centers: CenterBank

    def section(self, prefix: str) -> Dict[str, Tensor]:
        return {name: p for name, p in self.params.items() if name.startswith(prefix + ".")}

    @property
    def backbone(self) -> Dict[str, Tensor]:
        return self.section("backbone")

    @property
    def extractor(self) -> Dict[str, Tensor]:
        return self.section("extractor")

    @property
    def head(self) -> Dict[str, Tensor]:
        return self.section("head")

    def is_finite(self) -> bool:
        return (all(np.all(np.isfinite(p.data)) for p in self.params.values())
                and np.all(np.isfinite(self.noise_space.bases))
                and np.all(np.isfinite(self.centers.centers)))


@dataclass
class SampleForward:
    """Intermediate values of one forward pass."""
    features: Tensor
    clean: Tensor
    logits: Tensor
    estimate: Optional[NoiseEstimate] = None


@dataclass
class StepReport:
    """Losses of one training step, averaged over the batch where per-sample."""
    ce: float
    center: float
    total: float
    reconstruction: float
    sparsity: float
    diversity: float
    degenerate: int
    batch_size: int


def init_model(dims: ModelDims, seed: int, alpha: float = 1.0, beta: float = 0.9,
               epsilon: float = 1e-8, gamma: float = 0.5,
               update_sign: UpdateSign = UpdateSign.DESCENT,
               extractor_gain: float = EXTRACTOR_GAIN) -> ModelState:
    """Fresh model with seeded weights, a seeded noise space and zero centers."""
    params = init_parameters(dims, np.random.default_rng([seed, 1]), extractor_gain)
    space = init_noise_space(dims.num_bases, dims.feature_dim, [seed, 2], alpha=alpha, beta=beta,
                             epsilon=epsilon, update_sign=update_sign)
    centers = CenterBank(np.zeros((dims.num_classes, dims.feature_dim)), gamma=gamma)
    return ModelState(dims=dims, params=params, noise_space=space, centers=centers)


def denoise(features: Tensor, n_res: Union[Tensor, np.ndarray]) -> Tensor:
    """f_clean = phi(x) - n_res."""
    if not isinstance(n_res, Tensor):
        n_res = Tensor(n_res)
    if features.shape != n_res.shape:
        raise ModelError(f"features {list(features.shape)} and noise {list(n_res.shape)} differ in size")
    return sub(features, n_res)


def forward(state: ModelState, patch: np.ndarray, baseline: bool = False,
            params: Optional[Dict[str, Tensor]] = None) -> SampleForward:
    """
    Backbone, noise extraction and reconstruction, denoise, head.

    With ``baseline`` the noise path is skipped and the head sees the raw
    features. ``params`` overrides the state's parameters, e.g. with
    tracked copies during training.
    """
    params = state.params if params is None else params
    features = backbone_forward(patch, params, state.dims)
    if baseline:
        clean, est = features, None
    else:
        n_f = extract_noise(features, params["extractor.weight"], params["extractor.bias"])
        n_res, est = reconstruct_on_tape(state.noise_space, n_f)
        clean = denoise(features, n_res)
    logits = add(matmul(params["head.weight"], clean), params["head.bias"])
    return SampleForward(features=features, clean=clean, logits=logits, estimate=est)


def _check_labels(labels: Sequence[int], num_classes: int) -> List[int]:
    checked = [int(y) for y in labels]
    for y in checked:
        if not 0 <= y < num_classes:
            raise ModelError(f"label {y} out of range for {num_classes} classes")
    return checked


def center_loss(clean_features: Sequence[Tensor], labels: Sequence[int], centers: CenterBank) -> Tensor:
    """
    L_C = 1/2 sum ||f_clean - c_m||^2 over the batch, centers held constant.

    Raises:
        ModelError: On an empty batch or a label without a center
    """
    labels = _check_labels(labels, centers.num_classes)
    if not clean_features or len(clean_features) != len(labels):
        raise ModelError("center loss needs one label per clean feature vector")
    total = None
    for features, label in zip(clean_features, labels):
        diff = sub(features, Tensor(centers.centers[label]))
        term = dot(diff, diff)
        total = term if total is None else add(total, term)
    return scale(total, 0.5)


def update_centers(centers: CenterBank, clean_features: Union[np.ndarray, Sequence[Tensor]],
                   labels: Sequence[int]) -> CenterBank:
    """
    Move each present class center toward its batch features.

    c_m <- c_m - gamma * mean(c_m - f_clean) over the class's samples;
    classes absent from the batch keep their center.
    """
    labels = np.asarray(_check_labels(labels, centers.num_classes), dtype=np.int64)
    feats = np.asarray([f.data if isinstance(f, Tensor) else f for f in clean_features], dtype=np.float64)
    if len(feats) == 0 or len(feats) != len(labels):
        raise ModelError("center update needs a non-empty batch with one label per feature vector")
    updated = centers.centers.copy()
    # absent classes keep their center
    for m in np.unique(labels):
        delta = np.mean(updated[m] - feats[labels == m], axis=0)
        updated[m] = updated[m] - centers.gamma * delta
    return dataclasses.replace(centers, centers=updated)


def mean_cross_entropy(logits: Sequence[Tensor], labels: Sequence[int]) -> Tensor:
    total = None
    for z, y in zip(logits, labels):
        term = softmax_cross_entropy(z, int(y))
        total = term if total is None else add(total, term)
    if total is None:
        raise ModelError("cross-entropy needs at least one sample")
    return scale(total, 1.0 / len(logits))


def total_loss(logits: Sequence[Tensor], labels: Sequence[int], center_term: Tensor, lambda_c: float) -> Tensor:
    """Mean cross-entropy plus lambda_c times the center loss."""
    if lambda_c < 0:
        raise ModelError(f"lambda_c must be non-negative, got {lambda_c}")
    return add(mean_cross_entropy(logits, labels), scale(center_term, lambda_c))


def _step_report(state: ModelState, passes: Sequence[SampleForward], labels: Sequence[int],
                 center_term: Tensor, loss: Tensor) -> StepReport:
    estimates = [p.estimate for p in passes if p.estimate is not None]
    # per-sample CE on detached logits
    ce = float(np.mean([softmax_cross_entropy(Tensor(p.logits.data), y).item() for p, y in zip(passes, labels)]))
    return StepReport(
        ce=ce,
        center=center_term.item(),
        total=loss.item(),
        reconstruction=float(np.mean([e.breakdown.reconstruction for e in estimates])) if estimates else 0.0,
        sparsity=float(np.mean([e.breakdown.sparsity for e in estimates])) if estimates else 0.0,
        diversity=diversity_loss(state.noise_space) if estimates and state.noise_space.k >= 2 else 0.0,
        degenerate=sum(1 for e in estimates if e.degenerate),
        batch_size=len(passes),
    )


def measure_losses(state: ModelState, batch: TrainBatch, lambda_c: float = 0.01,
                   baseline: bool = False) -> StepReport:
    """Losses of a batch under the current state, without updating anything."""
    labels = _check_labels(batch.labels, state.dims.num_classes)
    passes = [forward(state, patch, baseline) for patch in batch.patches]
    center_term = center_loss([p.clean for p in passes], labels, state.centers)
    loss = total_loss([p.logits for p in passes], labels, center_term, lambda_c)
    return _step_report(state, passes, labels, center_term, loss)


def train_step(state: ModelState, batch: TrainBatch, lr: float, lambda_c: float = 0.01,
               baseline: bool = False) -> Tuple[ModelState, StepReport]:
    """
    One optimization step on a batch.

    Forward every sample on a fresh tape, backpropagate the total loss,
    take a plain gradient step on backbone, extractor and head, then move
    the centers and apply the self-supervised noise-space update (skipped
    for the baseline).

    Raises:
        NonFiniteLossError: If the loss or any updated parameter is not finite
    """
    labels = _check_labels(batch.labels, state.dims.num_classes)
    # parameters are watched copies; the state itself is never mutated
    tape = Tape()
    tracked = {name: tape.watch(p) for name, p in state.params.items()}
    passes = [forward(state, patch, baseline, tracked) for patch in batch.patches]

    center_term = center_loss([p.clean for p in passes], labels, state.centers)
    loss = total_loss([p.logits for p in passes], labels, center_term, lambda_c)
    report = _step_report(state, passes, labels, center_term, loss)
    if not np.isfinite(report.total):
        logger.error(f"Non-finite loss: {report}")
        raise NonFiniteLossError(f"non-finite loss {report.total}", report)

    grads = backward(tape, loss)
    # plain SGD step
    params = {name: Tensor(p.data - lr * grads.wrt(tracked[name]).data) for name, p in state.params.items()}
    centers = update_centers(state.centers, [p.clean for p in passes], labels)
    space = state.noise_space
    # bases move by their own rule, outside the tape
    if not baseline:
        estimates = [p.estimate for p in passes]
        space = self_supervised_update(space, batch_gradient(space, [(e.extracted, e.weights) for e in estimates]))

    updated = ModelState(dims=state.dims, params=params, noise_space=space, centers=centers)
    if not updated.is_finite():
        logger.error(f"Non-finite parameters after step: {report}")
        raise NonFiniteLossError("non-finite parameters after step", report)
    if report.degenerate:
        logger.debug(f"{report.degenerate}/{report.batch_size} degenerate noise estimates in batch")
    logger.debug(f"Step ce={report.ce:.6f} center={report.center:.6f} recon={report.reconstruction:.6f} "
                 f"sparsity={report.sparsity:.6f} diversity={report.diversity:.6f}")
    return updated, report


def predict(state: ModelState, patches: np.ndarray, baseline: bool = False) -> np.ndarray:
    """0-based argmax class per patch; ties go to the lowest index."""
    return np.asarray([int(np.argmax(forward(state, patch, baseline).logits.data)) for patch in patches],
                      dtype=np.int64)
