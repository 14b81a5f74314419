#!/usr/bin/env python3
"""
Noise Space

Learned space of k base noises. Per-sample noise extracted from backbone
features is reconstructed in this space from cosine similarities with an
energy-preserving rescale, and the bases themselves move only through a
decayed self-supervised update, never through the classification loss.
"""

import dataclasses
import logging
import struct
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from autodiff import Tensor, add, l2_norm, matmul, mul, reciprocal, scale, zeros

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, Sequence[float], Tensor]

_HEADER = struct.Struct("<II")


class NoiseSpaceError(Exception):
    """Custom exception for invalid noise space construction or use"""
    pass


class UpdateSign(Enum):
    """Direction of the self-supervised base update."""
    DESCENT = "descent"
    AS_WRITTEN = "as-written"


def _vector(value: ArrayLike) -> np.ndarray:
    if isinstance(value, Tensor):
        return value.data
    return np.asarray(value, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class NoiseSpace:
    """The k base noise vectors plus their update hyperparameters."""
    bases: np.ndarray
    alpha: float = 1.0
    beta: float = 0.9
    epsilon: float = 1e-8
    update_sign: UpdateSign = UpdateSign.DESCENT

    def __post_init__(self):
        bases = np.array(self.bases, dtype=np.float64)
        if bases.ndim != 2 or bases.shape[0] < 1 or bases.shape[1] < 1:
            raise NoiseSpaceError(f"bases must be a non-empty k×d matrix, got shape {list(bases.shape)}")
        if not np.all(np.isfinite(bases)):
            raise NoiseSpaceError("bases must be finite")
        if not 0.0 <= self.beta <= 1.0:
            raise NoiseSpaceError(f"beta must be within [0, 1], got {self.beta}")
        if self.epsilon <= 0:
            raise NoiseSpaceError(f"epsilon must be positive, got {self.epsilon}")
        bases.setflags(write=False)
        object.__setattr__(self, "bases", bases)
        object.__setattr__(self, "update_sign", UpdateSign(self.update_sign))

    @property
    def k(self) -> int:
        return self.bases.shape[0]

    @property
    def d(self) -> int:
        return self.bases.shape[1]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.bases, axis=1)

    def unit_bases(self) -> np.ndarray:
        """Bases scaled to unit length; a base shorter than epsilon is divided by epsilon instead."""
        return self.bases / np.maximum(self.norms(), self.epsilon)[:, None]

    def with_bases(self, bases: np.ndarray) -> "NoiseSpace":
        return dataclasses.replace(self, bases=bases)


@dataclass(frozen=True)
class LossBreakdown:
    """Terms of the reconstruction objective for one sample."""
    reconstruction: float
    sparsity: float
    diversity: float
    alpha: float
    total: float


@dataclass
class NoiseEstimate:
    """Everything the reconstruction computes for one sample."""
    extracted: np.ndarray
    similarities: np.ndarray
    pre_reconstruction: np.ndarray
    weights: np.ndarray
    reconstructed: np.ndarray
    degenerate: bool
    breakdown: Optional[LossBreakdown] = None


def init_noise_space(k: int, d: int, seed: Union[int, Sequence[int]], alpha: float = 1.0, beta: float = 0.9,
                     epsilon: float = 1e-8,
                     update_sign: UpdateSign = UpdateSign.DESCENT) -> NoiseSpace:
    """
    Draw k bases i.i.d. uniform in [-1/sqrt(d), 1/sqrt(d)].

    Every base norm lies in (0, 1]; a row that comes out exactly zero is
    redrawn.

    Raises:
        NoiseSpaceError: If k or d is not positive
    """
    if k < 1 or d < 1:
        raise NoiseSpaceError(f"k and d must be at least 1, got k={k}, d={d}")
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(d)
    bases = rng.uniform(-bound, bound, size=(k, d))
    # cosine similarity needs a nonzero norm
    zero_rows = np.flatnonzero(~np.any(bases != 0.0, axis=1))
    while zero_rows.size:
        bases[zero_rows] = rng.uniform(-bound, bound, size=(zero_rows.size, d))
        zero_rows = np.flatnonzero(~np.any(bases != 0.0, axis=1))
    return NoiseSpace(bases=bases, alpha=alpha, beta=beta, epsilon=epsilon, update_sign=update_sign)


def extract_noise(features: ArrayLike, weight: ArrayLike, bias: ArrayLike) -> Tensor:
    """
    Affine noise extraction n_f = W·features + b.

    Works on constants and on tracked tensors alike, so the main loss can
    train W and b through the tape.

    Raises:
        NoiseSpaceError: If the dimensions disagree
    """
    features, weight, bias = (v if isinstance(v, Tensor) else Tensor(v) for v in (features, weight, bias))
    if weight.ndim != 2 or features.ndim != 1 or bias.ndim != 1:
        raise NoiseSpaceError("extract_noise expects a vector, a matrix and a vector")
    if weight.shape != (bias.shape[0], features.shape[0]):
        raise NoiseSpaceError(
            f"weight {list(weight.shape)} does not map features [{features.shape[0]}] to bias [{bias.shape[0]}]")
    return add(matmul(weight, features), bias)


def cosine_similarities(space: NoiseSpace, n_f: ArrayLike) -> Tuple[np.ndarray, bool]:
    """
    Cosine similarity of every base with the extracted noise.

    Returns:
        Tuple of (similarities clipped to [-1, 1], degenerate flag). When
        ||n_f|| < epsilon the similarities are all zero and the flag is set.
    """
    n_f = _vector(n_f)
    if n_f.shape != (space.d,):
        raise NoiseSpaceError(f"extracted noise must have length {space.d}, got {list(n_f.shape)}")
    norm_f = np.linalg.norm(n_f)
    if norm_f < space.epsilon:
        return np.zeros(space.k), True
    return np.clip((space.unit_bases() @ n_f) / norm_f, -1.0, 1.0), False


def pre_reconstruct(space: NoiseSpace, similarities: ArrayLike) -> np.ndarray:
    """n' = sum_j s_j n_j."""
    s = _vector(similarities)
    if s.shape != (space.k,):
        raise NoiseSpaceError(f"expected {space.k} similarities, got {list(s.shape)}")
    return s @ space.bases


def estimate_weights(n_f: ArrayLike, n_prime: ArrayLike, similarities: ArrayLike,
                     epsilon: float = 1e-8) -> Tuple[np.ndarray, bool]:
    """
    Energy-preserving weights lambda_j = (||n_f|| / ||n'||) s_j.

    Returns:
        Tuple of (weights, degenerate flag); all-zero weights when ||n'|| < epsilon
    """
    s = _vector(similarities)
    norm_prime = np.linalg.norm(_vector(n_prime))
    if norm_prime < epsilon:
        return np.zeros_like(s), True
    return (np.linalg.norm(_vector(n_f)) / norm_prime) * s, False


def reconstruct_noise(space: NoiseSpace, weights: ArrayLike) -> np.ndarray:
    """n_res = sum_j lambda_j n_j."""
    lam = _vector(weights)
    if lam.shape != (space.k,):
        raise NoiseSpaceError(f"expected {space.k} weights, got {list(lam.shape)}")
    return lam @ space.bases


def diversity_loss(space: NoiseSpace) -> float:
    """
    Mean inner product over all ordered pairs of distinct bases.

    Raises:
        NoiseSpaceError: If k < 2
    """
    k = space.k
    if k < 2:
        raise NoiseSpaceError("diversity loss needs at least 2 bases")
    gram = space.bases @ space.bases.T
    return float((np.sum(gram) - np.trace(gram)) / (k * (k - 1)))


def diversity_gradient(space: NoiseSpace) -> np.ndarray:
    """(2 / (k(k-1))) * sum_{l != i} n_l for every base i."""
    k = space.k
    if k < 2:
        raise NoiseSpaceError("diversity gradient needs at least 2 bases")
    total = np.sum(space.bases, axis=0)
    return (2.0 / (k * (k - 1))) * (total[None, :] - space.bases)


def reconstruction_loss(n_f: ArrayLike, weights: ArrayLike, space: NoiseSpace) -> float:
    """Squared residual ||n_f - sum_i lambda_i n_i||^2."""
    residual = _vector(n_f) - reconstruct_noise(space, weights)
    return float(residual @ residual)


def sparsity_loss(weights: ArrayLike) -> float:
    return float(np.sum(np.abs(_vector(weights))))


def loss_breakdown(space: NoiseSpace, n_f: ArrayLike, weights: ArrayLike) -> LossBreakdown:
    """
    L_u = L_r + L_s + alpha * L_d for one sample.

    With a single base the diversity term is reported as 0.
    """
    recon = reconstruction_loss(n_f, weights, space)
    sparsity = sparsity_loss(weights)
    diversity = diversity_loss(space) if space.k >= 2 else 0.0
    return LossBreakdown(
        reconstruction=recon,
        sparsity=sparsity,
        diversity=diversity,
        alpha=space.alpha,
        total=recon + sparsity + space.alpha * diversity,
    )


def noise_space_gradient(space: NoiseSpace, n_f: ArrayLike, weights: ArrayLike) -> np.ndarray:
    """
    Gradient of ||n_f - sum_j lambda_j n_j||^2 + alpha * L_d per base, lambda held fixed.

    Returns:
        k×d array, row i = -2 lambda_i (n_f - sum_j lambda_j n_j) + alpha * dL_d/dn_i

    Raises:
        NoiseSpaceError: If k < 2
    """
    if space.k < 2:
        raise NoiseSpaceError("noise space gradient needs at least 2 bases")
    return _reconstruction_gradient(space, n_f, weights) + space.alpha * diversity_gradient(space)


def _reconstruction_gradient(space: NoiseSpace, n_f: ArrayLike, weights: ArrayLike) -> np.ndarray:
    lam = _vector(weights)
    residual = _vector(n_f) - reconstruct_noise(space, lam)
    return -2.0 * lam[:, None] * residual[None, :]


def batch_gradient(space: NoiseSpace, samples: Iterable[Tuple[ArrayLike, ArrayLike]]) -> np.ndarray:
    """
    Mean per-sample gradient over a batch, summed in the given order.

    Args:
        samples: (n_f, lambda) pairs from the batch's forward passes

    Raises:
        NoiseSpaceError: If the batch is empty
    """
    total = np.zeros_like(space.bases)
    count = 0
    for n_f, weights in samples:
        total += _reconstruction_gradient(space, n_f, weights)
        count += 1
    if count == 0:
        raise NoiseSpaceError("batch gradient needs at least one sample")
    mean_grad = total / count
    # diversity term is sample-independent
    if space.k >= 2:
        mean_grad = mean_grad + space.alpha * diversity_gradient(space)
    return mean_grad


def self_supervised_update(space: NoiseSpace, gradients: np.ndarray) -> NoiseSpace:
    """
    Decayed update of every base from gradients computed on the current space.

    Descent: n_j <- beta n_j - (1 - beta) g_j. The as-written variant adds
    the gradient instead.
    """
    gradients = np.asarray(gradients, dtype=np.float64)
    if gradients.shape != space.bases.shape:
        raise NoiseSpaceError(f"gradients must have shape {list(space.bases.shape)}, got {list(gradients.shape)}")
    step = (1.0 - space.beta) * gradients
    if space.update_sign is UpdateSign.DESCENT:
        bases = space.beta * space.bases - step
    else:
        bases = space.beta * space.bases + step
    return space.with_bases(bases)


def estimate_from_extracted(space: NoiseSpace, n_f: ArrayLike) -> NoiseEstimate:
    """Similarities, pre-reconstruction, weights and reconstruction for an extracted noise."""
    n_f = np.array(_vector(n_f), dtype=np.float64)
    similarities, degenerate = cosine_similarities(space, n_f)
    n_prime = pre_reconstruct(space, similarities)
    weights, weak_prime = estimate_weights(n_f, n_prime, similarities, space.epsilon)
    if degenerate or weak_prime:
        zeros_k, zeros_d = np.zeros(space.k), np.zeros(space.d)
        return NoiseEstimate(
            extracted=n_f,
            similarities=similarities if not degenerate else zeros_k,
            pre_reconstruction=n_prime,
            weights=zeros_k,
            reconstructed=zeros_d,
            degenerate=True,
            breakdown=loss_breakdown(space, n_f, zeros_k),
        )
    return NoiseEstimate(
        extracted=n_f,
        similarities=similarities,
        pre_reconstruction=n_prime,
        weights=weights,
        reconstructed=reconstruct_noise(space, weights),
        degenerate=False,
        breakdown=loss_breakdown(space, n_f, weights),
    )


def estimate(space: NoiseSpace, features: ArrayLike, weight: ArrayLike, bias: ArrayLike) -> NoiseEstimate:
    """Extract, then reconstruct the noise of one sample."""
    return estimate_from_extracted(space, extract_noise(features, weight, bias).data)


def reconstruct_on_tape(space: NoiseSpace, n_f: Tensor) -> Tuple[Tensor, NoiseEstimate]:
    """
    Differentiable reconstruction of a (possibly tracked) extracted noise.

    The bases enter as constants, so gradients reach n_f (and whatever
    produced it) but never the noise space. Degenerate estimates return a
    constant zero vector.
    """
    est = estimate_from_extracted(space, n_f.data)
    if est.degenerate:
        return zeros((space.d,)), est
    # bases are constants here
    unit_bases = Tensor(space.unit_bases())
    bases_t = Tensor(space.bases.T)
    norm_f = l2_norm(n_f)
    similarities = scale(matmul(unit_bases, n_f), reciprocal(norm_f))
    n_prime = matmul(bases_t, similarities)
    # ||n_res|| = ||n_f||
    n_res = scale(n_prime, mul(norm_f, reciprocal(l2_norm(n_prime))))
    return n_res, est


def to_bytes(space: NoiseSpace) -> bytes:
    """k and d as little-endian u32, then k·d little-endian float64 row-major."""
    return _HEADER.pack(space.k, space.d) + np.ascontiguousarray(space.bases, dtype="<f8").tobytes()


def from_bytes(payload: bytes, alpha: float = 1.0, beta: float = 0.9, epsilon: float = 1e-8,
               update_sign: UpdateSign = UpdateSign.DESCENT) -> NoiseSpace:
    if len(payload) < _HEADER.size:
        raise NoiseSpaceError("noise space payload is truncated")
    k, d = _HEADER.unpack_from(payload)
    expected = _HEADER.size + 8 * k * d
    if len(payload) != expected:
        raise NoiseSpaceError(f"noise space payload has {len(payload)} bytes, expected {expected}")
    bases = np.frombuffer(payload, dtype="<f8", offset=_HEADER.size).reshape(k, d).astype(np.float64)
    return NoiseSpace(bases=bases, alpha=alpha, beta=beta, epsilon=epsilon, update_sign=update_sign)
