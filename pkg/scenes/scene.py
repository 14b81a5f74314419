#!/usr/bin/env python3
"""
Synthetic Scene Generator

Builds hyperspectral scenes from the additive physical model: every pixel
of class m is its class signature plus a weighted sum of true base noises
plus white sensor noise. Labels are laid out as square blocks so spatial
neighborhoods are class-coherent.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cube_io import HSICube

logger = logging.getLogger(__name__)


class SceneError(Exception):
    """Custom exception for invalid scene requests and data splits"""
    pass


@dataclass(eq=False)
class SceneSpec:
    """Generator-side description of a synthetic scene."""
    num_classes: int
    rows: int
    cols: int
    signatures: np.ndarray
    true_bases: np.ndarray
    noise_amplitude: float
    white_noise_sigma: float
    region_size: int
    seed: int

    def __post_init__(self):
        self.signatures = np.asarray(self.signatures, dtype=np.float64)
        self.true_bases = np.asarray(self.true_bases, dtype=np.float64)
        if self.num_classes < 1:
            raise SceneError(f"num_classes must be at least 1, got {self.num_classes}")
        if self.signatures.ndim != 2 or self.signatures.shape[0] != self.num_classes:
            raise SceneError(f"expected {self.num_classes} signatures, got shape {list(self.signatures.shape)}")
        if self.true_bases.ndim != 2 or self.true_bases.shape[0] < 1 or self.true_bases.shape[1] != self.bands:
            raise SceneError(f"true bases must be k*×{self.bands} with k* >= 1, got {list(self.true_bases.shape)}")
        if self.noise_amplitude < 0 or self.white_noise_sigma < 0:
            raise SceneError("noise amplitude and white noise sigma must be non-negative")
        if self.region_size < 1 or self.rows < 1 or self.cols < 1:
            raise SceneError("rows, cols and region_size must be positive")
        for i in range(self.num_classes):
            for j in range(i + 1, self.num_classes):
                if np.array_equal(self.signatures[i], self.signatures[j]):
                    raise SceneError(f"signatures of classes {i + 1} and {j + 1} are identical")

    @property
    def bands(self) -> int:
        return self.signatures.shape[1]

    @property
    def num_true_bases(self) -> int:
        return self.true_bases.shape[0]


def gaussian_signatures(num_classes: int, bands: int) -> np.ndarray:
    """Unit-peak Gaussian bumps over the band axis, distinct center and width per class."""
    axis = np.arange(bands, dtype=np.float64)
    signatures = np.empty((num_classes, bands))
    for m in range(num_classes):
        center = (m + 1) * bands / (num_classes + 1)
        width = bands / (2.0 * (num_classes + 1)) * (1.0 + 0.25 * m)
        signatures[m] = np.exp(-0.5 * ((axis - center) / width) ** 2)
    return signatures


def make_scene_spec(num_classes: int = 4, bands: int = 32, rows: int = 64, cols: int = 64,
                    num_true_bases: int = 8, noise_amplitude: float = 10.0,
                    white_noise_sigma: float = 0.05, region_size: int = 16,
                    seed: int = 0) -> SceneSpec:
    """
    Scene spec with Gaussian signatures and unit-norm random true bases.

    The defaults are the standard desk-scale scene: 4 classes, 32 bands,
    64×64 pixels and 8 true base noises. At amplitude 10 the per-pixel noise
    outweighs the unit-peak signatures and the baseline lands in the 70-90%
    OA range on the desk profile.
    """
    if bands < 1 or num_true_bases < 1:
        raise SceneError("bands and num_true_bases must be at least 1")
    rng = np.random.default_rng([seed, 0])
    true_bases = rng.normal(size=(num_true_bases, bands))
    true_bases /= np.linalg.norm(true_bases, axis=1, keepdims=True)
    return SceneSpec(
        num_classes=num_classes,
        rows=rows,
        cols=cols,
        signatures=gaussian_signatures(num_classes, bands),
        true_bases=true_bases,
        noise_amplitude=noise_amplitude,
        white_noise_sigma=white_noise_sigma,
        region_size=region_size,
        seed=seed,
    )


def block_labels(rows: int, cols: int, region_size: int, num_classes: int) -> np.ndarray:
    """Tile the grid into region_size blocks and number them cyclically 1..C in row-major block order."""
    blocks_per_row = -(-cols // region_size)
    r = np.arange(rows)[:, None] // region_size
    c = np.arange(cols)[None, :] // region_size
    return ((r * blocks_per_row + c) % num_classes + 1).astype(np.uint16)


def generate_scene(spec: SceneSpec) -> HSICube:
    """
    Radiance = s^m + sum_i lambda_i n_i + w per pixel.

    lambda_i ~ Uniform(-1, 1) * noise_amplitude per pixel and w ~
    Normal(0, white_noise_sigma) per band. Deterministic given spec.seed.

    Raises:
        SceneError: If the region size exceeds the grid
    """
    if spec.region_size > spec.rows or spec.region_size > spec.cols:
        raise SceneError(f"region size {spec.region_size} larger than grid {spec.rows}×{spec.cols}")
    rng = np.random.default_rng([spec.seed, 1])
    labels = block_labels(spec.rows, spec.cols, spec.region_size, spec.num_classes)

    # draw order: weights, then white noise
    n_pixels = spec.rows * spec.cols
    weights = rng.uniform(-1.0, 1.0, size=(n_pixels, spec.num_true_bases)) * spec.noise_amplitude
    white = rng.normal(0.0, 1.0, size=(n_pixels, spec.bands)) * spec.white_noise_sigma
    clean = spec.signatures[labels.reshape(-1).astype(np.int64) - 1]
    pixels = clean + weights @ spec.true_bases + white

    radiance = pixels.T.reshape(spec.bands, spec.rows, spec.cols)
    logger.info(f"Generated {spec.bands}×{spec.rows}×{spec.cols} scene with {spec.num_classes} classes "
                f"(amplitude={spec.noise_amplitude}, sigma={spec.white_noise_sigma}, seed={spec.seed})")
    return HSICube(radiance=radiance, labels=labels, num_classes=spec.num_classes)


def nearest_signature_accuracy(cube: HSICube, signatures: np.ndarray) -> float:
    """Overall accuracy of assigning every labeled pixel to its nearest class signature."""
    mask = cube.labels > 0
    if not np.any(mask):
        raise SceneError("cube has no labeled pixels")
    pixels = cube.radiance[:, mask].T
    signatures = np.asarray(signatures, dtype=np.float64)
    distances = np.sum((pixels[:, None, :] - signatures[None, :, :]) ** 2, axis=2)
    predicted = np.argmin(distances, axis=1) + 1
    return float(np.mean(predicted == cube.labels[mask]))


def noise_residual(cube: HSICube, spec: SceneSpec, row: int, col: int,
                   signature: Optional[np.ndarray] = None) -> float:
    """Least-squares residual of a pixel's noise outside span(true_bases)."""
    label = int(cube.labels[row, col])
    base = spec.signatures[label - 1] if signature is None else signature
    noise = cube.radiance[:, row, col] - base
    coeffs, *_ = np.linalg.lstsq(spec.true_bases.T, noise, rcond=None)
    return float(np.linalg.norm(noise - spec.true_bases.T @ coeffs))
