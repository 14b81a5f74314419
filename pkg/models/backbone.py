#!/usr/bin/env python3
"""
3-D CNN Backbone

Two valid 3-D convolution blocks followed by a fully connected layer that
maps a spectral-spatial patch to a d-dimensional feature vector. Kernel
extents shrink to fit inputs that are smaller than the nominal 7×3×3 and
5×2×2 kernels (single-pixel patches, very few bands).
"""

import logging
from dataclasses import dataclass
from typing import Dict, Mapping, Tuple, Union

import numpy as np

from autodiff import Tensor, add, conv3d, matmul, relu, reshape

logger = logging.getLogger(__name__)

CONV1_KERNELS = 8
CONV2_KERNELS = 16
CONV1_EXTENT = (7, 3, 3)
CONV2_EXTENT = (5, 2, 2)
# extractor weights start at this fraction of the 1/sqrt(d) bound
EXTRACTOR_GAIN = 0.01

Extent = Tuple[int, int, int]


class ModelError(Exception):
    """Custom exception for model construction and forward/training errors"""
    pass


def _fit(nominal: Extent, available: Extent) -> Extent:
    return tuple(min(n, a) for n, a in zip(nominal, available))


def _valid_out(extent: Extent, kernel: Extent) -> Extent:
    return tuple(e - k + 1 for e, k in zip(extent, kernel))


@dataclass(frozen=True)
class ModelDims:
    """Sizes shared by every part of the classifier."""
    bands: int
    window: int
    feature_dim: int
    num_classes: int
    num_bases: int

    def __post_init__(self):
        for name in ("bands", "window", "feature_dim", "num_classes", "num_bases"):
            if getattr(self, name) < 1:
                raise ModelError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.window % 2 == 0:
            raise ModelError(f"window must be odd, got {self.window}")

    @property
    def input_extent(self) -> Extent:
        return (self.bands, self.window, self.window)

    @property
    def conv1_kernel(self) -> Extent:
        return _fit(CONV1_EXTENT, self.input_extent)

    @property
    def conv1_out(self) -> Extent:
        return _valid_out(self.input_extent, self.conv1_kernel)

    @property
    def conv2_kernel(self) -> Extent:
        return _fit(CONV2_EXTENT, self.conv1_out)

    @property
    def conv2_out(self) -> Extent:
        return _valid_out(self.conv1_out, self.conv2_kernel)

    @property
    def flat_size(self) -> int:
        return CONV2_KERNELS * int(np.prod(self.conv2_out))


def parameter_shapes(dims: ModelDims) -> Dict[str, Tuple[int, ...]]:
    """Every trainable tensor of the classifier, in checkpoint order."""
    d, c = dims.feature_dim, dims.num_classes
    return {
        "backbone.conv1.weight": (CONV1_KERNELS, 1) + dims.conv1_kernel,
        "backbone.conv1.bias": (CONV1_KERNELS,),
        "backbone.conv2.weight": (CONV2_KERNELS, CONV1_KERNELS) + dims.conv2_kernel,
        "backbone.conv2.bias": (CONV2_KERNELS,),
        "backbone.fc.weight": (d, dims.flat_size),
        "backbone.fc.bias": (d,),
        "extractor.weight": (d, d),
        "extractor.bias": (d,),
        "head.weight": (c, d),
        "head.bias": (c,),
    }


def init_parameters(dims: ModelDims, rng: np.random.Generator,
                    extractor_gain: float = EXTRACTOR_GAIN) -> Dict[str, Tensor]:
    """
    He-uniform weights for the backbone, 1/sqrt(fan_in) uniform elsewhere, zero biases.

    The extractor bound is scaled by ``extractor_gain``. The reconstructed
    noise has the norm of the extracted noise, so at a small gain the full
    model starts close to the baseline.
    """
    params = {}
    for name, shape in parameter_shapes(dims).items():
        if name.endswith(".bias"):
            params[name] = Tensor(np.zeros(shape))
            continue
        fan_in = int(np.prod(shape[1:]))
        if name.startswith("backbone."):
            bound = np.sqrt(6.0 / fan_in)
        elif name == "extractor.weight":
            bound = extractor_gain / np.sqrt(fan_in)
        else:
            bound = 1.0 / np.sqrt(fan_in)
        params[name] = Tensor(rng.uniform(-bound, bound, size=shape))
    return params


def backbone_forward(patch: Union[Tensor, np.ndarray], params: Mapping[str, Tensor], dims: ModelDims) -> Tensor:
    """
    Features phi(x) of one bands×w×w patch.

    Raises:
        ModelError: If the patch extents do not match the configured bands and window
    """
    if not isinstance(patch, Tensor):
        patch = Tensor(patch)
    if patch.shape != dims.input_extent:
        raise ModelError(f"patch shape {list(patch.shape)} does not match {list(dims.input_extent)}")
    volume = reshape(patch, (1,) + dims.input_extent)
    hidden = relu(conv3d(volume, params["backbone.conv1.weight"], 1, params["backbone.conv1.bias"]))
    hidden = relu(conv3d(hidden, params["backbone.conv2.weight"], 1, params["backbone.conv2.bias"]))
    flat = reshape(hidden, (dims.flat_size,))
    return relu(add(matmul(params["backbone.fc.weight"], flat), params["backbone.fc.bias"]))
