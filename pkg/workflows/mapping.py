#!/usr/bin/env python3
"""
Classification Maps

Renders per-pixel class labels as binary PPM (P6) images with a fixed
palette. Index 0 (unlabeled) is black; class m uses palette entry m.
"""

import logging
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from models import ModelState, predict
from scenes import HSICube, extract_patches, labeled_coords

logger = logging.getLogger(__name__)

Color = Tuple[int, int, int]

PALETTE: Tuple[Color, ...] = (
    (0, 0, 0),
    (230, 25, 75),
    (60, 180, 75),
    (255, 225, 25),
    (0, 130, 200),
    (245, 130, 48),
    (145, 30, 180),
    (70, 240, 240),
    (240, 50, 230),
    (210, 245, 60),
    (250, 190, 212),
    (0, 128, 128),
    (220, 190, 255),
    (170, 110, 40),
    (255, 250, 200),
    (128, 0, 0),
    (170, 255, 195),
    (128, 128, 0),
    (255, 215, 180),
    (0, 0, 128),
    (128, 128, 128),
)


def map_to_bytes(labels: np.ndarray, palette: Sequence[Color] = PALETTE) -> bytes:
    """
    Encode a rows×cols label image as P6 bytes.

    Raises:
        ValueError: If labels are not 2-D or reference entries the palette lacks
    """
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError(f"label map must be rows×cols, got shape {list(labels.shape)}")
    table = np.asarray(palette, dtype=np.int64)
    if table.ndim != 2 or table.shape[1] != 3 or np.any(table < 0) or np.any(table > 255):
        raise ValueError("palette must be a list of RGB triples in [0, 255]")
    if labels.size and (labels.min() < 0 or labels.max() >= len(table)):
        raise ValueError(f"palette has {len(table)} entries, labels need {int(labels.max()) + 1}")
    rows, cols = labels.shape
    header = f"P6\n{cols} {rows}\n255\n".encode("ascii")
    return header + table.astype(np.uint8)[labels.astype(np.int64)].tobytes()


def render_map(labels: np.ndarray, path: Union[str, Path], palette: Sequence[Color] = PALETTE) -> Path:
    """Write a label image as a binary PPM file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = map_to_bytes(labels, palette)
    path.write_bytes(payload)
    logger.info(f"Wrote {labels.shape[0]}×{labels.shape[1]} map to {path}")
    return path


def predict_map(state: ModelState, cube: HSICube, baseline: bool = False,
                window: Optional[int] = None) -> np.ndarray:
    """Predicted classes (1-based) at every labeled pixel, 0 elsewhere."""
    window = state.dims.window if window is None else window
    coords = labeled_coords(cube)
    result = np.zeros(cube.labels.shape, dtype=np.int64)
    if len(coords) == 0:
        return result
    patches = extract_patches(cube, coords, window)
    predicted = predict(state, patches.patches, baseline)
    result[coords[:, 0], coords[:, 1]] = predicted + 1
    return result
