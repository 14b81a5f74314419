"""
Patch extraction and train/test splitting for spectral-spatial classification.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .cube_io import HSICube
from .scene import SceneError

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class PatchSet:
    """Patches of one neighbor size with their center labels and coordinates."""
    patches: np.ndarray
    labels: np.ndarray
    coords: np.ndarray
    window: int

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(eq=False)
class Split:
    """Train and test pixels as (row, col, class) rows."""
    train: np.ndarray
    test: np.ndarray


def reflect_indices(indices: np.ndarray, extent: int) -> np.ndarray:
    """Mirror indices into [0, extent) without repeating the edge sample."""
    indices = np.asarray(indices, dtype=np.int64)
    if extent == 1:
        return np.zeros_like(indices)
    # -1 -> 1, extent -> extent - 2
    period = 2 * (extent - 1)
    folded = np.mod(indices, period)
    return np.where(folded >= extent, period - folded, folded)


def extract_patch(cube: HSICube, row: int, col: int, window: int) -> np.ndarray:
    """
    The window×window neighborhood of a labeled pixel across all bands.

    Borders are mirror-reflected, so no read ever leaves the cube.

    Raises:
        SceneError: If the window is even or the center pixel is unlabeled
    """
    if window < 1 or window % 2 == 0:
        raise SceneError(f"neighbor size must be odd, got {window}")
    if not (0 <= row < cube.rows and 0 <= col < cube.cols):
        raise SceneError(f"pixel ({row}, {col}) outside {cube.rows}×{cube.cols} cube")
    if cube.labels[row, col] == 0:
        raise SceneError(f"pixel ({row}, {col}) is unlabeled")
    half = window // 2
    row_idx = reflect_indices(np.arange(row - half, row + half + 1), cube.rows)
    col_idx = reflect_indices(np.arange(col - half, col + half + 1), cube.cols)
    return cube.radiance[:, row_idx[:, None], col_idx[None, :]]


def extract_patches(cube: HSICube, coords: np.ndarray, window: int) -> PatchSet:
    """Patches for a list of (row, col, class) coordinates."""
    coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
    patches = np.empty((len(coords), cube.bands, window, window))
    for i, (row, col, _) in enumerate(coords):
        patches[i] = extract_patch(cube, int(row), int(col), window)
    return PatchSet(patches=patches, labels=coords[:, 2].copy(), coords=coords, window=window)


def labeled_coords(cube: HSICube) -> np.ndarray:
    rows, cols = np.nonzero(cube.labels)
    return np.stack([rows, cols, cube.labels[rows, cols].astype(np.int64)], axis=1)


def split_train_test(cube: HSICube, per_class: int, seed: int) -> Split:
    """
    Draw per_class training pixels per class without replacement.

    The remaining labeled pixels form the test set, grouped by class and
    row-major within a class.

    Raises:
        SceneError: If a class has no more than per_class labeled pixels
    """
    if per_class < 1:
        raise SceneError(f"per_class must be at least 1, got {per_class}")
    rng = np.random.default_rng([seed, 0])
    coords = labeled_coords(cube)
    train, test = [], []
    for m in range(1, cube.num_classes + 1):
        members = coords[coords[:, 2] == m]
        if len(members) <= per_class:
            raise SceneError(f"class {m} has {len(members)} labeled pixels, need more than {per_class}")
        order = rng.permutation(len(members))
        chosen = np.zeros(len(members), dtype=bool)
        chosen[order[:per_class]] = True
        train.append(members[order[:per_class]])
        test.append(members[~chosen])
    split = Split(train=np.concatenate(train), test=np.concatenate(test))
    logger.info(f"Split {len(split.train)} train / {len(split.test)} test pixels ({per_class} per class)")
    return split


def export_split_csv(split: Split, path: Union[str, Path]) -> Path:
    """Write row,col,class,role for every pixel of the split."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(["row", "col", "class", "role"])
        for role, rows in (("train", split.train), ("test", split.test)):
            for row, col, label in rows:
                writer.writerow([int(row), int(col), int(label), role])
    return path
