#!/usr/bin/env python3
"""
HSIC Cube Format

Bit-exact binary storage for hyperspectral cubes. Layout (little-endian):
magic "HSIC", version u32, bands u32, rows u32, cols u32, classes u32,
radiance float64 row-major band-outermost, labels u16 row-major.
"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

logger = logging.getLogger(__name__)

MAGIC = b"HSIC"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIII")
_MAX_EXTENT = 1 << 20
_MAX_CLASSES = np.iinfo(np.uint16).max


class CubeFormatError(Exception):
    """Custom exception for malformed or truncated cube files"""
    pass


@dataclass(eq=False)
class HSICube:
    """
    Radiance cube with per-pixel labels.

    Label 0 marks an unlabeled pixel; classes are numbered 1..num_classes.
    """
    radiance: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.radiance = np.asarray(self.radiance, dtype=np.float64)
        self.labels = np.asarray(self.labels).astype(np.uint16)
        if self.radiance.ndim != 3:
            raise CubeFormatError(f"radiance must be bands×rows×cols, got shape {list(self.radiance.shape)}")
        if self.labels.shape != self.radiance.shape[1:]:
            raise CubeFormatError(
                f"labels {list(self.labels.shape)} do not match spatial extents {list(self.radiance.shape[1:])}")
        if not np.all(np.isfinite(self.radiance)):
            raise CubeFormatError("radiance must be finite")
        if self.labels.size and int(self.labels.max()) > self.num_classes:
            raise CubeFormatError(f"label {int(self.labels.max())} exceeds class count {self.num_classes}")

    @property
    def bands(self) -> int:
        return self.radiance.shape[0]

    @property
    def rows(self) -> int:
        return self.radiance.shape[1]

    @property
    def cols(self) -> int:
        return self.radiance.shape[2]

    def equals(self, other: "HSICube") -> bool:
        """Bit-exact comparison of extents, radiance, labels and class count."""
        return (self.num_classes == other.num_classes
                and self.radiance.shape == other.radiance.shape
                and self.radiance.tobytes() == other.radiance.tobytes()
                and np.array_equal(self.labels, other.labels))


def cube_to_bytes(cube: HSICube) -> bytes:
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, cube.bands, cube.rows, cube.cols, cube.num_classes)
    radiance = np.ascontiguousarray(cube.radiance, dtype="<f8").tobytes()
    labels = np.ascontiguousarray(cube.labels, dtype="<u2").tobytes()
    return header + radiance + labels


def cube_from_bytes(payload: bytes) -> HSICube:
    """
    Decode an HSIC payload.

    Raises:
        CubeFormatError: On bad magic, unknown version, extent overflow,
            or a payload that is truncated or has trailing bytes
    """
    if len(payload) < _HEADER.size:
        raise CubeFormatError(f"truncated header: {len(payload)} bytes")
    magic, version, bands, rows, cols, classes = _HEADER.unpack_from(payload)
    if magic != MAGIC:
        raise CubeFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise CubeFormatError(f"unsupported cube format version {version}")
    if min(bands, rows, cols) < 1 or max(bands, rows, cols) > _MAX_EXTENT or classes > _MAX_CLASSES:
        raise CubeFormatError(f"extents out of range: bands={bands}, rows={rows}, cols={cols}, classes={classes}")

    # float64 radiance, u16 labels
    n_radiance = bands * rows * cols * 8
    n_labels = rows * cols * 2
    expected = _HEADER.size + n_radiance + n_labels
    if len(payload) != expected:
        kind = "truncated payload" if len(payload) < expected else "trailing bytes"
        raise CubeFormatError(f"{kind}: {len(payload)} bytes, expected {expected}")

    radiance = np.frombuffer(payload, dtype="<f8", count=bands * rows * cols, offset=_HEADER.size)
    labels = np.frombuffer(payload, dtype="<u2", count=rows * cols, offset=_HEADER.size + n_radiance)
    return HSICube(
        radiance=radiance.reshape(bands, rows, cols).astype(np.float64),
        labels=labels.reshape(rows, cols).astype(np.uint16),
        num_classes=classes,
    )


def save_cube(cube: HSICube, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = cube_to_bytes(cube)
    path.write_bytes(payload)
    logger.info(f"Saved {cube.bands}×{cube.rows}×{cube.cols} cube to {path} ({len(payload)} bytes)")
    return path


def load_cube(path: Union[str, Path]) -> HSICube:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Cube not found: {path}")
    return cube_from_bytes(path.read_bytes())
