#!/usr/bin/env python3
"""
HDNM Checkpoints

Layout (little-endian): magic "HDNM", format version u32, then blocks of
(name length u32, name bytes, rank u32, extents u32 each, float64 payload)
until the end of the file. Besides the trainable parameters a checkpoint
carries the model dims, the noise-space and center hyperparameters, the
noise-space bases and the class centers.

The bases block is the noise space's own serialization (k, d, then the
row-major payload) behind its name and rank, so it reads like any other
rank-2 block.
"""

import logging
import struct
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from autodiff import Tensor
from noise import NoiseSpaceError, UpdateSign, from_bytes, to_bytes
from .backbone import ModelDims, parameter_shapes
from .classifier import CenterBank, ModelState

logger = logging.getLogger(__name__)

MAGIC = b"HDNM"
FORMAT_VERSION = 1
BASES_BLOCK = "noise_space.bases"
_U32 = struct.Struct("<I")
_SIGN_CODES = {UpdateSign.DESCENT: 0.0, UpdateSign.AS_WRITTEN: 1.0}


class CheckpointError(Exception):
    """Custom exception for unreadable or inconsistent checkpoints"""
    pass


def _array_body(values: np.ndarray) -> bytes:
    header = _U32.pack(values.ndim) + b"".join(_U32.pack(extent) for extent in values.shape)
    return header + np.ascontiguousarray(values, dtype="<f8").tobytes()


def _blocks(state: ModelState) -> List[Tuple[str, bytes]]:
    """(name, rank + extents + payload) per block, in file order."""
    dims, space = state.dims, state.noise_space
    meta_dims = np.array([dims.bands, dims.window, dims.feature_dim, dims.num_classes, dims.num_bases],
                         dtype=np.float64)
    meta_hyper = np.array([space.alpha, space.beta, space.epsilon, state.centers.gamma,
                           _SIGN_CODES[space.update_sign]])
    blocks = [("meta.dims", _array_body(meta_dims)), ("meta.hyper", _array_body(meta_hyper))]
    blocks.extend((name, _array_body(state.params[name].data)) for name in parameter_shapes(dims))
    blocks.append((BASES_BLOCK, _U32.pack(2) + to_bytes(space)))
    blocks.append(("centers", _array_body(state.centers.centers)))
    return blocks


def checkpoint_to_bytes(state: ModelState) -> bytes:
    parts = [MAGIC, _U32.pack(FORMAT_VERSION)]
    for name, body in _blocks(state):
        encoded = name.encode("utf-8")
        parts.extend((_U32.pack(len(encoded)), encoded, body))
    return b"".join(parts)


def _read_blocks(payload: bytes) -> Tuple[Dict[str, np.ndarray], Dict[str, bytes]]:
    """Arrays by name, plus each block's bytes after its rank field."""
    if len(payload) < 8 or payload[:4] != MAGIC:
        raise CheckpointError(f"bad magic {payload[:4]!r}, expected {MAGIC!r}")
    (version,) = _U32.unpack_from(payload, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")

    def take(offset: int, size: int) -> int:
        if offset + size > len(payload):
            raise CheckpointError(f"truncated checkpoint at byte {offset}")
        return offset + size

    blocks: Dict[str, np.ndarray] = {}
    tails: Dict[str, bytes] = {}
    offset = 8
    while offset < len(payload):
        end = take(offset, 4)
        (name_len,) = _U32.unpack_from(payload, offset)
        offset, end = end, take(end, name_len)
        name = payload[offset:end].decode("utf-8")
        offset, end = end, take(end, 4)
        (rank,) = _U32.unpack_from(payload, offset)
        tail_start = end
        offset, end = end, take(end, 4 * rank)
        shape = struct.unpack_from(f"<{rank}I", payload, offset)
        count = int(np.prod(shape, dtype=np.int64))
        offset, end = end, take(end, 8 * count)
        # a repeated name keeps the last block
        blocks[name] = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
        tails[name] = payload[tail_start:end]
        offset = end
    return blocks, tails


def checkpoint_from_bytes(payload: bytes) -> ModelState:
    """
    Decode a checkpoint into a model state.

    Raises:
        CheckpointError: On bad magic or version, truncation, or missing and
            mis-shaped blocks
    """
    blocks, tails = _read_blocks(payload)
    for required in ("meta.dims", "meta.hyper", BASES_BLOCK, "centers"):
        if required not in blocks:
            raise CheckpointError(f"checkpoint lacks block '{required}'")
    bands, window, feature_dim, num_classes, num_bases = (int(v) for v in blocks["meta.dims"])
    dims = ModelDims(bands=bands, window=window, feature_dim=feature_dim, num_classes=num_classes,
                     num_bases=num_bases)
    alpha, beta, epsilon, gamma, sign_code = (float(v) for v in blocks["meta.hyper"])

    params = {}
    for name, shape in parameter_shapes(dims).items():
        if name not in blocks:
            raise CheckpointError(f"checkpoint lacks parameter '{name}'")
        if blocks[name].shape != shape:
            raise CheckpointError(f"parameter '{name}' has shape {list(blocks[name].shape)}, expected {list(shape)}")
        params[name] = Tensor(blocks[name])
    if blocks[BASES_BLOCK].shape != (num_bases, feature_dim):
        raise CheckpointError("noise space bases do not match the stored dims")
    if blocks["centers"].shape != (num_classes, feature_dim):
        raise CheckpointError("centers do not match the stored dims")

    # sign code: 0 descent, 1 as-written
    sign = UpdateSign.AS_WRITTEN if sign_code == 1.0 else UpdateSign.DESCENT
    try:
        space = from_bytes(tails[BASES_BLOCK], alpha=alpha, beta=beta, epsilon=epsilon, update_sign=sign)
    except NoiseSpaceError as e:
        raise CheckpointError(f"bad noise space block: {e}") from e
    centers = CenterBank(blocks["centers"], gamma=gamma)
    return ModelState(dims=dims, params=params, noise_space=space, centers=centers)


def save_checkpoint(state: ModelState, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = checkpoint_to_bytes(state)
    path.write_bytes(payload)
    logger.info(f"Saved checkpoint to {path} ({len(payload)} bytes)")
    return path


def load_checkpoint(path: Union[str, Path]) -> ModelState:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint not found: {path}")
    return checkpoint_from_bytes(path.read_bytes())
