#!/usr/bin/env python3
"""
Tensor Autodiff

Dense float64 tensors with a define-by-run tape for reverse-mode
differentiation. Every learned quantity of the classifier (backbone
features, extracted noise, reconstructed noise, clean features) is
built from the primitives in this module.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

logger = logging.getLogger(__name__)

Number = Union[int, float]
BackwardFn = Callable[[np.ndarray, Tuple[bool, ...]], Sequence[Optional[np.ndarray]]]


class AutodiffError(Exception):
    """Custom exception for tensor shape errors and tape misuse"""
    pass


class GradHandle(NamedTuple):
    """Position of a tracked tensor on the tape that recorded it."""
    tape: "Tape"
    index: int


class Tensor:
    """
    Immutable n-dimensional float64 array with an optional tape handle.

    Constants have ``grad_id`` set to None. Tracked tensors are produced by
    ``Tape.watch`` or by any primitive applied to a tracked operand.
    """

    __slots__ = ("_data", "grad_id")

    def __init__(self, data, grad_id: Optional[GradHandle] = None):
        array = np.array(data, dtype=np.float64)
        array.setflags(write=False)
        self._data = array
        self.grad_id = grad_id

    @classmethod
    def _wrap(cls, array: np.ndarray, grad_id: Optional[GradHandle] = None) -> "Tensor":
        # primitives hand over fresh arrays
        out = cls.__new__(cls)
        array = np.asarray(array, dtype=np.float64)
        array.setflags(write=False)
        out._data = array
        out.grad_id = grad_id
        return out

    @property
    def data(self) -> np.ndarray:
        """Read-only view of the values."""
        return self._data

    @property
    def shape(self) -> Tuple[int, ...]:
        return self._data.shape

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return int(self._data.size)

    @property
    def tracked(self) -> bool:
        return self.grad_id is not None

    def numpy(self) -> np.ndarray:
        """Writable copy of the values."""
        return self._data.copy()

    def tolist(self):
        return self._data.tolist()

    def item(self) -> float:
        if self.size != 1:
            raise AutodiffError(f"item() needs a single value, tensor has shape {list(self.shape)}")
        return float(self._data.reshape(-1)[0])

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: Union["Tensor", Number]) -> "Tensor":
        if isinstance(other, Tensor) and other.shape == self.shape:
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __repr__(self) -> str:
        flag = ", tracked" if self.tracked else ""
        return f"Tensor(shape={list(self.shape)}{flag}, data={self._data.tolist()!r})"


@dataclass
class TapeNode:
    """One recorded primitive application."""
    op: str
    inputs: Tuple[Optional[int], ...]
    output: int
    backward: BackwardFn


class Tape:
    """
    Append-only record of primitive applications for one forward pass.

    Handles are issued in increasing order, so every node's inputs precede
    it and a reverse sweep over ``nodes`` is a valid backward order. A tape
    is single-threaded and is rebuilt for every training step.
    """

    def __init__(self):
        self.nodes: List[TapeNode] = []
        self._issued = 0

    def __len__(self) -> int:
        return len(self.nodes)

    def _issue(self) -> int:
        index = self._issued
        self._issued += 1
        return index

    def watch(self, tensor: Union[Tensor, np.ndarray]) -> Tensor:
        """Return a tracked leaf sharing the values of ``tensor``."""
        data = tensor.data if isinstance(tensor, Tensor) else np.asarray(tensor, dtype=np.float64)
        return Tensor._wrap(data, GradHandle(self, self._issue()))

    def record(self, op: str, operands: Sequence[Tensor], out: np.ndarray, backward: BackwardFn) -> Tensor:
        inputs = tuple(t.grad_id.index if t.grad_id is not None else None for t in operands)
        handle = GradHandle(self, self._issue())
        self.nodes.append(TapeNode(op=op, inputs=inputs, output=handle.index, backward=backward))
        return Tensor._wrap(out, handle)


class GradientMap:
    """Gradients of one backward sweep, looked up by tracked tensor."""

    def __init__(self, tape: Tape, grads: Dict[int, np.ndarray]):
        self.tape = tape
        self._grads = grads

    def _index(self, tensor: Tensor) -> int:
        if tensor.grad_id is None or tensor.grad_id.tape is not self.tape:
            raise AutodiffError("tensor is not tracked on this tape")
        return tensor.grad_id.index

    def __contains__(self, tensor: Tensor) -> bool:
        return self._index(tensor) in self._grads

    def __getitem__(self, tensor: Tensor) -> Tensor:
        index = self._index(tensor)
        if index not in self._grads:
            raise KeyError("loss does not depend on this tensor")
        return Tensor._wrap(np.broadcast_to(self._grads[index], tensor.shape).copy())

    def wrt(self, tensor: Tensor) -> Tensor:
        """Gradient for ``tensor``, zeros when the loss does not reach it."""
        if tensor in self:
            return self[tensor]
        return Tensor._wrap(np.zeros(tensor.shape))


def _record(op: str, operands: Sequence[Tensor], out: np.ndarray, backward: BackwardFn) -> Tensor:
    tape = None
    for operand in operands:
        if operand.grad_id is None:
            continue
        if tape is None:
            tape = operand.grad_id.tape
        elif operand.grad_id.tape is not tape:
            raise AutodiffError(f"{op}: operands are tracked on different tapes")
    if tape is None:
        return Tensor._wrap(out)
    return tape.record(op, operands, out, backward)


def _as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _require_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise AutodiffError(f"{op}: shape mismatch {list(a.shape)} vs {list(b.shape)}")


# ===================
# Constructors
# ===================

def tensor(shape: Sequence[int], values: Sequence[float]) -> Tensor:
    """
    Build a constant tensor from a shape and row-major values.

    Args:
        shape: List of positive extents (empty for a scalar)
        values: Flat values, ``product(shape)`` of them

    Returns:
        Constant tensor, not recorded on any tape

    Raises:
        AutodiffError: If an extent is not positive or the value count differs
    """
    extents = tuple(int(s) for s in shape)
    if any(s < 1 for s in extents):
        raise AutodiffError(f"extents must be positive, got {list(extents)}")
    flat = np.asarray(values, dtype=np.float64).reshape(-1)
    expected = int(np.prod(extents, dtype=np.int64))
    if flat.size != expected:
        raise AutodiffError(f"shape {list(extents)} needs {expected} values, got {flat.size}")
    return Tensor(flat.reshape(extents))


def zeros(shape: Sequence[int]) -> Tensor:
    return Tensor._wrap(np.zeros(tuple(shape)))


def ones(shape: Sequence[int]) -> Tensor:
    return Tensor._wrap(np.ones(tuple(shape)))


# ===================
# Linear algebra
# ===================

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product of an m×n matrix with an n×p matrix or an n-vector.

    Raises:
        AutodiffError: If ranks are unsupported or inner extents differ
    """
    if a.ndim != 2 or b.ndim not in (1, 2):
        raise AutodiffError(f"matmul expects a matrix and a matrix or vector, got ranks {a.ndim} and {b.ndim}")
    if a.shape[1] != b.shape[0]:
        raise AutodiffError(f"matmul inner extents differ: {list(a.shape)} x {list(b.shape)}")
    left, right = a.data, b.data

    def backward(grad, needs):
        grad_a = None
        if needs[0]:
            grad_a = np.outer(grad, right) if right.ndim == 1 else grad @ right.T
        grad_b = left.T @ grad if needs[1] else None
        return grad_a, grad_b

    return _record("matmul", (a, b), left @ right, backward)


def conv3d(inputs: Tensor, kernels: Tensor, stride: int = 1, bias: Optional[Tensor] = None) -> Tensor:
    """
    Valid (no padding) 3-D convolution.

    Args:
        inputs: C×D×H×W volume
        kernels: K×C×d×h×w filter bank
        stride: Step along every spatial axis, at least 1
        bias: Optional K-vector added to each output channel

    Returns:
        K×D'×H'×W' tensor with extent floor((in - kernel) / stride) + 1 per axis

    Raises:
        AutodiffError: If ranks or channels disagree, the kernel is larger than
            the input, or the stride is not positive
    """
    if inputs.ndim != 4 or kernels.ndim != 5:
        raise AutodiffError(f"conv3d expects C×D×H×W input and K×C×d×h×w kernels, got ranks {inputs.ndim} and {kernels.ndim}")
    if stride < 1:
        raise AutodiffError(f"stride must be at least 1, got {stride}")
    x, k = inputs.data, kernels.data
    channels, depth, height, width = x.shape
    n_kernels, k_channels, kd, kh, kw = k.shape
    if k_channels != channels:
        raise AutodiffError(f"kernel channels {k_channels} do not match input channels {channels}")
    if kd > depth or kh > height or kw > width:
        raise AutodiffError(f"kernel {[kd, kh, kw]} larger than input {[depth, height, width]}")
    if bias is not None and bias.shape != (n_kernels,):
        raise AutodiffError(f"bias must have shape [{n_kernels}], got {list(bias.shape)}")

    windows = sliding_window_view(x, (kd, kh, kw), axis=(1, 2, 3))[:, ::stride, ::stride, ::stride]
    out = np.moveaxis(np.tensordot(windows, k, axes=([0, 4, 5, 6], [1, 2, 3, 4])), 3, 0)
    if bias is not None:
        out = out + bias.data[:, None, None, None]
    out_d, out_h, out_w = out.shape[1:]

    def backward(grad, needs):
        grad_x = None
        if needs[0]:
            grad_x = np.zeros_like(x)
            for i in range(kd):
                for j in range(kh):
                    for m in range(kw):
                        contrib = np.tensordot(k[:, :, i, j, m], grad, axes=([0], [0]))
                        grad_x[:,
                               i:i + stride * (out_d - 1) + 1:stride,
                               j:j + stride * (out_h - 1) + 1:stride,
                               m:m + stride * (out_w - 1) + 1:stride] += contrib
        grad_k = np.tensordot(grad, windows, axes=([1, 2, 3], [1, 2, 3])) if needs[1] else None
        grad_bias = grad.sum(axis=(1, 2, 3)) if len(needs) > 2 and needs[2] else None
        return grad_x, grad_k, grad_bias

    operands = (inputs, kernels) if bias is None else (inputs, kernels, bias)
    return _record("conv3d", operands, out, backward)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    """Same values in row-major order under a new shape."""
    extents = tuple(int(s) for s in shape)
    if int(np.prod(extents, dtype=np.int64)) != x.size:
        raise AutodiffError(f"cannot reshape {list(x.shape)} to {list(extents)}")
    source_shape = x.shape

    def backward(grad, needs):
        return (grad.reshape(source_shape),)

    return _record("reshape", (x,), x.data.reshape(extents), backward)


# ===================
# Elementwise
# ===================

def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("add", a, b)
    return _record("add", (a, b), a.data + b.data, lambda grad, needs: (grad, grad))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("sub", a, b)
    return _record("sub", (a, b), a.data - b.data, lambda grad, needs: (grad, -grad))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape("mul", a, b)
    left, right = a.data, b.data
    return _record("mul", (a, b), left * right, lambda grad, needs: (grad * right, grad * left))


def scale(x: Tensor, factor: Union[Tensor, Number]) -> Tensor:
    """
    Multiply every entry by a scalar.

    ``factor`` may be a plain number or a scalar tensor; a tracked scalar
    tensor receives the gradient sum(grad * x).
    """
    values = x.data
    if not isinstance(factor, Tensor):
        s = float(factor)
        return _record("scale", (x,), values * s, lambda grad, needs: (grad * s,))
    if factor.size != 1:
        raise AutodiffError(f"scale factor must be a scalar, got shape {list(factor.shape)}")
    s = factor.data.reshape(())
    factor_shape = factor.shape

    def backward(grad, needs):
        grad_s = np.sum(grad * values).reshape(factor_shape) if needs[1] else None
        return grad * s, grad_s

    return _record("scale", (x, factor), values * s, backward)


def relu(x: Tensor) -> Tensor:
    values = x.data
    mask = values > 0
    return _record("relu", (x,), np.where(mask, values, 0.0), lambda grad, needs: (grad * mask,))


def reciprocal(x: Tensor) -> Tensor:
    """Elementwise 1/x; zero entries are rejected."""
    values = x.data
    if np.any(values == 0):
        raise AutodiffError("reciprocal of a zero entry")
    out = 1.0 / values
    return _record("reciprocal", (x,), out, lambda grad, needs: (-grad * out * out,))


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "scale": scale,
    "relu": relu,
    "reciprocal": reciprocal,
}


def elementwise(op: str, *operands) -> Tensor:
    """Dispatch a pointwise primitive by name (add, sub, mul, scale, relu, reciprocal)."""
    if op not in _ELEMENTWISE:
        raise AutodiffError(f"unknown elementwise op '{op}'")
    return _ELEMENTWISE[op](*operands)


# ===================
# Reductions
# ===================

def sum_(x: Tensor) -> Tensor:
    shape = x.shape
    return _record("sum", (x,), np.sum(x.data), lambda grad, needs: (np.full(shape, grad),))


def mean(x: Tensor) -> Tensor:
    shape, count = x.shape, x.size
    return _record("mean", (x,), np.sum(x.data) / count, lambda grad, needs: (np.full(shape, grad / count),))


def l2_norm(x: Tensor) -> Tensor:
    """Euclidean norm; the zero vector maps to 0 with a zero gradient."""
    values = x.data
    norm = float(np.sqrt(np.sum(values * values)))

    def backward(grad, needs):
        if norm == 0.0:
            return (np.zeros_like(values),)
        return (grad * values / norm,)

    return _record("l2_norm", (x,), np.asarray(norm), backward)


def dot(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 1 or a.shape != b.shape:
        raise AutodiffError(f"dot expects equal-length vectors, got {list(a.shape)} and {list(b.shape)}")
    left, right = a.data, b.data
    return _record("dot", (a, b), np.dot(left, right), lambda grad, needs: (grad * right, grad * left))


_REDUCTIONS = {
    "sum": sum_,
    "mean": mean,
    "l2_norm": l2_norm,
    "dot": dot,
}


def reduce(op: str, *operands) -> Tensor:
    """Dispatch a reduction to a scalar by name (sum, l2_norm, dot, mean)."""
    if op not in _REDUCTIONS:
        raise AutodiffError(f"unknown reduction '{op}'")
    return _REDUCTIONS[op](*operands)


# ===================
# Loss
# ===================

def softmax_cross_entropy(logits: Tensor, label: int) -> Tensor:
    """
    Cross-entropy of a softmax over a logit vector.

    The maximum logit is subtracted before exponentiation, so saturated
    logits stay finite. Backward is softmax - onehot.

    Raises:
        AutodiffError: If logits are not a vector or the label is out of range
    """
    if logits.ndim != 1:
        raise AutodiffError(f"logits must be a vector, got shape {list(logits.shape)}")
    n_classes = logits.shape[0]
    if not 0 <= label < n_classes:
        raise AutodiffError(f"label {label} out of range for {n_classes} classes")
    shifted = logits.data - np.max(logits.data)
    log_norm = np.log(np.sum(np.exp(shifted)))
    loss = log_norm - shifted[label]
    probs = np.exp(shifted - log_norm)

    def backward(grad, needs):
        delta = probs.copy()
        delta[label] -= 1.0
        return (grad * delta,)

    return _record("softmax_cross_entropy", (logits,), np.asarray(loss), backward)


# ===================
# Backward sweep
# ===================

def backward(tape: Tape, loss: Tensor) -> GradientMap:
    """
    Reverse sweep from a scalar loss.

    Args:
        tape: The tape the loss was recorded on
        loss: Scalar tensor; its seed gradient is 1.0

    Returns:
        GradientMap covering every tracked tensor the loss depends on

    Raises:
        AutodiffError: If the loss is not a scalar or not on this tape
    """
    if loss.shape != ():
        raise AutodiffError(f"loss must be a scalar, got shape {list(loss.shape)}")
    if loss.grad_id is None or loss.grad_id.tape is not tape:
        raise AutodiffError("loss is not recorded on this tape")

    grads: Dict[int, np.ndarray] = {loss.grad_id.index: np.ones(())}
    for node in reversed(tape.nodes):
        grad = grads.get(node.output)
        if grad is None:
            continue
        needs = tuple(index is not None for index in node.inputs)
        for index, input_grad in zip(node.inputs, node.backward(grad, needs)):
            if index is None or input_grad is None:
                continue
            grads[index] = grads[index] + input_grad if index in grads else input_grad
    logger.debug(f"Backward over {len(tape.nodes)} nodes reached {len(grads)} handles")
    return GradientMap(tape, grads)
