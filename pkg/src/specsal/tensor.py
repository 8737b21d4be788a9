"""Dense tensors with a reverse-mode gradient tape.

Tensors wrap numpy arrays (row-major, 64-bit by default). Differentiable ops are
module-level functions; while a Tape is active they append a record per executed
op, and Tape.backward replays those records once each, in reverse execution
order, accumulating gradients into every Parameter that took part.

Layout conventions: feature maps are (channels, height, width); token matrices
are (tokens, channels); convolution is cross-correlation with zero padding.
"""

from __future__ import annotations

import math
import threading

import numpy as np
from scipy.special import erf, expit

from .exceptions import ShapeError

_state = threading.local()

_DEFAULT_DTYPE = np.float64


def set_default_dtype(dtype) -> None:
    """Set the dtype newly created tensors use (float32 or float64)."""
    global _DEFAULT_DTYPE
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported default dtype {dt}")
    _DEFAULT_DTYPE = dt.type


def default_dtype():
    return _DEFAULT_DTYPE


class Tensor:
    """A dense array. Pure data; gradient bookkeeping lives on the Tape."""

    __slots__ = ("data",)

    def __init__(self, data, dtype=None):
        self.data = np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"

    # Arithmetic sugar; all routes through the taped ops below.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axes=None, keepdims=False):
        return sum_over(self, axes, keepdims)

    def mean(self, axes=None, keepdims=False):
        return mean_over(self, axes, keepdims)

    def reshape(self, shape):
        return reshape(self, shape)

    def abs(self):
        return absolute(self)


class Parameter:
    """A named trainable tensor with a same-shaped gradient accumulator."""

    def __init__(self, value, name: str = "", trainable: bool = True):
        self.value = value if isinstance(value, Tensor) else Tensor(value)
        self.grad = Tensor(np.zeros_like(self.value.data))
        self.name = name
        self.trainable = trainable

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad.data[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape}, trainable={self.trainable})"


class Tape:
    """Ordered record of executed ops, enough to replay the backward pass.

    Single-owner: enter one tape at a time per thread. Ops executed while no
    tape is active are plain computations and record nothing.
    """

    def __init__(self):
        self._records = []  # (output Tensor, input Tensors, backward fn)
        self._params = []  # Parameters in first-use order
        self._param_ids = set()
        self._grads = {}  # id(tensor) -> ndarray, filled by backward()

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _tape_stack()
        assert stack and stack[-1] is self, "tape stack corrupted"
        stack.pop()
        return False

    def watch(self, param: Parameter) -> None:
        if id(param) not in self._param_ids:
            self._param_ids.add(id(param))
            self._params.append(param)

    def record(self, out: Tensor, inputs, back) -> None:
        self._records.append((out, inputs, back))

    def __len__(self):
        return len(self._records)

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(param) into .grad of every watched Parameter.

        Visits each recorded op exactly once, in reverse execution order.
        """
        if loss.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads = {id(loss): np.ones_like(loss.data)}
        for out, inputs, back in reversed(self._records):
            g = grads.get(id(out))
            if g is None:
                continue  # not on a path to the loss
            for inp, gi in zip(inputs, back(g)):
                if gi is None:
                    continue
                acc = grads.get(id(inp))
                # Rebind instead of mutating in place: backward functions may
                # return views or the upstream array itself, and numpy turns
                # 0-d results into immutable scalars.
                grads[id(inp)] = gi if acc is None else acc + gi
        self._grads = grads
        for param in self._params:
            acc = grads.get(id(param.value))
            if acc is not None:
                param.grad.data += acc

    def gradient(self, t: Tensor):
        """Gradient w.r.t. an arbitrary taped tensor from the last backward()."""
        return self._grads.get(id(t))

    def first_non_finite(self):
        """Earliest recorded op whose output holds a NaN or infinity.

        Returns (record index, op name, output Tensor), or None when every
        recorded value is finite. The op name is recovered from the backward
        closure's qualname, so records carry no extra bookkeeping.
        """
        for i, (out, _, back) in enumerate(self._records):
            if not np.isfinite(out.data).all():
                return i, back.__qualname__.split(".")[0], out
        return None


def _tape_stack():
    stack = getattr(_state, "stack", None)
    if stack is None:
        stack = _state.stack = []
    return stack


def active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


def _as_tensor(x) -> Tensor:
    if isinstance(x, Parameter):
        tape = active_tape()
        if tape is not None and x.trainable:
            tape.watch(x)
        return x.value
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _push(out: Tensor, inputs, back) -> None:
    tape = active_tape()
    if tape is not None:
        tape.record(out, inputs, back)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data + b.data)
    _push(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))
    return out


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data - b.data)
    _push(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))
    return out


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data * b.data)
    _push(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )
    return out


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data / b.data)
    _push(
        out,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )
    return out


def neg(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(-a.data)
    _push(out, (a,), lambda g: (-g,))
    return out


def power(a, exponent: float) -> Tensor:
    """Elementwise a**exponent for a constant exponent."""
    a = _as_tensor(a)
    p = float(exponent)
    out = Tensor(a.data**p)
    _push(out, (a,), lambda g: (g * p * a.data ** (p - 1.0),))
    return out


def absolute(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(np.abs(a.data))
    _push(out, (a,), lambda g: (g * np.sign(a.data),))
    return out


def log(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(np.log(a.data))
    _push(out, (a,), lambda g: (g / a.data,))
    return out


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(np.exp(a.data))
    _push(out, (a,), lambda g: (g * out.data,))
    return out


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient passes through strictly inside the bounds."""
    a = _as_tensor(a)
    out = Tensor(np.clip(a.data, lo, hi))
    inside = (a.data > lo) & (a.data < hi)
    _push(out, (a,), lambda g: (g * inside,))
    return out


# ---------------------------------------------------------------------------
# activations


def relu(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(np.maximum(a.data, 0.0))
    _push(out, (a,), lambda g: (g * (a.data > 0.0),))
    return out


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(expit(a.data))
    _push(out, (a,), lambda g: (g * out.data * (1.0 - out.data),))
    return out


def gelu(a) -> Tensor:
    """Exact GELU: x * Phi(x) with the Gaussian CDF."""
    a = _as_tensor(a)
    cdf = 0.5 * (1.0 + erf(a.data / math.sqrt(2.0)))
    out = Tensor(a.data * cdf)

    def back(g):
        pdf = np.exp(-0.5 * a.data * a.data) / math.sqrt(2.0 * math.pi)
        return (g * (cdf + a.data * pdf),)

    _push(out, (a,), back)
    return out


def softmax(a, axis: int) -> Tensor:
    """Numerically stabilized softmax along one axis (max subtracted)."""
    a = _as_tensor(a)
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"softmax axis {axis} out of range for shape {a.shape}")
    if a.shape[axis] == 0:
        raise ShapeError(f"softmax along empty axis {axis} of shape {a.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def back(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    _push(out, (a,), back)
    return out


# ---------------------------------------------------------------------------
# shape plumbing


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != a.size:
        raise ShapeError(f"cannot reshape {a.shape} to {shape}")
    out = Tensor(a.data.reshape(shape))
    _push(out, (a,), lambda g: (g.reshape(a.shape),))
    return out


def transpose2d(a) -> Tensor:
    a = _as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"transpose2d needs a 2-d tensor, got shape {a.shape}")
    out = Tensor(a.data.T)
    _push(out, (a,), lambda g: (g.T,))
    return out


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of `length` entries along one axis."""
    a = _as_tensor(a)
    if not 0 <= axis < a.ndim:
        raise ShapeError(f"narrow axis {axis} out of range for shape {a.shape}")
    if start < 0 or length < 1 or start + length > a.shape[axis]:
        raise ShapeError(
            f"narrow [{start}:{start + length}] exceeds axis {axis} of shape {a.shape}"
        )
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    out = Tensor(a.data[index])

    def back(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    _push(out, (a,), back)
    return out


def concat(parts, axis: int) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat needs at least one tensor")
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        grads = []
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            index = [slice(None)] * p.ndim
            index[axis] = slice(lo, hi)
            grads.append(g[tuple(index)])
        return tuple(grads)

    _push(out, tuple(parts), back)
    return out


def _norm_axes(axes, ndim):
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    return tuple(ax % ndim for ax in axes)


def sum_over(a, axes=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    axes = _norm_axes(axes, a.ndim)
    out = Tensor(a.data.sum(axis=axes, keepdims=keepdims))

    def back(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    _push(out, (a,), back)
    return out


def mean_over(a, axes=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    axes = _norm_axes(axes, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if a.ndim else 1
    out = Tensor(a.data.mean(axis=axes, keepdims=keepdims))

    def back(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape) / count,)

    _push(out, (a,), back)
    return out


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)
    _push(out, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))
    return out


# ---------------------------------------------------------------------------
# spatial ops on (channels, height, width) maps


def conv2d(x, kernel, stride: int = 1, padding=None, depthwise: bool = False) -> Tensor:
    """2-d cross-correlation with zero padding.

    x is (C_in, H, W); kernel is (C_out, C_in, kh, kw), or (C, 1, kh, kw) with
    depthwise=True for one kernel per channel. Kernel dims must be odd. Default
    padding preserves the spatial size at stride 1.
    """
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    if x.ndim != 3:
        raise ShapeError(f"conv2d input must be (C,H,W), got shape {x.shape}")
    if kernel.ndim != 4:
        raise ShapeError(f"conv2d kernel must be 4-d, got shape {kernel.shape}")
    c_out, c_k, kh, kw = kernel.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d kernel dims must be odd, got {kh}x{kw}")
    c_in, h, w = x.shape
    if depthwise:
        if c_k != 1 or c_out != c_in:
            raise ShapeError(
                f"depthwise conv needs kernel (C,1,kh,kw) with C={c_in}, got {kernel.shape}"
            )
    elif c_k != c_in:
        raise ShapeError(f"conv2d kernel expects {c_k} input channels, input has {c_in}")
    if padding is None:
        padding = (kh // 2, kw // 2)
    ph, pw = (padding, padding) if isinstance(padding, int) else padding
    s = int(stride)
    if s < 1:
        raise ShapeError(f"conv2d stride must be >= 1, got {stride}")
    hp, wp = h + 2 * ph, w + 2 * pw
    ho, wo = (hp - kh) // s + 1, (wp - kw) // s + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d output empty for input {x.shape}, kernel {kh}x{kw}")

    xd, kd = x.data, kernel.data
    xp = np.zeros((c_in, hp, wp), dtype=xd.dtype)
    xp[:, ph : ph + h, pw : pw + w] = xd
    out_d = np.zeros((c_out, ho, wo), dtype=xd.dtype)
    # Accumulate one shifted view per kernel offset; k*k small matmuls.
    for u in range(kh):
        for v in range(kw):
            window = xp[:, u : u + s * (ho - 1) + 1 : s, v : v + s * (wo - 1) + 1 : s]
            if depthwise:
                out_d += kd[:, 0, u, v][:, None, None] * window
            else:
                out_d += np.tensordot(kd[:, :, u, v], window, axes=([1], [0]))
    out = Tensor(out_d)

    def back(g):
        gk = np.zeros_like(kd)
        gxp = np.zeros_like(xp)
        for u in range(kh):
            for v in range(kw):
                rows = slice(u, u + s * (ho - 1) + 1, s)
                cols = slice(v, v + s * (wo - 1) + 1, s)
                window = xp[:, rows, cols]
                if depthwise:
                    gk[:, 0, u, v] = (g * window).sum(axis=(1, 2))
                    gxp[:, rows, cols] += kd[:, 0, u, v][:, None, None] * g
                else:
                    gk[:, :, u, v] = np.tensordot(g, window, axes=([1, 2], [1, 2]))
                    gxp[:, rows, cols] += np.tensordot(kd[:, :, u, v].T, g, axes=([1], [0]))
        return gxp[:, ph : ph + h, pw : pw + w], gk

    _push(out, (x, kernel), back)
    return out


def channel_conv1d(x, kernel) -> Tensor:
    """1-d cross-correlation over the channel axis of a pooled (C,1,1) map.

    Zero padding keeps C channels; kernel length must be odd.
    """
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    if x.ndim != 3 or x.shape[1:] != (1, 1):
        raise ShapeError(f"channel_conv1d input must be (C,1,1), got shape {x.shape}")
    if kernel.ndim != 1 or kernel.shape[0] % 2 == 0:
        raise ShapeError(f"channel_conv1d kernel must be 1-d odd-length, got {kernel.shape}")
    c = x.shape[0]
    k = kernel.shape[0]
    pad = k // 2
    xv = x.data.reshape(c)
    xp = np.zeros(c + 2 * pad, dtype=xv.dtype)
    xp[pad : pad + c] = xv
    out = Tensor(np.correlate(xp, kernel.data, mode="valid").reshape(c, 1, 1))

    def back(g):
        gv = g.reshape(c)
        gk = np.correlate(xp, gv, mode="valid")
        gx = np.convolve(gv, kernel.data, mode="full")[pad : pad + c]
        return gx.reshape(c, 1, 1), gk

    _push(out, (x, kernel), back)
    return out


def pool_global(x, mode: str) -> Tensor:
    """Global spatial pooling of a (C,H,W) map down to (C,1,1)."""
    x = _as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"pool_global input must be (C,H,W), got shape {x.shape}")
    if mode == "avg":
        out = Tensor(x.data.mean(axis=(1, 2), keepdims=True))
        n = x.shape[1] * x.shape[2]
        _push(out, (x,), lambda g: (np.broadcast_to(g, x.shape) / n,))
        return out
    if mode == "max":
        out = Tensor(x.data.max(axis=(1, 2), keepdims=True))

        def back(g):
            mask = x.data == out.data  # ties share the gradient evenly
            counts = mask.sum(axis=(1, 2), keepdims=True)
            return (mask * (g / counts),)

        _push(out, (x,), back)
        return out
    raise ValueError(f"pool_global mode must be 'avg' or 'max', got {mode!r}")


def _shuffle_raw(d: np.ndarray, r: int) -> np.ndarray:
    c, h, w = d.shape
    return (
        d.reshape(c // (r * r), r, r, h, w).transpose(0, 3, 1, 4, 2).reshape(c // (r * r), h * r, w * r)
    )


def _unshuffle_raw(d: np.ndarray, r: int) -> np.ndarray:
    c, h, w = d.shape
    return (
        d.reshape(c, h // r, r, w // r, r).transpose(0, 2, 4, 1, 3).reshape(c * r * r, h // r, w // r)
    )


def pixel_shuffle(x, factor: int) -> Tensor:
    """(C*r^2, H, W) -> (C, r*H, r*W); exact inverse of pixel_unshuffle."""
    x = _as_tensor(x)
    r = int(factor)
    if x.ndim != 3 or r < 1:
        raise ShapeError(f"pixel_shuffle needs (C,H,W) and factor >= 1, got {x.shape}, {factor}")
    if x.shape[0] % (r * r) != 0:
        raise ShapeError(f"pixel_shuffle factor {r} does not divide {x.shape[0]} channels")
    out = Tensor(_shuffle_raw(x.data, r))
    _push(out, (x,), lambda g: (_unshuffle_raw(g, r),))
    return out


def pixel_unshuffle(x, factor: int) -> Tensor:
    """(C, r*H, r*W) -> (C*r^2, H, W); exact inverse of pixel_shuffle."""
    x = _as_tensor(x)
    r = int(factor)
    if x.ndim != 3 or r < 1:
        raise ShapeError(f"pixel_unshuffle needs (C,H,W) and factor >= 1, got {x.shape}, {factor}")
    if x.shape[1] % r != 0 or x.shape[2] % r != 0:
        raise ShapeError(f"pixel_unshuffle factor {r} does not divide spatial dims {x.shape[1:]}")
    out = Tensor(_unshuffle_raw(x.data, r))
    _push(out, (x,), lambda g: (_shuffle_raw(g, r),))
    return out


def upsample_nearest(x, factor: int) -> Tensor:
    x = _as_tensor(x)
    f = int(factor)
    if x.ndim != 3 or f < 1:
        raise ShapeError(f"upsample_nearest needs (C,H,W) and factor >= 1, got {x.shape}, {factor}")
    out = Tensor(np.repeat(np.repeat(x.data, f, axis=1), f, axis=2))
    c, h, w = x.shape
    _push(out, (x,), lambda g: (g.reshape(c, h, f, w, f).sum(axis=(2, 4)),))
    return out


def downsample_avg(x, factor: int) -> Tensor:
    x = _as_tensor(x)
    f = int(factor)
    if x.ndim != 3 or f < 1:
        raise ShapeError(f"downsample_avg needs (C,H,W) and factor >= 1, got {x.shape}, {factor}")
    c, h, w = x.shape
    if h % f != 0 or w % f != 0:
        raise ShapeError(f"downsample_avg factor {f} does not divide spatial dims {(h, w)}")
    out = Tensor(x.data.reshape(c, h // f, f, w // f, f).mean(axis=(2, 4)))
    _push(
        out,
        (x,),
        lambda g: (np.repeat(np.repeat(g, f, axis=1), f, axis=2) / (f * f),),
    )
    return out


def channel_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Standardize each channel over its spatial positions, then apply affine.

    Replaces batch normalization at batch size 1. gain/bias have shape (C,).
    Composed from taped primitives, so the gradient needs no bespoke rule.
    """
    xt = _as_tensor(x)
    if xt.ndim != 3:
        raise ShapeError(f"channel_norm input must be (C,H,W), got shape {xt.shape}")
    c = xt.shape[0]
    m = mean_over(x, axes=(1, 2), keepdims=True)
    centered = sub(x, m)
    var = mean_over(mul(centered, centered), axes=(1, 2), keepdims=True)
    inv = power(add(var, eps), -0.5)
    g3 = reshape(gain, (c, 1, 1))
    b3 = reshape(bias, (c, 1, 1))
    return add(mul(mul(centered, inv), g3), b3)
