"""Dense-tensor numerical core.

Tensors are plain numpy arrays in channel-major (C, H, W) layout. Every
differentiable operation is a pure forward function with an explicit
backward companion that returns analytic gradients; there is no graph or
tape. Randomness always flows through named RngStream objects so that a
(seed, stream, key) triple fully determines every draw.

Precision is a global switch: float64 for oracle and gradient-check work,
float32 for training runs. Operations compute in the dtype of their inputs;
the switch governs what newly created tensors use.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataError, NumericalError

Tensor = np.ndarray

_DEFAULT_DTYPE = np.dtype(np.float64)


def set_default_dtype(dtype) -> None:
    """Select the global precision (np.float32 or np.float64)."""
    global _DEFAULT_DTYPE
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ConfigurationError(f"unsupported dtype {dtype!r}")
    _DEFAULT_DTYPE = dt


def get_default_dtype() -> np.dtype:
    return _DEFAULT_DTYPE


def tensor(data) -> Tensor:
    """Array in the current default dtype."""
    return np.asarray(data, dtype=_DEFAULT_DTYPE)


def zeros(shape) -> Tensor:
    return np.zeros(shape, dtype=_DEFAULT_DTYPE)


def ensure_finite(arr: Tensor, what: str) -> Tensor:
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite values in {what}")
    return arr


# ------------------------------------------------------------------ RNG

class Stream(enum.IntEnum):
    """Independent randomness lanes; each keeps determinism separable."""

    WEIGHTS = 0
    DROPOUT = 1
    CROP = 2
    NOISE = 3
    SHUFFLE = 4


@dataclass(frozen=True)
class RngStream:
    """Deterministic generator factory for one (seed, stream) lane.

    generator(*key) returns a fresh numpy Generator whose output depends
    only on (seed, stream, key); the same triple always reproduces the
    same draw sequence, which is what makes training resumable and
    augmentation order-independent.
    """

    seed: int
    stream: Stream

    def generator(self, *key: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(int(self.stream), *key))
        return np.random.default_rng(ss)


# ------------------------------------------------------------- parameters

@dataclass
class Parameter:
    """A learnable tensor with its gradient and momentum buffers."""

    value: Tensor
    grad: Tensor = None
    velocity: Tensor = None
    learnable: bool = True
    lr_multiplier: float = 1.0

    def __post_init__(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.velocity is None:
            self.velocity = np.zeros_like(self.value)
        if self.grad.shape != self.value.shape or self.velocity.shape != self.value.shape:
            raise ConfigurationError("parameter value/grad/velocity shapes differ")

    def zero_grad(self) -> None:
        self.grad.fill(0.0)


def xavier_init(shape, gen: np.random.Generator) -> Tensor:
    """Uniform init on [-a, a] with a = sqrt(3 / fan_in).

    fan_in is the number of inputs feeding one output unit, i.e.
    prod(shape[1:]) (Cin*k*k for a convolution weight). The resulting
    variance is a^2/3 = 1/fan_in. Biases are zero-initialized by the
    layer constructors, not here.
    """
    shape = tuple(int(s) for s in shape)
    if len(shape) < 2:
        raise ConfigurationError(f"xavier_init needs >= 2 dims, got {shape}")
    fan_in = int(np.prod(shape[1:]))
    if fan_in == 0:
        raise ConfigurationError(f"empty shape {shape}")
    a = math.sqrt(3.0 / fan_in)
    return gen.uniform(-a, a, size=shape).astype(_DEFAULT_DTYPE)


def sgd_step(params, lr: float, momentum: float, weight_decay: float) -> None:
    """Momentum SGD with the rate inside the velocity update.

    For each learnable parameter, with effective rate eta = lr * lr_multiplier:

        v <- momentum * v - eta * (grad + weight_decay * value)
        value <- value + v

    Gradients are zeroed afterwards. Non-learnable parameters only get
    their gradients cleared.
    """
    if lr < 0:
        raise ConfigurationError(f"negative learning rate {lr}")
    for p in params:
        if p.learnable:
            eta = lr * p.lr_multiplier
            p.velocity *= momentum
            p.velocity -= eta * (p.grad + weight_decay * p.value)
            p.value += p.velocity
        p.zero_grad()


def poly_lr(base_lr: float, iteration: int, max_iter: int, power: float) -> float:
    """base_lr * (1 - iteration/max_iter) ** power."""
    if max_iter <= 0:
        raise ConfigurationError(f"max_iter must be positive, got {max_iter}")
    if not 0 <= iteration <= max_iter:
        raise ConfigurationError(f"iteration {iteration} outside [0, {max_iter}]")
    return base_lr * (1.0 - iteration / max_iter) ** power


# ------------------------------------------------------------ convolution

def _conv_out_size(size: int, k: int, stride: int, dilation: int, pad: int) -> int:
    return (size + 2 * pad - dilation * (k - 1) - 1) // stride + 1


def _check_conv_args(x, w, b, stride, dilation, pad):
    if x.ndim != 3 or w.ndim != 4:
        raise ConfigurationError(f"conv2d expects (C,H,W) input and (Cout,Cin,k,k) weights, got {x.shape} / {w.shape}")
    cout, cin, kh, kw = w.shape
    if x.shape[0] != cin:
        raise ConfigurationError(f"input has {x.shape[0]} channels, weights expect {cin}")
    if b is not None and b.shape != (cout,):
        raise ConfigurationError(f"bias shape {b.shape} does not match {cout} output channels")
    if stride < 1 or dilation < 1 or pad < 0:
        raise ConfigurationError(f"bad stride/dilation/pad ({stride}, {dilation}, {pad})")
    _, h, wd = x.shape
    if h + 2 * pad < dilation * (kh - 1) + 1 or wd + 2 * pad < dilation * (kw - 1) + 1:
        raise ConfigurationError(
            f"input {h}x{wd} (pad {pad}) smaller than effective kernel "
            f"{dilation * (kh - 1) + 1}x{dilation * (kw - 1) + 1}")


def _conv_windows(xp: Tensor, kh: int, kw: int, stride: int, dilation: int,
                  out_h: int, out_w: int) -> Tensor:
    """Strided read-only view (Cin, kh, kw, out_h, out_w) over the padded input."""
    sc, sh, sw = xp.strides
    shape = (xp.shape[0], kh, kw, out_h, out_w)
    strides = (sc, sh * dilation, sw * dilation, sh * stride, sw * stride)
    return np.lib.stride_tricks.as_strided(xp, shape=shape, strides=strides, writeable=False)


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, dilation: int = 1,
           pad: int = 0) -> Tensor:
    """2-D convolution (cross-correlation) with zero padding.

    out(co, y, x) = b(co) + sum_{ci,dy,dx} in(ci, y*stride - pad + dy*dilation,
                                              x*stride - pad + dx*dilation)
                                           * w(co, ci, dy, dx)
    Out-of-range taps read zero.
    """
    _check_conv_args(x, w, b, stride, dilation, pad)
    cout, cin, kh, kw = w.shape
    _, h, wd = x.shape
    out_h = _conv_out_size(h, kh, stride, dilation, pad)
    out_w = _conv_out_size(wd, kw, stride, dilation, pad)
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    win = _conv_windows(xp, kh, kw, stride, dilation, out_h, out_w)
    cols = win.reshape(cin * kh * kw, out_h * out_w)
    out = (w.reshape(cout, -1) @ cols).reshape(cout, out_h, out_w)
    if b is not None:
        out += b[:, None, None]
    return ensure_finite(out, "conv2d output")


def conv2d_backward(gout: Tensor, x: Tensor, w: Tensor, stride: int = 1,
                    dilation: int = 1, pad: int = 0):
    """Gradients of conv2d w.r.t. (input, weights, bias).

    Accumulation order is fixed (matmul plus an ordered tap loop), so results
    are bit-reproducible.
    """
    cout, cin, kh, kw = w.shape
    _, h, wd = x.shape
    out_h, out_w = gout.shape[1:]
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    win = _conv_windows(xp, kh, kw, stride, dilation, out_h, out_w)
    gout_mat = gout.reshape(cout, -1)

    gw = (gout_mat @ win.reshape(cin * kh * kw, -1).T).reshape(w.shape)
    gb = gout.sum(axis=(1, 2))

    # scatter w^T . gout back through each kernel tap
    gcols = (w.reshape(cout, -1).T @ gout_mat).reshape(cin, kh, kw, out_h, out_w)
    gxp = np.zeros_like(xp)
    for dy in range(kh):
        ys = slice(dy * dilation, dy * dilation + out_h * stride, stride)
        for dx in range(kw):
            xs = slice(dx * dilation, dx * dilation + out_w * stride, stride)
            gxp[:, ys, xs] += gcols[:, dy, dx]
    gx = gxp[:, pad:pad + h, pad:pad + wd] if pad else gxp
    return gx, gw, gb


# ------------------------------------------------------------- activation

def relu(x: Tensor) -> Tensor:
    return np.maximum(x, 0.0)


def relu_backward(gout: Tensor, x: Tensor) -> Tensor:
    # gradient is zero at the tie point x == 0
    return gout * (x > 0)


# ---------------------------------------------------------------- pooling

def pool_output_size(size: int, k: int, stride: int, pad: int, ceil_mode: bool) -> int:
    """Output extent of a pooling axis.

    Ceil mode keeps partial trailing windows, except that a window whose
    real coverage is only the final row/col (already seen by its
    predecessor) is dropped. That keeps the 3x3/stride-2/pad-1 chain at
    exactly ceil(size/2) per stage, so e.g. 540 -> 270 -> 135 -> 68 and
    stride-1 pools preserve the extent.
    """
    if k < 1 or stride < 1 or pad < 0:
        raise ConfigurationError(f"bad pooling geometry k={k} stride={stride} pad={pad}")
    if pad >= k:
        raise ConfigurationError(f"pad {pad} >= kernel {k}: windows can fall entirely in padding")
    if size + 2 * pad < k:
        raise ConfigurationError(f"pooling window {k} larger than padded input {size + 2 * pad}")
    span = size + 2 * pad - k
    n = -(-span // stride) + 1 if ceil_mode else span // stride + 1
    if ceil_mode and n > 1:
        start = (n - 1) * stride - pad
        prev_end = (n - 2) * stride - pad + k - 1
        if start >= size - 1 and start + k > size and prev_end >= size - 1:
            n -= 1
    return n


def max_pool(x: Tensor, k: int, stride: int, pad: int = 0, ceil_mode: bool = False) -> Tensor:
    """Max pooling; padding is excluded from the max."""
    out, _ = _max_pool_impl(x, k, stride, pad, ceil_mode)
    return out


def _max_pool_impl(x: Tensor, k: int, stride: int, pad: int, ceil_mode: bool):
    if x.ndim != 3:
        raise ConfigurationError(f"max_pool expects (C,H,W), got {x.shape}")
    c, h, w = x.shape
    out_h = pool_output_size(h, k, stride, pad, ceil_mode)
    out_w = pool_output_size(w, k, stride, pad, ceil_mode)
    # pad with -inf so padding never wins; extend far enough for ceil windows
    need_h = (out_h - 1) * stride + k
    need_w = (out_w - 1) * stride + k
    xp = np.full((c, max(need_h, h + 2 * pad), max(need_w, w + 2 * pad)), -np.inf, dtype=x.dtype)
    xp[:, pad:pad + h, pad:pad + w] = x
    sc, sh, sw = xp.strides
    win = np.lib.stride_tricks.as_strided(
        xp, shape=(c, out_h, out_w, k, k),
        strides=(sc, sh * stride, sw * stride, sh, sw), writeable=False)
    flat = win.reshape(c, out_h, out_w, k * k)
    out = flat.max(axis=3)
    if np.isneginf(out).any():
        raise ConfigurationError("pooling window entirely outside the input")
    return out, (xp.shape, flat)


def max_pool_backward(gout: Tensor, x: Tensor, k: int, stride: int, pad: int = 0,
                      ceil_mode: bool = False) -> Tensor:
    """Route each output gradient to its window argmax (first index on ties)."""
    c, h, w = x.shape
    _, (xp_shape, flat) = _max_pool_impl(x, k, stride, pad, ceil_mode)
    out_h, out_w = gout.shape[1:]
    arg = flat.argmax(axis=3)  # first max in row-major (dy, dx) order
    dy, dx = arg // k, arg % k
    oy = np.arange(out_h)[None, :, None] * stride + dy
    ox = np.arange(out_w)[None, None, :] * stride + dx
    gxp = np.zeros((c,) + xp_shape[1:], dtype=gout.dtype)
    ci = np.arange(c)[:, None, None]
    np.add.at(gxp, (ci, oy, ox), gout)
    return gxp[:, pad:pad + h, pad:pad + w]


# ---------------------------------------------------------------- dropout

def dropout(x: Tensor, p: float, train: bool, gen: np.random.Generator | None = None):
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p).

    Returns (output, mask); mask is None in eval mode or when p == 0 and
    must be fed back to dropout_backward. Eval mode is the identity.
    """
    if not 0.0 <= p < 1.0:
        raise ConfigurationError(f"dropout probability {p} outside [0, 1)")
    if not train or p == 0.0:
        return x, None
    if gen is None:
        raise ConfigurationError("train-mode dropout needs an RNG generator")
    mask = gen.random(x.shape) >= p
    return x * mask / (1.0 - p), mask


def dropout_backward(gout: Tensor, mask, p: float) -> Tensor:
    if mask is None:
        return gout
    return gout * mask / (1.0 - p)


# --------------------------------------------------------------- upsample

def _interp_matrix(n_out: int, n_in: int, dtype) -> Tensor:
    """Edge-aligned linear interpolation matrix (n_out, n_in); corners map to corners."""
    m = np.zeros((n_out, n_in), dtype=dtype)
    if n_out == 1:
        m[0, 0] = 1.0
        return m
    src = np.arange(n_out, dtype=np.float64) * (n_in - 1) / (n_out - 1)
    lo = np.floor(src).astype(int)
    lo = np.minimum(lo, n_in - 2) if n_in > 1 else lo
    frac = src - lo
    if n_in == 1:
        m[:, 0] = 1.0
        return m
    m[np.arange(n_out), lo] = 1.0 - frac
    m[np.arange(n_out), lo + 1] = frac
    return m


def bilinear_upsample(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Edge-aligned bilinear upsampling of a (C, h, w) tensor."""
    if out_h < 1 or out_w < 1:
        raise ConfigurationError(f"bad output size {out_h}x{out_w}")
    c, h, w = x.shape
    if out_h < h or out_w < w:
        raise ConfigurationError(f"bilinear_upsample cannot shrink {h}x{w} -> {out_h}x{out_w}")
    wy = _interp_matrix(out_h, h, x.dtype)
    wx = _interp_matrix(out_w, w, x.dtype)
    t = x @ wx.T                      # (c, h, out_w)
    return np.einsum("oh,chw->cow", wy, t, optimize=True)


def bilinear_upsample_backward(gout: Tensor, in_h: int, in_w: int) -> Tensor:
    """Transpose of the interpolation weights."""
    c, out_h, out_w = gout.shape
    wy = _interp_matrix(out_h, in_h, gout.dtype)
    wx = _interp_matrix(out_w, in_w, gout.dtype)
    t = np.einsum("oh,cow->chw", wy, gout, optimize=True)  # (c, in_h, out_w)
    return t @ wx


# ------------------------------------------------------------------ loss

def softmax_loss(logits: Tensor, labels: Tensor):
    """Mean pixelwise 2-way softmax log loss and its gradient.

    logits: (2, H, W) with channel 0 the non-salient score and channel 1
    the salient score; labels: (H, W) in {0, 1}. Uses max-subtraction for
    stability. Gradient is (softmax - onehot) / (H*W).
    """
    if logits.ndim != 3 or logits.shape[0] != 2:
        raise ConfigurationError(f"logits must be (2, H, W), got {logits.shape}")
    if labels.shape != logits.shape[1:]:
        raise DataError(f"labels {labels.shape} do not match logits {logits.shape[1:]}")
    lab = np.asarray(labels)
    if not np.isin(lab, (0, 1)).all():
        raise DataError("labels must be 0 or 1")
    lab = lab.astype(np.int64)
    n = logits.shape[1] * logits.shape[2]

    shift = logits.max(axis=0)
    z = logits - shift
    ez = np.exp(z)
    denom = ez.sum(axis=0)
    z_true = np.take_along_axis(z, lab[None], axis=0)[0]
    loss = float(-(z_true - np.log(denom)).sum() / n)

    p = ez / denom
    grad = p.copy()
    np.put_along_axis(grad, lab[None], np.take_along_axis(grad, lab[None], axis=0) - 1.0, axis=0)
    grad /= n
    ensure_finite(grad, "softmax_loss gradient")
    if not math.isfinite(loss):
        raise NumericalError("non-finite loss")
    return loss, grad
