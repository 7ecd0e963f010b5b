"""Stateful layer wrappers around the functional core.

Each layer caches what its backward pass needs during forward and
accumulates parameter gradients into Parameter.grad on backward. One
forward must precede each backward; the training loop alternates them
strictly, so a single cache slot per layer is enough.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ConfigurationError
from .tensor import Parameter


class Conv2d:
    def __init__(self, in_ch: int, out_ch: int, k: int, *, stride: int = 1,
                 dilation: int = 1, pad: int = 0, gen: np.random.Generator = None,
                 lr_multiplier: float = 1.0):
        if gen is None:
            raise ConfigurationError("Conv2d needs a weight-init generator")
        self.stride, self.dilation, self.pad = stride, dilation, pad
        self.weight = Parameter(T.xavier_init((out_ch, in_ch, k, k), gen),
                                lr_multiplier=lr_multiplier)
        self.bias = Parameter(T.zeros(out_ch), lr_multiplier=lr_multiplier)
        self._x = None

    def forward(self, x):
        self._x = x
        return T.conv2d(x, self.weight.value, self.bias.value,
                        self.stride, self.dilation, self.pad)

    def backward(self, gout):
        gx, gw, gb = T.conv2d_backward(gout, self._x, self.weight.value,
                                       self.stride, self.dilation, self.pad)
        self.weight.grad += gw
        self.bias.grad += gb
        return gx

    def params(self):
        return [("weight", self.weight), ("bias", self.bias)]


class ReLU:
    def __init__(self):
        self._x = None

    def forward(self, x):
        self._x = x
        return T.relu(x)

    def backward(self, gout):
        return T.relu_backward(gout, self._x)


class MaxPool2d:
    def __init__(self, k: int, stride: int, pad: int = 0, ceil_mode: bool = True):
        self.k, self.stride, self.pad, self.ceil_mode = k, stride, pad, ceil_mode
        self._x = None

    def forward(self, x):
        self._x = x
        return T.max_pool(x, self.k, self.stride, self.pad, self.ceil_mode)

    def backward(self, gout):
        return T.max_pool_backward(gout, self._x, self.k, self.stride,
                                   self.pad, self.ceil_mode)


class Dropout:
    def __init__(self, p: float):
        if not 0.0 <= p < 1.0:
            raise ConfigurationError(f"dropout probability {p} outside [0, 1)")
        self.p = p
        self._mask = None

    def forward(self, x, train: bool, gen: np.random.Generator = None):
        out, self._mask = T.dropout(x, self.p, train, gen)
        return out

    def backward(self, gout):
        return T.dropout_backward(gout, self._mask, self.p)


class BilinearUpsample:
    def __init__(self, out_h: int, out_w: int):
        self.out_h, self.out_w = out_h, out_w
        self._in_hw = None

    def forward(self, x):
        self._in_hw = x.shape[1:]
        return T.bilinear_upsample(x, self.out_h, self.out_w)

    def backward(self, gout):
        return T.bilinear_upsample_backward(gout, *self._in_hw)


class OffsetCrop:
    """Drop the first `offset` rows and columns; gradients are re-embedded.

    Lets a stride-A convolution land its taps at an interior micro-lens
    position instead of the block's top-left corner.
    """

    def __init__(self, offset: int):
        self.offset = offset
        self._shape = None

    def forward(self, x):
        self._shape = x.shape
        o = self.offset
        return np.ascontiguousarray(x[:, o:, o:]) if o else x

    def backward(self, gout):
        if not self.offset:
            return gout
        g = np.zeros(self._shape, dtype=gout.dtype)
        o = self.offset
        g[:, o:o + gout.shape[1], o:o + gout.shape[2]] = gout
        return g
