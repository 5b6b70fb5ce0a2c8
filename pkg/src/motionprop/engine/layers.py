"""Forward/backward layer implementations on NCHW float arrays.

Every layer caches what its backward pass needs during forward; a layer
instance therefore belongs to exactly one position in a network. The
convolution lowers to patch columns (compiled kernel or NumPy fallback)
plus BLAS matmuls; bilinear upsampling is a pair of small dense matrix
products whose backward is the exact transpose.
"""

from __future__ import annotations

import numpy as np

from .. import _kernels
from ..bilinear import resize_matrix
from .optim import Parameter

BN_EPS = 1e-5
BN_UPDATE_RATE = 0.1


def conv2d_fwd(x, weight, bias, stride=1, padding=0, dilation=1):
    """Cross-correlation. Returns (y, cols); cols feed the backward."""
    n, c, h, w = x.shape
    co, ci, kh, kw = weight.shape
    if ci != c:
        raise ValueError(f"input has {c} channels, weights expect {ci}")
    cols = _kernels.im2col(x, kh, kw, stride, stride, padding, padding, dilation, dilation)
    hp, wp = h + 2 * padding, w + 2 * padding
    ho = (hp - (dilation * (kh - 1) + 1)) // stride + 1
    wo = (wp - (dilation * (kw - 1) + 1)) // stride + 1
    y = np.matmul(weight.reshape(co, -1), cols)
    y += bias[:, None]
    return y.reshape(n, co, ho, wo), cols


def conv2d_bwd(dy, cols, x_shape, weight, stride=1, padding=0, dilation=1, need_dx=True):
    """Exact gradients (dx, dw, db) of a scalar loss."""
    n, c, h, w = x_shape
    co, ci, kh, kw = weight.shape
    dyf = dy.reshape(n, co, -1)
    dw = np.matmul(dyf, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
    db = dyf.sum(axis=(0, 2))
    dx = None
    if need_dx:
        dcols = np.matmul(weight.reshape(co, -1).T, dyf)
        dx = _kernels.col2im(dcols, n, c, h, w, kh, kw, stride, stride, padding, padding, dilation, dilation)
    return dx, dw, db


class Conv2d:
    def __init__(self, in_ch, out_ch, ksize, stride=1, padding=0, dilation=1, *, rng, dtype=np.float32, init="he"):
        if init == "he":
            std = np.sqrt(2.0 / (in_ch * ksize * ksize))
            w = rng.normal(0.0, std, (out_ch, in_ch, ksize, ksize)).astype(dtype)
        elif init == "zero":
            w = np.zeros((out_ch, in_ch, ksize, ksize), dtype=dtype)
        else:
            raise ValueError(f"unknown init {init!r}")
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(out_ch, dtype=dtype))
        self.stride = stride
        self.padding = padding
        self.dilation = dilation
        self._cache = None

    def forward(self, x, train=True):
        y, cols = conv2d_fwd(x, self.weight.value, self.bias.value, self.stride, self.padding, self.dilation)
        self._cache = (cols, x.shape)
        return y

    def backward(self, dy, need_dx=True):
        cols, x_shape = self._cache
        dx, dw, db = conv2d_bwd(
            dy, cols, x_shape, self.weight.value, self.stride, self.padding, self.dilation, need_dx
        )
        self.weight.grad += dw
        self.bias.grad += db
        return dx

    def params(self, prefix):
        return {f"{prefix}.weight": self.weight, f"{prefix}.bias": self.bias}

    def buffers(self, prefix):
        return {}


class BatchNorm2d:
    def __init__(self, channels, *, dtype=np.float32):
        self.gamma = Parameter(np.ones(channels, dtype=dtype))
        self.beta = Parameter(np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self._cache = None

    def forward(self, x, train=True):
        if train:
            m = x.shape[0] * x.shape[2] * x.shape[3]
            if m < 2:
                raise ValueError("train-mode batch norm needs more than one element per channel")
            mean = x.mean(axis=(0, 2, 3), dtype=np.float64).astype(x.dtype)
            var = x.var(axis=(0, 2, 3), dtype=np.float64).astype(x.dtype)
            self.running_mean += BN_UPDATE_RATE * (mean.astype(self.running_mean.dtype) - self.running_mean)
            self.running_var += BN_UPDATE_RATE * (var.astype(self.running_var.dtype) - self.running_var)
        else:
            mean = self.running_mean.astype(x.dtype)
            var = self.running_var.astype(x.dtype)
        ivar = 1.0 / np.sqrt(var + np.asarray(BN_EPS, dtype=x.dtype))
        xhat = (x - mean[:, None, None]) * ivar[:, None, None]
        self._cache = (xhat, ivar, train)
        return self.gamma.value[:, None, None] * xhat + self.beta.value[:, None, None]

    def backward(self, dy):
        xhat, ivar, train = self._cache
        self.gamma.grad += (dy * xhat).sum(axis=(0, 2, 3))
        self.beta.grad += dy.sum(axis=(0, 2, 3))
        dxhat = dy * self.gamma.value[:, None, None]
        if not train:
            return dxhat * ivar[:, None, None]
        m = dy.shape[0] * dy.shape[2] * dy.shape[3]
        s1 = dxhat.sum(axis=(0, 2, 3))
        s2 = (dxhat * xhat).sum(axis=(0, 2, 3))
        return (ivar[:, None, None] / m) * (m * dxhat - s1[:, None, None] - xhat * s2[:, None, None])

    def params(self, prefix):
        return {f"{prefix}.gamma": self.gamma, f"{prefix}.beta": self.beta}

    def buffers(self, prefix):
        return {f"{prefix}.running_mean": self.running_mean, f"{prefix}.running_var": self.running_var}

    def set_buffer(self, name, value):
        if name.endswith("running_mean"):
            self.running_mean = value.astype(self.running_mean.dtype)
        else:
            self.running_var = value.astype(self.running_var.dtype)


class ReLU:
    def __init__(self):
        self._mask = None

    def forward(self, x, train=True):
        self._mask = x > 0
        return np.where(self._mask, x, x.dtype.type(0))

    def backward(self, dy):
        return np.where(self._mask, dy, dy.dtype.type(0))

    def params(self, prefix):
        return {}

    def buffers(self, prefix):
        return {}


class MaxPool2d:
    """Kernel == stride pooling; input dims must divide by the stride.
    Gradient routes to the first maximal element of each window."""

    def __init__(self, stride):
        self.stride = stride
        self._cache = None

    def forward(self, x, train=True):
        s = self.stride
        if s == 1:
            self._cache = None
            return x
        n, c, h, w = x.shape
        if h % s or w % s:
            raise ValueError(f"pool stride {s} does not divide {h}x{w}")
        ho, wo = h // s, w // s
        xr = x.reshape(n, c, ho, s, wo, s).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, s * s)
        idx = xr.argmax(axis=-1)
        y = np.take_along_axis(xr, idx[..., None], axis=-1)[..., 0]
        self._cache = (idx, x.shape)
        return y

    def backward(self, dy):
        s = self.stride
        if s == 1:
            return dy
        idx, (n, c, h, w) = self._cache
        ho, wo = h // s, w // s
        dxr = np.zeros((n, c, ho, wo, s * s), dtype=dy.dtype)
        np.put_along_axis(dxr, idx[..., None], dy[..., None], axis=-1)
        return dxr.reshape(n, c, ho, wo, s, s).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)

    def params(self, prefix):
        return {}

    def buffers(self, prefix):
        return {}


class UpsampleBilinear:
    """Integer-factor bilinear upsampling (half-pixel centres, edges
    clamped) realized as two dense matrix products."""

    def __init__(self, factor):
        self.factor = factor
        self._cache = None

    def forward(self, x, train=True):
        f = self.factor
        if f == 1:
            self._cache = None
            return x
        h, w = x.shape[2], x.shape[3]
        my = resize_matrix(h, h * f).astype(x.dtype)
        mx = resize_matrix(w, w * f).astype(x.dtype)
        self._cache = (my, mx)
        return np.matmul(np.matmul(my, x), mx.T)

    def backward(self, dy):
        if self.factor == 1:
            return dy
        my, mx = self._cache
        return np.matmul(np.matmul(my.T, dy), mx)

    def params(self, prefix):
        return {}

    def buffers(self, prefix):
        return {}


class ConvBNReLU:
    """The stacked Conv-BN-ReLU block used throughout the network."""

    def __init__(self, in_ch, out_ch, ksize=3, stride=1, *, rng, dtype=np.float32):
        self.conv = Conv2d(in_ch, out_ch, ksize, stride=stride, padding=ksize // 2, rng=rng, dtype=dtype)
        self.bn = BatchNorm2d(out_ch, dtype=dtype)
        self.relu = ReLU()

    def forward(self, x, train=True):
        return self.relu.forward(self.bn.forward(self.conv.forward(x, train), train), train)

    def backward(self, dy, need_dx=True):
        return self.conv.backward(self.bn.backward(self.relu.backward(dy)), need_dx)

    def params(self, prefix):
        return {**self.conv.params(f"{prefix}.conv"), **self.bn.params(f"{prefix}.bn")}

    def buffers(self, prefix):
        return self.bn.buffers(f"{prefix}.bn")

    def set_buffer(self, name, value):
        self.bn.set_buffer(name, value)


def softmax_ce_map(logits, labels):
    """Mean per-pixel cross entropy of softmax(logits) against integer
    labels. Returns (loss, dlogits); dlogits = (P - onehot) / pixels."""
    n, c, h, w = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n, h, w):
        raise ValueError(f"labels shape {labels.shape} does not match logits {(n, h, w)}")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"labels outside [0, {c})")
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    sez = ez.sum(axis=1, keepdims=True)
    idx = labels[:, None, :, :]
    logp = np.take_along_axis(z, idx, axis=1) - np.log(sez)
    loss = -float(logp.mean(dtype=np.float64))
    total = n * h * w
    grad = ez / sez
    np.put_along_axis(grad, idx, np.take_along_axis(grad, idx, axis=1) - 1.0, axis=1)
    grad /= total
    return loss, grad.astype(logits.dtype)
