"""Minimal layer-stack engine: forward caches what backward needs.

Parameters are float32 by default; all code is dtype-preserving so tests
can run entire layers in float64 against finite differences. Reductions
(means, variances, loss) accumulate in float64 regardless.
"""

from __future__ import annotations

import numpy as np

from ..errors import NoTape, TooSmall


class Parameter:
    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)

    def zero_grad(self):
        self.grad[...] = 0


class Layer:
    """Base layer; subclasses cache forward state and consume it in backward."""

    def parameters(self) -> list[Parameter]:
        return []

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        """Non-trainable state that still belongs in checkpoints (BN stats)."""
        return []

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _need_cache(self, cache):
        if cache is None:
            raise NoTape(f"{type(self).__name__}.backward called before forward")
        return cache


def xavier_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int,
                   dtype=np.float32) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Linear(Layer):
    def __init__(self, in_features: int, out_features: int,
                 rng: np.random.Generator, name: str = "linear"):
        self.weight = Parameter(
            f"{name}.weight",
            xavier_uniform(rng, (out_features, in_features), in_features, out_features))
        self.bias = Parameter(f"{name}.bias",
                              np.zeros(out_features, dtype=np.float32))
        self._cache = None

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x, train):
        self._cache = x
        return x @ self.weight.value.T + self.bias.value

    def backward(self, grad):
        x = self._need_cache(self._cache)
        self.weight.grad += grad.T @ x
        self.bias.grad += grad.sum(axis=0)
        return grad @ self.weight.value


class ReLU(Layer):
    def __init__(self):
        self._mask = None

    def forward(self, x, train):
        self._mask = x > 0
        return x * self._mask

    def backward(self, grad):
        mask = self._need_cache(self._mask)
        return grad * mask


class Dropout(Layer):
    """Inverted dropout; identity in eval mode.

    fixed_mask, when set, overrides sampling (for gradient checks).
    """

    def __init__(self, p: float, rng: np.random.Generator):
        self.p = p
        self.rng = rng
        self.fixed_mask = None
        self._mask = None

    def forward(self, x, train):
        if not train or self.p <= 0:
            self._mask = np.ones_like(x)
            return x
        if self.fixed_mask is not None:
            mask = self.fixed_mask.astype(x.dtype)
        else:
            mask = (self.rng.random(x.shape) >= self.p).astype(x.dtype)
        self._mask = mask / (1.0 - self.p)
        return x * self._mask

    def backward(self, grad):
        mask = self._need_cache(self._mask)
        return grad * mask


class _BatchNormBase(Layer):
    eps = 1e-5
    momentum = 0.1

    def __init__(self, num_features: int, name: str):
        self.gamma = Parameter(f"{name}.gamma", np.ones(num_features, dtype=np.float32))
        self.beta = Parameter(f"{name}.beta", np.zeros(num_features, dtype=np.float32))
        self.running_mean = np.zeros(num_features, dtype=np.float32)
        self.running_var = np.ones(num_features, dtype=np.float32)
        self.name = name
        self._cache = None

    def parameters(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return [(f"{self.name}.running_mean", self.running_mean),
                (f"{self.name}.running_var", self.running_var)]

    # subclasses define the reduction axes and the broadcast shape
    axes: tuple
    def _bshape(self, n):  # pragma: no cover - overridden
        raise NotImplementedError

    def forward(self, x, train):
        n = self.gamma.value.shape[0]
        bs = self._bshape(n)
        if train:
            mu = x.mean(axis=self.axes, dtype=np.float64)
            var = x.var(axis=self.axes, dtype=np.float64)
            count = x.size // n
            istd = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mu.astype(x.dtype).reshape(bs)) * istd.astype(x.dtype).reshape(bs)
            self._cache = ("train", xhat, istd.astype(x.dtype), count)
            # running stats use the unbiased variance, like the usual convention
            unbiased = var * (count / (count - 1)) if count > 1 else var
            self.running_mean = ((1 - self.momentum) * self.running_mean
                                 + self.momentum * mu).astype(self.running_mean.dtype)
            self.running_var = ((1 - self.momentum) * self.running_var
                                + self.momentum * unbiased).astype(self.running_var.dtype)
        else:
            rm = self.running_mean.astype(x.dtype).reshape(bs)
            rv = self.running_var.astype(x.dtype).reshape(bs)
            istd = 1.0 / np.sqrt(rv + self.eps)
            xhat = (x - rm) * istd
            self._cache = ("eval", istd)
        return xhat * self.gamma.value.reshape(bs) + self.beta.value.reshape(bs)

    def backward(self, grad):
        cache = self._need_cache(self._cache)
        n = self.gamma.value.shape[0]
        bs = self._bshape(n)
        if cache[0] == "eval":
            _, istd = cache
            gxhat = grad * self.gamma.value.reshape(bs)
            return gxhat * istd
        _, xhat, istd, count = cache
        self.gamma.grad += (grad * xhat).sum(axis=self.axes)
        self.beta.grad += grad.sum(axis=self.axes)
        gxhat = grad * self.gamma.value.reshape(bs)
        sum_g = gxhat.sum(axis=self.axes, keepdims=True)
        sum_gx = (gxhat * xhat).sum(axis=self.axes, keepdims=True)
        return (istd.reshape(bs) / count) * (count * gxhat - sum_g - xhat * sum_gx)


class BatchNorm1d(_BatchNormBase):
    axes = (0,)

    def _bshape(self, n):
        return (1, n)


class BatchNorm2d(_BatchNormBase):
    axes = (0, 2, 3)

    def _bshape(self, n):
        return (1, n, 1, 1)


class Conv2d(Layer):
    """3x3-style convolution via im2col; stride 1, symmetric zero padding."""

    def __init__(self, in_ch: int, out_ch: int, rng: np.random.Generator,
                 kernel: int = 3, pad: int = 1, name: str = "conv"):
        fan_in = in_ch * kernel * kernel
        fan_out = out_ch * kernel * kernel
        self.weight = Parameter(
            f"{name}.weight",
            xavier_uniform(rng, (out_ch, in_ch, kernel, kernel), fan_in, fan_out))
        self.bias = Parameter(f"{name}.bias", np.zeros(out_ch, dtype=np.float32))
        self.kernel = kernel
        self.pad = pad
        self._cache = None

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x, train):
        b, c, h, w = x.shape
        k, p = self.kernel, self.pad
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        oh = h + 2 * p - k + 1
        ow = w + 2 * p - k + 1
        win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b, oh * ow, c * k * k)
        wm = self.weight.value.reshape(self.weight.value.shape[0], -1)
        out = cols @ wm.T + self.bias.value
        self._cache = (cols, x.shape)
        return out.transpose(0, 2, 1).reshape(b, -1, oh, ow)

    def backward(self, grad):
        cols, xshape = self._need_cache(self._cache)
        b, c, h, w = xshape
        k, p = self.kernel, self.pad
        oc = grad.shape[1]
        oh, ow = grad.shape[2], grad.shape[3]
        gm = grad.reshape(b, oc, oh * ow).transpose(0, 2, 1)  # (b, ohw, oc)
        wm = self.weight.value.reshape(oc, -1)

        dw = np.einsum("bno,bnk->ok", gm, cols)
        self.weight.grad += dw.reshape(self.weight.value.shape)
        self.bias.grad += grad.sum(axis=(0, 2, 3))

        dcols = gm @ wm  # (b, ohw, c*k*k)
        dcols = dcols.reshape(b, oh, ow, c, k, k)
        dxp = np.zeros((b, c, h + 2 * p, w + 2 * p), dtype=grad.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i:i + oh, j:j + ow] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return dxp[:, :, p:p + h, p:p + w]


class MaxPool2d(Layer):
    """2x2 stride-2 max pooling, floor mode; ties go to the first element."""

    def __init__(self, size: int = 2):
        self.size = size
        self._cache = None

    def forward(self, x, train):
        s = self.size
        b, c, h, w = x.shape
        oh, ow = h // s, w // s
        crop = x[:, :, :oh * s, :ow * s]
        win = crop.reshape(b, c, oh, s, ow, s).transpose(0, 1, 2, 4, 3, 5)
        win = win.reshape(b, c, oh, ow, s * s)
        idx = win.argmax(axis=-1)
        out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
        self._cache = (idx, x.shape)
        return out

    def backward(self, grad):
        idx, xshape = self._need_cache(self._cache)
        s = self.size
        b, c, h, w = xshape
        oh, ow = h // s, w // s
        dwin = np.zeros((b, c, oh, ow, s * s), dtype=grad.dtype)
        np.put_along_axis(dwin, idx[..., None], grad[..., None], axis=-1)
        dx = np.zeros(xshape, dtype=grad.dtype)
        dcrop = dwin.reshape(b, c, oh, ow, s, s).transpose(0, 1, 2, 4, 3, 5)
        dx[:, :, :oh * s, :ow * s] = dcrop.reshape(b, c, oh * s, ow * s)
        return dx


class AdaptiveMaxPool2d(Layer):
    """Max pool to a fixed output grid; window i spans
    [floor(i*H/out), ceil((i+1)*H/out))."""

    def __init__(self, out_h: int, out_w: int):
        self.out_h = out_h
        self.out_w = out_w
        self._cache = None

    def forward(self, x, train):
        b, c, h, w = x.shape
        if h < 1 or w < 1:
            raise TooSmall("adaptive pool needs a non-empty input")
        out = np.empty((b, c, self.out_h, self.out_w), dtype=x.dtype)
        argr = np.empty((b, c, self.out_h, self.out_w), dtype=np.int64)
        argc = np.empty_like(argr)
        for i in range(self.out_h):
            hs = (i * h) // self.out_h
            he = -(-(i + 1) * h // self.out_h)
            for j in range(self.out_w):
                ws = (j * w) // self.out_w
                we = -(-(j + 1) * w // self.out_w)
                patch = x[:, :, hs:he, ws:we].reshape(b, c, -1)
                flat = patch.argmax(axis=-1)
                out[:, :, i, j] = np.take_along_axis(patch, flat[..., None], axis=-1)[..., 0]
                pw = we - ws
                argr[:, :, i, j] = hs + flat // pw
                argc[:, :, i, j] = ws + flat % pw
        self._cache = (argr, argc, x.shape)
        return out

    def backward(self, grad):
        argr, argc, xshape = self._need_cache(self._cache)
        b, c = xshape[0], xshape[1]
        dx = np.zeros(xshape, dtype=grad.dtype)
        bi = np.arange(b)[:, None, None, None]
        ci = np.arange(c)[None, :, None, None]
        np.add.at(dx, (bi, ci, argr, argc), grad)
        return dx


class Flatten(Layer):
    def __init__(self):
        self._shape = None

    def forward(self, x, train):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        shape = self._need_cache(self._shape)
        return grad.reshape(shape)


class Sequential(Layer):
    def __init__(self, *layers: Layer):
        self.layers = list(layers)

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def buffers(self):
        return [b for layer in self.layers for b in layer.buffers()]

    def forward(self, x, train):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch; returns (loss, dlogits).

    Stable log-softmax; the loss accumulates in float64.
    """
    if logits.shape[0] == 0:
        raise ValueError("empty batch")
    z = logits.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    n = logits.shape[0]
    idx = np.arange(n)
    loss = float(-logp[idx, labels].mean())
    probs = np.exp(logp)
    dlogits = probs
    dlogits[idx, labels] -= 1.0
    dlogits /= n
    return loss, dlogits.astype(logits.dtype)
