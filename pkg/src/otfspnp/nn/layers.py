"""Layer implementations: forward, exact reverse-mode backward, parameters.

All tensors are real float64 numpy arrays; complex signals are carried as
two channels (real, imaginary) by the callers.  Image-like activations are
shaped (batch, channels, height, width), vector activations (batch, features).

Each layer caches what its backward pass needs during forward; ``backward``
returns the gradients with respect to each input in order and stores
parameter gradients in ``self.grads``.
"""

from __future__ import annotations

import numpy as np

__all__ = ["LAYER_KINDS", "make_layer"]


class Layer:
    """Base: parameter-free, single input."""

    n_inputs = 1

    def __init__(self, rng: np.random.Generator):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.state: dict[str, np.ndarray] = {}  # non-trained persistent arrays

    def forward(self, xs: list[np.ndarray], train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, g: np.ndarray) -> list[np.ndarray]:
        raise NotImplementedError


def _uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Dense(Layer):
    def __init__(self, rng, n_in: int, n_out: int):
        super().__init__(rng)
        self.params["w"] = _uniform_init(rng, (n_out, n_in), n_in)
        self.params["b"] = np.zeros(n_out)

    def forward(self, xs, train):
        (x,) = xs
        self._x = x
        return x @ self.params["w"].T + self.params["b"]

    def backward(self, g):
        self.grads["w"] = g.T @ self._x
        self.grads["b"] = g.sum(axis=0)
        return [g @ self.params["w"]]


class Conv2d(Layer):
    """3x3 same-padding convolution over (batch, channel, h, w)."""

    def __init__(self, rng, c_in: int, c_out: int, ksize: int = 3):
        super().__init__(rng)
        if ksize % 2 != 1:
            raise ValueError(f"kernel size must be odd, got {ksize}")
        self.ksize = ksize
        self.params["w"] = _uniform_init(rng, (c_out, c_in, ksize, ksize), c_in * ksize * ksize)
        self.params["b"] = np.zeros(c_out)

    def forward(self, xs, train):
        (x,) = xs
        k, p = self.ksize, self.ksize // 2
        b, c, h, w = x.shape
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        cols = np.empty((b, c, k, k, h, w))
        for di in range(k):
            for dj in range(k):
                cols[:, :, di, dj] = xp[:, :, di : di + h, dj : dj + w]
        self._cols, self._shape = cols, (b, c, h, w)
        out = np.einsum("ocij,bcijhw->bohw", self.params["w"], cols, optimize=True)
        return out + self.params["b"][None, :, None, None]

    def backward(self, g):
        k, p = self.ksize, self.ksize // 2
        b, c, h, w = self._shape
        self.grads["w"] = np.einsum("bohw,bcijhw->ocij", g, self._cols, optimize=True)
        self.grads["b"] = g.sum(axis=(0, 2, 3))
        gcols = np.einsum("ocij,bohw->bcijhw", self.params["w"], g, optimize=True)
        gxp = np.zeros((b, c, h + 2 * p, w + 2 * p))
        for di in range(k):
            for dj in range(k):
                gxp[:, :, di : di + h, dj : dj + w] += gcols[:, :, di, dj]
        return [gxp[:, :, p : p + h, p : p + w]]


class Conv1x1(Layer):
    """Channel-mixing projection, used on residual shortcuts."""

    def __init__(self, rng, c_in: int, c_out: int):
        super().__init__(rng)
        self.params["w"] = _uniform_init(rng, (c_out, c_in), c_in)
        self.params["b"] = np.zeros(c_out)

    def forward(self, xs, train):
        (x,) = xs
        self._x = x
        return np.einsum("oc,bchw->bohw", self.params["w"], x) + self.params["b"][
            None, :, None, None
        ]

    def backward(self, g):
        self.grads["w"] = np.einsum("bohw,bchw->oc", g, self._x)
        self.grads["b"] = g.sum(axis=(0, 2, 3))
        return [np.einsum("oc,bohw->bchw", self.params["w"], g)]


class BatchNorm2d(Layer):
    """Per-channel normalization with learned affine and running statistics.

    Training mode normalizes by batch statistics (biased variance) and
    updates the running estimates; eval mode is the affine map using the
    stored running statistics.
    """

    def __init__(self, rng, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__(rng)
        self.momentum, self.eps = momentum, eps
        self.params["gamma"] = np.ones(channels)
        self.params["beta"] = np.zeros(channels)
        self.state["running_mean"] = np.zeros(channels)
        self.state["running_var"] = np.ones(channels)

    def forward(self, xs, train):
        (x,) = xs
        self._train = train
        axes = (0, 2, 3)
        if train:
            mu = x.mean(axis=axes)
            var = ((x - mu[None, :, None, None]) ** 2).mean(axis=axes)
            self.state["running_mean"] *= 1.0 - self.momentum
            self.state["running_mean"] += self.momentum * mu
            self.state["running_var"] *= 1.0 - self.momentum
            self.state["running_var"] += self.momentum * var
        else:
            mu = self.state["running_mean"]
            var = self.state["running_var"]
        self._ivar = 1.0 / np.sqrt(var + self.eps)
        self._xc = x - mu[None, :, None, None]
        self._xhat = self._xc * self._ivar[None, :, None, None]
        self._n = x.shape[0] * x.shape[2] * x.shape[3]
        return self.params["gamma"][None, :, None, None] * self._xhat + self.params["beta"][
            None, :, None, None
        ]

    def backward(self, g):
        axes = (0, 2, 3)
        self.grads["gamma"] = (g * self._xhat).sum(axis=axes)
        self.grads["beta"] = g.sum(axis=axes)
        gxhat = g * self.params["gamma"][None, :, None, None]
        if not self._train:
            return [gxhat * self._ivar[None, :, None, None]]
        n = self._n
        ivar = self._ivar[None, :, None, None]
        gvar = (gxhat * self._xc).sum(axis=axes) * (-0.5) * self._ivar**3
        gmu = -(gxhat * ivar).sum(axis=axes) + gvar * (-2.0 / n) * self._xc.sum(axis=axes)
        gx = (
            gxhat * ivar
            + gvar[None, :, None, None] * 2.0 * self._xc / n
            + gmu[None, :, None, None] / n
        )
        return [gx]


class Relu(Layer):
    def forward(self, xs, train):
        (x,) = xs
        self._mask = x > 0
        return x * self._mask

    def backward(self, g):
        return [g * self._mask]


class Softmax(Layer):
    """Softmax over the last axis."""

    def forward(self, xs, train):
        (x,) = xs
        e = np.exp(x - x.max(axis=-1, keepdims=True))
        self._y = e / e.sum(axis=-1, keepdims=True)
        return self._y

    def backward(self, g):
        y = self._y
        return [y * (g - (g * y).sum(axis=-1, keepdims=True))]


class Add(Layer):
    """Elementwise sum of two equal-shape activations (skip connections)."""

    n_inputs = 2

    def forward(self, xs, train):
        a, b = xs
        if a.shape != b.shape:
            raise ValueError(f"skip endpoints differ in shape: {a.shape} vs {b.shape}")
        return a + b

    def backward(self, g):
        return [g, g]


class AvgPool2(Layer):
    """2x2 average pooling, stride 2, ceil mode; edge cells average the
    entries that exist."""

    def forward(self, xs, train):
        (x,) = xs
        b, c, h, w = x.shape
        ho, wo = (h + 1) // 2, (w + 1) // 2
        sums = np.zeros((b, c, ho, wo))
        count = np.zeros((ho, wo))
        for di in range(2):
            for dj in range(2):
                sub = x[:, :, di::2, dj::2]
                sums[:, :, : sub.shape[2], : sub.shape[3]] += sub
                count[: sub.shape[2], : sub.shape[3]] += 1.0
        self._count, self._shape = count, (b, c, h, w)
        return sums / count

    def backward(self, g):
        b, c, h, w = self._shape
        gx = np.zeros((b, c, h, w))
        gn = g / self._count
        for di in range(2):
            for dj in range(2):
                target = gx[:, :, di::2, dj::2]
                target += gn[:, :, : target.shape[2], : target.shape[3]]
        return [gx]


class Upsample2(Layer):
    """Nearest-neighbor 2x upsampling cropped to (out_h, out_w)."""

    def __init__(self, rng, out_h: int, out_w: int):
        super().__init__(rng)
        self.out_h, self.out_w = out_h, out_w

    def forward(self, xs, train):
        (x,) = xs
        self._shape = x.shape
        if 2 * x.shape[2] < self.out_h or 2 * x.shape[3] < self.out_w:
            raise ValueError(
                f"cannot upsample {x.shape[2:]} to ({self.out_h}, {self.out_w})"
            )
        up = np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)
        return up[:, :, : self.out_h, : self.out_w]

    def backward(self, g):
        b, c, h, w = self._shape
        gp = np.zeros((b, c, 2 * h, 2 * w))
        gp[:, :, : self.out_h, : self.out_w] = g
        gx = (
            gp[:, :, 0::2, 0::2]
            + gp[:, :, 0::2, 1::2]
            + gp[:, :, 1::2, 0::2]
            + gp[:, :, 1::2, 1::2]
        )
        return [gx]


LAYER_KINDS = {
    "dense": Dense,
    "conv2d": Conv2d,
    "conv1x1": Conv1x1,
    "batchnorm2d": BatchNorm2d,
    "relu": Relu,
    "softmax": Softmax,
    "add": Add,
    "avgpool2": AvgPool2,
    "upsample2": Upsample2,
}


def make_layer(kind: str, rng: np.random.Generator, **kwargs) -> Layer:
    if kind not in LAYER_KINDS:
        raise ValueError(f"unknown layer kind {kind!r}; known: {sorted(LAYER_KINDS)}")
    return LAYER_KINDS[kind](rng, **kwargs)
