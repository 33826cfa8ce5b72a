"""Minimal numpy layers with explicit forward/backward passes.

Layers are stateless with respect to a single call: ``forward`` returns the
output plus a cache, and ``backward`` consumes that cache.  This keeps a
trained network safe to query from several threads.  Image tensors use the
NHWC layout.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Layer:
    params = ()
    buffers = ()

    def init(self, rng):
        pass

    def forward(self, x, train, rng=None):
        raise NotImplementedError

    def backward(self, g, cache):
        """Return ``(dx, {param: grad})``."""
        raise NotImplementedError


class Dense(Layer):
    params = ("W", "b")

    def __init__(self, n_in, n_out):
        self.n_in, self.n_out = n_in, n_out

    def init(self, rng):
        bound = 1.0 / np.sqrt(self.n_in)
        self.W = rng.uniform(-bound, bound, (self.n_in, self.n_out))
        self.b = rng.uniform(-bound, bound, self.n_out)

    def forward(self, x, train, rng=None):
        return x @ self.W + self.b, x

    def backward(self, g, x):
        return g @ self.W.T, {"W": x.T @ g, "b": g.sum(axis=0)}


class BatchNorm(Layer):
    """Per-channel batch normalization over every axis but the last."""

    params = ("gamma", "beta")
    buffers = ("running_mean", "running_var")

    def __init__(self, n, momentum=0.1, eps=1e-5):
        self.n, self.momentum, self.eps = n, momentum, eps

    def init(self, rng):
        self.gamma = np.ones(self.n)
        self.beta = np.zeros(self.n)
        self.running_mean = np.zeros(self.n)
        self.running_var = np.ones(self.n)

    def forward(self, x, train, rng=None):
        flat = x.reshape(-1, self.n)
        if train:
            mean = flat.mean(axis=0)
            var = flat.var(axis=0)
            m = flat.shape[0]
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean
            unbiased = var * m / max(m - 1, 1)
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * unbiased
        else:
            mean, var = self.running_mean, self.running_var
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (flat - mean) * inv
        out = (xhat * self.gamma + self.beta).reshape(x.shape)
        return out, (xhat, inv, train, x.shape)

    def backward(self, g, cache):
        xhat, inv, train, shape = cache
        gf = g.reshape(-1, self.n)
        grads = {"gamma": (gf * xhat).sum(axis=0), "beta": gf.sum(axis=0)}
        gx = gf * self.gamma
        if train:
            gx = inv * (gx - gx.mean(axis=0) - xhat * (gx * xhat).mean(axis=0))
        else:
            gx = gx * inv
        return gx.reshape(shape), grads


class ReLU(Layer):
    def forward(self, x, train, rng=None):
        mask = x > 0
        return x * mask, mask

    def backward(self, g, mask):
        return g * mask, {}


class Dropout(Layer):
    """Inverted dropout; the identity outside training."""

    def __init__(self, p):
        self.p = p

    def forward(self, x, train, rng=None):
        if not train or self.p == 0:
            return x, None
        keep = (rng.random(x.shape) >= self.p) / (1.0 - self.p)
        return x * keep, keep

    def backward(self, g, keep):
        return (g if keep is None else g * keep), {}


class Conv3x3(Layer):
    """3x3 convolution with zero 'same' padding (cross-correlation, as usual)."""

    params = ("W", "b")

    def __init__(self, c_in, c_out):
        self.c_in, self.c_out = c_in, c_out

    def init(self, rng):
        bound = 1.0 / np.sqrt(9 * self.c_in)
        self.W = rng.uniform(-bound, bound, (3, 3, self.c_in, self.c_out))
        self.b = rng.uniform(-bound, bound, self.c_out)

    def forward(self, x, train, rng=None):
        n, h, w, c = x.shape
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        # (n, h, w, c, 3, 3) -> (n, h, w, 3, 3, c)
        cols = sliding_window_view(xp, (3, 3), axis=(1, 2)).transpose(0, 1, 2, 4, 5, 3)
        cols = cols.reshape(n * h * w, 9 * c)
        out = cols @ self.W.reshape(9 * c, self.c_out) + self.b
        return out.reshape(n, h, w, self.c_out), (cols, x.shape)

    def backward(self, g, cache):
        cols, (n, h, w, c) = cache
        g2 = g.reshape(-1, self.c_out)
        grads = {"W": (cols.T @ g2).reshape(self.W.shape), "b": g2.sum(axis=0)}
        dcols = (g2 @ self.W.reshape(9 * c, self.c_out).T).reshape(n, h, w, 3, 3, c)
        dxp = np.zeros((n, h + 2, w + 2, c))
        for i in range(3):
            for j in range(3):
                dxp[:, i : i + h, j : j + w, :] += dcols[:, :, :, i, j, :]
        return dxp[:, 1:-1, 1:-1, :], grads


class MaxPool2(Layer):
    """2x2 max pooling with stride 2; ties route the gradient to the first max."""

    def forward(self, x, train, rng=None):
        n, h, w, c = x.shape
        blocks = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, h // 2, w // 2, c, 4)
        arg = blocks.argmax(axis=-1)
        out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
        return out, (arg, x.shape)

    def backward(self, g, cache):
        arg, (n, h, w, c) = cache
        blocks = np.zeros(arg.shape + (4,))
        np.put_along_axis(blocks, arg[..., None], g[..., None], axis=-1)
        dx = blocks.reshape(n, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(n, h, w, c)
        return dx, {}


class Reshape(Layer):
    def __init__(self, shape):
        self.shape = tuple(shape)

    def forward(self, x, train, rng=None):
        return x.reshape((x.shape[0],) + self.shape), x.shape

    def backward(self, g, shape):
        return g.reshape(shape), {}


class Network:
    """Ordered named layers with whole-network forward/backward."""

    def __init__(self, layers):
        self.layers = list(layers)

    def init(self, rng):
        for _, layer in self.layers:
            layer.init(rng)

    def forward(self, x, train=False, rng=None):
        caches = []
        for _, layer in self.layers:
            x, cache = layer.forward(x, train, rng)
            caches.append(cache)
        return x, caches

    def backward(self, g, caches):
        grads = {}
        for (name, layer), cache in zip(reversed(self.layers), reversed(caches)):
            g, lg = layer.backward(g, cache)
            for k, v in lg.items():
                grads[f"{name}.{k}"] = v
        return g, grads

    def named_arrays(self, include_buffers=True):
        out = {}
        for name, layer in self.layers:
            keys = layer.params + (layer.buffers if include_buffers else ())
            for k in keys:
                out[f"{name}.{k}"] = getattr(layer, k)
        return out

    def set_arrays(self, arrays):
        lookup = dict(self.layers)
        for key, value in arrays.items():
            name, attr = key.rsplit(".", 1)
            setattr(lookup[name], attr, np.array(value, dtype=np.float64))


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, network, grads):
        self.t += 1
        lookup = dict(network.layers)
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for key, g in grads.items():
            name, attr = key.rsplit(".", 1)
            layer = lookup[name]
            if key not in self.m:
                self.m[key] = np.zeros_like(g)
                self.v[key] = np.zeros_like(g)
            m = self.m[key]
            v = self.v[key]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p = getattr(layer, attr)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
