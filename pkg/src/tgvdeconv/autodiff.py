"""Minimal reverse-mode automatic differentiation on float64 numpy arrays.

Just enough tape for the two generator networks and the variational loss:
elementwise arithmetic with broadcasting, a handful of activations, dense and
3x3-convolution layers, 2x pooling/upsampling, gathers along an axis, and a
fused image-kernel convolution backed by the compiled kernels.  The graph is
rebuilt on every forward pass; ``backward`` walks it once and accumulates
gradients into the leaves.
"""

import numpy as np

from . import backend


class Tensor:
    __slots__ = ("value", "grad", "parents", "bwd", "requires_grad")

    def __init__(self, value, parents=(), bwd=None, requires_grad=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.bwd = bwd
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self):
        return self.value.size

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __neg__(self):
        return mul(self, _wrap(-1.0))

    def backward(self):
        if self.value.ndim != 0 and self.value.size != 1:
            raise ValueError("backward() expects a scalar root")
        topo, seen, stack = [], set(), [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.value)
        for node in reversed(topo):
            if node.bwd is not None:
                node.bwd(node.grad)


def leaf(value, requires_grad=False):
    return Tensor(value, requires_grad=requires_grad)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.value)
    t.grad += g


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def add(a, b):
    out = Tensor(a.value + b.value, (a, b))
    out.bwd = lambda g: (_accum(a, _unbroadcast(g, a.shape)),
                         _accum(b, _unbroadcast(g, b.shape)))
    return out


def sub(a, b):
    out = Tensor(a.value - b.value, (a, b))
    out.bwd = lambda g: (_accum(a, _unbroadcast(g, a.shape)),
                         _accum(b, _unbroadcast(-g, b.shape)))
    return out


def mul(a, b):
    out = Tensor(a.value * b.value, (a, b))
    out.bwd = lambda g: (_accum(a, _unbroadcast(g * b.value, a.shape)),
                         _accum(b, _unbroadcast(g * a.value, b.shape)))
    return out


def sum_all(a):
    out = Tensor(np.sum(a.value), (a,))
    out.bwd = lambda g: _accum(a, np.broadcast_to(g, a.shape).copy() if a.shape else g)
    return out


def exp(a):
    ev = np.exp(a.value)
    out = Tensor(ev, (a,))
    out.bwd = lambda g: _accum(a, g * ev)
    return out


def log(a):
    out = Tensor(np.log(a.value), (a,))
    out.bwd = lambda g: _accum(a, g / a.value)
    return out


def sigmoid(a):
    sv = 1.0 / (1.0 + np.exp(-a.value))
    out = Tensor(sv, (a,))
    out.bwd = lambda g: _accum(a, g * sv * (1.0 - sv))
    return out


def silu(a):
    sv = 1.0 / (1.0 + np.exp(-a.value))
    out = Tensor(a.value * sv, (a,))
    out.bwd = lambda g: _accum(a, g * (sv + a.value * sv * (1.0 - sv)))
    return out


def softmax_vec(a):
    """Softmax over a 1-D vector."""
    shifted = a.value - np.max(a.value)
    ev = np.exp(shifted)
    y = ev / np.sum(ev)
    out = Tensor(y, (a,))
    out.bwd = lambda g: _accum(a, y * (g - np.dot(g, y)))
    return out


def reshape(a, shape):
    out = Tensor(a.value.reshape(shape), (a,))
    out.bwd = lambda g: _accum(a, g.reshape(a.shape))
    return out


def affine(w, x, b):
    """w @ x + b for a dense layer (w: (out, in), x: (in,), b: (out,))."""
    out = Tensor(w.value @ x.value + b.value, (w, x, b))

    def bwd(g):
        _accum(w, np.outer(g, x.value))
        _accum(x, w.value.T @ g)
        _accum(b, g)

    out.bwd = bwd
    return out


def conv3x3(x, w, b=None):
    """Same-size 3x3 convolution layer on (C, H, W) via im2col.

    w is stored flat as (C_out, C_in * 9), b as (C_out,); padding is zero.
    The bias may be omitted when a normalization layer follows (it would be
    cancelled immediately).
    """
    c_in, h, wid = x.shape
    cols = backend.im2col3(x.value)
    y = (w.value @ cols).reshape(w.shape[0], h, wid)
    if b is not None:
        y += b.value[:, None, None]
    out = Tensor(y, (x, w, b) if b is not None else (x, w))

    def bwd(g):
        g2 = g.reshape(w.shape[0], h * wid)
        _accum(w, g2 @ cols.T)
        if b is not None:
            _accum(b, g2.sum(axis=1))
        _accum(x, backend.col2im3(np.ascontiguousarray(w.value.T @ g2), c_in, h, wid))

    out.bwd = bwd
    return out


def avgpool2(x):
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"avgpool2 needs even spatial dimensions, got {(h, w)}")
    y = x.value.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))
    out = Tensor(y, (x,))

    def bwd(g):
        gx = np.repeat(np.repeat(g, 2, axis=1), 2, axis=2) * 0.25
        _accum(x, gx)

    out.bwd = bwd
    return out


def upsample2(x):
    """Nearest-neighbour 2x upsampling of (C, H, W)."""
    y = np.repeat(np.repeat(x.value, 2, axis=1), 2, axis=2)
    out = Tensor(y, (x,))
    c, h, w = x.shape

    def bwd(g):
        _accum(x, g.reshape(c, h, 2, w, 2).sum(axis=(2, 4)))

    out.bwd = bwd
    return out


def channel_norm(x, gain, bias, eps=1e-5):
    """Per-channel standardization of (C, H, W) over the spatial axes, with
    learned per-channel gain and bias — the stabilizer that keeps deep
    generator trunks from blowing up."""
    m = x.value.mean(axis=(1, 2), keepdims=True)
    v = x.value.var(axis=(1, 2), keepdims=True)
    inv = 1.0 / np.sqrt(v + eps)
    y = (x.value - m) * inv
    out = Tensor(gain.value[:, None, None] * y + bias.value[:, None, None], (x, gain, bias))

    def bwd(g):
        _accum(gain, np.sum(g * y, axis=(1, 2)))
        _accum(bias, np.sum(g, axis=(1, 2)))
        dy = g * gain.value[:, None, None]
        gx = inv * (dy - dy.mean(axis=(1, 2), keepdims=True)
                    - y * (dy * y).mean(axis=(1, 2), keepdims=True))
        _accum(x, gx)

    out.bwd = bwd
    return out


def concat_c(a, b):
    """Concatenate (C, H, W) tensors along the channel axis."""
    out = Tensor(np.concatenate([a.value, b.value], axis=0), (a, b))
    na = a.shape[0]

    def bwd(g):
        _accum(a, g[:na])
        _accum(b, g[na:])

    out.bwd = bwd
    return out


def index_axis(x, idx, axis):
    """Gather rows (axis 0) or columns (axis 1) of a 2-D tensor."""
    if axis not in (0, 1):
        raise ValueError("axis must be 0 or 1")
    out = Tensor(np.take(x.value, idx, axis=axis), (x,))

    def bwd(g):
        gx = np.zeros_like(x.value)
        if axis == 0:
            np.add.at(gx, idx, g)
        else:
            tmp = np.zeros((x.shape[1], x.shape[0]))
            np.add.at(tmp, idx, np.ascontiguousarray(g.T))
            gx += tmp.T
        _accum(x, gx)

    out.bwd = bwd
    return out


def conv_image_kernel(u, k, pi_r, pi_c):
    """Fused same-size convolution of an (H, W) image with a (K, K) kernel,
    differentiable in both arguments.  ``pi_r``/``pi_c`` are the padded index
    maps encoding the boundary rule."""
    hh, ww = u.shape
    kk = k.shape[0]
    y = backend.conv_same(u.value, k.value, pi_r, pi_c)
    out = Tensor(y, (u, k))

    def bwd(g):
        g = np.ascontiguousarray(g)
        _accum(u, backend.conv_same_grad_u(g, k.value, pi_r, pi_c, hh, ww))
        _accum(k, backend.conv_same_grad_k(g, u.value, kk, pi_r, pi_c))

    out.bwd = bwd
    return out


class Adam:
    """Adam with bias correction; one instance per parameter group."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.t = 0

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            m *= b1
            m += (1.0 - b1) * p.grad
            v *= b2
            v += (1.0 - b2) * p.grad * p.grad
            mhat = m / (1.0 - b1 ** self.t)
            vhat = v / (1.0 - b2 ** self.t)
            p.value -= self.lr * mhat / (np.sqrt(vhat) + self.eps)
