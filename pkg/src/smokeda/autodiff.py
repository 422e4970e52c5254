"""Reverse-mode automatic differentiation over dense float64 tensors.

Define-by-run: each op returns a new Tensor holding the forward value and a
closure that maps the upstream gradient to gradients for its parents. The
gradient reversal layer is a first-class node (identity forward, gradient
scaled by phi on the way down).
"""

from __future__ import annotations

import numpy as np


class DimensionError(ValueError):
    """Raised when operand shapes do not conform."""


class ContractError(ValueError):
    """Raised when an operation's precondition is violated."""


class Tensor:
    """Dense float64 array with an optional gradient slot and graph linkage.

    Leaf tensors created with requires_grad=True act as trainable parameters;
    intermediate tensors carry a backward closure and references to their
    parents so `backward` can replay the graph in reverse topological order.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False, _parents=(), _backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = tuple(_parents)
        self._backward_fn = _backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in self._parents)

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Small operator surface used by the loss plumbing.
    def __add__(self, other):
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(_as_tensor(other), -1.0))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Accumulate gradients of this scalar into every reachable leaf."""
        if self.data.size != 1:
            raise ContractError(
                f"backward requires a scalar loss, got shape {self.data.shape}"
            )
        order = _toposort(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in order:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad and not node._parents:
                node.grad = g if node.grad is None else node.grad + g
            if node._backward_fn is None:
                continue
            for parent, pg in zip(node._parents, node._backward_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _toposort(root):
    """Reverse topological order from root, iterative to spare the stack."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return list(reversed(order))


# ---------------------------------------------------------------------------
# elementwise / reduction plumbing


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor(out_data, _parents=(a, b), _backward_fn=bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def bwd(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor(out_data, _parents=(a, b), _backward_fn=bwd)


def scale(a: Tensor, c: float) -> Tensor:
    def bwd(g):
        return (g * c,)

    return Tensor(a.data * c, _parents=(a,), _backward_fn=bwd)


def tsum(a: Tensor) -> Tensor:
    def bwd(g):
        return (np.full_like(a.data, float(g)),)

    return Tensor(a.data.sum(), _parents=(a,), _backward_fn=bwd)


def square(a: Tensor) -> Tensor:
    def bwd(g):
        return (g * 2.0 * a.data,)

    return Tensor(a.data ** 2, _parents=(a,), _backward_fn=bwd)


def reshape(a: Tensor, shape) -> Tensor:
    def bwd(g):
        return (g.reshape(a.shape),)

    return Tensor(a.data.reshape(shape), _parents=(a,), _backward_fn=bwd)


def gather_rows(a: Tensor, idx) -> Tensor:
    """Select rows of a 2-D tensor; backward scatter-adds into place."""
    idx = np.asarray(idx, dtype=np.intp)

    def bwd(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        return (ga,)

    return Tensor(a.data[idx], _parents=(a,), _backward_fn=bwd)


def _unbroadcast(g, shape):
    """Sum g down to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# network ops


def op_affine(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """out[i, j] = sum_l x[i, l] * W[l, j] + b[j]."""
    if x.data.ndim != 2 or W.data.ndim != 2 or x.shape[1] != W.shape[0]:
        raise DimensionError(f"affine: x {x.shape} does not conform with W {W.shape}")
    if b.data.shape != (W.shape[1],):
        raise DimensionError(f"affine: bias {b.shape} does not match W {W.shape}")
    out_data = x.data @ W.data + b.data

    def bwd(g):
        return g @ W.data.T, x.data.T @ g, g.sum(axis=0)

    return Tensor(out_data, _parents=(x, W, b), _backward_fn=bwd)


def op_relu(x: Tensor) -> Tensor:
    mask = x.data > 0  # subgradient at exactly 0 is 0

    def bwd(g):
        return (g * mask,)

    return Tensor(np.where(mask, x.data, 0.0), _parents=(x,), _backward_fn=bwd)


def op_conv2d(x: Tensor, kernels: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """3x3 cross-correlation, accepting [C,H,W] or batched [N,C,H,W] input."""
    squeeze = x.data.ndim == 3
    xin = reshape(x, (1,) + x.shape) if squeeze else x
    n, c_in, h, w = xin.shape
    c_out, kc, kh, kw = kernels.shape
    if kc != c_in:
        raise DimensionError(
            f"conv2d: input channels {c_in} do not match kernel channels {kc}"
        )
    if (kh, kw) != (3, 3):
        raise DimensionError(f"conv2d: kernels must be 3x3, got {kh}x{kw}")
    if stride not in (1, 2):
        raise ContractError(f"conv2d: stride must be 1 or 2, got {stride}")
    hp, wp = h + 2 * pad, w + 2 * pad
    if hp < 3 or wp < 3:
        raise DimensionError(f"conv2d: padded input {hp}x{wp} smaller than kernel")
    h_out = (hp - 3) // stride + 1
    w_out = (wp - 3) // stride + 1

    xp = np.pad(xin.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]  # [N, C, h', w', 3, 3]
    cols = windows.transpose(0, 1, 4, 5, 2, 3).reshape(n, c_in * 9, h_out * w_out)
    wmat = kernels.data.reshape(c_out, c_in * 9)
    out_data = (wmat @ cols).reshape(n, c_out, h_out, w_out)

    def bwd(g):
        gm = g.reshape(n, c_out, h_out * w_out)
        gflat = gm.transpose(1, 0, 2).reshape(c_out, -1)
        cflat = cols.transpose(1, 0, 2).reshape(c_in * 9, -1)
        dk = (gflat @ cflat.T).reshape(kernels.shape)
        dcols = (wmat.T @ gm).reshape(n, c_in, 3, 3, h_out, w_out)
        dxp = np.zeros_like(xp)
        for i in range(3):
            for j in range(3):
                dxp[:, :, i : i + stride * h_out : stride,
                    j : j + stride * w_out : stride] += dcols[:, :, i, j]
        dx = dxp[:, :, pad : pad + h, pad : pad + w] if pad else dxp
        return dx, dk

    out = Tensor(out_data, _parents=(xin, kernels), _backward_fn=bwd)
    return reshape(out, out.shape[1:]) if squeeze else out


def op_maxpool2(x: Tensor) -> Tensor:
    """2x2 non-overlapping max; ties route gradient to the first element."""
    squeeze = x.data.ndim == 3
    xin = reshape(x, (1,) + x.shape) if squeeze else x
    n, c, h, w = xin.shape
    if h % 2 or w % 2:
        raise DimensionError(f"maxpool2: spatial dims must be even, got {h}x{w}")
    blocks = (
        xin.data.reshape(n, c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h // 2, w // 2, 4)
    )
    idx = blocks.argmax(axis=-1)  # first occurrence in row-major scan order
    out_data = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def bwd(g):
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, idx[..., None], g[..., None], axis=-1)
        gx = (
            gb.reshape(n, c, h // 2, w // 2, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(n, c, h, w)
        )
        return (gx,)

    out = Tensor(out_data, _parents=(xin,), _backward_fn=bwd)
    return reshape(out, out.shape[1:]) if squeeze else out


def op_softmax(logits: Tensor) -> Tensor:
    """Row-wise softmax with max-subtraction for overflow safety."""
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return Tensor(p, _parents=(logits,), _backward_fn=bwd)


def op_grl(x: Tensor, phi: float = -1.0) -> Tensor:
    """Gradient reversal: all-pass forward, gradient times phi backward."""
    if not np.isfinite(phi) or phi == 0.0:
        raise ContractError(f"grl: phi must be finite and nonzero, got {phi}")

    def bwd(g):
        return (g * phi,)

    return Tensor(x.data, _parents=(x,), _backward_fn=bwd)


def finite_diff_grad(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar f at x, one probe per element."""
    if eps <= 0:
        raise ContractError(f"finite_diff_grad: eps must be positive, got {eps}")
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(x))
        flat[i] = orig - eps
        fm = float(f(x))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad
