"""Small dense-tensor engine with tape-based reverse-mode differentiation.

Tensors wrap read-only float64 numpy arrays. Operations record themselves on
the innermost active :class:`Tape` (``with Tape() as tape: ...``); outside a
tape they just compute values, which is what inference uses.

    >>> with Tape() as tape:
    ...     x = Tensor([1.0, 2.0])
    ...     loss = (x * x).sum()
    >>> tape.backward(loss)[x]
    array([2., 4.])
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "DomainError",
    "ContractError",
    "Tensor",
    "Tape",
    "Gradients",
    "matmul",
    "transpose",
    "reshape",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "tsum",
    "mean",
    "concat",
    "stack",
    "take",
    "tmax",
    "exp",
    "log",
    "sigmoid",
    "tanh",
    "elu",
    "leaky_relu",
    "softplus",
    "log_sigmoid",
    "logsumexp",
    "softmax_masked",
    "layer_norm",
    "bilinear",
    "lstm_cell",
    "lstm_sequence",
    "grad_check",
    "glorot_uniform",
    "truncated_normal",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class DomainError(ValueError):
    """Input lies outside the operation's domain (e.g. an empty reduction)."""


class ContractError(RuntimeError):
    """Misuse of the tape API."""


class Tensor:
    """Immutable float64 array that can take part in a recorded computation."""

    __slots__ = ("data", "name", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        arr.setflags(write=False)
        self.data = arr
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    def __len__(self) -> int:
        return self.shape[0]

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


# ---------------------------------------------------------------------------
# tape
# ---------------------------------------------------------------------------

Backward = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


@dataclass
class _Node:
    tensor: Tensor
    parents: tuple[int, ...]
    backward: Backward | None


_ACTIVE: list["Tape"] = []


class Gradients(Mapping):
    """Gradient lookup keyed by tensor identity.

    Tensors the loss never reached (or that were never recorded) map to zeros.
    """

    def __init__(self, tape: "Tape", buffers: dict[int, np.ndarray]):
        self._tape = tape
        self._buffers = buffers

    def __getitem__(self, tensor: Tensor) -> np.ndarray:
        idx = self._tape._index.get(id(tensor))
        if idx is None or idx not in self._buffers:
            return np.zeros(tensor.shape)
        return self._buffers[idx]

    def __iter__(self):
        for idx in self._buffers:
            yield self._tape._nodes[idx].tensor

    def __len__(self) -> int:
        return len(self._buffers)


class Tape:
    """Ordered record of operations.

    Calling :meth:`backward` recomputes every gradient buffer from scratch,
    so repeated calls on the same tape return identical gradients. Use one
    tape per training step; :meth:`reset` clears it for reuse.
    """

    def __init__(self):
        self._nodes: list[_Node] = []
        self._index: dict[int, int] = {}

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def __len__(self) -> int:
        return len(self._nodes)

    def reset(self) -> None:
        self._nodes.clear()
        self._index.clear()

    def watch(self, tensor: Tensor) -> int:
        key = id(tensor)
        idx = self._index.get(key)
        if idx is None:
            idx = len(self._nodes)
            self._index[key] = idx
            self._nodes.append(_Node(tensor, (), None))
        return idx

    def _record(self, out: Tensor, parents: Sequence[Tensor], backward: Backward) -> None:
        pidx = tuple(self.watch(p) for p in parents)
        self._index[id(out)] = len(self._nodes)
        self._nodes.append(_Node(out, pidx, backward))

    def backward(self, loss: Tensor) -> Gradients:
        if loss.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        root = self._index.get(id(loss))
        if root is None:
            raise ContractError("loss tensor was not recorded on this tape")
        buffers: dict[int, np.ndarray] = {root: np.ones(loss.shape)}
        for idx in range(root, -1, -1):
            node = self._nodes[idx]
            g = buffers.get(idx)
            if g is None or node.backward is None:
                continue
            for pidx, pg in zip(node.parents, node.backward(g)):
                if pg is None:
                    continue
                if pidx in buffers:
                    buffers[pidx] = buffers[pidx] + pg
                else:
                    buffers[pidx] = np.array(pg, dtype=np.float64)
        return Gradients(self, buffers)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward: Backward) -> Tensor:
    out = Tensor(data)
    if _ACTIVE:
        _ACTIVE[-1]._record(out, parents, backward)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# linear algebra and elementwise arithmetic
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product for 1-D/2-D operands; backward gives g·bᵀ and aᵀ·g."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise ShapeError(f"matmul expects 1-D or 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    A = a.data if a.ndim == 2 else a.data[None, :]
    B = b.data if b.ndim == 2 else b.data[:, None]
    out = A @ B

    def backward(g):
        G = g.reshape(out.shape)
        ga = (G @ B.T).reshape(a.shape)
        gb = (A.T @ G).reshape(b.shape)
        return ga, gb

    if a.ndim == 1 and b.ndim == 1:
        shape: tuple[int, ...] = ()
    elif a.ndim == 1:
        shape = (out.shape[1],)
    elif b.ndim == 1:
        shape = (out.shape[0],)
    else:
        shape = out.shape
    return _make(out.reshape(shape), (a, b), backward)


def transpose(a) -> Tensor:
    a = _as_tensor(a)
    return _make(a.data.T, (a,), lambda g: (g.T,))


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data + b.data
    return _make(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data - b.data
    return _make(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data * b.data
    return _make(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * out / b.data, b.shape)
        return ga, gb

    return _make(out, (a, b), backward)


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = _as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), backward)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = _as_tensor(a)
    n = a.size if axis is None else a.shape[axis]
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise DomainError("concat of an empty list")
    out = np.concatenate([t.data for t in ts], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(out, ts, backward)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise DomainError("stack of an empty list")
    out = np.stack([t.data for t in ts], axis=axis)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(ts)))

    return _make(out, ts, backward)


def take(a, key) -> Tensor:
    """``a[key]`` with numpy indexing semantics; gradients scatter-add back."""
    a = _as_tensor(a)
    if isinstance(key, Tensor):
        raise TypeError("index with ints, slices or integer arrays, not tensors")
    out = a.data[key]

    def backward(g):
        full = np.zeros(a.shape)
        np.add.at(full, key, g)
        return (full,)

    return _make(np.array(out), (a,), backward)


def tmax(a, axis=None) -> Tensor:
    """Maximum along ``axis``; the gradient goes to the first arg-max."""
    a = _as_tensor(a)
    if a.size == 0 or (axis is not None and a.shape[axis] == 0):
        raise DomainError("max over an empty axis")
    if axis is None:
        flat = int(np.argmax(a.data))
        out = a.data.reshape(-1)[flat]

        def backward(g):
            full = np.zeros(a.size)
            full[flat] = g
            return (full.reshape(a.shape),)

        return _make(out, (a,), backward)
    arg = np.expand_dims(np.argmax(a.data, axis=axis), axis)
    out = np.take_along_axis(a.data, arg, axis=axis).squeeze(axis)

    def backward(g):
        full = np.zeros(a.shape)
        np.put_along_axis(full, arg, np.expand_dims(g, axis), axis=axis)
        return (full,)

    return _make(out, (a,), backward)


# ---------------------------------------------------------------------------
# nonlinearities
# ---------------------------------------------------------------------------


def _sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = _as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    out = _sigmoid(a.data)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def elu(a, alpha: float = 1.0) -> Tensor:
    a = _as_tensor(a)
    neg_part = alpha * np.expm1(np.minimum(a.data, 0.0))
    out = np.where(a.data >= 0, a.data, neg_part)
    return _make(out, (a,), lambda g: (g * np.where(a.data >= 0, 1.0, neg_part + alpha),))


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = _as_tensor(a)
    out = np.where(a.data >= 0, a.data, slope * a.data)
    return _make(out, (a,), lambda g: (g * np.where(a.data >= 0, 1.0, slope),))


def softplus(a) -> Tensor:
    """log(1 + exp(x)), overflow-free."""
    a = _as_tensor(a)
    return _make(_softplus(a.data), (a,), lambda g: (g * _sigmoid(a.data),))


def log_sigmoid(a) -> Tensor:
    """log σ(x) = −softplus(−x)."""
    a = _as_tensor(a)
    return _make(-_softplus(-a.data), (a,), lambda g: (g * _sigmoid(-a.data),))


# ---------------------------------------------------------------------------
# reductions with max-shift stabilization
# ---------------------------------------------------------------------------


def _check_mask(x: np.ndarray, mask, axis: int) -> np.ndarray:
    if mask is None:
        if x.shape[axis] == 0:
            raise DomainError("reduction over an empty axis")
        return np.ones(x.shape, dtype=bool)
    m = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    if not m.any(axis=axis).all():
        raise DomainError("mask keeps no entry along the reduction axis")
    return m


def _masked_softmax(x: np.ndarray, m: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    shift = np.max(np.where(m, x, -np.inf), axis=axis, keepdims=True)
    e = np.where(m, np.exp(np.where(m, x - shift, 0.0)), 0.0)
    z = e.sum(axis=axis, keepdims=True)
    return e / z, shift + np.log(z)


def logsumexp(a, axis: int | None = None, mask=None) -> Tensor:
    """max(x) + log Σ exp(x − max(x)) over kept entries; ``axis=None`` flattens."""
    a = _as_tensor(a)
    if axis is None:
        flat = a.reshape(-1)
        return logsumexp(flat, axis=0, mask=None if mask is None else np.asarray(mask).reshape(-1))
    m = _check_mask(a.data, mask, axis)
    probs, lse = _masked_softmax(a.data, m, axis)
    out = lse.squeeze(axis)
    return _make(out, (a,), lambda g: (np.expand_dims(g, axis) * probs,))


def softmax_masked(a, mask=None, axis: int = -1) -> Tensor:
    """Softmax over the kept entries of ``axis``; masked entries are exactly 0."""
    a = _as_tensor(a)
    m = _check_mask(a.data, mask, axis)
    out, _ = _masked_softmax(a.data, m, axis)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (a,), backward)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm gain/bias {gain.shape}/{bias.shape} vs input {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = xhat * gain.data + bias.data

    def backward(g):
        dxhat = g * gain.data
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _make(out, (x, gain, bias), backward)


# ---------------------------------------------------------------------------
# fused model primitives
# ---------------------------------------------------------------------------


def bilinear(xs, weight, xo) -> Tensor:
    """Per-class bilinear forms: out[p, c] = xs[p]ᵀ W_c xo[p].

    ``weight`` has shape (classes, groups, block, block); with one group this
    is the dense form, with more groups each W_c is block-diagonal.
    """
    xs, weight, xo = _as_tensor(xs), _as_tensor(weight), _as_tensor(xo)
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise ShapeError(f"bilinear weight must be (C, g, b, b), got {weight.shape}")
    _, groups, block, _ = weight.shape
    width = groups * block
    if xs.ndim != 2 or xo.ndim != 2 or xs.shape != xo.shape or xs.shape[1] != width:
        raise ShapeError(
            f"bilinear operands {xs.shape} and {xo.shape} do not match weight {weight.shape}"
        )
    n = xs.shape[0]
    S = xs.data.reshape(n, groups, block)
    O = xo.data.reshape(n, groups, block)
    W = weight.data
    out = np.einsum("pgi,cgij,pgj->pc", S, W, O, optimize=True)

    def backward(g):
        WO = np.einsum("cgij,pgj->pcgi", W, O, optimize=True)
        gs = np.einsum("pc,pcgi->pgi", g, WO, optimize=True).reshape(xs.shape)
        go = np.einsum("pc,pgi,cgij->pgj", g, S, W, optimize=True).reshape(xo.shape)
        gw = np.einsum("pc,pgi,pgj->cgij", g, S, O, optimize=True)
        return gs, gw, go

    return _make(out, (xs, weight, xo), backward)


def lstm_cell(x, h, c, weight, bias) -> tuple[Tensor, Tensor]:
    """One LSTM step composed from primitive ops (gate order i, f, g, o).

    ``weight`` is (d_in + d_h, 4·d_h) acting on ``[x; h]``. Returns (h', c').
    """
    x, h, c = _as_tensor(x), _as_tensor(h), _as_tensor(c)
    d_h = h.shape[-1]
    z = matmul(concat([x, h], axis=-1), weight) + bias
    i = sigmoid(z[..., 0:d_h])
    f = sigmoid(z[..., d_h : 2 * d_h])
    g = tanh(z[..., 2 * d_h : 3 * d_h])
    o = sigmoid(z[..., 3 * d_h :])
    c_new = f * c + i * g
    h_new = o * tanh(c_new)
    return h_new, c_new


def lstm_sequence(xs, weight, bias, reverse: bool = False) -> Tensor:
    """Run an LSTM over the rows of ``xs`` from zero state, fused into one node.

    Row t of the result is the hidden state after consuming position t (in
    reading order when ``reverse`` is set). Backward is full BPTT.
    """
    xs, weight, bias = _as_tensor(xs), _as_tensor(weight), _as_tensor(bias)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise DomainError(f"lstm_sequence needs a non-empty (l, d) input, got {xs.shape}")
    length, d_in = xs.shape
    d_h = weight.shape[1] // 4
    if weight.shape != (d_in + d_h, 4 * d_h) or bias.shape != (4 * d_h,):
        raise ShapeError(f"lstm weight {weight.shape}/bias {bias.shape} vs input width {d_in}")
    W, b, X = weight.data, bias.data, xs.data
    order = range(length - 1, -1, -1) if reverse else range(length)

    H = np.zeros((length, d_h))
    cache = []
    h_prev = np.zeros(d_h)
    c_prev = np.zeros(d_h)
    for t in order:
        inp = np.concatenate([X[t], h_prev])
        z = inp @ W + b
        i = _sigmoid(z[:d_h])
        f = _sigmoid(z[d_h : 2 * d_h])
        g = np.tanh(z[2 * d_h : 3 * d_h])
        o = _sigmoid(z[3 * d_h :])
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        H[t] = h
        cache.append((t, inp, i, f, g, o, c_prev, tc))
        h_prev, c_prev = h, c

    def backward(gH):
        gX = np.zeros_like(X)
        gW = np.zeros_like(W)
        gb = np.zeros_like(b)
        dh_next = np.zeros(d_h)
        dc_next = np.zeros(d_h)
        for t, inp, i, f, g, o, cp, tc in reversed(cache):
            dh = gH[t] + dh_next
            do = dh * tc
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz = np.concatenate(
                [
                    dc * g * i * (1.0 - i),
                    dc * cp * f * (1.0 - f),
                    dc * i * (1.0 - g * g),
                    do * o * (1.0 - o),
                ]
            )
            gW += np.outer(inp, dz)
            gb += dz
            dinp = W @ dz
            gX[t] = dinp[:d_in]
            dh_next = dinp[d_in:]
            dc_next = dc * f
        return gX, gW, gb

    return _make(H, (xs, weight, bias), backward)


# ---------------------------------------------------------------------------
# verification and initialization
# ---------------------------------------------------------------------------


def grad_check(
    f: Callable[[dict[str, Tensor]], Tensor],
    params: Mapping[str, Tensor],
    eps: float = 1e-5,
    max_coords: int | None = None,
    seed: int = 0,
    floor: float = 1e-6,
) -> dict[str, float]:
    """Compare tape gradients of ``f`` with central differences.

    Returns the max relative error per parameter, where the relative error of
    one coordinate is |a − n| / max(|a|, |n|, floor). The floor matters for
    coordinates whose true gradient is zero: there the difference quotient is
    pure roundoff, about 1e-16·|f| / eps, and a tighter floor would report it
    as a large relative error. With ``max_coords`` only a seeded random subset
    of each tensor's coordinates is perturbed.
    """
    params = dict(params)
    with Tape() as tape:
        loss = f(params)
    grads = tape.backward(loss)
    rng = np.random.default_rng(seed)
    report = {}
    for name, p in params.items():
        analytic = grads[p].reshape(-1)
        coords = np.arange(p.size)
        if max_coords is not None and p.size > max_coords:
            coords = np.sort(rng.choice(p.size, size=max_coords, replace=False))
        worst = 0.0
        for k in coords:
            vals = []
            for step in (eps, -eps):
                data = p.data.copy().reshape(-1)
                data[k] += step
                trial = dict(params)
                trial[name] = Tensor(data.reshape(p.shape), name=p.name)
                vals.append(f(trial).item())
            numeric = (vals[0] - vals[1]) / (2 * eps)
            a = analytic[k]
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
        report[name] = float(worst)
    return report


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in=None, fan_out=None):
    fan_in = shape[-2] if fan_in is None else fan_in
    fan_out = shape[-1] if fan_out is None else fan_out
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def truncated_normal(rng: np.random.Generator, shape: tuple[int, ...], std: float = 0.02):
    """N(0, std) redrawn outside two standard deviations."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out
