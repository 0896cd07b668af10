"""Minimal reverse-mode autodiff over dense float64 matrices.

Every tracked quantity is a 2-D ``Value`` (scalars are 1x1). Forward ops run
eagerly on numpy arrays and record a vector-Jacobian closure when any input
requires gradients; ``backward`` replays the tape in reverse topological
order. Gradients accumulate into ``Value.grad`` across backward calls until
explicitly zeroed, so several loss terms can feed the same parameters.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit


class Value:
    """A node in the computation graph: data plus a lazily allocated grad slot.

    The vjp closure of a node maps the incoming gradient to a tuple of
    gradients aligned with ``_parents`` (``None`` for untracked parents).
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_vjp", "name")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf",
                 parents: tuple = (), vjp: Callable | None = None, name: str = ""):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ValueError(f"Value must be a matrix, got ndim={arr.ndim}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op = op
        self._parents = parents
        self._vjp = vjp
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on non-scalar Value of shape {self.shape}")
        return float(self.data[0, 0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Value":
        return Value(self.data.copy())

    def __repr__(self) -> str:
        tag = f" '{self.name}'" if self.name else ""
        return f"Value{tag}({self.shape[0]}x{self.shape[1]}, op={self.op})"


def parameter(data, name: str = "") -> Value:
    """A leaf Value that collects gradients."""
    return Value(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def constant(data) -> Value:
    return Value(data)


def _as_value(x) -> Value:
    return x if isinstance(x, Value) else Value(x)


def _make(data, parents: Sequence["Value"], op: str, vjp: Callable) -> Value:
    if any(p.requires_grad for p in parents):
        return Value(data, requires_grad=True, op=op, parents=tuple(parents), vjp=vjp)
    return Value(data, op=op)


# ---------------------------------------------------------------------------
# primitives


def matmul(a: Value, b: Value) -> Value:
    a, b = _as_value(a), _as_value(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    return _make(a.data @ b.data, (a, b), "matmul",
                 lambda g: (g @ b.data.T if a.requires_grad else None,
                            a.data.T @ g if b.requires_grad else None))


def sparse_matmul(s, b: Value) -> Value:
    """Product of a constant scipy sparse matrix with a tracked dense Value."""
    b = _as_value(b)
    if not sp.issparse(s):
        raise TypeError("sparse_matmul expects a scipy sparse matrix on the left")
    if s.shape[1] != b.shape[0]:
        raise ValueError(f"sparse_matmul shape mismatch {s.shape} @ {b.shape}")
    st = s.T.tocsr()
    return _make(np.asarray(s @ b.data), (b,), "sparse_matmul",
                 lambda g: (np.asarray(st @ g),))


def transpose(a: Value) -> Value:
    a = _as_value(a)
    return _make(a.data.T, (a,), "transpose", lambda g: (g.T,))


def concat_cols(a: Value, b: Value) -> Value:
    a, b = _as_value(a), _as_value(b)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"concat_cols row mismatch {a.shape} vs {b.shape}")
    na = a.shape[1]
    return _make(np.hstack([a.data, b.data]), (a, b), "concat_cols",
                 lambda g: (g[:, :na], g[:, na:]))


def concat_rows(a: Value, b: Value) -> Value:
    a, b = _as_value(a), _as_value(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"concat_rows column mismatch {a.shape} vs {b.shape}")
    na = a.shape[0]
    return _make(np.vstack([a.data, b.data]), (a, b), "concat_rows",
                 lambda g: (g[:na], g[na:]))


def take_rows(a: Value, indices) -> Value:
    a = _as_value(a)
    idx = np.asarray(indices, dtype=np.intp)
    unique = idx.size == 0 or bool(np.all(np.diff(idx) > 0))

    def vjp(g):
        acc = np.zeros_like(a.data)
        if unique:
            acc[idx] = g
        else:
            np.add.at(acc, idx, g)
        return (acc,)

    return _make(a.data[idx], (a,), "take_rows", vjp)


def row_scale(a: Value, scales) -> Value:
    """Multiply row i by the constant scalar scales[i]."""
    a = _as_value(a)
    s = np.asarray(scales, dtype=np.float64).reshape(-1, 1)
    if s.shape[0] != a.shape[0]:
        raise ValueError(f"row_scale length {s.shape[0]} != rows {a.shape[0]}")
    return _make(a.data * s, (a,), "row_scale", lambda g: (g * s,))


def relu(a: Value) -> Value:
    a = _as_value(a)
    # gradient at exactly 0 is defined as 0
    mask = a.data > 0.0
    return _make(np.where(mask, a.data, 0.0), (a,), "relu", lambda g: (g * mask,))


def leaky_relu(a: Value, slope: float = 0.01) -> Value:
    a = _as_value(a)
    factor = np.where(a.data > 0.0, 1.0, slope)
    return _make(a.data * factor, (a,), "leaky_relu", lambda g: (g * factor,))


def sigmoid(a: Value) -> Value:
    a = _as_value(a)
    out = expit(a.data)
    return _make(out, (a,), "sigmoid", lambda g: (g * out * (1.0 - out),))


def row_softmax(a: Value) -> Value:
    a = _as_value(a)
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        inner = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - inner),)

    return _make(out, (a,), "row_softmax", vjp)


def add(a: Value, b: Value) -> Value:
    a, b = _as_value(a), _as_value(b)
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch {a.shape} vs {b.shape}")
    return _make(a.data + b.data, (a, b), "add", lambda g: (g, g))


def sub(a: Value, b: Value) -> Value:
    a, b = _as_value(a), _as_value(b)
    if a.shape != b.shape:
        raise ValueError(f"sub shape mismatch {a.shape} vs {b.shape}")
    return _make(a.data - b.data, (a, b), "sub", lambda g: (g, -g))


def scale(a: Value, c: float) -> Value:
    a = _as_value(a)
    c = float(c)
    return _make(a.data * c, (a,), "scale", lambda g: (g * c,))


def hadamard(a: Value, b: Value) -> Value:
    a, b = _as_value(a), _as_value(b)
    if a.shape != b.shape:
        raise ValueError(f"hadamard shape mismatch {a.shape} vs {b.shape}")
    return _make(a.data * b.data, (a, b), "hadamard",
                 lambda g: (g * b.data, g * a.data))


def sum_all(a: Value) -> Value:
    a = _as_value(a)
    return _make(np.array([[a.data.sum()]]), (a,), "sum_all",
                 lambda g: (np.full_like(a.data, g[0, 0]),))


def frobenius_sq(a: Value) -> Value:
    a = _as_value(a)
    return _make(np.array([[float((a.data * a.data).sum())]]), (a,), "frobenius_sq",
                 lambda g: (2.0 * g[0, 0] * a.data,))


def squared_error_sum(a: Value, target) -> Value:
    """frobenius_sq(a - target) for a constant target, fused to avoid an
    intermediate difference node on large matrices."""
    a = _as_value(a)
    t = np.asarray(target, dtype=np.float64)
    if t.shape != a.shape:
        raise ValueError(f"squared_error_sum shape mismatch {a.shape} vs {t.shape}")
    diff = a.data - t
    return _make(np.array([[float((diff * diff).sum())]]), (a,),
                 "squared_error_sum", lambda g: (2.0 * g[0, 0] * diff,))


_LOG_FLOOR = 1e-300  # softmax outputs are positive; floor only guards underflow


def masked_cross_entropy(probs: Value, targets, mask, weights=None) -> Value:
    """Mean over ``mask`` of -sum_c targets[v,c] * log(probs[v,c]).

    ``targets`` holds one distribution row per node (same row count as
    ``probs``); rows outside the mask are ignored. Optional per-masked-node
    ``weights`` rescale individual terms (the mean keeps the |mask| divisor).
    """
    probs = _as_value(probs)
    idx = np.asarray(mask, dtype=np.intp)
    if idx.size == 0:
        raise ValueError("masked_cross_entropy: empty mask")
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != probs.shape:
        raise ValueError(f"targets shape {t.shape} != probs shape {probs.shape}")
    if weights is None:
        w = np.ones(idx.size)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (idx.size,):
            raise ValueError("weights must align with mask")
    p = np.maximum(probs.data[idx], _LOG_FLOOR)
    tm = t[idx]
    loss = float(-(w[:, None] * tm * np.log(p)).sum() / idx.size)

    def vjp(g):
        acc = np.zeros_like(probs.data)
        np.add.at(acc, idx, -(w[:, None] * tm) / p / idx.size)
        return (g[0, 0] * acc,)

    return _make(np.array([[loss]]), (probs,), "masked_cross_entropy", vjp)


# ---------------------------------------------------------------------------
# backward pass


def _topo_order(root: Value) -> list[Value]:
    order: list[Value] = []
    seen: set[int] = set()
    stack: list[tuple[Value, bool]] = [(root, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Value) -> None:
    """Accumulate d(loss)/d(parameter) into ``.grad`` of every reachable leaf.

    Interior results are differentiated through but do not retain gradients;
    leaf Values (parameters and explicitly tracked inputs) accumulate until
    zeroed. Gradient buffers are copy-on-write: a vjp output is stored
    borrowed and only materialized into an owned array when a second path
    contributes to the same node.
    """
    if loss.data.shape != (1, 1):
        raise ValueError(f"backward expects a scalar (1x1) Value, got {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topo_order(loss)
    local: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    owned: set[int] = {id(loss)}
    for node in reversed(order):
        g = local.get(id(node))
        if g is None:  # not reached from the loss (shared subgraph pruned)
            continue
        if node._vjp is not None:
            parent_grads = node._vjp(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                cur = local.get(id(p))
                if cur is None:
                    local[id(p)] = pg
                elif id(p) in owned:
                    cur += pg
                else:
                    local[id(p)] = cur + pg
                    owned.add(id(p))
    for node in order:
        if node._parents:
            continue
        g = local.get(id(node))
        if g is None:
            continue
        if node.grad is None:
            node.grad = g if id(node) in owned else g.copy()
        else:
            node.grad += g


# ---------------------------------------------------------------------------
# optimizer


class AdamState:
    """Adam moments plus hyperparameters for a fixed parameter list.

    Weight decay is decoupled: applied directly to the parameter at step
    time, never folded into the moment estimates.
    """

    def __init__(self, params: Sequence[Value], learning_rate: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8,
                 weight_decay: float = 0.0):
        self.params = list(params)
        self.step = 0
        self.first_moment = [np.zeros_like(p.data) for p in self.params]
        self.second_moment = [np.zeros_like(p.data) for p in self.params]
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay


def adam_step(params: Sequence[Value], state: AdamState) -> None:
    """One in-place Adam update; gradients are zeroed afterward."""
    if list(params) != state.params:
        raise ValueError("adam_step: params do not match the optimizer state")
    for p in params:
        if p.grad is None:
            raise ValueError(f"adam_step: parameter {p!r} has no gradient")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    lr = state.learning_rate
    for i, p in enumerate(params):
        g = p.grad
        m = state.first_moment[i]
        v = state.second_moment[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        update = lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
        if state.weight_decay:
            update = update + lr * state.weight_decay * p.data
        p.data -= update
        p.zero_grad()


# ---------------------------------------------------------------------------
# finite-difference oracle


def grad_check(f: Callable[[], Value], param: Value, h: float = 1e-5) -> float:
    """Max relative error between the tape gradient of f() and central differences.

    ``f`` must be a deterministic closure over ``param`` returning a scalar
    Value. Relative error uses a small denominator floor so exactly-zero
    gradients do not amplify finite-difference noise.
    """
    param.zero_grad()
    loss = f()
    backward(loss)
    analytic = param.grad.copy()
    param.zero_grad()

    numeric = np.zeros_like(param.data)
    flat = param.data.ravel()
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        f_plus = f().item()
        flat[k] = orig - h
        f_minus = f().item()
        flat[k] = orig
        numeric.ravel()[k] = (f_plus - f_minus) / (2.0 * h)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    return float((np.abs(analytic - numeric) / denom).max())
