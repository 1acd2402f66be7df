"""Dense float64 tensors with reverse-mode automatic differentiation.

Small tape-based engine: every operation returns a new :class:`Tensor`
holding references to its parents and a closure that propagates gradients.
``backward`` on a scalar loss walks the implicit tape in reverse
topological order exactly once. Sized for desk-scale models, so values are
64-bit throughout and correctness (finite-difference checkable gradients)
is preferred over speed.
"""

from __future__ import annotations

import json
import struct
from typing import Callable, Iterable, Sequence

import numpy as np

# When enabled, every op asserts that its output is finite.
DEBUG_CHECK_FINITE = False


class ShapeMismatch(ValueError):
    pass


def _check_finite(data: np.ndarray, op: str) -> None:
    if DEBUG_CHECK_FINITE and not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite values produced by {op}")


class Tensor:
    """A dense float64 array plus gradient metadata."""

    __slots__ = ("data", "requires_grad", "_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None, _op=""):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self._grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = _parents
        self._backward: Callable[[np.ndarray], None] | None = _backward
        self._op = _op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            return np.zeros_like(self.data)
        return self._grad

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self._grad is None:
            self._grad = np.zeros_like(self.data)
        self._grad += g

    def zero_grad(self) -> None:
        self._grad = None

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}, op={self._op!r})"

    # operator sugar; constants are wrapped as non-differentiable tensors
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

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __neg__(self):
        return mul(self, _wrap(-1.0))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def constant(value) -> Tensor:
    return Tensor(value, requires_grad=False)


def _result(data, parents: tuple[Tensor, ...], backward, op: str) -> Tensor:
    _check_finite(np.asarray(data), op)
    needs = any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data, _op=op)
    return Tensor(data, requires_grad=True, _parents=parents, _backward=backward, _op=op)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _binary_shapes_ok(a: np.ndarray, b: np.ndarray, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes_ok(a.data, b.data, "add")

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), bw, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes_ok(a.data, b.data, "sub")

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g, b.shape))

    return _result(a.data - b.data, (a, b), bw, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes_ok(a.data, b.data, "mul")

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), bw, "mul")


def div(a: Tensor, b: Tensor) -> Tensor:
    _binary_shapes_ok(a.data, b.data, "div")

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _result(a.data / b.data, (a, b), bw, "div")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatch(f"matmul: incompatible shapes {a.data.shape} and {b.data.shape}")

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(g @ b.data.T)
        if b.requires_grad:
            b.accumulate_grad(a.data.T @ g)

    return _result(a.data @ b.data, (a, b), bw, "matmul")


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise ShapeMismatch("concat: empty input")
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t.accumulate_grad(g[tuple(idx)])

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw, "concat")


def row_gather(x: Tensor, index: np.ndarray) -> Tensor:
    """Select rows ``x[index]``; duplicate indices are allowed."""
    index = np.asarray(index, dtype=np.int64)
    if x.data.ndim != 2:
        raise ShapeMismatch(f"row_gather: expected 2-d input, got {x.data.shape}")
    if index.size and (index.min() < 0 or index.max() >= x.data.shape[0]):
        raise ShapeMismatch(f"row_gather: index out of range for {x.data.shape}")

    def bw(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            np.add.at(gx, index, g)
            x.accumulate_grad(gx)

    return _result(x.data[index], (x,), bw, "row_gather")


def index_add_scatter(rows: Tensor, index: np.ndarray, num_rows: int) -> Tensor:
    """Scatter-add ``rows`` into a fresh (num_rows, d) tensor at ``index``."""
    index = np.asarray(index, dtype=np.int64)
    if rows.data.ndim != 2:
        raise ShapeMismatch(f"index_add_scatter: expected 2-d input, got {rows.data.shape}")
    if rows.data.shape[0] != index.shape[0]:
        raise ShapeMismatch(
            f"index_add_scatter: {rows.data.shape[0]} rows vs {index.shape[0]} indices")
    out = np.zeros((num_rows, rows.data.shape[1]))
    np.add.at(out, index, rows.data)

    def bw(g):
        if rows.requires_grad:
            rows.accumulate_grad(g[index])

    return _result(out, (rows,), bw, "index_add_scatter")


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeMismatch(f"transpose: expected 2-d input, got {x.data.shape}")

    def bw(g):
        if x.requires_grad:
            x.accumulate_grad(g.T)

    return _result(x.data.T.copy(), (x,), bw, "transpose")


def col_slice(x: Tensor, lo: int, hi: int) -> Tensor:
    """Columns ``x[:, lo:hi]`` of a 2-d tensor (inverse of concat on axis 1)."""
    if x.data.ndim != 2 or not 0 <= lo <= hi <= x.data.shape[1]:
        raise ShapeMismatch(f"col_slice: [{lo}:{hi}] invalid for shape {x.data.shape}")

    def bw(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            gx[:, lo:hi] = g
            x.accumulate_grad(gx)

    return _result(x.data[:, lo:hi].copy(), (x,), bw, "col_slice")


def sum_rows(x: Tensor) -> Tensor:
    def bw(g):
        if x.requires_grad:
            x.accumulate_grad(np.broadcast_to(g, x.shape).copy())

    return _result(x.data.sum(axis=0), (x,), bw, "sum_rows")


def mean_rows(x: Tensor) -> Tensor:
    n = x.data.shape[0]

    def bw(g):
        if x.requires_grad:
            x.accumulate_grad(np.broadcast_to(g / n, x.shape).copy())

    return _result(x.data.mean(axis=0), (x,), bw, "mean_rows")


def sum_all(x: Tensor) -> Tensor:
    def bw(g):
        if x.requires_grad:
            x.accumulate_grad(np.full_like(x.data, float(g)))

    return _result(x.data.sum(), (x,), bw, "sum_all")


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size

    def bw(g):
        if x.requires_grad:
            x.accumulate_grad(np.full_like(x.data, float(g) / n))

    return _result(x.data.mean(), (x,), bw, "mean_all")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def bw(g):
        if x.requires_grad:
            x.accumulate_grad(g * mask)

    return _result(np.maximum(x.data, 0.0), (x,), bw, "relu")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def bw(g):
        if x.requires_grad:
            x.accumulate_grad(g * (1.0 - y * y))

    return _result(y, (x,), bw, "tanh")


def sigmoid(x: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-x.data))

    def bw(g):
        if x.requires_grad:
            x.accumulate_grad(g * y * (1.0 - y))

    return _result(y, (x,), bw, "sigmoid")


def softplus(x: Tensor) -> Tensor:
    # log(1 + e^x), computed stably
    y = np.logaddexp(0.0, x.data)

    def bw(g):
        if x.requires_grad:
            x.accumulate_grad(g / (1.0 + np.exp(-x.data)))

    return _result(y, (x,), bw, "softplus")


def log(x: Tensor) -> Tensor:
    def bw(g):
        if x.requires_grad:
            x.accumulate_grad(g / x.data)

    return _result(np.log(x.data), (x,), bw, "log")


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)

    def bw(g):
        if x.requires_grad:
            x.accumulate_grad(g * y)

    return _result(y, (x,), bw, "exp")


def sqrt(x: Tensor) -> Tensor:
    y = np.sqrt(x.data)

    def bw(g):
        if x.requires_grad:
            x.accumulate_grad(g * 0.5 / y)

    return _result(y, (x,), bw, "sqrt")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        if x.requires_grad:
            dot = (g * y).sum(axis=axis, keepdims=True)
            x.accumulate_grad(y * (g - dot))

    return _result(y, (x,), bw, "softmax")


def layer_norm_core(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row of a 2-d tensor to zero mean / unit variance.

    Learnable scale and shift are applied by the caller with ``mul``/``add``.
    """
    if x.data.ndim != 2 or x.data.shape[1] == 0:
        raise ShapeMismatch(f"layer_norm_core: expected (n, d>0), got {x.data.shape}")
    mu = x.data.mean(axis=1, keepdims=True)
    var = x.data.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv

    def bw(g):
        if x.requires_grad:
            gm = g.mean(axis=1, keepdims=True)
            gxm = (g * xhat).mean(axis=1, keepdims=True)
            x.accumulate_grad(inv * (g - gm - xhat * gxm))

    return _result(xhat, (x,), bw, "layer_norm_core")


def dropout(x: Tensor, p: float, rng: np.random.Generator, train: bool) -> Tensor:
    """Inverted dropout; identity in eval mode. The mask is a constant for backward."""
    if not train or p <= 0.0:
        return x
    mask = (rng.random(x.shape) >= p) / (1.0 - p)

    def bw(g):
        if x.requires_grad:
            x.accumulate_grad(g * mask)

    return _result(x.data * mask, (x,), bw, "dropout")


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def backward(loss: Tensor) -> None:
    """Propagate d(loss)/d(node) into every reachable tensor's ``.grad``.

    Parameters that do not participate in ``loss`` keep a zero gradient.
    """
    if loss.data.ndim != 0:
        raise ShapeMismatch(f"backward: loss must be scalar, got shape {loss.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))

    loss.accumulate_grad(np.ones_like(loss.data))
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node._grad)


# ---------------------------------------------------------------------------
# parameters, Adam, checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"HLSDSE\x00\x01"


class ParamStore:
    """Named trainable tensors with per-parameter Adam state."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter name: {name}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        self.params[name] = t
        self._m[name] = np.zeros_like(t.data)
        self._v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> list[str]:
        return list(self.params)

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.zero_grad()

    def num_values(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def adam_step(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                  eps: float = 1e-8) -> None:
        """Standard bias-corrected Adam update; clears gradients afterwards."""
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - beta1 ** t
        bc2 = 1.0 - beta2 ** t
        for name, p in self.params.items():
            g = p.grad
            m = self._m[name]
            v = self._v[name]
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
            p.zero_grad()

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.params.items()}

    def load_snapshot(self, values: dict[str, np.ndarray]) -> None:
        for name, arr in values.items():
            self.params[name].data = arr.copy()

    def save(self, path, hyperparams: dict | None = None) -> None:
        """Write a versioned binary checkpoint: magic, JSON manifest, named f64 tensors."""
        manifest = json.dumps(hyperparams or {}, sort_keys=True).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<I", len(manifest)))
            fh.write(manifest)
            fh.write(struct.pack("<I", len(self.params)))
            for name, t in self.params.items():
                nb = name.encode("utf-8")
                fh.write(struct.pack("<H", len(nb)))
                fh.write(nb)
                fh.write(struct.pack("<B", t.data.ndim))
                for dim in t.data.shape:
                    fh.write(struct.pack("<I", dim))
                fh.write(t.data.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> tuple["ParamStore", dict]:
        with open(path, "rb") as fh:
            magic = fh.read(len(CHECKPOINT_MAGIC))
            if magic != CHECKPOINT_MAGIC:
                raise ValueError(f"{path}: not a checkpoint file (bad magic)")
            (mlen,) = struct.unpack("<I", fh.read(4))
            hyperparams = json.loads(fh.read(mlen).decode("utf-8"))
            (count,) = struct.unpack("<I", fh.read(4))
            store = cls()
            for _ in range(count):
                (nlen,) = struct.unpack("<H", fh.read(2))
                name = fh.read(nlen).decode("utf-8")
                (ndim,) = struct.unpack("<B", fh.read(1))
                shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
                size = int(np.prod(shape)) if shape else 1
                data = np.frombuffer(fh.read(8 * size), dtype="<f8").reshape(shape)
                store.add(name, data)
        return store, hyperparams


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------

def finite_diff_check(f: Callable[[], Tensor], params: Iterable[tuple[str, Tensor]],
                      tol: float = 1e-4, h: float = 1e-5,
                      max_coords_per_param: int | None = None,
                      rng: np.random.Generator | None = None) -> dict[str, float]:
    """Compare analytic gradients of ``f()`` against central finite differences.

    Returns the max relative error per parameter, where relative error is
    ``|a - n| / max(1, |a|, |n|)``. Raises AssertionError if any parameter
    exceeds ``tol``.
    """
    params = list(params)
    for _, p in params:
        p.zero_grad()
    loss = f()
    backward(loss)
    analytic = {name: p.grad.copy() for name, p in params}

    report: dict[str, float] = {}
    rng = rng or np.random.default_rng(0)
    for name, p in params:
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords_per_param is not None and flat.size > max_coords_per_param:
            coords = rng.choice(flat.size, size=max_coords_per_param, replace=False)
        worst = 0.0
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            up = f().item()
            flat[i] = orig - h
            down = f().item()
            flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            a = analytic[name].reshape(-1)[i]
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, err)
        report[name] = worst
        if worst > tol:
            raise AssertionError(f"gradient check failed for {name}: rel err {worst:.3e} > {tol}")
    return report
