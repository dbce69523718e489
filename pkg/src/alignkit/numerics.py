"""Small reverse-mode autodiff engine over 2-D float64 matrices.

Every operation records its inputs and a vector-Jacobian callback on the
value it returns; ``backward`` on a 1x1 loss replays the tape in reverse
topological order. All storage is row-major numpy float64. Results of
exposed operations are checked to be finite; losses clamp their inputs
instead of producing infinities.
"""

from __future__ import annotations

import json
import struct
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np


class NonFiniteError(FloatingPointError):
    """A value or gradient contains NaN or Inf."""


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


def _as2d(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"expected a 2-D value, got shape {arr.shape}")
    return arr


class Matrix:
    """A 2-D float64 value, optionally recorded on the autodiff tape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False,
                 _parents: tuple = (), _vjp: Callable | None = None):
        self.data = _as2d(data)
        if not np.isfinite(self.data).all():
            raise NonFiniteError("matrix contains NaN or Inf")
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._vjp = _vjp

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise ShapeError(f"item() on a {self.data.shape} matrix")
        return float(self.data[0, 0])

    def detach(self) -> "Matrix":
        return Matrix(self.data.copy())

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def backward(self) -> None:
        """Backpropagate from this 1x1 value through the recorded tape."""
        if self.data.shape != (1, 1):
            raise ShapeError("backward() requires a 1x1 loss value")
        order: list[Matrix] = []
        seen: set[int] = set()
        stack: list[tuple[Matrix, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones((1, 1))
        for node in reversed(order):
            if node._vjp is not None and node.grad is not None:
                node._vjp(node.grad)

    # Operator sugar; the module-level functions do the work.
    def __add__(self, other: "Matrix") -> "Matrix":
        return add(self, other)

    def __sub__(self, other: "Matrix") -> "Matrix":
        return add(self, scale(other, -1.0))

    def __mul__(self, other: "Matrix") -> "Matrix":
        return mul(self, other)

    def __matmul__(self, other: "Matrix") -> "Matrix":
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Matrix(shape={self.data.shape}, requires_grad={self.requires_grad})"


def constant(data) -> Matrix:
    return Matrix(data)


def parameter(data) -> Matrix:
    return Matrix(data, requires_grad=True)


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward pass."""
    if g.shape == shape:
        return g
    out = g
    if shape[0] == 1 and g.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    if out.shape != shape:
        raise ShapeError(f"cannot reduce gradient {g.shape} to {shape}")
    return out


def _broadcastable(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return all(x == y or x == 1 or y == 1 for x, y in zip(a, b))


def add(a: Matrix, b: Matrix) -> Matrix:
    """Elementwise sum with row/column broadcasting."""
    if not _broadcastable(a.shape, b.shape):
        raise ShapeError(f"cannot add {a.shape} and {b.shape}")
    out = Matrix(a.data + b.data, _parents=(a, b), _vjp=None)

    def vjp(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    out._vjp = vjp
    return out


def mul(a: Matrix, b: Matrix) -> Matrix:
    """Elementwise product with row/column broadcasting."""
    if not _broadcastable(a.shape, b.shape):
        raise ShapeError(f"cannot multiply {a.shape} and {b.shape}")
    out = Matrix(a.data * b.data, _parents=(a, b))

    def vjp(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    out._vjp = vjp
    return out


def scale(a: Matrix, factor: float) -> Matrix:
    out = Matrix(a.data * factor, _parents=(a,))

    def vjp(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g * factor)

    out._vjp = vjp
    return out


def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.cols != b.rows:
        raise ShapeError(f"cannot matmul {a.shape} by {b.shape}")
    out = Matrix(a.data @ b.data, _parents=(a, b))

    def vjp(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    out._vjp = vjp
    return out


def transpose(a: Matrix) -> Matrix:
    out = Matrix(a.data.T, _parents=(a,))

    def vjp(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g.T)

    out._vjp = vjp
    return out


def tanh(a: Matrix) -> Matrix:
    val = np.tanh(a.data)
    out = Matrix(val, _parents=(a,))

    def vjp(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g * (1.0 - val * val))

    out._vjp = vjp
    return out


def relu(a: Matrix) -> Matrix:
    val = np.maximum(a.data, 0.0)
    out = Matrix(val, _parents=(a,))

    def vjp(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g * (a.data > 0.0))

    out._vjp = vjp
    return out


def sigmoid(a: Matrix) -> Matrix:
    # tanh form stays finite for any float input
    val = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    out = Matrix(val, _parents=(a,))

    def vjp(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(g * val * (1.0 - val))

    out._vjp = vjp
    return out


def row_softmax(a: Matrix) -> Matrix:
    """Softmax over each row; rows sum to 1."""
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    val = e / e.sum(axis=1, keepdims=True)
    out = Matrix(val, _parents=(a,))

    def vjp(g: np.ndarray) -> None:
        if a.requires_grad:
            inner = (g * val).sum(axis=1, keepdims=True)
            a._accumulate(val * (g - inner))

    out._vjp = vjp
    return out


def sum_all(a: Matrix) -> Matrix:
    out = Matrix([[a.data.sum()]], _parents=(a,))

    def vjp(g: np.ndarray) -> None:
        if a.requires_grad:
            a._accumulate(np.full(a.shape, g[0, 0]))

    out._vjp = vjp
    return out


def gather_rows(table: Matrix, ids: Sequence[int]) -> Matrix:
    """Select rows of ``table`` by index (embedding lookup)."""
    idx = np.asarray(ids, dtype=np.int64)
    if idx.ndim != 1 or idx.size == 0:
        raise ShapeError("gather_rows needs a non-empty 1-D index list")
    if idx.min() < 0 or idx.max() >= table.rows:
        raise IndexError(f"row index out of range for table with {table.rows} rows")
    out = Matrix(table.data[idx], _parents=(table,))

    def vjp(g: np.ndarray) -> None:
        if table.requires_grad:
            acc = np.zeros_like(table.data)
            np.add.at(acc, idx, g)
            table._accumulate(acc)

    out._vjp = vjp
    return out


def concat_cols(parts: Sequence[Matrix]) -> Matrix:
    if not parts:
        raise ShapeError("concat_cols of nothing")
    rows = parts[0].rows
    if any(p.rows != rows for p in parts):
        raise ShapeError("concat_cols parts disagree on row count")
    out = Matrix(np.concatenate([p.data for p in parts], axis=1),
                 _parents=tuple(parts))
    widths = [p.cols for p in parts]

    def vjp(g: np.ndarray) -> None:
        offset = 0
        for part, width in zip(parts, widths):
            if part.requires_grad:
                part._accumulate(g[:, offset:offset + width])
            offset += width

    out._vjp = vjp
    return out


def conv2d_same(x: Matrix, kernel: Matrix) -> Matrix:
    """2-D cross-correlation with zero padding and unchanged output shape.

    The kernel must be square with odd side length. A 1x1 input is valid
    and sees only zero padding around itself.
    """
    k = kernel.rows
    if kernel.cols != k or k % 2 == 0:
        raise ShapeError(f"kernel must be square with odd side, got {kernel.shape}")
    pad = k // 2
    n, m = x.shape
    padded = np.pad(x.data, pad)
    val = np.zeros((n, m))
    for a in range(k):
        for b in range(k):
            val += kernel.data[a, b] * padded[a:a + n, b:b + m]
    out = Matrix(val, _parents=(x, kernel))

    def vjp(g: np.ndarray) -> None:
        if kernel.requires_grad:
            gk = np.empty((k, k))
            for a in range(k):
                for b in range(k):
                    gk[a, b] = (g * padded[a:a + n, b:b + m]).sum()
            kernel._accumulate(gk)
        if x.requires_grad:
            gx_padded = np.zeros_like(padded)
            for a in range(k):
                for b in range(k):
                    gx_padded[a:a + n, b:b + m] += kernel.data[a, b] * g
            x._accumulate(gx_padded[pad:pad + n, pad:pad + m])

    out._vjp = vjp
    return out


BCE_CLAMP = 1e-12


def bce_sum(probs: Matrix, labels: Matrix) -> Matrix:
    """Summed binary cross-entropy; probabilities clamped to [1e-12, 1-1e-12].

    The gradient is that of the clamped composite, so saturated entries
    (outside the clamp range) receive zero gradient.
    """
    if probs.shape != labels.shape:
        raise ShapeError(f"probs {probs.shape} vs labels {labels.shape}")
    y = labels.data
    if ((y != 0.0) & (y != 1.0)).any():
        raise ValueError("labels must be 0 or 1")
    p = np.clip(probs.data, BCE_CLAMP, 1.0 - BCE_CLAMP)
    loss = -(y * np.log(p) + (1.0 - y) * np.log1p(-p)).sum()
    out = Matrix([[loss]], _parents=(probs,))
    inside = (probs.data > BCE_CLAMP) & (probs.data < 1.0 - BCE_CLAMP)

    def vjp(g: np.ndarray) -> None:
        if probs.requires_grad:
            gp = ((1.0 - y) / (1.0 - p) - y / p) * inside
            probs._accumulate(g[0, 0] * gp)

    out._vjp = vjp
    return out


def softmax_xent_sum(logits: Matrix, ids: Sequence[int]) -> Matrix:
    """Summed cross-entropy of row-softmaxed logits against gold row labels."""
    idx = np.asarray(ids, dtype=np.int64)
    if idx.shape != (logits.rows,):
        raise ShapeError("one gold label per logit row required")
    if idx.min() < 0 or idx.max() >= logits.cols:
        raise IndexError("gold label outside logit columns")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1)) + logits.data.max(axis=1)
    gold = logits.data[np.arange(logits.rows), idx]
    loss = (lse - gold).sum()
    out = Matrix([[loss]], _parents=(logits,))

    def vjp(g: np.ndarray) -> None:
        if logits.requires_grad:
            sm = np.exp(shifted)
            sm /= sm.sum(axis=1, keepdims=True)
            sm[np.arange(logits.rows), idx] -= 1.0
            logits._accumulate(g[0, 0] * sm)

    out._vjp = vjp
    return out


def layer_norm(x: Matrix, gain: Matrix, bias: Matrix, eps: float = 1e-5) -> Matrix:
    """Per-row normalization with learned 1xD gain and bias."""
    d = x.cols
    if gain.shape != (1, d) or bias.shape != (1, d):
        raise ShapeError("gain and bias must be 1 x cols(x)")
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Matrix(xhat * gain.data + bias.data, _parents=(x, gain, bias))

    def vjp(g: np.ndarray) -> None:
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=0, keepdims=True))
        if gain.requires_grad:
            gain._accumulate((g * xhat).sum(axis=0, keepdims=True))
        if x.requires_grad:
            gxhat = g * gain.data
            term = gxhat - gxhat.mean(axis=1, keepdims=True) \
                - xhat * (gxhat * xhat).mean(axis=1, keepdims=True)
            x._accumulate(term * inv)

    out._vjp = vjp
    return out


# ---------------------------------------------------------------------------
# parameters and optimization


class ParamStore:
    """Named parameters with Adam moment state and a shared step count."""

    def __init__(self, seed: int | None = None):
        self._params: dict[str, Matrix] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step = 0
        self.rng = np.random.default_rng(seed)

    def add(self, name: str, data) -> Matrix:
        if name in self._params:
            raise KeyError(f"parameter {name!r} already registered")
        param = parameter(data)
        self._params[name] = param
        self._m[name] = np.zeros(param.shape)
        self._v[name] = np.zeros(param.shape)
        return param

    def __getitem__(self, name: str) -> Matrix:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self) -> Iterable[tuple[str, Matrix]]:
        return ((name, self._params[name]) for name in self.names())

    def zero_grads(self) -> None:
        for param in self._params.values():
            param.grad = None

    def reset_optimizer(self) -> None:
        """Zero the Adam moments and the step count.

        Call when a new training run starts on an already-trained store;
        otherwise stale moments from the previous objective leak into the
        first updates and results depend on whether the model came from
        memory or from a file.
        """
        for name in self._m:
            self._m[name][...] = 0.0
            self._v[name][...] = 0.0
        self.step = 0

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: self._params[name].data.copy() for name in self.names()}

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        for name, param in self._params.items():
            if name not in arrays:
                raise KeyError(f"missing parameter {name!r}")
            incoming = _as2d(arrays[name])
            if incoming.shape != param.shape:
                raise ShapeError(
                    f"parameter {name!r} has shape {param.shape}, file has {incoming.shape}"
                )
            param.data[...] = incoming


def adam_step(store: ParamStore, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8,
              skip: Iterable[str] = ()) -> None:
    """One in-place Adam update from the gradients held on the parameters.

        m = b1*m + (1-b1)*g        mhat = m / (1 - b1^t)
        v = b2*v + (1-b2)*g^2      vhat = v / (1 - b2^t)
        p = p - lr * mhat / (sqrt(vhat) + eps)

    Parameters without a gradient this step keep their moments untouched.
    Non-finite gradients are an error.
    """
    store.step += 1
    t = store.step
    skipped = set(skip)
    for name in store.names():
        if name in skipped:
            continue
        param = store._params[name]
        if param.grad is None:
            continue
        g = param.grad
        if g.shape != param.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter {param.shape}")
        if not np.isfinite(g).all():
            raise NonFiniteError(f"non-finite gradient for {name!r}")
        m = store._m[name]
        v = store._v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        mhat = m / (1.0 - beta1 ** t)
        vhat = v / (1.0 - beta2 ** t)
        param.data -= lr * mhat / (np.sqrt(vhat) + eps)


def grad_check(f: Callable[[], Matrix], store: ParamStore,
               fd_step: float = 1e-5, skip: Iterable[str] = ()) -> float:
    """Compare tape gradients of ``f`` against central finite differences.

    Returns max over parameter entries of |analytic - fd| / max(1, |analytic|).
    ``f`` must rebuild its graph from the store's current values on each call.
    """
    store.zero_grads()
    loss = f()
    loss.backward()
    analytic = {
        name: (param.grad.copy() if param.grad is not None else np.zeros(param.shape))
        for name, param in store.items()
    }
    skipped = set(skip)
    worst = 0.0
    for name, param in store.items():
        if name in skipped:
            continue
        flat = param.data.reshape(-1)
        ana = analytic[name].reshape(-1)
        for k in range(flat.size):
            saved = flat[k]
            flat[k] = saved + fd_step
            up = f().item()
            flat[k] = saved - fd_step
            down = f().item()
            flat[k] = saved
            fd = (up - down) / (2.0 * fd_step)
            err = abs(ana[k] - fd) / max(1.0, abs(ana[k]))
            if err > worst:
                worst = err
    store.zero_grads()
    return worst


# ---------------------------------------------------------------------------
# binary parameter container

CONTAINER_MAGIC = b"ALNF"
CONTAINER_VERSION = 1


def save_container(path, arrays: Mapping[str, np.ndarray],
                   meta: Mapping | None = None) -> None:
    """Write named float64 matrices plus an optional JSON header.

    Layout: magic ``ALNF``, u32 version, u32 header length, UTF-8 JSON
    header, then per-matrix records of u32 name length, name, u32 rows,
    u32 cols, and row-major little-endian float64 data.
    """
    header = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CONTAINER_MAGIC)
        fh.write(struct.pack("<I", CONTAINER_VERSION))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for name in sorted(arrays):
            arr = _as2d(arrays[name])
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
            fh.write(arr.astype("<f8", copy=False).tobytes(order="C"))


def load_container(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a container back; inverse of ``save_container`` bit for bit."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CONTAINER_MAGIC:
        raise ValueError("not a parameter container (bad magic)")
    version = struct.unpack_from("<I", blob, 4)[0]
    if version != CONTAINER_VERSION:
        raise ValueError(f"unsupported container version {version}")
    header_len = struct.unpack_from("<I", blob, 8)[0]
    offset = 12
    meta = json.loads(blob[offset:offset + header_len].decode("utf-8")) \
        if header_len else {}
    offset += header_len
    arrays: dict[str, np.ndarray] = {}
    while offset < len(blob):
        name_len = struct.unpack_from("<I", blob, offset)[0]
        offset += 4
        name = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        rows, cols = struct.unpack_from("<II", blob, offset)
        offset += 8
        count = rows * cols
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        offset += count * 8
        arrays[name] = arr.reshape(rows, cols).astype(np.float64)
    return arrays, meta
