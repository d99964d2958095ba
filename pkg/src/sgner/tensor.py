"""Dense float64 tensors with reverse-mode autodiff on an explicit tape.

The design is deliberately small: a `Tensor` wraps a numpy array, every
differentiable op records a backward closure on the currently active
`Tape`, and `Tape.backward` replays the closures in reverse creation
order (creation order is already topological). With no tape active the
ops compute values only, which is what prediction uses.

Also houses the Adam optimizer, gradient clipping, a finite-difference
gradient checker, and the binary checkpoint format.
"""

import json
import math

import numpy as np

CHECKPOINT_MAGIC = b"SGNER1"

_ACTIVE_TAPE = None


class Tensor:
    """Rank-1/2 array of float64 values plus an accumulated gradient."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return multiply(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


class Parameter(Tensor):
    """Trainable tensor with a stable name and a preallocated gradient."""

    __slots__ = ("name",)

    def __init__(self, name, data):
        super().__init__(data, requires_grad=True)
        if not np.all(np.isfinite(self.data)):
            raise ValueError(f"parameter {name!r} contains non-finite values")
        self.name = name
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


class Tape:
    """Ordered record of op closures; backward is single-use.

    Use as a context manager around the forward pass, then call
    ``backward(loss)`` once. A second backward on the same tape raises,
    since the recorded closures assume freshly accumulated output grads.
    """

    def __init__(self):
        self._nodes = []
        self._consumed = False

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("a tape is already active; tapes do not nest")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def backward(self, loss):
        if self._consumed:
            raise RuntimeError("tape already consumed; rebuild the forward pass")
        self._consumed = True
        if loss.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.data.shape}")
        loss.grad = np.ones_like(loss.data)
        for out, backward_fn in reversed(self._nodes):
            if out.grad is not None:
                backward_fn(out.grad)


def _record(out, backward_fn):
    if _ACTIVE_TAPE is not None and out.requires_grad:
        _ACTIVE_TAPE._nodes.append((out, backward_fn))


def _tracked(*inputs):
    return _ACTIVE_TAPE is not None and any(t.requires_grad for t in inputs)


def _accumulate(t, delta):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += delta


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# ops


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data, _tracked(a, b))

    def backward_fn(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    _record(out, backward_fn)
    return out


def add(a, b):
    """Elementwise sum; also accepts a rank-1 bias broadcast over rows."""
    a, b = as_tensor(a), as_tensor(b)
    row_bias = a.data.ndim == 2 and b.data.ndim == 1 and b.data.shape[0] == a.data.shape[1]
    if not row_bias and a.data.shape != b.data.shape:
        raise ValueError(f"add shape mismatch: {a.data.shape} + {b.data.shape}")
    out = Tensor(a.data + b.data, _tracked(a, b))

    def backward_fn(g):
        _accumulate(a, g)
        _accumulate(b, g.sum(axis=0) if row_bias else g)

    _record(out, backward_fn)
    return out


def multiply(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ValueError(f"multiply shape mismatch: {a.data.shape} * {b.data.shape}")
    out = Tensor(a.data * b.data, _tracked(a, b))

    def backward_fn(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    _record(out, backward_fn)
    return out


def scale(a, c):
    a = as_tensor(a)
    c = float(c)
    out = Tensor(a.data * c, _tracked(a))

    def backward_fn(g):
        _accumulate(a, g * c)

    _record(out, backward_fn)
    return out


def transpose(a):
    a = as_tensor(a)
    out = Tensor(a.data.T, _tracked(a))

    def backward_fn(g):
        _accumulate(a, g.T)

    _record(out, backward_fn)
    return out


def concat_cols(tensors):
    tensors = [as_tensor(t) for t in tensors]
    widths = [t.data.shape[1] for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=1), _tracked(*tensors))

    def backward_fn(g):
        lo = 0
        for t, w in zip(tensors, widths):
            _accumulate(t, g[:, lo:lo + w])
            lo += w

    _record(out, backward_fn)
    return out


def concat_rows(tensors):
    tensors = [as_tensor(t) for t in tensors]
    heights = [t.data.shape[0] for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=0), _tracked(*tensors))

    def backward_fn(g):
        lo = 0
        for t, h in zip(tensors, heights):
            _accumulate(t, g[lo:lo + h])
            lo += h

    _record(out, backward_fn)
    return out


def index_rows(a, indices):
    """Gather rows; the backward pass scatter-adds, so repeats are fine."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= a.data.shape[0]):
        raise IndexError(f"row index out of range for shape {a.data.shape}")
    out = Tensor(a.data[idx], _tracked(a))

    def backward_fn(g):
        delta = np.zeros_like(a.data)
        np.add.at(delta, idx, g)
        _accumulate(a, delta)

    _record(out, backward_fn)
    return out


def slice_cols(a, lo, hi):
    a = as_tensor(a)
    out = Tensor(a.data[:, lo:hi].copy(), _tracked(a))

    def backward_fn(g):
        delta = np.zeros_like(a.data)
        delta[:, lo:hi] = g
        _accumulate(a, delta)

    _record(out, backward_fn)
    return out


def relu(a):
    a = as_tensor(a)
    out = Tensor(np.maximum(a.data, 0.0), _tracked(a))

    def backward_fn(g):
        _accumulate(a, g * (out.data > 0.0))

    _record(out, backward_fn)
    return out


def sigmoid(a):
    a = as_tensor(a)
    x = a.data
    # split by sign to avoid exp overflow
    pos = x >= 0
    s = np.empty_like(x)
    s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    s[~pos] = ex / (1.0 + ex)
    out = Tensor(s, _tracked(a))

    def backward_fn(g):
        _accumulate(a, g * s * (1.0 - s))

    _record(out, backward_fn)
    return out


def tanh(a):
    a = as_tensor(a)
    out = Tensor(np.tanh(a.data), _tracked(a))

    def backward_fn(g):
        _accumulate(a, g * (1.0 - out.data ** 2))

    _record(out, backward_fn)
    return out


def softmax_rows(a):
    """Row-wise softmax of a rank-2 tensor, stabilized by row-max shift."""
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ValueError(f"softmax_rows needs rank 2, got shape {a.data.shape}")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)
    out = Tensor(p, _tracked(a))

    def backward_fn(g):
        _accumulate(a, (g - (g * p).sum(axis=1, keepdims=True)) * p)

    _record(out, backward_fn)
    return out


def cross_entropy(probabilities, gold):
    """Summed negative log-likelihood of the gold class per row.

    Takes post-softmax probabilities; reduction is SUM over rows so the
    caller controls any batch averaging.
    """
    p = as_tensor(probabilities)
    idx = np.asarray(gold, dtype=np.intp)
    if p.data.ndim != 2 or idx.ndim != 1 or idx.shape[0] != p.data.shape[0]:
        raise ValueError(f"cross_entropy shape mismatch: {p.data.shape} vs {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= p.data.shape[1]):
        raise IndexError(f"gold class out of range for {p.data.shape[1]} classes")
    rows = np.arange(idx.shape[0])
    picked = p.data[rows, idx]
    out = Tensor(-np.log(picked).sum(), _tracked(p))

    def backward_fn(g):
        delta = np.zeros_like(p.data)
        delta[rows, idx] = -g / picked
        _accumulate(p, delta)

    _record(out, backward_fn)
    return out


def sum_all(a):
    a = as_tensor(a)
    out = Tensor(a.data.sum(), _tracked(a))

    def backward_fn(g):
        _accumulate(a, np.full_like(a.data, float(g)))

    _record(out, backward_fn)
    return out


# ---------------------------------------------------------------------------
# optimization


class Adam:
    """Adam with bias correction and per-group learning rates.

    ``groups`` is either a flat list of Parameters (then ``lr`` applies to
    all of them) or a list of ``{"params": [...], "lr": float}`` dicts,
    e.g. one group for the encoder and one for the classifier heads.
    """

    def __init__(self, groups, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        if groups and isinstance(groups[0], Parameter):
            groups = [{"params": list(groups), "lr": lr}]
        self.groups = [{"params": list(g["params"]), "lr": float(g["lr"])} for g in groups]
        self.beta1, self.beta2 = betas
        self.eps = eps
        self._step = 0
        self._m = {}
        self._v = {}
        for g in self.groups:
            for p in g["params"]:
                if p.name in self._m:
                    raise ValueError(f"parameter {p.name!r} appears in two groups")
                self._m[p.name] = np.zeros_like(p.data)
                self._v[p.name] = np.zeros_like(p.data)

    def zero_grad(self):
        for g in self.groups:
            for p in g["params"]:
                p.grad[...] = 0.0

    def step(self):
        self._step += 1
        bc1 = 1.0 - self.beta1 ** self._step
        bc2 = 1.0 - self.beta2 ** self._step
        for g in self.groups:
            for p in g["params"]:
                m = self._m[p.name]
                v = self._v[p.name]
                m *= self.beta1
                m += (1.0 - self.beta1) * p.grad
                v *= self.beta2
                v += (1.0 - self.beta2) * p.grad ** 2
                p.data -= g["lr"] * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def clip_global_norm(params, max_norm):
    """Scale all gradients down if their joint L2 norm exceeds max_norm."""
    total = math.sqrt(sum(float((p.grad ** 2).sum()) for p in params))
    if total > max_norm and total > 0.0:
        factor = max_norm / total
        for p in params:
            p.grad *= factor
    return total


# ---------------------------------------------------------------------------
# verification


class GradCheckResult:
    def __init__(self, max_rel_error, worst_param, worst_index, n_checked):
        self.max_rel_error = max_rel_error
        self.worst_param = worst_param
        self.worst_index = worst_index
        self.n_checked = n_checked

    def __repr__(self):
        return (f"GradCheckResult(max_rel_error={self.max_rel_error:.3e}, "
                f"worst_param={self.worst_param!r}, coords={self.n_checked})")


def grad_check(loss_fn, params, epsilon=1e-5):
    """Compare tape gradients against central finite differences.

    ``loss_fn`` must rebuild the forward pass from the current parameter
    values on every call and return a scalar Tensor. The relative error
    per coordinate is |g_fd - g_ad| / max(1e-8, |g_fd| + |g_ad|) and the
    maximum over all coordinates of all params is reported.
    """
    for p in params:
        p.grad[...] = 0.0
    with Tape() as tape:
        tape.backward(loss_fn())
    analytic = {p.name: p.grad.copy() for p in params}

    worst = 0.0
    worst_param = None
    worst_index = None
    n_checked = 0
    for p in params:
        flat = p.data.reshape(-1)
        grad_flat = analytic[p.name].reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + epsilon
            plus = float(loss_fn().data)
            flat[k] = orig - epsilon
            minus = float(loss_fn().data)
            flat[k] = orig
            fd = (plus - minus) / (2.0 * epsilon)
            rel = abs(fd - grad_flat[k]) / max(1e-8, abs(fd) + abs(grad_flat[k]))
            n_checked += 1
            if rel > worst:
                worst = rel
                worst_param = p.name
                worst_index = k
    return GradCheckResult(worst, worst_param, worst_index, n_checked)


# ---------------------------------------------------------------------------
# checkpoints


def write_checkpoint(path, arrays, meta=None):
    """Write named float64 arrays to a self-describing binary file.

    Layout: magic line, one JSON header line (dtype, metadata, tensor
    names with shapes in order), then the raw little-endian bytes of each
    tensor back to back.
    """
    names = list(arrays)
    header = {
        "dtype": "<f8",
        "meta": meta or {},
        "tensors": [[name, list(arrays[name].shape)] for name in names],
    }
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC + b"\n")
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for name in names:
            f.write(np.ascontiguousarray(arrays[name], dtype="<f8").tobytes())


def read_checkpoint(path):
    """Read a checkpoint; returns (meta, dict name -> float64 array)."""
    with open(path, "rb") as f:
        magic = f.readline().rstrip(b"\n")
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a {CHECKPOINT_MAGIC.decode()} checkpoint")
        try:
            header = json.loads(f.readline().decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValueError(f"{path}: corrupt checkpoint header: {exc}") from exc
        arrays = {}
        for name, shape in header["tensors"]:
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            raw = f.read(count * 8)
            if len(raw) != count * 8:
                raise ValueError(f"{path}: truncated data for tensor {name!r}")
            arr = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{path}: non-finite values in tensor {name!r}")
            arrays[name] = arr
        if f.read(1):
            raise ValueError(f"{path}: trailing bytes after last tensor")
    return header.get("meta", {}), arrays
