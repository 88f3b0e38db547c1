"""Dense tensors with reverse-mode automatic differentiation.

A Tensor wraps a flat-strided numpy array. Operations record themselves on a
module-level tape in creation order; since an op's inputs always exist before
its output, the tape is a topologically ordered DAG and ``backward`` is a
single reverse sweep over it. One training step owns the tape exclusively:
compute a scalar loss, call ``backward(loss)``, read ``.grad`` off the leaves.
The tape is cleared after each sweep.

Kernels are plain numpy and deterministic: scatter ops use ``np.add.at``
(sequential, input-order reduction), so repeated forward passes on identical
inputs are bit-identical.

Default precision is float32 for training; switch to float64 (via
``set_default_dtype`` or per-tensor ``dtype=``) for finite-difference
gradient checks, which need the headroom.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class DimensionError(ValueError):
    """Operand shapes do not satisfy an op's contract."""


class ContractError(RuntimeError):
    """An op was invoked outside its contract (bad root, missing grad, ...)."""


class ValidationError(ValueError):
    """Input values are outside an op's domain (e.g. non-binary labels)."""


class EvaluationError(RuntimeError):
    """A checked function evaluated to a non-finite value."""


class EmptyBatchError(ValueError):
    """An op that needs at least one row was given an empty batch."""


_DEFAULT_DTYPE = np.float32
_GRAD_ENABLED = True
_TAPE: list["Tensor"] = []


def set_default_dtype(dtype) -> None:
    """Set the dtype used for tensors constructed without an explicit one."""
    global _DEFAULT_DTYPE
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dt}; use float32 or float64")
    _DEFAULT_DTYPE = dt.type


def default_dtype():
    return _DEFAULT_DTYPE


class no_grad:
    """Context manager that disables taping (eval-mode forward passes)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


class Tensor:
    """A dense n-dimensional float array participating in the autodiff tape.

    ``grad`` is populated by ``backward`` for every tensor created with
    ``requires_grad=True``; it always has the same shape as ``data``.
    """

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype or _DEFAULT_DTYPE)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op!r}, requires_grad={self.requires_grad})"

    # operator sugar; constants are wrapped as non-differentiable tensors
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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _wrap(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x), requires_grad=False, dtype=np.asarray(x).dtype if isinstance(x, np.ndarray) and x.dtype.kind == "f" else None)


def _record(out: Tensor, parents: tuple[Tensor, ...], backward_fn, op: str) -> Tensor:
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
        out._op = op
        _TAPE.append(out)
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def tape_size() -> int:
    return len(_TAPE)


def clear_tape() -> None:
    """Drop all recorded nodes (normally done by ``backward``)."""
    for node in _TAPE:
        node._parents = ()
        node._backward = None
        node.grad = None
    _TAPE.clear()


def backward(loss: Tensor) -> None:
    """Reverse sweep from a scalar loss, accumulating ``.grad`` on leaves.

    Visits tape nodes in reverse insertion order exactly once; gradients
    accumulate additively across fan-out. The tape is cleared afterward, so
    each forward pass supports a single sweep.
    """
    if loss.size != 1:
        raise ContractError(f"backward root must be scalar, got shape {loss.shape}")
    if loss._backward is None and not loss.requires_grad:
        raise ContractError("backward root is not on the tape (constant or built under no_grad)")
    loss.grad = np.ones_like(loss.data)
    try:
        for node in reversed(_TAPE):
            if node.grad is None or node._backward is None:
                continue
            node._backward(node.grad)
    finally:
        clear_tape()


# ---------------------------------------------------------------------------
# elementwise and linear-algebra ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data + b.data, dtype=(a.data + b.data).dtype)

    def bwd(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _record(out, (a, b), bwd, "add")


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data - b.data, dtype=(a.data - b.data).dtype)

    def bwd(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _record(out, (a, b), bwd, "sub")


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data * b.data, dtype=(a.data * b.data).dtype)

    def bwd(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _record(out, (a, b), bwd, "mul")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two rank-2 tensors."""
    a, b = _wrap(a), _wrap(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor(a.data @ b.data, dtype=(a.data @ b.data).dtype)

    def bwd(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _record(out, (a, b), bwd, "matmul")


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x); subgradient at 0 is 0."""
    x = _wrap(x)
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, 0), dtype=x.data.dtype)

    def bwd(g):
        _accumulate(x, g * mask)

    return _record(out, (x,), bwd, "relu")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    x = _wrap(x)
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, slope * x.data), dtype=x.data.dtype)

    def bwd(g):
        _accumulate(x, g * np.where(mask, 1.0, slope).astype(x.data.dtype))

    return _record(out, (x,), bwd, "leaky_relu")


def sigmoid(x: Tensor) -> Tensor:
    x = _wrap(x)
    # stable in both tails
    z = x.data
    s = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
    s = s.astype(z.dtype)
    out = Tensor(s, dtype=z.dtype)

    def bwd(g):
        _accumulate(x, g * s * (1 - s))

    return _record(out, (x,), bwd, "sigmoid")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    x = _wrap(x)
    out = Tensor(x.data.reshape(shape), dtype=x.data.dtype)

    def bwd(g):
        _accumulate(x, g.reshape(x.shape))

    return _record(out, (x,), bwd, "reshape")


def tsum(x: Tensor) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    x = _wrap(x)
    out = Tensor(np.array(x.data.sum(), dtype=x.data.dtype), dtype=x.data.dtype)

    def bwd(g):
        _accumulate(x, np.full(x.shape, g, dtype=x.data.dtype))

    return _record(out, (x,), bwd, "sum")


def tmean(x: Tensor) -> Tensor:
    x = _wrap(x)
    n = x.size
    out = Tensor(np.array(x.data.mean(), dtype=x.data.dtype), dtype=x.data.dtype)

    def bwd(g):
        _accumulate(x, np.full(x.shape, g / n, dtype=x.data.dtype))

    return _record(out, (x,), bwd, "mean")


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Column-wise concatenation of rank-2 tensors with equal row counts."""
    parts = [_wrap(p) for p in parts]
    if not parts:
        raise ContractError("concat_rows needs at least one tensor")
    rows = parts[0].shape[0]
    for p in parts:
        if p.ndim != 2 or p.shape[0] != rows:
            raise DimensionError(
                f"concat_rows: row counts differ ({[tuple(q.shape) for q in parts]})"
            )
    out = Tensor(np.concatenate([p.data for p in parts], axis=1))
    widths = [p.shape[1] for p in parts]

    def bwd(g):
        off = 0
        for p, w in zip(parts, widths):
            _accumulate(p, g[:, off:off + w])
            off += w

    return _record(out, tuple(parts), bwd, "concat_rows")


# ---------------------------------------------------------------------------
# gather / scatter ops
# ---------------------------------------------------------------------------

def gather_rows(x: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather; backward scatter-adds into the source rows."""
    x = _wrap(x)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= x.shape[0]):
        bad = ids[(ids < 0) | (ids >= x.shape[0])][0]
        raise IndexError(f"row id {bad} out of range for {x.shape[0]} rows")
    out = Tensor(x.data[ids], dtype=x.data.dtype)

    def bwd(g):
        if not x.requires_grad:
            return
        gx = np.zeros_like(x.data)
        np.add.at(gx, ids, g)
        _accumulate(x, gx)

    return _record(out, (x,), bwd, "gather_rows")


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Look up embedding rows by integer id."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        bad = ids[(ids < 0) | (ids >= table.shape[0])][0]
        raise IndexError(
            f"embedding id {bad} outside vocabulary of size {table.shape[0]}"
        )
    return gather_rows(table, ids)


def segment_sum(values: Tensor, segments: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows that share a segment id; empty segments yield zero rows."""
    values = _wrap(values)
    segments = np.asarray(segments, dtype=np.int64)
    if segments.size and (segments.min() < 0 or segments.max() >= num_segments):
        bad = segments[(segments < 0) | (segments >= num_segments)][0]
        raise IndexError(f"segment id {bad} out of range [0, {num_segments})")
    out_shape = (num_segments,) + values.shape[1:]
    acc = np.zeros(out_shape, dtype=values.data.dtype)
    np.add.at(acc, segments, values.data)
    out = Tensor(acc, dtype=values.data.dtype)

    def bwd(g):
        _accumulate(values, g[segments])

    return _record(out, (values,), bwd, "segment_sum")


def segment_softmax(scores: Tensor, segments: np.ndarray) -> Tensor:
    """Numerically stable softmax within each segment of a 1-D score vector.

    Segment ids must be sorted non-decreasing. Each segment's outputs sum to
    1; an empty segment simply contributes no outputs.
    """
    scores = _wrap(scores)
    if scores.ndim != 1:
        raise DimensionError(f"segment_softmax expects a 1-D score vector, got {scores.shape}")
    segments = np.asarray(segments, dtype=np.int64)
    if segments.shape != scores.shape:
        raise DimensionError("scores and segments must have equal length")
    if segments.size and np.any(np.diff(segments) < 0):
        raise ContractError("segment ids must be sorted non-decreasing")
    if segments.size and segments.min() < 0:
        raise IndexError("negative segment id")
    num_seg = int(segments.max()) + 1 if segments.size else 0

    seg_max = np.full(num_seg, -np.inf, dtype=scores.data.dtype)
    np.maximum.at(seg_max, segments, scores.data)
    shifted = scores.data - seg_max[segments]
    e = np.exp(shifted)
    denom = np.zeros(num_seg, dtype=scores.data.dtype)
    np.add.at(denom, segments, e)
    alpha = e / denom[segments]
    out = Tensor(alpha, dtype=scores.data.dtype)

    def bwd(g):
        dot = np.zeros(num_seg, dtype=alpha.dtype)
        np.add.at(dot, segments, g * alpha)
        _accumulate(scores, alpha * (g - dot[segments]))

    return _record(out, (scores,), bwd, "segment_softmax")


# ---------------------------------------------------------------------------
# batch normalization
# ---------------------------------------------------------------------------

class BatchNormState:
    """Per-feature running mean/variance, mutated only in training mode."""

    def __init__(self, num_features: int, dtype=None):
        dt = dtype or _DEFAULT_DTYPE
        self.running_mean = np.zeros(num_features, dtype=dt)
        self.running_var = np.ones(num_features, dtype=dt)

    def copy(self) -> "BatchNormState":
        s = BatchNormState(len(self.running_mean), dtype=self.running_mean.dtype)
        s.running_mean = self.running_mean.copy()
        s.running_var = self.running_var.copy()
        return s

    def load(self, other: "BatchNormState") -> None:
        self.running_mean[...] = other.running_mean
        self.running_var[...] = other.running_var


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    state: BatchNormState,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
    update_stats: bool | None = None,
) -> Tensor:
    """Batch normalization over rows of an N x D tensor.

    Training mode normalizes by batch statistics (biased variance) and, unless
    ``update_stats`` is forced off, folds them into the running estimates
    (unbiased variance, torch-style). Eval mode normalizes by the running
    stats, so a row's output is independent of the rest of the batch.
    """
    x = _wrap(x)
    if x.ndim != 2:
        raise DimensionError(f"batch_norm expects N x D input, got {x.shape}")
    n = x.shape[0]
    if n == 0:
        raise EmptyBatchError("batch_norm on an empty batch")
    if update_stats is None:
        update_stats = training

    if training:
        mu = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        if update_stats:
            unbiased = var * n / (n - 1) if n > 1 else var
            state.running_mean[...] = (1 - momentum) * state.running_mean + momentum * mu
            state.running_var[...] = (1 - momentum) * state.running_var + momentum * unbiased
    else:
        mu = state.running_mean
        var = state.running_var

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out = Tensor(gamma.data * xhat + beta.data, dtype=x.data.dtype)

    def bwd(g):
        _accumulate(gamma, (g * xhat).sum(axis=0))
        _accumulate(beta, g.sum(axis=0))
        if not x.requires_grad:
            return
        if training:
            # gradient through the batch statistics
            gxhat = g * gamma.data
            dx = inv_std * (
                gxhat
                - gxhat.mean(axis=0)
                - xhat * (gxhat * xhat).mean(axis=0)
            )
        else:
            dx = g * gamma.data * inv_std
        _accumulate(x, dx)

    return _record(out, (x, gamma, beta), bwd, "batch_norm")


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def bce_with_logits_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean binary cross-entropy on raw logits, in the overflow-safe form.

    loss_i = max(z, 0) - z*y + log(1 + exp(-|z|)); gradient (sigmoid(z)-y)/N.
    """
    logits = _wrap(logits)
    if logits.ndim != 1:
        raise DimensionError(f"bce_with_logits_loss expects 1-D logits, got {logits.shape}")
    labels = np.asarray(labels)
    if labels.shape != logits.shape:
        raise DimensionError("logits and labels must have equal length")
    if labels.size == 0:
        raise EmptyBatchError("loss on an empty batch")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValidationError("labels must be 0 or 1")
    y = labels.astype(logits.data.dtype)
    z = logits.data
    per = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    out = Tensor(np.array(per.mean(), dtype=z.dtype), dtype=z.dtype)
    n = z.size

    def bwd(g):
        s = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
        _accumulate(logits, g * (s - y).astype(z.dtype) / n)

    return _record(out, (logits,), bwd, "bce_with_logits")


# ---------------------------------------------------------------------------
# finite-difference gradient checking
# ---------------------------------------------------------------------------

def gradient_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    num_probes: int = 20,
    h: float = 1e-4,
    rng: np.random.Generator | None = None,
    coord_filter: Callable[[Tensor, int], bool] | None = None,
) -> float:
    """Compare analytic gradients of ``f()`` against central differences.

    ``f`` must be a scalar-valued closure over ``params``. Up to
    ``num_probes`` coordinates per parameter are probed (all of them when the
    parameter is small); ``coord_filter(p, i)`` can veto coordinates, e.g. to
    stay away from ReLU kinks. Returns the max over probed coordinates of
    ``|analytic - numeric| / max(1, |numeric|)``.

    ``f`` is re-evaluated repeatedly, so it must not mutate state (snapshot
    and restore any batch-norm running stats inside the closure if needed).
    """
    rng = rng or np.random.default_rng(0)
    for p in params:
        p.zero_grad()
    loss = f()
    if not np.isfinite(loss.data).all():
        raise EvaluationError("function is non-finite at the probe point")
    backward(loss)
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]

    max_err = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        n = flat.size
        coords = np.arange(n) if n <= num_probes else rng.choice(n, size=num_probes, replace=False)
        for i in coords:
            if coord_filter is not None and not coord_filter(p, int(i)):
                continue
            orig = flat[i]
            with no_grad():
                flat[i] = orig + h
                lp = f().item()
                flat[i] = orig - h
                lm = f().item()
                flat[i] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise EvaluationError("function is non-finite at a probe point")
            numeric = (lp - lm) / (2 * h)
            err = abs(a.reshape(-1)[i] - numeric) / max(1.0, abs(numeric))
            max_err = max(max_err, float(err))
    return max_err
