"""Reverse-mode differentiation over dense arrays and a fixed op set.

A :class:`Tape` records every op executed on tracked tensors.  Calling
:func:`gradients` replays the adjoint of each record in reverse order,
which is already a reverse topological order because the record list is
append-only.  Constants (plain arrays, floats, or untracked tensors)
participate in forward values but receive no gradient.

All data is float64.  Every op output is checked for NaN/Inf and raises
:class:`NonFiniteError` on violation.
"""

from __future__ import annotations

import numpy as np

from . import backend
from .sparse import SparseMatrix

ACOS_EPS = 1e-7
UNIT_EPS = 1e-12


class NonFiniteError(FloatingPointError):
    """An op produced NaN or Inf."""


class Tensor:
    __slots__ = ("data", "tape", "nid")

    def __init__(self, data, tape=None, nid=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.tape = tape
        self.nid = nid

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        tracked = "tracked" if self.tape is not None else "constant"
        return f"Tensor(shape={self.data.shape}, {tracked})"


class Tape:
    """Append-only op record plus the set of watched parameter tensors."""

    def __init__(self, check_finite: bool = True):
        self.records = []      # (out_nid, [(in_nid, vjp), ...])
        self.watched = []
        self.clamp_count = 0   # acos inputs clipped into the valid range
        self.check_finite = check_finite
        self._next = 0

    def _new_id(self) -> int:
        self._next += 1
        return self._next

    def variable(self, data) -> Tensor:
        """A tracked leaf tensor."""
        t = Tensor(data, self, self._new_id())
        if self.check_finite and not np.isfinite(t.data).all():
            raise NonFiniteError("non-finite variable data")
        return t

    def watch(self, tensor: Tensor) -> Tensor:
        if tensor.tape is not self:
            raise ValueError("tensor does not belong to this tape")
        self.watched.append(tensor)
        return tensor

    def gradients(self, loss: Tensor, wrt=None) -> dict:
        """Gradient arrays keyed by tensor id for every requested tensor.

        ``wrt`` defaults to the watched parameters.  Tensors the loss
        never touched get zero gradients.
        """
        if loss.tape is not self:
            raise ValueError("loss was not produced on this tape")
        if loss.data.shape != ():
            raise ValueError("loss must be a scalar tensor")
        wrt = self.watched if wrt is None else list(wrt)
        grads = {loss.nid: np.ones(())}
        for out_id, inputs in reversed(self.records):
            g = grads.pop(out_id, None)
            if g is None:
                continue
            for in_id, vjp in inputs:
                contrib = vjp(g)
                prev = grads.get(in_id)
                grads[in_id] = contrib if prev is None else prev + contrib
        return {t.nid: grads.get(t.nid, np.zeros_like(t.data)) for t in wrt}


def astensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out_data: np.ndarray, pairs) -> Tensor:
    """Create the output tensor; register vjps for the tracked inputs."""
    tape = None
    for t, _ in pairs:
        if t.tape is not None:
            if tape is not None and t.tape is not tape:
                raise ValueError("inputs live on different tapes")
            tape = t.tape
    if tape is None:
        return Tensor(out_data)
    if tape.check_finite and not np.isfinite(out_data).all():
        raise NonFiniteError("op produced non-finite values")
    out = Tensor(out_data, tape, tape._new_id())
    tape.records.append(
        (out.nid, [(t.nid, vjp) for t, vjp in pairs if t.tape is not None]))
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum the gradient of a broadcast result back to the input shape."""
    g = np.asarray(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def matmul(a, b) -> Tensor:
    """Dense 2-d matrix product."""
    a, b = astensor(a), astensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return _record(a.data @ b.data,
                   ((a, lambda g: g @ b.data.T),
                    (b, lambda g: a.data.T @ g)))


def spmatmul(matrix: SparseMatrix, x) -> Tensor:
    """Sparse-dense product; the sparse operand is a constant."""
    x = astensor(x)
    if x.data.ndim != 2:
        raise ValueError("spmatmul needs a 2-d dense operand")
    return _record(matrix.matmul(x.data),
                   ((x, lambda g: matrix.transpose().matmul(
                       np.ascontiguousarray(g))),))


def add(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    out = a.data + b.data
    return _record(out, ((a, lambda g: _unbroadcast(g, a.shape)),
                         (b, lambda g: _unbroadcast(g, b.shape))))


def scale(a, c: float) -> Tensor:
    a = astensor(a)
    c = float(c)
    return _record(a.data * c, ((a, lambda g: g * c),))


def sub(a, b) -> Tensor:
    return add(a, scale(b, -1.0))


def concat_cols(*parts) -> Tensor:
    parts = [astensor(p) for p in parts]
    if any(p.data.ndim != 2 for p in parts):
        raise ValueError("concat_cols needs 2-d operands")
    widths = [p.shape[1] for p in parts]
    offsets = np.concatenate([[0], np.cumsum(widths)])

    def make_vjp(i):
        return lambda g: g[:, offsets[i]:offsets[i + 1]]

    return _record(np.concatenate([p.data for p in parts], axis=1),
                   tuple((p, make_vjp(i)) for i, p in enumerate(parts)))


def relu(x) -> Tensor:
    x = astensor(x)
    mask = x.data > 0.0  # subgradient at 0 is fixed to 0
    return _record(np.where(mask, x.data, 0.0), ((x, lambda g: g * mask),))


def absval(x) -> Tensor:
    x = astensor(x)
    sign = np.sign(x.data)
    return _record(np.abs(x.data), ((x, lambda g: g * sign),))


def gather_rows(x, idx) -> Tensor:
    x = astensor(x)
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    if x.data.ndim != 2 or idx.ndim != 1:
        raise ValueError("gather_rows needs a 2-d source and 1-d indices")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise ValueError("gather index out of range")

    def vjp(g):
        out = np.zeros(x.shape)
        backend.scatter_add_rows(out, idx, np.ascontiguousarray(g))
        return out

    return _record(x.data[idx], ((x, vjp),))


def mean_axis(x, axis: int) -> Tensor:
    x = astensor(x)
    if not 0 <= axis < x.data.ndim:
        raise ValueError(f"axis {axis} out of range for shape {x.shape}")
    n = x.shape[axis]
    return _record(x.data.mean(axis=axis),
                   ((x, lambda g: np.repeat(np.expand_dims(g / n, axis),
                                            n, axis=axis)),))


def mean_rows(x) -> Tensor:
    return mean_axis(x, 0)


def reshape(x, shape) -> Tensor:
    x = astensor(x)
    shape = tuple(shape)
    return _record(x.data.reshape(shape),
                   ((x, lambda g: g.reshape(x.shape)),))


def sqnorm_rows(x) -> Tensor:
    """Per-row sum of squares: (n, k) -> (n,)."""
    x = astensor(x)
    if x.data.ndim != 2:
        raise ValueError("sqnorm_rows needs a 2-d operand")
    return _record((x.data ** 2).sum(axis=1),
                   ((x, lambda g: 2.0 * x.data * g[:, None]),))


def cross_rows(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    if a.shape != b.shape or a.data.ndim != 2 or a.shape[1] != 3:
        raise ValueError("cross_rows needs matching (n, 3) operands")
    return _record(np.cross(a.data, b.data),
                   ((a, lambda g: np.cross(b.data, g)),
                    (b, lambda g: np.cross(g, a.data))))


def unit_rows(x) -> Tensor:
    """Rows rescaled to unit length; norms are floored at a tiny epsilon."""
    x = astensor(x)
    if x.data.ndim != 2:
        raise ValueError("unit_rows needs a 2-d operand")
    norms = np.linalg.norm(x.data, axis=1)
    denom = np.maximum(norms, UNIT_EPS)
    out = x.data / denom[:, None]
    regular = norms >= UNIT_EPS

    def vjp(g):
        proj = (g * out).sum(axis=1, keepdims=True)
        full = (g - proj * out) / denom[:, None]
        return np.where(regular[:, None], full, g / denom[:, None])

    return _record(out, ((x, vjp),))


def acos_clamped(x) -> Tensor:
    """Elementwise arccos, safe at (and beyond) the domain endpoints.

    The value clips the input to [-1, 1], so exact agreement maps to an
    exact zero angle.  The derivative clips to [-1 + eps, 1 - eps] to
    stay finite; entries needing that guard are counted on the tape so
    silent saturation is observable.
    """
    x = astensor(x)
    guarded = np.clip(x.data, -1.0 + ACOS_EPS, 1.0 - ACOS_EPS)
    hit = guarded != x.data
    if x.tape is not None:
        x.tape.clamp_count += int(hit.sum())
    deriv = -1.0 / np.sqrt(1.0 - guarded ** 2)
    return _record(np.arccos(np.clip(x.data, -1.0, 1.0)),
                   ((x, lambda g: g * deriv),))


# ---- compositions of the primitive ops -------------------------------

def dot_rows(a, b) -> Tensor:
    """Per-row inner product via the polarization identity."""
    return scale(sub(add(sqnorm_rows(a), sqnorm_rows(b)),
                     sqnorm_rows(sub(a, b))), 0.5)


def norm_rows(x) -> Tensor:
    """Per-row Euclidean norm: <x, x/|x|>, zero at zero rows."""
    return dot_rows(x, unit_rows(x))


def gradients(loss: Tensor, wrt) -> dict:
    """Gradient map for the given tensors (zeros when untouched)."""
    if loss.tape is None:
        raise ValueError("loss was not produced through taped ops")
    return loss.tape.gradients(loss, wrt)
