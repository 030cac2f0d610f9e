"""Reverse-mode automatic differentiation over a recorded operation tape.

Values are dense float64 numpy arrays (vectors, matrices, or 0-d scalars).
Every operation appends one node to a :class:`Tape`; because nodes are
appended in execution order, the tape itself is a topological order and
backward is a single reverse sweep.

A tape and the tensors recorded on it are single-threaded. Distinct tapes
are fully independent, so separate sequences may be evaluated on separate
threads as long as parameter arrays are only read.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .errors import DomainError, NonFiniteError, ShapeError, StaleTapeError

Array = np.ndarray

ACTIVATIONS = ("sigmoid", "tanh", "relu")


def as_f64(value) -> Array:
    return np.asarray(value, dtype=np.float64)


class Tensor:
    """Handle to one value on a tape.

    ``value`` is the raw array; ``grad`` is populated by ``Tape.backward``
    and has the same shape as ``value``.
    """

    __slots__ = ("tape", "node_id", "value")

    def __init__(self, tape: "Tape", node_id: int, value: Array):
        self.tape = tape
        self.node_id = node_id
        self.value = value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def grad(self) -> Array | None:
        return self.tape.grad_of(self.node_id)

    def __repr__(self) -> str:
        return f"Tensor(node={self.node_id}, shape={self.value.shape})"


class Tape:
    """Append-only record of operations with per-node gradient buffers.

    Inputs of a node always precede it on the tape. ``backward`` may run
    exactly once; afterwards the tape is spent and rejects both further
    recording and a second backward pass.
    """

    def __init__(self):
        self._values: list[Array] = []
        self._parents: list[tuple[int, ...]] = []
        self._vjps: list[Callable[[Array], Sequence[Array | None]] | None] = []
        self._names: list[str] = []
        self._param_ids: list[int] = []
        self._grads: list[Array | None] | None = None
        self._spent = False

    def __len__(self) -> int:
        return len(self._values)

    @property
    def spent(self) -> bool:
        return self._spent

    # -- recording ---------------------------------------------------------

    def leaf(self, value, name: str = "leaf") -> Tensor:
        return self._append(as_f64(value), (), None, name)

    def param(self, value, name: str = "param") -> Tensor:
        """Register a trainable leaf; backward reports a gradient for it."""
        t = self._append(as_f64(value), (), None, name)
        self._param_ids.append(t.node_id)
        return t

    def record(
        self,
        value: Array,
        parents: Sequence[Tensor],
        vjp: Callable[[Array], Sequence[Array | None]],
        name: str,
    ) -> Tensor:
        """Append a computed node.

        ``vjp`` maps the output gradient to one gradient per parent (None to
        skip a parent). Returned arrays must be freshly allocated: the tape
        accumulates into them in place.
        """
        for p in parents:
            if p.tape is not self:
                raise DomainError(f"operation '{name}' mixes tensors from different tapes")
        return self._append(value, tuple(p.node_id for p in parents), vjp, name)

    def _append(self, value: Array, parent_ids: tuple[int, ...], vjp, name: str) -> Tensor:
        if self._spent:
            raise StaleTapeError(f"cannot record '{name}': tape already consumed by backward")
        # A finite array always has a finite (or NaN-free) sum, and any NaN/Inf
        # poisons the sum, so one reduction suffices as the finiteness guard.
        if not math.isfinite(value.sum()):
            raise NonFiniteError(f"operation '{name}' produced a non-finite value")
        nid = len(self._values)
        self._values.append(value)
        self._parents.append(parent_ids)
        self._vjps.append(vjp)
        self._names.append(name)
        return Tensor(self, nid, value)

    # -- gradients ---------------------------------------------------------

    def grad_of(self, node_id: int) -> Array | None:
        if self._grads is None:
            return None
        return self._grads[node_id]

    def named_param_grads(self) -> dict[str, Array]:
        """Post-backward parameter gradients keyed by the names given to
        ``param``. Names must be unique for this view to be faithful."""
        if self._grads is None:
            raise StaleTapeError("no gradients yet; call backward first")
        return {self._names[pid]: self._grads[pid] for pid in self._param_ids}

    def backward(self, loss: Tensor) -> dict[int, Array]:
        """Reverse sweep from a scalar loss; returns parameter gradients.

        The result maps the node id of each parameter leaf to its gradient.
        Parameters the loss does not depend on receive zero gradients of the
        parameter's shape.
        """
        if self._spent:
            raise StaleTapeError("backward already ran on this tape; re-record the graph")
        if loss.tape is not self:
            raise DomainError("loss tensor does not belong to this tape")
        if loss.value.size != 1:
            raise DomainError(f"loss must be scalar, got shape {loss.value.shape}")

        grads: list[Array | None] = [None] * len(self._values)
        grads[loss.node_id] = np.ones_like(loss.value)
        parents = self._parents
        vjps = self._vjps
        for nid in range(loss.node_id, -1, -1):
            g = grads[nid]
            if g is None:
                continue
            vjp = vjps[nid]
            if vjp is None:
                continue
            for pid, pg in zip(parents[nid], vjp(g)):
                if pg is None:
                    continue
                if grads[pid] is None:
                    grads[pid] = pg
                else:
                    grads[pid] += pg
        for pid in self._param_ids:
            if grads[pid] is None:
                grads[pid] = np.zeros_like(self._values[pid])
        self._grads = grads
        self._spent = True
        return {pid: grads[pid] for pid in self._param_ids}


# -- primitive operations ---------------------------------------------------
#
# Gradient rules are the standard vector-Jacobian products; each vjp returns
# freshly allocated arrays (see Tape.record).


def _require_vector(t: Tensor, op: str) -> None:
    if t.value.ndim != 1:
        raise ShapeError(f"{op}: expected a vector, got shape {t.value.shape}")


def matvec(W: Tensor, x: Tensor) -> Tensor:
    """y = W @ x for a matrix W [m, n] and vector x [n]."""
    Wv, xv = W.value, x.value
    if Wv.ndim != 2 or xv.ndim != 1 or Wv.shape[1] != xv.shape[0]:
        raise ShapeError(f"matvec: incompatible shapes {Wv.shape} @ {xv.shape}")

    def vjp(g: Array):
        return g[:, None] * xv, Wv.T @ g

    return W.tape.record(Wv @ xv, (W, x), vjp, "matvec")


def affine(W: Tensor, x: Tensor, b: Tensor) -> Tensor:
    """y = W @ x + b, the fused linear-layer step."""
    Wv, xv, bv = W.value, x.value, b.value
    if Wv.ndim != 2 or Wv.shape[1] != xv.shape[0] or Wv.shape[0] != bv.shape[0]:
        raise ShapeError(f"affine: incompatible shapes {Wv.shape} @ {xv.shape} + {bv.shape}")

    def vjp(g: Array):
        return g[:, None] * xv, Wv.T @ g, g.copy()

    return W.tape.record(Wv @ xv + bv, (W, x, b), vjp, "affine")


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.value.shape != b.value.shape:
        raise ShapeError(f"add: shape mismatch {a.value.shape} vs {b.value.shape}")

    def vjp(g: Array):
        return g.copy(), g.copy()

    return a.tape.record(a.value + b.value, (a, b), vjp, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.value.shape != b.value.shape:
        raise ShapeError(f"sub: shape mismatch {a.value.shape} vs {b.value.shape}")

    def vjp(g: Array):
        return g.copy(), -g

    return a.tape.record(a.value - b.value, (a, b), vjp, "sub")


def shift(a: Tensor, c: float) -> Tensor:
    """y = a + c for a constant scalar c."""

    def vjp(g: Array):
        return (g.copy(),)

    return a.tape.record(a.value + c, (a,), vjp, "shift")


def scale(a: Tensor, k: float) -> Tensor:
    """y = k * a for a constant scalar k."""

    def vjp(g: Array):
        return (k * g,)

    return a.tape.record(k * a.value, (a,), vjp, "scale")


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of two equal-length vectors."""
    av, bv = a.value, b.value
    if av.shape != bv.shape:
        raise ShapeError(f"hadamard: length mismatch {av.shape} vs {bv.shape}")

    def vjp(g: Array):
        return g * bv, g * av

    return a.tape.record(av * bv, (a, b), vjp, "hadamard")


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate vectors in order; output length is the sum of lengths."""
    if len(parts) == 0:
        raise DomainError("concat: need at least one vector")
    for p in parts:
        _require_vector(p, "concat")
    sizes = [p.value.shape[0] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def vjp(g: Array):
        return tuple(g[offsets[i]:offsets[i + 1]].copy() for i in range(len(sizes)))

    value = np.concatenate([p.value for p in parts])
    return parts[0].tape.record(value, tuple(parts), vjp, "concat")


def vslice(x: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous sub-vector x[start:stop]."""
    _require_vector(x, "vslice")
    n = x.value.shape[0]
    if not (0 <= start <= stop <= n):
        raise DomainError(f"vslice: range [{start}:{stop}] invalid for length {n}")

    def vjp(g: Array):
        out = np.zeros(n)
        out[start:stop] = g
        return (out,)

    return x.tape.record(x.value[start:stop].copy(), (x,), vjp, "vslice")


def sigmoid(x: Tensor) -> Tensor:
    y = expit(x.value)

    def vjp(g: Array):
        return (g * y * (1.0 - y),)

    return x.tape.record(y, (x,), vjp, "sigmoid")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.value)

    def vjp(g: Array):
        return (g * (1.0 - y * y),)

    return x.tape.record(y, (x,), vjp, "tanh")


def relu(x: Tensor) -> Tensor:
    xv = x.value

    def vjp(g: Array):
        return (g * (xv > 0.0),)

    return x.tape.record(np.maximum(xv, 0.0), (x,), vjp, "relu")


def activation(x: Tensor, kind: str) -> Tensor:
    """Elementwise sigmoid, tanh, or relu selected by name."""
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return tanh(x)
    if kind == "relu":
        return relu(x)
    raise DomainError(f"unknown activation kind '{kind}' (expected one of {ACTIVATIONS})")


def softmax(x: Tensor) -> Tensor:
    """Max-shifted softmax; output is positive and sums to one."""
    _require_vector(x, "softmax")
    xv = x.value
    if xv.shape[0] == 0:
        raise DomainError("softmax: empty vector")
    e = np.exp(xv - xv.max())
    y = e / e.sum()

    def vjp(g: Array):
        return (y * (g - np.dot(g, y)),)

    return x.tape.record(y, (x,), vjp, "softmax")


def logsumexp(x: Tensor) -> Tensor:
    """Scalar log(sum(exp(x))), max-shifted for overflow safety."""
    _require_vector(x, "logsumexp")
    xv = x.value
    if xv.shape[0] == 0:
        raise DomainError("logsumexp: empty vector")
    m = xv.max()
    value = np.asarray(m + np.log(np.exp(xv - m).sum()))

    def vjp(g: Array):
        return (np.exp(xv - value) * g,)

    return x.tape.record(value, (x,), vjp, "logsumexp")


def pick(x: Tensor, i: int) -> Tensor:
    """Scalar element x[i]."""
    _require_vector(x, "pick")
    if not (0 <= i < x.value.shape[0]):
        raise DomainError(f"pick: index {i} out of range for length {x.value.shape[0]}")

    def vjp(g: Array):
        out = np.zeros(x.value.shape[0])
        out[i] = g
        return (out,)

    return x.tape.record(np.asarray(x.value[i]), (x,), vjp, "pick")


def vsum(x: Tensor) -> Tensor:
    """Scalar sum of all elements."""
    xv = x.value

    def vjp(g: Array):
        return (np.full(xv.shape, float(g)),)

    return x.tape.record(np.asarray(xv.sum()), (x,), vjp, "vsum")


def absolute(x: Tensor) -> Tensor:
    xv = x.value

    def vjp(g: Array):
        return (g * np.sign(xv),)

    return x.tape.record(np.abs(xv), (x,), vjp, "abs")
