"""Attention over the stacked LSTM memories of two consecutive timesteps.

A single network scores the concatenation of all views' memory vectors at
times t-1 and t; one softmax over the whole score vector yields coefficients
that sum to one, and the attended memories are the coefficient-weighted
input. Scoring both timesteps lets the network assign weight to a memory
dimension only when it is about to change instead of on every step it
persists.
"""

from __future__ import annotations

from typing import NamedTuple

from . import tape as T
from .mlp import BoundMlp, mlp_forward
from .errors import ShapeError
from .tape import Tensor


class AttentionOutput(NamedTuple):
    a: Tensor       # softmax coefficients, one per input dimension
    c_hat: Tensor   # attended memories: input * a


def delta_attend(net: BoundMlp, c_prev: Tensor, c_curr: Tensor) -> AttentionOutput:
    """Score the concatenated memories [c_prev; c_curr]."""
    if c_prev.value.shape != c_curr.value.shape:
        raise ShapeError(
            f"delta_attend: memory shapes differ, {c_prev.value.shape} vs {c_curr.value.shape}")
    return _attend(net, T.concat([c_prev, c_curr]))


def attend_current(net: BoundMlp, c_curr: Tensor) -> AttentionOutput:
    """Variant that scores only the current timestep's memories."""
    return _attend(net, c_curr)


def _attend(net: BoundMlp, c_cat: Tensor) -> AttentionOutput:
    spec = net.spec
    if spec.out_dim != spec.in_dim:
        raise ShapeError(
            f"attention network must map a vector to scores of the same length, "
            f"got {spec.in_dim} -> {spec.out_dim}")
    if spec.out_act != "softmax":
        raise ShapeError("attention network must end in a softmax")
    a = mlp_forward(net, c_cat)
    return AttentionOutput(a, T.hadamard(c_cat, a))
