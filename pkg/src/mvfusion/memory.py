"""Gated cross-view memory.

A single vector ``u`` accumulates cross-view information over time. Three
networks read the attended memories: one proposes an update, the other two
produce sigmoid gates. The step is

    u' = retain * u + update * tanh(proposal)

The proposal is squashed by tanh at this point (the proposal network itself
ends in identity, so the value is squashed exactly once), while ``u`` itself
is never passed through a squashing activation and may leave (-1, 1).
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import tape as T
from .mlp import BoundMlp, mlp_forward
from .errors import ShapeError
from .tape import Tensor


class MemoryState(NamedTuple):
    u: Tensor
    u_hat: Tensor   # raw update proposal, before tanh
    gamma1: Tensor  # retain gate, in (0, 1)
    gamma2: Tensor  # update gate, in (0, 1)


class MemoryNets(NamedTuple):
    proposal: BoundMlp  # identity output
    retain: BoundMlp    # sigmoid output
    update: BoundMlp    # sigmoid output


def gated_combine(gamma1: Tensor, u_prev: Tensor, gamma2: Tensor, u_hat: Tensor) -> Tensor:
    """u' = gamma1 * u_prev + gamma2 * tanh(u_hat), as one fused node."""
    g1, up, g2, uh = gamma1.value, u_prev.value, gamma2.value, u_hat.value
    if not (g1.shape == up.shape == g2.shape == uh.shape):
        raise ShapeError(
            f"gated_combine: mismatched shapes {g1.shape}/{up.shape}/{g2.shape}/{uh.shape}")
    t = np.tanh(uh)

    def vjp(g: np.ndarray):
        return g * up, g * g1, g * t, g * g2 * (1.0 - t * t)

    return gamma1.tape.record(g1 * up + g2 * t, (gamma1, u_prev, gamma2, u_hat),
                              vjp, "gated_combine")


def memory_update(nets: MemoryNets, c_hat: Tensor, u_prev: Tensor) -> MemoryState:
    """Advance the memory by one step from the attended memories ``c_hat``."""
    d_mem = u_prev.value.shape[0]
    for label, net, out_act in (("proposal", nets.proposal, "identity"),
                                ("retain", nets.retain, "sigmoid"),
                                ("update", nets.update, "sigmoid")):
        if net.spec.out_dim != d_mem:
            raise ShapeError(
                f"memory {label} net outputs {net.spec.out_dim} dims, expected {d_mem}")
        if net.spec.out_act != out_act:
            raise ShapeError(f"memory {label} net must have {out_act} output")
    u_hat = mlp_forward(nets.proposal, c_hat)
    gamma1 = mlp_forward(nets.retain, c_hat)
    gamma2 = mlp_forward(nets.update, c_hat)
    return MemoryState(gated_combine(gamma1, u_prev, gamma2, u_hat),
                       u_hat, gamma1, gamma2)
