"""Per-view LSTMs.

Each view gets its own LSTM; there is no cross-view data flow here. The
update uses sigmoid input/forget/output gates but a plain affine candidate
term ``m`` (deliberately no tanh on the candidate):

    i = sigmoid(W_i x + U_i h + b_i)
    f = sigmoid(W_f x + U_f h + b_f)
    o = sigmoid(W_o x + U_o h + b_o)
    m = W_m x + U_m h + b_m
    c' = f * c + i * m
    h' = o * tanh(c')

One step is recorded as two fused tape nodes with hand-derived gradients;
keeping the tape short dominates training throughput.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .errors import SchemaError, ShapeError
from .tape import Tape, Tensor

LSTM_PARAM_KEYS = (
    "W_i", "W_f", "W_o", "W_m",
    "U_i", "U_f", "U_o", "U_m",
    "b_i", "b_f", "b_o", "b_m",
)

FORGET_BIAS = 1.0


class LstmState(NamedTuple):
    c: Tensor
    h: Tensor


class Gates(NamedTuple):
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    m: np.ndarray


class BoundLstm:
    """One view's LSTM weights bound to a tape."""

    __slots__ = ("d_x", "d_c", "W_i", "W_f", "W_o", "W_m",
                 "U_i", "U_f", "U_o", "U_m", "b_i", "b_f", "b_o", "b_m")

    def __init__(self, tensors: dict[str, Tensor]):
        for key in LSTM_PARAM_KEYS:
            setattr(self, key, tensors[key])
        self.d_c, self.d_x = tensors["W_i"].value.shape


def init_lstm(rng: np.random.Generator, d_x: int, d_c: int) -> dict[str, np.ndarray]:
    """Xavier-uniform W/U, zero biases except forget bias of +1."""
    from .mlp import xavier_uniform

    params: dict[str, np.ndarray] = {}
    for gate in "ifom":
        params[f"W_{gate}"] = xavier_uniform(rng, d_c, d_x)
    for gate in "ifom":
        params[f"U_{gate}"] = xavier_uniform(rng, d_c, d_c)
    for gate in "ifom":
        params[f"b_{gate}"] = np.zeros(d_c)
    params["b_f"] = np.full(d_c, FORGET_BIAS)
    return params


def bind_lstm(tp: Tape, params: dict[str, np.ndarray], prefix: str) -> BoundLstm:
    return BoundLstm({k: tp.param(params[f"{prefix}.{k}"], f"{prefix}.{k}")
                      for k in LSTM_PARAM_KEYS})


def zero_state(tp: Tape, d_c: int) -> LstmState:
    return LstmState(tp.leaf(np.zeros(d_c), "c0"), tp.leaf(np.zeros(d_c), "h0"))


def lstm_step(p: BoundLstm, x: Tensor, state: LstmState) -> tuple[LstmState, Gates]:
    """Advance one LSTM by a single timestep.

    Recorded as two fused nodes: one for c' (input/forget/candidate paths)
    and one for h' = o * tanh(c') (output-gate path). Hand-derived gradients;
    verified against finite differences in the test suite.
    """
    xv, cv, hv = x.value, state.c.value, state.h.value
    if xv.shape != (p.d_x,):
        raise ShapeError(f"lstm_step: input has shape {xv.shape}, expected ({p.d_x},)")
    if cv.shape != (p.d_c,) or hv.shape != (p.d_c,):
        raise ShapeError(
            f"lstm_step: state shapes {cv.shape}/{hv.shape} do not match d_c={p.d_c}")

    Wi, Wf, Wo, Wm = p.W_i.value, p.W_f.value, p.W_o.value, p.W_m.value
    Ui, Uf, Uo, Um = p.U_i.value, p.U_f.value, p.U_o.value, p.U_m.value

    i = expit(Wi @ xv + Ui @ hv + p.b_i.value)
    f = expit(Wf @ xv + Uf @ hv + p.b_f.value)
    o = expit(Wo @ xv + Uo @ hv + p.b_o.value)
    m = Wm @ xv + Um @ hv + p.b_m.value
    c1 = f * cv + i * m
    tc = np.tanh(c1)
    h1 = o * tc

    def vjp_c(gc1: np.ndarray):
        gzi = gc1 * m * (i * (1.0 - i))
        gzf = gc1 * cv * (f * (1.0 - f))
        gzm = gc1 * i
        dx = Wi.T @ gzi + Wf.T @ gzf + Wm.T @ gzm
        dh = Ui.T @ gzi + Uf.T @ gzf + Um.T @ gzm
        return (
            dx, gc1 * f, dh,
            gzi[:, None] * xv, gzi[:, None] * hv, gzi,
            gzf[:, None] * xv, gzf[:, None] * hv, gzf,
            gzm[:, None] * xv, gzm[:, None] * hv, gzm,
        )

    c_parents = (x, state.c, state.h,
                 p.W_i, p.U_i, p.b_i, p.W_f, p.U_f, p.b_f, p.W_m, p.U_m, p.b_m)
    c_next = x.tape.record(c1, c_parents, vjp_c, "lstm_c")

    def vjp_h(gh: np.ndarray):
        dc1 = gh * o * (1.0 - tc * tc)
        gzo = gh * tc * (o * (1.0 - o))
        return (dc1, Wo.T @ gzo, Uo.T @ gzo,
                gzo[:, None] * xv, gzo[:, None] * hv, gzo)

    h_parents = (c_next, x, state.h, p.W_o, p.U_o, p.b_o)
    h_next = x.tape.record(h1, h_parents, vjp_h, "lstm_h")

    return LstmState(c_next, h_next), Gates(i.copy(), f.copy(), o.copy(), m.copy())


def system_step(
    view_lstms: dict[str, BoundLstm],
    xs: dict[str, Tensor],
    states: dict[str, LstmState],
) -> tuple[dict[str, LstmState], dict[str, Gates]]:
    """Step every view's LSTM independently; views never exchange data."""
    expected = set(view_lstms)
    for label, got in (("inputs", set(xs)), ("states", set(states))):
        if got != expected:
            missing = sorted(expected - got)
            extra = sorted(got - expected)
            raise SchemaError(f"system_step {label}: missing views {missing}, extra {extra}")
    next_states: dict[str, LstmState] = {}
    gates: dict[str, Gates] = {}
    for name, lstm in view_lstms.items():
        next_states[name], gates[name] = lstm_step(lstm, xs[name], states[name])
    return next_states, gates
