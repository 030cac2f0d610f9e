"""Small feed-forward networks used for attention coefficients, the memory
update proposal, and the two memory gates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import tape as T
from .errors import ConfigError, ShapeError
from .tape import Tensor

Array = np.ndarray

HIDDEN_ACTS = ("sigmoid", "tanh", "relu")
OUT_ACTS = ("identity", "sigmoid", "softmax")


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of one MLP: affine layers chained through ``hidden``
    widths, a hidden activation after each interior layer, and an output
    activation after the last."""

    in_dim: int
    hidden: tuple[int, ...]
    out_dim: int
    hidden_act: str = "relu"
    out_act: str = "identity"

    def __post_init__(self):
        dims = (self.in_dim, *self.hidden, self.out_dim)
        if any(d < 1 for d in dims):
            raise ConfigError(f"mlp dims must be positive, got {dims}")
        if self.hidden_act not in HIDDEN_ACTS:
            raise ConfigError(f"hidden activation '{self.hidden_act}' not in {HIDDEN_ACTS}")
        if self.out_act not in OUT_ACTS:
            raise ConfigError(f"output activation '{self.out_act}' not in {OUT_ACTS}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = (self.in_dim, *self.hidden, self.out_dim)
        return [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]

    @property
    def n_layers(self) -> int:
        return len(self.hidden) + 1

    def param_count(self) -> int:
        return sum(dout * (din + 1) for dout, din in self.layer_dims)


def xavier_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


def init_mlp(spec: MlpSpec, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Xavier-uniform weights, zero biases. Keys are '{layer}.W' / '{layer}.b'."""
    params: dict[str, np.ndarray] = {}
    for i, (dout, din) in enumerate(spec.layer_dims):
        params[f"{i}.W"] = xavier_uniform(rng, dout, din)
        params[f"{i}.b"] = np.zeros(dout)
    return params


class BoundMlp:
    """An MlpSpec bound to weight tensors on one tape."""

    __slots__ = ("spec", "layers")

    def __init__(self, spec: MlpSpec, layers: list[tuple[Tensor, Tensor]]):
        self.spec = spec
        self.layers = layers


def bind_mlp(tp: T.Tape, spec: MlpSpec, params: dict[str, np.ndarray], prefix: str) -> BoundMlp:
    layers = [
        (tp.param(params[f"{prefix}.{i}.W"], f"{prefix}.{i}.W"),
         tp.param(params[f"{prefix}.{i}.b"], f"{prefix}.{i}.b"))
        for i in range(spec.n_layers)
    ]
    return BoundMlp(spec, layers)


def mlp_forward_composed(mlp: BoundMlp, x: Tensor) -> Tensor:
    """Reference path built from primitive tape ops; one node per affine and
    activation. Numerically identical to mlp_forward."""
    spec = mlp.spec
    if x.value.shape != (spec.in_dim,):
        raise ShapeError(f"mlp input has shape {x.value.shape}, expected ({spec.in_dim},)")
    h = x
    last = spec.n_layers - 1
    for i, (W, b) in enumerate(mlp.layers):
        h = T.affine(W, h, b)
        if i < last:
            h = T.activation(h, spec.hidden_act)
    if spec.out_act == "sigmoid":
        h = T.sigmoid(h)
    elif spec.out_act == "softmax":
        h = T.softmax(h)
    return h


def _act_forward(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return expit(z)  # sigmoid


def _act_backward(g: np.ndarray, z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return g * (z > 0.0)
    if kind == "tanh":
        return g * (1.0 - a * a)
    return g * a * (1.0 - a)  # sigmoid


def mlp_forward(mlp: BoundMlp, x: Tensor) -> Tensor:
    """Affine -> hidden activation -> ... -> affine -> output activation.

    Recorded as one fused tape node (the per-layer chain is the dominant
    per-timestep cost); gradients match mlp_forward_composed exactly.
    """
    spec = mlp.spec
    xv = x.value
    if xv.shape != (spec.in_dim,):
        raise ShapeError(f"mlp input has shape {xv.shape}, expected ({spec.in_dim},)")

    acts = [xv]        # input of each layer
    zs = []            # pre-activation of each layer
    h = xv
    last = spec.n_layers - 1
    weights = [(W.value, b.value) for W, b in mlp.layers]
    for i, (Wv, bv) in enumerate(weights):
        z = Wv @ h + bv
        zs.append(z)
        h = _act_forward(z, spec.hidden_act) if i < last else z
        acts.append(h)
    out_act = spec.out_act
    if out_act == "sigmoid":
        y = expit(h)
    elif out_act == "softmax":
        e = np.exp(h - h.max())
        y = e / e.sum()
    else:
        y = h

    hidden_act = spec.hidden_act

    def vjp(g: Array):
        if out_act == "sigmoid":
            gz = g * y * (1.0 - y)
        elif out_act == "softmax":
            gz = y * (g - np.dot(g, y))
        else:
            gz = g
        param_grads: list[Array] = []
        for i in range(last, -1, -1):
            Wv, _ = weights[i]
            param_grads.append(gz.copy())            # b_i
            param_grads.append(gz[:, None] * acts[i])  # W_i
            gz = Wv.T @ gz
            if i > 0:
                gz = _act_backward(gz, zs[i - 1], acts[i], hidden_act)
        param_grads.reverse()
        return (gz, *param_grads)

    parents: list[Tensor] = [x]
    for W, b in mlp.layers:
        parents.extend((W, b))
    return x.tape.record(y, tuple(parents), vjp, "mlp")
