"""Full model: per-view LSTMs, delta attention, gated memory, prediction head.

Per timestep t:
  1. every view's LSTM advances on x_t;
  2. attention scores the concatenated LSTM memories before and after the
     step (the zero initial memory stands in for "before" at t=1);
  3. the gated memory updates from the attended memories.

The sequence representation is concat(h_1^T, ..., h_N^T, u^T); a single
affine head maps it to a regression scalar or class logits.

Ablation variants:
  no_delta     attention sees only the current memories (half-width input)
  no_mem       attention and memory removed; features are the final h's
  single_view  one LSTM only; features are that view's final h
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from . import tape as T
from .attention import AttentionOutput, attend_current, delta_attend
from .errors import AlignmentError, ConfigError, SchemaError, ShapeError
from .lstm import BoundLstm, Gates, bind_lstm, init_lstm, system_step, zero_state
from .memory import MemoryNets, memory_update
from .mlp import BoundMlp, MlpSpec, bind_mlp, init_mlp, xavier_uniform
from .rng import substream
from .tape import Tape, Tensor

VARIANTS = ("full", "no_delta", "no_mem", "single_view")

CHECKPOINT_FORMAT = "mvfusion-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ViewSpec:
    name: str
    d_x: int
    d_c: int


@dataclass(frozen=True)
class TaskSpec:
    kind: str               # "regression" | "classification"
    n_classes: int = 0

    def __post_init__(self):
        if self.kind not in ("regression", "classification"):
            raise ConfigError(f"unknown task kind '{self.kind}'")
        if self.kind == "classification" and self.n_classes < 2:
            raise ConfigError("classification needs n_classes >= 2")


@dataclass(frozen=True)
class ModelConfig:
    views: tuple[ViewSpec, ...]
    d_mem: int
    task: TaskSpec
    variant: str = "full"
    single_view: str | None = None
    attn_hidden: tuple[int, ...] | None = None  # default: one layer of 4 * sum(d_c)
    mem_hidden: tuple[int, ...] | None = None   # default: one layer of 2 * d_mem

    def __post_init__(self):
        names = [v.name for v in self.views]
        if not names:
            raise ConfigError("need at least one view")
        if len(set(names)) != len(names):
            raise ConfigError(f"view names must be unique, got {names}")
        for v in self.views:
            if v.d_x < 1 or v.d_c < 1:
                raise ConfigError(f"view '{v.name}' has non-positive dims ({v.d_x}, {v.d_c})")
        if self.d_mem < 1:
            raise ConfigError(f"d_mem must be positive, got {self.d_mem}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant '{self.variant}' (expected one of {VARIANTS})")
        if self.variant == "single_view":
            if self.single_view is None or self.single_view not in names:
                raise ConfigError(
                    f"single_view variant needs an existing view name, got {self.single_view!r}")
        elif self.single_view is not None:
            raise ConfigError("single_view is only meaningful with the single_view variant")

    # -- derived dimensions -------------------------------------------------

    @property
    def d_c_total(self) -> int:
        return sum(v.d_c for v in self.views)

    @property
    def active_views(self) -> tuple[ViewSpec, ...]:
        if self.variant == "single_view":
            return tuple(v for v in self.views if v.name == self.single_view)
        return self.views

    @property
    def uses_memory(self) -> bool:
        return self.variant in ("full", "no_delta")

    @property
    def attn_dim(self) -> int:
        """Length of the attention input/score vector."""
        return 2 * self.d_c_total if self.variant == "full" else self.d_c_total

    @property
    def feature_dim(self) -> int:
        if self.variant == "single_view":
            return self.active_views[0].d_c
        if self.variant == "no_mem":
            return self.d_c_total
        return self.d_c_total + self.d_mem

    @property
    def head_dim(self) -> int:
        return 1 if self.task.kind == "regression" else self.task.n_classes

    def attn_spec(self) -> MlpSpec | None:
        if not self.uses_memory:
            return None
        hidden = self.attn_hidden if self.attn_hidden is not None else (4 * self.d_c_total,)
        return MlpSpec(self.attn_dim, hidden, self.attn_dim, out_act="softmax")

    def memory_specs(self) -> tuple[MlpSpec, MlpSpec, MlpSpec] | None:
        if not self.uses_memory:
            return None
        hidden = self.mem_hidden if self.mem_hidden is not None else (2 * self.d_mem,)
        proposal = MlpSpec(self.attn_dim, hidden, self.d_mem, out_act="identity")
        gate = MlpSpec(self.attn_dim, hidden, self.d_mem, out_act="sigmoid")
        return proposal, gate, gate

    def with_variant(self, variant: str, single_view: str | None = None) -> "ModelConfig":
        return replace(self, variant=variant, single_view=single_view)


# -- parameters --------------------------------------------------------------

MEMORY_NET_NAMES = ("mem.proposal", "mem.retain", "mem.update")


def init_params(config: ModelConfig, seed: int) -> dict[str, np.ndarray]:
    """Deterministic parameter init; independent substream per component."""
    params: dict[str, np.ndarray] = {}
    for v in config.active_views:
        lstm = init_lstm(substream(seed, "lstm", v.name), v.d_x, v.d_c)
        for k, arr in lstm.items():
            params[f"lstm.{v.name}.{k}"] = arr
    attn = config.attn_spec()
    if attn is not None:
        for k, arr in init_mlp(attn, substream(seed, "attn")).items():
            params[f"attn.{k}"] = arr
        for name, spec in zip(MEMORY_NET_NAMES, config.memory_specs()):
            for k, arr in init_mlp(spec, substream(seed, name)).items():
                params[f"{name}.{k}"] = arr
    rng_head = substream(seed, "head")
    params["head.W"] = xavier_uniform(rng_head, config.head_dim, config.feature_dim)
    params["head.b"] = np.zeros(config.head_dim)
    return params


def param_count(config: ModelConfig) -> int:
    """Closed-form number of trainable scalars."""
    n = 0
    for v in config.active_views:
        n += 4 * (v.d_c * v.d_x + v.d_c * v.d_c + v.d_c)
    attn = config.attn_spec()
    if attn is not None:
        n += attn.param_count()
        n += sum(spec.param_count() for spec in config.memory_specs())
    n += config.head_dim * (config.feature_dim + 1)
    return n


def zero_params(config: ModelConfig) -> dict[str, np.ndarray]:
    """All-zero parameters of the right shapes (handy for closed-form tests)."""
    return {k: np.zeros_like(v) for k, v in init_params(config, 0).items()}


# -- forward ------------------------------------------------------------------


@dataclass
class StepTrace:
    """Raw per-timestep values captured for inspection; not differentiable."""
    c: dict[str, np.ndarray]
    h: dict[str, np.ndarray]
    gates: dict[str, Gates]
    a: np.ndarray | None = None
    c_hat: np.ndarray | None = None
    u_hat: np.ndarray | None = None
    gamma1: np.ndarray | None = None
    gamma2: np.ndarray | None = None
    u: np.ndarray | None = None


class BoundModel(NamedTuple):
    lstms: dict[str, BoundLstm]
    attn: BoundMlp | None
    memory: MemoryNets | None
    head_W: Tensor
    head_b: Tensor


@dataclass
class ForwardResult:
    tape: Tape
    bound: BoundModel
    features: Tensor
    trace: list[StepTrace] | None


def bind_model(tp: Tape, config: ModelConfig, params: dict[str, np.ndarray]) -> BoundModel:
    try:
        lstms = {v.name: bind_lstm(tp, params, f"lstm.{v.name}") for v in config.active_views}
        attn = memory = None
        attn_spec = config.attn_spec()
        if attn_spec is not None:
            attn = bind_mlp(tp, attn_spec, params, "attn")
            specs = config.memory_specs()
            memory = MemoryNets(*(bind_mlp(tp, spec, params, name)
                                  for name, spec in zip(MEMORY_NET_NAMES, specs)))
        head_W = tp.param(params["head.W"], "head.W")
        head_b = tp.param(params["head.b"], "head.b")
    except KeyError as e:
        raise SchemaError(f"parameter set is missing entry {e} for this config") from e
    return BoundModel(lstms, attn, memory, head_W, head_b)


def _check_views(config: ModelConfig, views: dict[str, np.ndarray]) -> int:
    expected = {v.name: v for v in config.active_views}
    unknown = sorted(set(views) - set(v.name for v in config.views))
    if unknown:
        raise SchemaError(f"unknown views in input: {unknown}")
    missing = sorted(set(expected) - set(views))
    if missing:
        raise SchemaError(f"missing views in input: {missing}")
    lengths = {name: views[name].shape[0] for name in expected}
    T_len = next(iter(lengths.values()))
    for name, L in lengths.items():
        if L != T_len:
            raise AlignmentError(
                f"ragged sequence: view '{name}' has T={L}, expected T={T_len}")
    if T_len < 1:
        raise AlignmentError("sequence must have at least one timestep")
    for name, spec in expected.items():
        if views[name].ndim != 2 or views[name].shape[1] != spec.d_x:
            raise ShapeError(
                f"view '{name}' rows have shape {views[name].shape[1:]}, expected ({spec.d_x},)")
    return T_len


def forward_on(
    tp: Tape,
    config: ModelConfig,
    bound: BoundModel,
    views: dict[str, np.ndarray],
    want_trace: bool = False,
) -> tuple[Tensor, list[StepTrace] | None]:
    """Run the recurrence on an already-bound tape; returns the feature vector."""
    T_len = _check_views(config, views)
    order = [v.name for v in config.active_views]
    states = {v.name: zero_state(tp, v.d_c) for v in config.active_views}
    with_memory = config.uses_memory
    if with_memory:
        u = tp.leaf(np.zeros(config.d_mem), "u0")
        c_cat_prev = T.concat([states[n].c for n in order]) if config.variant == "full" else None
    trace: list[StepTrace] | None = [] if want_trace else None

    for t in range(T_len):
        xs = {name: tp.leaf(views[name][t], f"x[{t}]") for name in order}
        states, gates = system_step(bound.lstms, xs, states)
        att: AttentionOutput | None = None
        mem = None
        if with_memory:
            c_cat = T.concat([states[n].c for n in order])
            if config.variant == "full":
                att = delta_attend(bound.attn, c_cat_prev, c_cat)
                c_cat_prev = c_cat
            else:
                att = attend_current(bound.attn, c_cat)
            mem = memory_update(bound.memory, att.c_hat, u)
            u = mem.u
        if want_trace:
            trace.append(StepTrace(
                c={n: states[n].c.value.copy() for n in order},
                h={n: states[n].h.value.copy() for n in order},
                gates=gates,
                a=att.a.value.copy() if att else None,
                c_hat=att.c_hat.value.copy() if att else None,
                u_hat=mem.u_hat.value.copy() if mem else None,
                gamma1=mem.gamma1.value.copy() if mem else None,
                gamma2=mem.gamma2.value.copy() if mem else None,
                u=mem.u.value.copy() if mem else None,
            ))

    parts = [states[n].h for n in order]
    if with_memory:
        parts.append(u)
    features = parts[0] if len(parts) == 1 else T.concat(parts)
    return features, trace


def forward(
    config: ModelConfig,
    params: dict[str, np.ndarray],
    views: dict[str, np.ndarray],
    want_trace: bool = False,
) -> ForwardResult:
    """Fresh-tape forward pass over one multi-view sequence."""
    tp = Tape()
    bound = bind_model(tp, config, params)
    features, trace = forward_on(tp, config, bound, views, want_trace)
    return ForwardResult(tp, bound, features, trace)


def head_output(bound: BoundModel, features: Tensor) -> Tensor:
    """Affine head on the feature vector: regression scalar or class logits."""
    return T.affine(bound.head_W, features, bound.head_b)


def predict(config: ModelConfig, params: dict[str, np.ndarray],
            views: dict[str, np.ndarray]) -> np.ndarray:
    """End-to-end prediction: scalar [1] for regression, probabilities [k]
    for classification."""
    result = forward(config, params, views)
    out = head_output(result.bound, result.features)
    if config.task.kind == "classification":
        out = T.softmax(out)
    return out.value.copy()


# -- config / checkpoint serialization ---------------------------------------


def config_to_dict(config: ModelConfig) -> dict:
    return {
        "views": [{"name": v.name, "d_x": v.d_x, "d_c": v.d_c} for v in config.views],
        "d_mem": config.d_mem,
        "task": {"kind": config.task.kind, "n_classes": config.task.n_classes},
        "variant": config.variant,
        "single_view": config.single_view,
        "attn_hidden": list(config.attn_hidden) if config.attn_hidden is not None else None,
        "mem_hidden": list(config.mem_hidden) if config.mem_hidden is not None else None,
    }


def config_from_dict(d: dict) -> ModelConfig:
    try:
        return ModelConfig(
            views=tuple(ViewSpec(v["name"], int(v["d_x"]), int(v["d_c"])) for v in d["views"]),
            d_mem=int(d["d_mem"]),
            task=TaskSpec(d["task"]["kind"], int(d["task"].get("n_classes", 0))),
            variant=d.get("variant", "full"),
            single_view=d.get("single_view"),
            attn_hidden=tuple(d["attn_hidden"]) if d.get("attn_hidden") is not None else None,
            mem_hidden=tuple(d["mem_hidden"]) if d.get("mem_hidden") is not None else None,
        )
    except (KeyError, TypeError) as e:
        raise ConfigError(f"malformed model config: {e}") from e


def _encode_array(arr: np.ndarray) -> dict:
    return {
        "shape": list(arr.shape),
        "data": base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode(),
    }


def _decode_array(d: dict) -> np.ndarray:
    arr = np.frombuffer(base64.b64decode(d["data"]), dtype="<f8").astype(np.float64)
    return arr.reshape(d["shape"])


def save_checkpoint(path, config: ModelConfig, params: dict[str, np.ndarray],
                    seed: int, extra: dict | None = None) -> None:
    """Value-exact JSON checkpoint (raw float64 bytes, base64)."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "seed": int(seed),
        "config": config_to_dict(config),
        "params": {k: _encode_array(v) for k, v in params.items()},
    }
    if extra:
        payload["extra"] = extra
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_checkpoint(path) -> tuple[ModelConfig, dict[str, np.ndarray], int]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{path} is not a model checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {payload.get('version')}")
    config = config_from_dict(payload["config"])
    params = {k: _decode_array(v) for k, v in payload["params"].items()}
    return config, params, int(payload["seed"])
