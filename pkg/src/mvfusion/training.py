"""Losses, optimizers, the training loop, and the gradient-check harness.

Training processes whole sequences (no padded batching): a batch is a group
of sequences whose gradients are averaged before one optimizer step. The
regression loss is L1 so the objective matches the MAE metric; the
classification loss is the negative log-probability of the true class
computed from logits via log-sum-exp.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import tape as T
from .data import MultiViewSequence, DatasetSplit, subset
from .errors import ConfigError, DomainError, SchemaError
from .metrics import EvalReport, classification_report, mae, regression_report
from .model import (ForwardResult, ModelConfig, forward, head_output,
                    init_params)
from .rng import substream
from .tape import Tensor


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    optimizer: str = "adam"        # "adam" | "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 5
    clip_norm: float | None = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer '{self.optimizer}'")
        if min(self.learning_rate, self.batch_size, self.max_epochs) <= 0:
            raise ConfigError("learning_rate, batch_size, max_epochs must be positive")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive or None")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    valid_loss: list[float] = field(default_factory=list)
    valid_metric: list[float] = field(default_factory=list)
    best_epoch: int = -1
    wall_clock_s: float = 0.0

    def to_dict(self) -> dict:
        return {"train_loss": self.train_loss, "valid_loss": self.valid_loss,
                "valid_metric": self.valid_metric, "best_epoch": self.best_epoch,
                "wall_clock_s": self.wall_clock_s}


# -- loss ---------------------------------------------------------------------


def loss_from_output(out: Tensor, label: float, config: ModelConfig) -> Tensor:
    """Scalar loss node from the raw head output.

    Regression: L1 distance |out - label|. Classification: negative log
    probability of the true class, logsumexp(logits) - logits[label].
    """
    if config.task.kind == "regression":
        return T.vsum(T.absolute(T.shift(out, -float(label))))
    k = int(label)
    if k != label or not (0 <= k < config.task.n_classes):
        raise DomainError(
            f"class label {label!r} out of range [0, {config.task.n_classes})")
    return T.sub(T.logsumexp(out), T.pick(out, k))


def loss_node(result: ForwardResult, label: float, config: ModelConfig) -> Tensor:
    return loss_from_output(head_output(result.bound, result.features), label, config)


def sequence_loss(config: ModelConfig, params: dict[str, np.ndarray],
                  seq: MultiViewSequence) -> tuple[float, np.ndarray]:
    """Forward-only loss and raw head output for one sequence."""
    result = forward(config, params, seq.views)
    out = head_output(result.bound, result.features)
    loss = loss_from_output(out, seq.label, config)
    return float(loss.value), out.value.copy()


# -- optimizer ----------------------------------------------------------------


@dataclass
class OptimizerState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float | None) -> float:
    """Scale all gradients in place so their joint L2 norm is at most
    max_norm; returns the pre-clip norm."""
    norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if max_norm is not None and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def optimizer_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    cfg: TrainConfig,
) -> tuple[dict[str, np.ndarray], OptimizerState]:
    """One update; gradients are clipped by global norm first."""
    if set(grads) != set(params):
        missing = sorted(set(params) - set(grads))
        extra = sorted(set(grads) - set(params))
        raise SchemaError(f"gradient keys mismatch: missing {missing}, extra {extra}")
    clip_global_norm(grads, cfg.clip_norm)
    lr = cfg.learning_rate
    new_params: dict[str, np.ndarray] = {}
    if cfg.optimizer == "sgd":
        for k, p in params.items():
            new_params[k] = p - lr * grads[k]
        return new_params, state
    state.step += 1
    t = state.step
    b1, b2 = cfg.beta1, cfg.beta2
    bc1, bc2 = 1.0 - b1 ** t, 1.0 - b2 ** t
    for k, p in params.items():
        g = grads[k]
        m = state.m.get(k)
        if m is None:
            m = np.zeros_like(p)
            state.m[k] = m
            state.v[k] = np.zeros_like(p)
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        new_params[k] = p - lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
    return new_params, state


# -- evaluation ---------------------------------------------------------------


def predictions(config: ModelConfig, params: dict[str, np.ndarray],
                seqs: list[MultiViewSequence], threads: int = 1):
    """(losses, preds, labels) over a dataset, order-stable.

    preds are class indices for classification, scalars for regression.
    Threaded evaluation is exact: each sequence runs on its own tape against
    read-only parameters, and results keep input order.
    """
    def one(seq):
        loss, raw = sequence_loss(config, params, seq)
        if config.task.kind == "classification":
            return loss, int(np.argmax(raw)), int(seq.label)
        return loss, float(raw[0]), float(seq.label)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, seqs))
    else:
        rows = [one(s) for s in seqs]
    losses = [r[0] for r in rows]
    preds = [r[1] for r in rows]
    labels = [r[2] for r in rows]
    return losses, preds, labels


def evaluate(config: ModelConfig, params: dict[str, np.ndarray],
             seqs: list[MultiViewSequence], threads: int = 1) -> tuple[float, float]:
    """(mean loss, headline metric): accuracy for classification, MAE for
    regression."""
    if not seqs:
        raise DomainError("evaluate: empty sequence list")
    losses, preds, labels = predictions(config, params, seqs, threads)
    mean_loss = sum(losses) / len(losses)
    if config.task.kind == "classification":
        metric = sum(1 for p, y in zip(preds, labels) if p == y) / len(preds)
    else:
        metric = mae(preds, labels)
    return mean_loss, metric


def eval_report(config: ModelConfig, params: dict[str, np.ndarray],
                seqs: list[MultiViewSequence], threads: int = 1,
                ma_classes: int | None = None) -> EvalReport:
    if not seqs:
        raise DomainError("eval_report: empty sequence list")
    _, preds, labels = predictions(config, params, seqs, threads)
    if config.task.kind == "classification":
        return classification_report(preds, labels, config.task.n_classes)
    return regression_report(preds, labels, ma_classes=ma_classes)


# -- training loop ------------------------------------------------------------


def _batch_grads(config: ModelConfig, params: dict[str, np.ndarray],
                 batch: list[MultiViewSequence]) -> tuple[dict[str, np.ndarray], float]:
    acc: dict[str, np.ndarray] | None = None
    total = 0.0
    inv = 1.0 / len(batch)
    for seq in batch:
        result = forward(config, params, seq.views)
        loss = loss_node(result, seq.label, config)
        total += float(loss.value)
        result.tape.backward(loss)
        grads = result.tape.named_param_grads()
        if acc is None:
            acc = {k: g * inv for k, g in grads.items()}
        else:
            for k, g in grads.items():
                acc[k] += g * inv
    return acc, total


def train(
    config: ModelConfig,
    params: dict[str, np.ndarray],
    dataset: list[MultiViewSequence],
    split: DatasetSplit,
    cfg: TrainConfig,
) -> tuple[dict[str, np.ndarray], TrainHistory]:
    """Epoch loop with seeded shuffling, validation-based selection, and
    early stopping after ``patience`` epochs without improvement.

    Returns the best-by-validation-loss parameters (never the last ones)
    and the per-epoch history. Deterministic given the seed.
    """
    train_seqs = subset(dataset, split.train)
    valid_seqs = subset(dataset, split.valid)
    if not train_seqs or not valid_seqs:
        raise DomainError("train: empty train or validation split")

    t0 = time.perf_counter()
    params = {k: v.copy() for k, v in params.items()}
    best_params = {k: v.copy() for k, v in params.items()}
    best_loss = float("inf")
    bad_epochs = 0
    state = OptimizerState()
    history = TrainHistory()
    B = cfg.batch_size

    for epoch in range(cfg.max_epochs):
        order = substream(cfg.seed, "epoch", epoch).permutation(len(train_seqs))
        epoch_loss = 0.0
        for lo in range(0, len(order), B):
            batch = [train_seqs[i] for i in order[lo:lo + B]]
            grads, batch_total = _batch_grads(config, params, batch)
            epoch_loss += batch_total
            params, state = optimizer_step(params, grads, state, cfg)
        vloss, vmetric = evaluate(config, params, valid_seqs)
        history.train_loss.append(epoch_loss / len(train_seqs))
        history.valid_loss.append(vloss)
        history.valid_metric.append(vmetric)
        if vloss < best_loss:
            best_loss = vloss
            best_params = {k: v.copy() for k, v in params.items()}
            history.best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                break
    history.wall_clock_s = time.perf_counter() - t0
    return best_params, history


# -- gradient checking ----------------------------------------------------------


def relative_error(a: float, n: float) -> float:
    return abs(a - n) / max(1e-8, abs(a) + abs(n))


def _analytic_grads(config: ModelConfig, params: dict[str, np.ndarray],
                    seq: MultiViewSequence) -> dict[str, np.ndarray]:
    result = forward(config, params, seq.views)
    loss = loss_node(result, seq.label, config)
    result.tape.backward(loss)
    return result.tape.named_param_grads()


def grad_check(config: ModelConfig, params: dict[str, np.ndarray],
               seq: MultiViewSequence, eps: float = 1e-5) -> float:
    """Max relative error between backward gradients and central finite
    differences, over every parameter entry. Intended for tiny configs."""
    analytic = _analytic_grads(config, params, seq)

    def loss_value() -> float:
        result = forward(config, params, seq.views)
        return float(loss_node(result, seq.label, config).value)

    worst = 0.0
    for name in params:
        arr = params[name]
        grad = analytic[name]
        flat = arr.ravel()
        gflat = grad.ravel()
        for idx in range(flat.shape[0]):
            saved = flat[idx]
            flat[idx] = saved + eps
            f_plus = loss_value()
            flat[idx] = saved - eps
            f_minus = loss_value()
            flat[idx] = saved
            numeric = (f_plus - f_minus) / (2.0 * eps)
            err = relative_error(float(gflat[idx]), numeric)
            if err > worst:
                worst = err
    return worst


def tiny_config(task_kind: str = "regression") -> ModelConfig:
    """3 views of d_x=3, d_c=4 each, d_mem=5: small enough for exhaustive
    finite-difference checks."""
    from .model import TaskSpec, ViewSpec
    task = TaskSpec(task_kind, 3 if task_kind == "classification" else 0)
    return ModelConfig(
        views=(ViewSpec("a", 3, 4), ViewSpec("b", 3, 4), ViewSpec("c", 3, 4)),
        d_mem=5, task=task)


def random_sequence(config: ModelConfig, T_len: int, seed: int,
                    label: float | None = None) -> MultiViewSequence:
    """Gaussian sequence matching a config; used by gradcheck and bench."""
    rng = substream(seed, "gradcheck-seq")
    views = {v.name: rng.normal(size=(T_len, v.d_x)) for v in config.views}
    if label is None:
        label = float(rng.normal()) if config.task.kind == "regression" else \
            float(rng.integers(config.task.n_classes))
    return MultiViewSequence("gc0", "gc0", label, views)


GRADCHECK_SEED = 27  # chosen so no gradient entry is too small for FD to resolve


def gradcheck_variants(base: ModelConfig, T_len: int = 4, seed: int = GRADCHECK_SEED,
                       eps: float = 1e-5) -> dict[str, float]:
    """Run grad_check on the full model and every ablation variant."""
    results: dict[str, float] = {}
    for label, cfg in ablation_configs(base).items():
        params = init_params(cfg, seed)
        seq = random_sequence(cfg, T_len, seed)
        results[label] = grad_check(cfg, params, seq, eps)
    return results


# -- ablation -------------------------------------------------------------------


def ablation_configs(base: ModelConfig) -> dict[str, ModelConfig]:
    """The model plus its structural ablations: no_delta, no_mem, and one
    single_view per view."""
    configs = {"full": base.with_variant("full")}
    configs["no_delta"] = base.with_variant("no_delta")
    configs["no_mem"] = base.with_variant("no_mem")
    for v in base.views:
        configs[f"single_view:{v.name}"] = base.with_variant("single_view", v.name)
    return configs


def run_ablation(
    dataset: list[MultiViewSequence],
    split: DatasetSplit,
    base_config: ModelConfig,
    cfg: TrainConfig,
    threads: int = 1,
) -> dict[str, dict]:
    """Train and evaluate every variant on the same split; returns one
    {report, history} entry per variant."""
    test_seqs = subset(dataset, split.test)
    out: dict[str, dict] = {}
    for label, vcfg in ablation_configs(base_config).items():
        params = init_params(vcfg, cfg.seed)
        best, history = train(vcfg, params, dataset, split, cfg)
        report = eval_report(vcfg, best, test_seqs, threads=threads)
        out[label] = {"report": report, "history": history, "params": best,
                      "config": vcfg}
    return out
