"""Optimizer, learning-rate schedule, batching, and the per-fold training loop.

Encoder and head parameter groups follow a linear warmup to ``lr_max`` over
``warmup_steps`` steps and an inverse square-root decay afterwards
(continuous at the boundary); convolutional groups keep a constant rate.
Adam runs with bias correction and per-group learning rates.  Training is
deterministic given (seed, data, configs): initialization, batch shuffling,
and dropout each consume an independent stream spawned from the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Iterator

import numpy as np

from . import ops
from .autodiff import NonFiniteError, Tape, Tensor
from .models import ModelConfig, ParameterStore, build_parameters, predict_proba


class TrainingDivergedError(RuntimeError):
    """Loss or a gradient became non-finite; carries the failing step index."""

    def __init__(self, step: int, detail: str):
        super().__init__(f"diverged at step {step}: {detail}")
        self.step = step
        self.detail = detail


@dataclass
class TrainConfig:
    """Optimization constants and the step budget."""

    total_steps: int = 6000
    warmup_steps: int = 1000
    lr_max: float = 0.001
    cnn_lr: float = 0.0001
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    epoch_target: int = 4  # converts the step budget into a batch size
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.warmup_steps <= self.total_steps:
            raise ValueError(
                f"need 1 <= warmup_steps <= total_steps, got {self.warmup_steps}/{self.total_steps}"
            )
        if min(self.lr_max, self.cnn_lr) <= 0:
            raise ValueError("learning rates must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.eps <= 0 or self.epoch_target < 1:
            raise ValueError("eps must be positive and epoch_target >= 1")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown training config fields: {sorted(unknown)}")
        return cls(**data)


def lr_at(t: int, cfg: TrainConfig) -> float:
    """Scheduled rate for the encoder/head groups at 1-based step ``t``."""
    if t < 1:
        raise ValueError(f"steps are 1-based, got {t}")
    if t <= cfg.warmup_steps:
        return cfg.lr_max * t / cfg.warmup_steps
    return cfg.lr_max * math.sqrt(cfg.warmup_steps / t)


def group_rates(t: int, cfg: TrainConfig) -> dict[str, float]:
    lr = lr_at(t, cfg)
    return {"cnn": cfg.cnn_lr, "encoder": lr, "head": lr}


class AdamState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self, params: ParameterStore):
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}


def adam_step(
    params: ParameterStore, state: AdamState, rates: dict[str, float], cfg: TrainConfig
) -> None:
    """One bias-corrected Adam update; group rate chosen per parameter tag."""
    state.t += 1
    bc1 = 1.0 - cfg.beta1**state.t
    bc2 = 1.0 - cfg.beta2**state.t
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue  # no gradient accumulated: parameter unchanged
        if not math.isfinite(float(g.sum())):
            raise NonFiniteError(f"non-finite gradient for parameter {name!r}")
        lr = rates[params.group(name)]
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * np.square(g)
        # p -= lr * (m/bc1) / (sqrt(v/bc2) + eps), with few temporaries
        denom = np.sqrt(v)
        denom *= 1.0 / math.sqrt(bc2)
        denom += cfg.eps
        update = m / denom
        update *= lr / bc1
        p.data -= update


def batch_size_for(n_train: int, cfg: TrainConfig) -> int:
    """max(4, ceil(n_train * epoch_target / total_steps))."""
    return max(4, -(-n_train * cfg.epoch_target // cfg.total_steps))


def make_batches(n_train: int, cfg: TrainConfig, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """Exactly ``total_steps`` index batches, reshuffling every epoch.

    Final partial batches of each epoch are kept; epochs cycle until the step
    budget is spent.
    """
    if n_train < 1:
        raise ValueError(f"need at least one training sample, got {n_train}")
    size = batch_size_for(n_train, cfg)
    steps = 0
    while steps < cfg.total_steps:
        perm = rng.permutation(n_train)
        for start in range(0, n_train, size):
            if steps == cfg.total_steps:
                return
            yield perm[start : start + size]
            steps += 1


@dataclass
class FoldResult:
    params: ParameterStore
    accuracy: float
    losses: list[float] = field(repr=False, default_factory=list)


def evaluate_accuracy(
    stacks: np.ndarray, labels: np.ndarray, params: ParameterStore, cfg: ModelConfig
) -> float:
    """Evaluation-mode accuracy: fraction of argmax predictions matching labels."""
    if len(stacks) != len(labels):
        raise ValueError(f"{len(stacks)} stacks vs {len(labels)} labels")
    hits = 0
    for i in range(len(stacks)):
        probs = predict_proba(Tensor(np.asarray(stacks[i], dtype=np.float64)), params, cfg)
        hits += int(np.argmax(probs.data)) == int(labels[i])
    return hits / len(stacks)


def train_fold(
    train_stacks: np.ndarray,
    train_labels: np.ndarray,
    val_stacks: np.ndarray,
    val_labels: np.ndarray,
    mcfg: ModelConfig,
    tcfg: TrainConfig,
) -> FoldResult:
    """Train one model on a split and score it on the validation part.

    Raises :class:`TrainingDivergedError` when the loss or any gradient goes
    non-finite, carrying the failing step index.
    """
    init_rng, batch_rng, dropout_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(tcfg.seed).spawn(3)
    )
    params = build_parameters(mcfg, init_rng)
    state = AdamState(params)
    losses: list[float] = []

    for step, batch in enumerate(make_batches(len(train_stacks), tcfg, batch_rng), start=1):
        params.zero_grad()
        try:
            # overflow is reported as a failed fold, not as numpy warnings
            with np.errstate(over="ignore", invalid="ignore"), Tape() as tape:
                sample_losses = []
                for i in batch:
                    x = Tensor(np.asarray(train_stacks[i], dtype=np.float64))
                    probs = predict_proba(x, params, mcfg, train=True, rng=dropout_rng)
                    sample_losses.append(ops.cross_entropy(probs, int(train_labels[i])))
                loss = ops.mean_scalars(sample_losses)
                tape.backward(loss)
            adam_step(params, state, group_rates(step, tcfg), tcfg)
        except NonFiniteError as exc:
            raise TrainingDivergedError(step, str(exc)) from exc
        losses.append(loss.item())

    accuracy = evaluate_accuracy(val_stacks, val_labels, params, mcfg)
    return FoldResult(params=params, accuracy=accuracy, losses=losses)
