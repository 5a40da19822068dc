"""Loss, initialization, freeze training and the Adam training loop."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, LrSchedule, Tape, Tensor, adam_step, lr_at
from .errors import ContractError, NumericError
from .model import (KnoModel, ModelConfig, as_leaves, blocks, build_model, forward_tensors, head,
                    kernel_scale_names, latent, layer_groups, predict, save_checkpoint)
from .normalization import Normalizer

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 1000
    epochs_per_layer: int = 0
    lr_max: float = 1e-3
    lr_min: float = 1e-5
    cycle_length: int | None = None  # defaults to epochs / 5
    reg_lambda: float = 1e-6
    batch_size: int | None = None  # None: full batch
    seed: int = 0
    normalization: str = "zscore"

    def __post_init__(self):
        if self.epochs < 0 or self.epochs_per_layer < 0:
            raise ContractError("epoch counts must be non-negative")
        if self.reg_lambda < 0:
            raise ContractError("reg_lambda must be non-negative")
        if self.normalization not in ("none", "zscore"):
            raise ContractError(f"unknown normalization {self.normalization!r}")

    def schedule(self, epochs: int | None = None) -> LrSchedule:
        n = self.epochs if epochs is None else epochs
        cycle = self.cycle_length or max(1, n // 5)
        return LrSchedule(self.lr_max, self.lr_min, cycle)


@dataclass
class TrainHistory:
    epoch: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    test_rel_l2_pct: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    seconds: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.epoch)

    def append(self, epoch, loss, test_err, lr, seconds) -> None:
        self.epoch.append(epoch)
        self.train_loss.append(loss)
        self.test_rel_l2_pct.append(test_err)
        self.lr.append(lr)
        self.seconds.append(seconds)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "test_rel_l2_pct", "lr", "seconds"])
            for row in zip(self.epoch, self.train_loss, self.test_rel_l2_pct, self.lr, self.seconds):
                w.writerow([row[0]] + [repr(float(x)) for x in row[1:]])


def loss(preds: Tensor, targets: np.ndarray, kernel_scales=(), reg_lambda: float = 0.0) -> Tensor:
    """Mean squared relative error per sample plus reg_lambda * ||softplus(raw scales)||^2."""
    preds = ad.as_tensor(preds)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape:
        raise ContractError(f"prediction shape {preds.shape} != target shape {targets.shape}")
    M = targets.shape[0]
    norms = np.sum(targets.reshape(M, -1) ** 2, axis=1)
    if np.any(norms == 0.0):
        raise ContractError("a target has zero norm; relative error is undefined")
    sq = ad.sum(ad.reshape((preds - targets) ** 2, (M, -1)), axis=1)
    total = ad.sum(sq / norms) * (1.0 / M)
    if reg_lambda and kernel_scales:
        reg = ad.sum(ad.concat([ad.reshape(ad.softplus(s) ** 2, (-1,)) for s in kernel_scales], axis=0))
        total = total + reg_lambda * reg
    return total


def init_model(cfg: ModelConfig, quad_rule, train_grid, seed: int = 0) -> KnoModel:
    return build_model(cfg, quad_rule, train_grid, seed)


def relative_errors_pct(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    M = truth.shape[0]
    num = np.linalg.norm((pred - truth).reshape(M, -1), axis=1)
    den = np.linalg.norm(truth.reshape(M, -1), axis=1)
    return 100.0 * num / den


def evaluate(model: KnoModel, inputs: np.ndarray, outputs: np.ndarray) -> float:
    """Mean per-sample relative L2 error (percent) in physical units."""
    return float(relative_errors_pct(predict(model, inputs), outputs).mean())


class _Objective:
    """Normalized data and the taped loss/gradient for a model."""

    def __init__(self, model: KnoModel, inputs, outputs, cfg: TrainConfig):
        norm = model.normalizer
        self.inputs = norm.inputs.normalize(inputs)
        self.targets = np.asarray(outputs, dtype=np.float64)
        self.mean = norm.outputs.mean
        self.std = norm.outputs.std
        self.cfg = cfg

    def __call__(self, model: KnoModel, trainable, idx=None, cache=None):
        """Loss and gradients over ``trainable``.

        ``cache`` is ``(start, h)``: the untaped latent entering Wendland block
        ``start`` (``depth + 1`` for the final block), valid while every layer
        before it is frozen.
        """
        F = self.inputs if idx is None else self.inputs[idx]
        Y = self.targets if idx is None else self.targets[idx]
        with Tape() as tape:
            P = as_leaves(model.params, trainable)
            if cache is None:
                y = forward_tensors(model, P, F)
            else:
                start, h = cache
                h = Tensor(h if idx is None else h[:, idx])
                y = head(model, P, blocks(model, P, h, start, model.config.depth), model.train_grid)
            pred = y * self.std + self.mean
            scales = [P[k] for k in kernel_scale_names(model.config)]
            L = loss(pred, Y, scales, self.cfg.reg_lambda)
        value = float(L.data)
        if not math.isfinite(value):
            raise NumericError("training loss is not finite")
        names = sorted(trainable)
        grads = tape.gradient(L, [P[k] for k in names])
        return value, dict(zip(names, grads))

    def prefix(self, model: KnoModel, start: int) -> np.ndarray:
        """Latent entering block ``start`` for all samples, without a tape."""
        P = {k: Tensor(v) for k, v in model.params.items()}
        return latent(model, P, self.inputs, upto=start - 1).data


def _batches(M: int, batch_size: int | None, rng: np.random.Generator):
    if not batch_size or batch_size >= M:
        return [None]
    order = rng.permutation(M)
    return [np.sort(order[s:s + batch_size]) for s in range(0, M, batch_size)]


def _ensure_normalizer(model: KnoModel, inputs, outputs, cfg: TrainConfig) -> KnoModel:
    if model.normalizer is None:
        model = model.with_params(model.params)
        model.normalizer = Normalizer.fit(inputs, outputs, cfg.normalization)
    return model


def _run_phase(model, objective, trainable, epochs, schedule, cfg, rng, on_epoch=None, cache=None):
    state = AdamState()
    params = model.params
    for epoch in range(epochs):
        lr = lr_at(schedule, epoch)
        losses = []
        for idx in _batches(objective.inputs.shape[0], cfg.batch_size, rng):
            value, grads = objective(model, trainable, idx, cache)
            losses.append(value)
            params, state = adam_step(params, grads, state, lr)
            model = model.with_params(params)
        if on_epoch is not None:
            on_epoch(epoch, model, float(np.mean(losses)), lr)
    return model


def freeze_train(model: KnoModel, data, config: TrainConfig, losses: list | None = None) -> KnoModel:
    """Train one kernel-based layer at a time, last to first.

    ``data`` is ``(inputs, outputs)``. Per-phase start/end training losses are
    appended to ``losses`` when given.
    """
    inputs, outputs = data
    model = _ensure_normalizer(model, inputs, outputs, config)
    if config.epochs_per_layer == 0:
        return model
    objective = _Objective(model, inputs, outputs, config)
    rng = np.random.default_rng(config.seed)
    schedule = config.schedule(config.epochs_per_layer)
    depth = model.config.depth
    for label, names in reversed(list(layer_groups(model.config).items())):
        start = depth + 1 if label == "final" else int(label[len("block"):])
        cache = (start, objective.prefix(model, start))
        before = objective(model, set(names), None, cache)[0] if losses is not None else None
        model = _run_phase(model, objective, set(names), config.epochs_per_layer, schedule, config, rng,
                           cache=cache)
        if losses is not None:
            losses.append((label, before, objective(model, set(names), None, cache)[0]))
        log.info("freeze phase %s done", label)
    return model


def train(model: KnoModel, train_data, test_data, config: TrainConfig,
          checkpoint_path=None, log_every: int = 0, extra: dict | None = None) -> tuple[KnoModel, TrainHistory]:
    """Freeze phase (if configured) then full Adam training.

    Returns the model with the lowest test error seen (the initial model when
    ``epochs == 0``) and the per-epoch history.
    """
    inputs, outputs = train_data
    test_in, test_out = test_data
    if inputs.shape[1:] != (model.train_grid.shape[0], model.config.d_u):
        raise ContractError("training inputs do not live on the model's training grid")
    model = _ensure_normalizer(model, inputs, outputs, config)
    history = TrainHistory()
    if config.epochs == 0:
        if checkpoint_path:
            save_checkpoint(model, checkpoint_path, extra)
        return model, history
    model = freeze_train(model, (inputs, outputs), config)
    objective = _Objective(model, inputs, outputs, config)
    trainable = set(model.params)
    rng = np.random.default_rng(config.seed + 1)
    best = {"err": math.inf, "model": model}
    t0 = time.perf_counter()

    def on_epoch(epoch, current, value, lr):
        err = evaluate(current, test_in, test_out)
        history.append(epoch, value, err, lr, time.perf_counter() - t0)
        if err < best["err"]:
            best["err"], best["model"] = err, current
        if log_every and epoch % log_every == 0:
            log.info("epoch %d loss %.4e test %.3f%% lr %.2e", epoch, value, err, lr)

    try:
        _run_phase(model, objective, trainable, config.epochs, config.schedule(), config, rng, on_epoch)
    except NumericError as exc:
        path = None
        if checkpoint_path:
            path = str(save_checkpoint(best["model"], checkpoint_path, extra))
        raise NumericError(f"{exc}; last good checkpoint: {path}", checkpoint=path) from exc
    if checkpoint_path:
        save_checkpoint(best["model"], checkpoint_path, extra)
    return best["model"], history
