"""Magnitude pruning: per-tensor masks, a cubic sparsity ramp, and
mask-enforced fine-tuning.  Biases are never pruned.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from . import nncore
from .datasets import DatasetSplit
from .nncore import Model, TrainConfig, derive_seed, epoch_learning_rate

logger = logging.getLogger(__name__)

# stream tags keeping fine-tune shuffles distinct from baseline training
_BASELINE_STREAM = 0
_FINETUNE_STREAM = 1


@dataclass
class PruneMask:
    """Boolean keep-masks per parameter name (True = weight survives)."""

    masks: dict[str, np.ndarray]
    target_sparsity: float

    def apply(self, params: dict[str, np.ndarray]) -> None:
        """Zero the masked-out entries of ``params`` in place."""
        for name, keep in self.masks.items():
            params[name][~keep] = 0.0

    def validate_against(self, params: dict[str, np.ndarray]) -> None:
        for name, keep in self.masks.items():
            if name not in params:
                raise ValueError(f"mask names parameter {name} absent from model")
            if keep.shape != params[name].shape:
                raise ValueError(
                    f"mask for {name} has shape {keep.shape}, parameter is {params[name].shape}")

    def achieved_sparsity(self) -> float:
        total = sum(m.size for m in self.masks.values())
        zeros = sum(int((~m).sum()) for m in self.masks.values())
        return zeros / total


@dataclass(frozen=True)
class SparsitySchedule:
    """Cubic ramp from initial_sparsity at step 0 to final_sparsity at total_steps."""

    initial_sparsity: float
    final_sparsity: float
    total_steps: int

    def __post_init__(self):
        if not 0 <= self.initial_sparsity < 1 or not 0 <= self.final_sparsity < 1:
            raise ValueError(f"sparsities must lie in [0, 1): {self}")
        if self.total_steps < 1:
            raise ValueError(f"total_steps must be >= 1, got {self.total_steps}")


def schedule_sparsity(schedule: SparsitySchedule, step: int) -> float:
    """Sparsity at an integer step: s_f + (s_i - s_f) * (1 - t/T)^3."""
    if not 0 <= step <= schedule.total_steps:
        raise ValueError(f"step {step} outside [0, {schedule.total_steps}]")
    frac = 1.0 - step / schedule.total_steps
    return schedule.final_sparsity + \
        (schedule.initial_sparsity - schedule.final_sparsity) * frac ** 3


def magnitude_threshold(weights: np.ndarray, sparsity: float) -> np.ndarray:
    """Keep-mask zeroing the floor(sparsity * size) smallest-|w| entries.

    Ties on |w| are broken by ascending flat index, so the mask is unique
    and reproducible.
    """
    if not 0 <= sparsity < 1:
        raise ValueError(f"sparsity must lie in [0, 1), got {sparsity}")
    if weights.size == 0:
        raise ValueError("cannot prune an empty tensor")
    k = math.floor(sparsity * weights.size)
    mask = np.ones(weights.size, dtype=bool)
    if k:
        order = np.argsort(np.abs(weights), axis=None, kind="stable")
        mask[order[:k]] = False
    return mask.reshape(weights.shape)


def prunable_parameter_names(model: Model) -> list[str]:
    """Weight tensors only; biases stay dense."""
    return [n for n in model.param_names() if n.endswith(".weight")]


def build_mask(model: Model, sparsity: float) -> PruneMask:
    """Per-tensor magnitude masks at the given sparsity over all weight tensors."""
    masks = {name: magnitude_threshold(model.params[name], sparsity)
             for name in prunable_parameter_names(model)}
    return PruneMask(masks=masks, target_sparsity=sparsity)


def measure_sparsity(model_or_params, names=None) -> float:
    """Fraction of exact zeros across the named tensors (default: all weights)."""
    if isinstance(model_or_params, Model):
        params = model_or_params.params
        if names is None:
            names = prunable_parameter_names(model_or_params)
    else:
        params = model_or_params
        if names is None:
            names = list(params.keys())
    names = list(names)
    if not names:
        raise ValueError("sparsity scope is empty")
    total = sum(params[n].size for n in names)
    zeros = sum(int((params[n] == 0).sum()) for n in names)
    return zeros / total


def prune_and_finetune(model: Model, data: DatasetSplit, cfg: TrainConfig,
                       target_sparsity: float) -> tuple[Model, PruneMask]:
    """Gradually prune to ``target_sparsity`` while fine-tuning.

    The mask is recomputed from current weight magnitudes at the start of
    each epoch, following the cubic ramp from min(0.5, target) down to the
    target over epochs-1 steps; the final epoch trains at the target, so the
    returned model carries exactly the target sparsity.  Uses the same
    learning-rate decay rule as ``nncore.train`` and a fine-tune-specific
    shuffle stream, so results are bit-deterministic.
    """
    if not 0 <= target_sparsity < 1:
        raise ValueError(f"target_sparsity must lie in [0, 1), got {target_sparsity}")
    cfg.validate(len(data))
    model = model.copy()
    train_split, val_split = nncore.split_train_val(data, cfg.val_split, cfg.seed)
    initial = min(0.5, target_sparsity)
    if cfg.epochs == 1:
        schedule = None
    else:
        schedule = SparsitySchedule(initial, target_sparsity, cfg.epochs - 1)
    mask = None
    for epoch in range(cfg.epochs):
        s = target_sparsity if schedule is None else schedule_sparsity(schedule, epoch)
        mask = build_mask(model, s)
        mask.apply(model.params)
        lr = epoch_learning_rate(cfg.learning_rate, epoch)
        try:
            mean_loss = nncore.sgd_epoch(
                model, train_split.images, train_split.labels, lr, cfg.batch_size,
                derive_seed(cfg.seed, _FINETUNE_STREAM, epoch), mask=mask)
        except nncore.TrainingDivergedError as e:
            raise nncore.TrainingDivergedError(f"fine-tune epoch {epoch}: {e}") from None
        if len(val_split):
            val_acc = nncore.evaluate_accuracy(model, val_split)
            logger.info("fine-tune epoch %d/%d: sparsity %.4f, loss %.4f, val acc %.2f%%",
                        epoch + 1, cfg.epochs, s, mean_loss, val_acc)
        else:
            logger.info("fine-tune epoch %d/%d: sparsity %.4f, loss %.4f",
                        epoch + 1, cfg.epochs, s, mean_loss)
    model.epochs_trained += cfg.epochs
    return model, mask
