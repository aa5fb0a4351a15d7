"""
Training
Cross-entropy loss, SGD with momentum, the step learning-rate schedule and
the two-stage fine-tuning loop with per-epoch validation and best-checkpoint
selection.
"""

import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from . import tensor as T
from .checkpoint import Checkpoint
from .config import SchedulerConfig, SgdConfig, TrainingStage, TwoStageConfig
from .data import PAD_ID
from .errors import ContractError, NumericalError, VocabIndexError
from .tensor import Tensor

logger = logging.getLogger(__name__)

LOG_COLUMNS = ["stage", "epoch", "lr", "train_loss", "val_loss"]


def cross_entropy(logits: Tensor, targets: np.ndarray, pad_id: int = PAD_ID) -> Tensor:
    """
    Mean negative log-likelihood over the non-pad positions.

    Args:
        logits: [B x T x V] unnormalized scores.
        targets: [B x T] ids; ``pad_id`` positions are ignored.

    Raises:
        ContractError: no real (non-pad) target.
        VocabIndexError: a target id outside [0, V).
    """
    targets = np.asarray(targets)
    if targets.shape != logits.shape[:-1]:
        raise ContractError(
            f"cross_entropy: targets {targets.shape} do not match logits {logits.shape}"
        )
    real = targets != pad_id
    n_real = int(real.sum())
    if n_real == 0:
        raise ContractError("cross_entropy: batch has zero real target tokens")
    vocab = logits.shape[-1]
    bad = real & ((targets < 0) | (targets >= vocab))
    if bad.any():
        raise VocabIndexError(f"target id {int(targets[bad][0])} out of range for V={vocab}")
    safe = np.where(real, targets, 0)
    picked = T.take_last(T.log_softmax(logits, axis=-1), safe)
    total = T.sum(T.mul(picked, real.astype(logits.dtype)))
    return T.mul(total, -1.0 / n_real)


# ---------------------------------------------------------------------------
# Optimizer and schedule
# ---------------------------------------------------------------------------


@dataclass
class OptimizerState:
    """Velocity per trainable parameter, zero at creation."""

    velocity: Dict[str, np.ndarray]

    @classmethod
    def zeros_for(cls, params) -> "OptimizerState":
        return cls({name: np.zeros_like(p.data) for name, p in _trainable(params)})


def _trainable(params) -> List[Tuple[str, Tensor]]:
    if hasattr(params, "trainable_items"):
        return params.trainable_items()
    return [(name, p) for name, p in params if p.requires_grad]


def sgd_step(params, state: OptimizerState, cfg: SgdConfig) -> None:
    """
    One momentum step on every trainable parameter:
    v <- mu v + eta g, then theta <- theta - v.

    Raises:
        ContractError: a trainable parameter has no gradient or no velocity slot.
    """
    for name, param in _trainable(params):
        if param.grad is None:
            raise ContractError(f"sgd_step: trainable parameter '{name}' has no gradient")
        if name not in state.velocity:
            raise ContractError(
                f"sgd_step: no velocity for '{name}' (optimizer built before it became trainable)"
            )
        v = cfg.mu * state.velocity[name] + cfg.eta * param.grad
        state.velocity[name] = v
        param.data -= v.astype(param.dtype, copy=False)


class SgdMomentum:
    """Optimizer bound to a parameter store; velocities cover the trainable set at construction."""

    def __init__(self, params, cfg: SgdConfig):
        self.params = params
        self.cfg = cfg
        self.state = OptimizerState.zeros_for(params)

    def set_lr(self, lr: float) -> None:
        self.cfg = replace(self.cfg, eta=lr)

    def zero_grad(self) -> None:
        self.params.zero_grad()

    def step(self) -> None:
        sgd_step(self.params, self.state, self.cfg)


def scheduled_lr(base_lr: float, epoch: int, cfg: SchedulerConfig) -> float:
    """eta * gamma ** (epoch // step_size)."""
    if epoch < 0:
        raise ContractError(f"epoch must be >= 0, got {epoch}")
    return base_lr * cfg.gamma ** (epoch // cfg.step_size)


# ---------------------------------------------------------------------------
# Epoch loops
# ---------------------------------------------------------------------------


def epoch_train(model, batches: Iterable, optimizer: SgdMomentum) -> float:
    """
    One pass over ``batches``: zero grads, forward, backward, step.

    Returns:
        Mean batch loss.

    Raises:
        ContractError: no batches.
        NumericalError: a batch loss is NaN/Inf (the epoch is aborted).
    """
    total, count = 0.0, 0
    for index, batch in enumerate(batches):
        optimizer.zero_grad()
        loss, _ = model.forward_loss(batch)
        value = loss.item()
        if not math.isfinite(value):
            raise NumericalError(
                f"loss became {value} at batch {index} (lr={optimizer.cfg.eta:.3g}); epoch aborted"
            )
        loss.backward()
        optimizer.step()
        total += value
        count += 1
    if count == 0:
        raise ContractError("epoch_train: the data loader yielded no batches")
    return total / count


def evaluate_loss(model, batches: Iterable) -> float:
    """Mean batch loss without building a graph."""
    total, count = 0.0, 0
    with T.no_grad():
        for batch in batches:
            loss, _ = model.forward_loss(batch)
            total += loss.item()
            count += 1
    if count == 0:
        raise ContractError("evaluate_loss: the data loader yielded no batches")
    return total / count


# ---------------------------------------------------------------------------
# Two-stage loop
# ---------------------------------------------------------------------------


@dataclass
class EpochRecord:
    stage: int
    epoch: int
    lr: float
    train_loss: float
    val_loss: float


EpochCallback = Callable[[TrainingStage, int, object], None]


class TwoStageTrainer:
    """
    Stage 1 trains the recurrent encoder, the projection, both embedding
    tables and the first transformer encoder layer; Stage 2 unfreezes
    everything with a fresh optimizer. After each epoch the validation loss
    is computed and the best checkpoint (strictly lower loss) is kept.

    Args:
        model: R1Translator (or any object with ``params``, ``config``,
            ``forward_loss`` and ``set_stage_trainable``).
        train: Re-iterable training batches; its ``rng_state()``, when
            present, is stored in checkpoints.
        val: Re-iterable validation batches.
        cfg: Epoch budgets, learning rates and schedule.
        callbacks: Called as ``cb(stage, epoch, model)`` after every epoch.
    """

    def __init__(
        self, model, train, val, cfg: TwoStageConfig, callbacks: Sequence[EpochCallback] = ()
    ):
        self.model = model
        self.train = train
        self.val = val
        self.cfg = cfg
        self.callbacks = list(callbacks)
        self.history: List[EpochRecord] = []
        self.best: Optional[Checkpoint] = None
        self._check_disjoint()

    def _check_disjoint(self) -> None:
        train_records = getattr(self.train, "records", None)
        val_records = getattr(self.val, "records", None)
        if train_records is None or val_records is None:
            return
        shared = {r.text for r in train_records} & {r.text for r in val_records}
        if shared:
            raise ContractError(
                f"train and val share {len(shared)} sentence texts, e.g. '{sorted(shared)[0]}'"
            )

    def _rng_state(self) -> Optional[str]:
        getter = getattr(self.train, "rng_state", None)
        return getter() if callable(getter) else None

    def run(self) -> Checkpoint:
        logger.info("=" * 60)
        logger.info(
            f"Two-stage training: N1={self.cfg.epochs_stage1}, N2={self.cfg.epochs_stage2}, "
            f"lr1={self.cfg.lr_stage1:g}, lr2={self.cfg.lr_stage2:g}, momentum={self.cfg.momentum}"
        )
        logger.info("=" * 60)
        self.best = Checkpoint.capture(self.model, stage="init", rng_state=self._rng_state())

        for stage_number, stage in enumerate((TrainingStage.STAGE1, TrainingStage.STAGE2), start=1):
            epochs = self.cfg.epochs(stage)
            if epochs == 0:
                logger.info(f"{stage.value}: no epochs scheduled, skipping")
                continue
            self.model.set_stage_trainable(stage)
            base = self.cfg.sgd(stage)
            schedule = self.cfg.scheduler(stage)
            optimizer = SgdMomentum(self.model.params, base)
            logger.info(
                f"{stage.value}: {self.model.params.count(trainable_only=True)} of "
                f"{self.model.params.count()} parameters trainable"
            )
            for epoch in range(epochs):
                lr = scheduled_lr(base.eta, epoch, schedule)
                optimizer.set_lr(lr)
                train_loss = epoch_train(self.model, self.train, optimizer)
                val_loss = evaluate_loss(self.model, self.val)
                self.history.append(EpochRecord(stage_number, epoch + 1, lr, train_loss, val_loss))
                logger.info(
                    f"{stage.value} epoch {epoch + 1}/{epochs}: lr={lr:.3g} "
                    f"train_loss={train_loss:.4f} val_loss={val_loss:.4f}"
                )
                if val_loss < self.best.best_val_loss:
                    self.best = Checkpoint.capture(
                        self.model, stage.value, epoch + 1, val_loss, rng_state=self._rng_state()
                    )
                    logger.info(
                        f"New best checkpoint: {stage.value} epoch {epoch + 1} "
                        f"(val_loss={val_loss:.4f})"
                    )
                for callback in self.callbacks:
                    callback(stage, epoch + 1, self.model)

        logger.info(
            f"Training complete: best {self.best.stage} epoch {self.best.epoch}, "
            f"val_loss={self.best.best_val_loss:.4f}"
        )
        return self.best

    def history_frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(r) for r in self.history], columns=LOG_COLUMNS)

    def save_log(self, path: Union[str, Path]) -> Path:
        """Write the ``stage,epoch,lr,train_loss,val_loss`` CSV log."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.history_frame().to_csv(path, index=False, float_format="%.10g")
        return path


def train_two_stage(model, train, val, cfg: TwoStageConfig) -> Checkpoint:
    """Run both stages and return the best checkpoint (the initialization when N1 = N2 = 0)."""
    return TwoStageTrainer(model, train, val, cfg).run()
