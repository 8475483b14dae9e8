"""Adam with decoupled weight decay, cosine-annealed learning rate, early stopping."""
import copy
import csv
import logging
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .model import DivergenceError, is_gain_or_bias, make_batch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr_max: float = 0.005
    weight_decay: float = 1e-4
    lr_min: float = 1e-6
    batch_size: int = 64
    max_epochs: int = 50
    patience: int = 10
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    decay_mode: str = "decoupled"   # or "l2" (coupled, added to the gradient)
    schedule_unit: str = "epoch"    # or "step"

    def __post_init__(self):
        if not self.lr_min < self.lr_max:
            raise ValueError("lr_min must be below lr_max")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be >= 1")
        if self.decay_mode not in ("decoupled", "l2"):
            raise ValueError(f"unknown decay_mode {self.decay_mode!r}")
        if self.schedule_unit not in ("epoch", "step"):
            raise ValueError(f"unknown schedule_unit {self.schedule_unit!r}")


@dataclass
class TrainState:
    epoch: int = 0
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    best_val_nll: float = math.inf
    epochs_since_best: int = 0

    @classmethod
    def for_params(cls, params):
        return cls(m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()})


@dataclass
class TrainResult:
    best_params: dict
    best_epoch: int
    log: list
    state: TrainState
    diverged: bool = False


class TrainingDiverged(RuntimeError):
    def __init__(self, result, cause):
        self.result = result
        super().__init__(f"training diverged at epoch {result.state.epoch}: {cause}")


def lr_at(epoch, cfg, total=None):
    """Cosine annealing from lr_max (epoch 0) to lr_min (epoch == total)."""
    total = cfg.max_epochs if total is None else total
    if not 0 <= epoch <= total:
        raise ValueError(f"epoch {epoch} outside [0, {total}]")
    w = 0.5 * (1.0 + math.cos(math.pi * epoch / total))
    # convex form keeps both endpoints exact in floating point
    return w * cfg.lr_max + (1.0 - w) * cfg.lr_min


def adam_step(params, grads, state, lr, cfg):
    """One in-place Adam update of ``params`` (name -> array)."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for {name}")
    state.step += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, theta in params.items():
        g = grads[name]
        decays = cfg.weight_decay > 0 and not is_gain_or_bias(name)
        if decays and cfg.decay_mode == "l2":
            g = g + cfg.weight_decay * theta
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = lr * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)
        if decays and cfg.decay_mode == "decoupled":
            theta -= lr * cfg.weight_decay * theta
        theta -= update.astype(theta.dtype, copy=False)
    return params, state


def batches(examples, batch_size, order=None):
    idx = range(len(examples)) if order is None else order
    idx = list(idx)
    for i in range(0, len(idx), batch_size):
        yield make_batch([examples[j] for j in idx[i:i + batch_size]])


def mean_nll(model, examples, batch_size=64):
    """Token-weighted NLL over all title positions, eval mode."""
    total = 0.0
    count = 0
    for b in batches(examples, batch_size):
        s, c = model.example_nll(b)
        total += float(s.sum())
        count += int(c.sum())
    return total / count


def _elapsed(t0):
    # fixed timing column for byte-reproducible logs
    if os.environ.get("SOURCE_DATE_EPOCH"):
        return 0.0
    return time.perf_counter() - t0


def train(model, train_examples, val_examples, cfg, on_improve=None):
    """Train in place; returns TrainResult with the best-validation parameters.

    ``on_improve(model, epoch)`` is called whenever validation NLL improves,
    e.g. to write a checkpoint.
    """
    if not train_examples or not val_examples:
        raise ValueError("train and val sets must be non-empty")
    shuffle_seq, dropout_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    dropout_rng = np.random.default_rng(dropout_seq)
    params = {k: t.data for k, t in model.params.items()}
    state = TrainState.for_params(params)
    best = copy.deepcopy(params)
    best_epoch = 0
    rows = []
    steps_per_epoch = math.ceil(len(train_examples) / cfg.batch_size)
    total_steps = steps_per_epoch * cfg.max_epochs

    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        state.epoch = epoch
        epoch_lr = lr_at(epoch - 1, cfg)
        order = shuffle_rng.permutation(len(train_examples))
        loss_sum = 0.0
        tok_sum = 0
        try:
            for batch in batches(train_examples, cfg.batch_size, order):
                lr = epoch_lr if cfg.schedule_unit == "epoch" else lr_at(state.step, cfg, total_steps)
                loss, grads = model.loss_and_grads(batch, dropout_rng)
                adam_step(params, grads, state, lr, cfg)
                n_tok = int(batch.target_mask.sum())
                loss_sum += loss * n_tok
                tok_sum += n_tok
            val_nll = mean_nll(model, val_examples, cfg.batch_size)
            if not math.isfinite(val_nll):
                raise DivergenceError(f"non-finite validation NLL {val_nll}")
        except DivergenceError as e:
            for k, arr in best.items():
                params[k][...] = arr
            result = TrainResult(best, best_epoch, rows, state, diverged=True)
            raise TrainingDiverged(result, e) from e
        row = {"epoch": epoch, "lr": epoch_lr, "train_nll": loss_sum / tok_sum,
               "val_nll": val_nll, "seconds": _elapsed(t0)}
        rows.append(row)
        log.info("epoch %d lr %.3g train %.4f val %.4f", epoch, epoch_lr, row["train_nll"], val_nll)
        if val_nll < state.best_val_nll:
            state.best_val_nll = val_nll
            state.epochs_since_best = 0
            best = copy.deepcopy(params)
            best_epoch = epoch
            if on_improve is not None:
                on_improve(model, epoch)
        else:
            state.epochs_since_best += 1
            if state.epochs_since_best >= cfg.patience:
                break
    return TrainResult(best, best_epoch, rows, state)


def restore(model, params):
    for k, arr in params.items():
        model.params[k].data[...] = arr


def write_log(rows, path):
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["epoch", "lr", "train_nll", "val_nll", "seconds"])
        for r in rows:
            w.writerow([r["epoch"], repr(r["lr"]), repr(r["train_nll"]), repr(r["val_nll"]), f"{r['seconds']:.3f}"])
