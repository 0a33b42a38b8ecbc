"""Adam, stratified fold partitions, the select-then-refit protocol, and metrics."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple

import numpy as np

from . import tensor as T
from .data.pipeline import TrialSet
from .errors import NonFiniteError, ShapeError, TrainingDiverged


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 9e-4
    batch_size: int = 16
    select_epochs: int = 200
    refit_epochs: int = 100
    folds: int = 5
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    val_share: float = 0.25  # of the non-test part: 20 / 80
    eval_batch_size: int = 256
    dtype: str = "float64"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.folds < 2:
            raise ValueError("folds must be at least 2")
        if self.select_epochs < 1 or self.refit_epochs < 0:
            raise ValueError("select_epochs must be >= 1 and refit_epochs >= 0")
        if not 0 < self.val_share < 1:
            raise ValueError("val_share must lie in (0, 1)")


# -- optimizer ---------------------------------------------------------------

@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p.data) for p in params], [np.zeros_like(p.data) for p in params])


def adam_step(params, grads, state: AdamState, cfg: TrainConfig) -> None:
    """One bias-corrected Adam update, in place on ``params`` and ``state``."""
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ShapeError("params, grads and moment buffers differ in length")
    state.step += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape or m.shape != p.data.shape or v.shape != p.data.shape:
            raise ShapeError(f"adam: shape mismatch for parameter of shape {p.data.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= (cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.eps)).astype(p.data.dtype, copy=False)


# -- folds -------------------------------------------------------------------

class Fold(NamedTuple):
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def _labels_of(trials) -> np.ndarray:
    return np.asarray(trials.labels if isinstance(trials, TrialSet) else trials)


def _deal(labels: np.ndarray, idx: np.ndarray, rng: np.random.Generator) -> list[np.ndarray]:
    """Members of ``idx`` grouped by class, each group shuffled."""
    groups = []
    for c in np.unique(labels[idx]):
        m = idx[labels[idx] == c]
        groups.append(m[rng.permutation(len(m))])
    return groups


def _quotas(sizes, share: float) -> list[int]:
    """Split ``floor(share * total)`` across groups by largest remainder."""
    exact = np.asarray(sizes, float) * share
    base = np.floor(exact).astype(int)
    extra = int(np.floor(share * sum(sizes))) - int(base.sum())
    for g in np.argsort(-(exact - base), kind="stable")[:extra]:
        base[g] += 1
    return base.tolist()


def make_folds(trials, folds: int = 5, seed: int = 0, val_share: float = 0.25) -> list[Fold]:
    """Stratified k-fold partitions, each with a stratified train/validation split.

    Trials are grouped by class, shuffled, and dealt round-robin into
    ``folds`` test sets.  The rest of each fold gives up ``val_share`` of
    every class to validation (remainders assigned by size).  Deterministic
    in ``seed``.
    """
    labels = _labels_of(trials)
    n = len(labels)
    if n < 2 * folds:
        raise ValueError(f"need at least {2 * folds} trials for {folds} folds, got {n}")
    order = np.concatenate(_deal(labels, np.arange(n), np.random.default_rng(seed)))
    assignment = np.empty(n, dtype=np.int64)
    assignment[order] = np.arange(n) % folds
    out = []
    for k in range(folds):
        test = np.sort(np.flatnonzero(assignment == k))
        groups = _deal(labels, np.flatnonzero(assignment != k), np.random.default_rng([seed, k]))
        quotas = _quotas([len(g) for g in groups], val_share)
        val = np.concatenate([g[:q] for g, q in zip(groups, quotas)])
        train = np.concatenate([g[q:] for g, q in zip(groups, quotas)])
        out.append(Fold(np.sort(train), np.sort(val), test))
    return out


@dataclass
class FoldData:
    train: TrialSet
    val: TrialSet
    test: TrialSet


# -- metrics -----------------------------------------------------------------

@dataclass(frozen=True)
class Metrics:
    """Percentages as exact fractions; None marks an undefined rate."""

    accuracy: Fraction
    sensitivity: Fraction | None
    specificity: Fraction | None

    def as_floats(self) -> dict:
        return {k: None if v is None else float(v) for k, v in
                (("accuracy", self.accuracy), ("sensitivity", self.sensitivity), ("specificity", self.specificity))}


def metrics(tp: int, tn: int, fp: int, fn: int) -> Metrics:
    """Accuracy, sensitivity (deviant recall) and specificity, in percent."""
    counts = (tp, tn, fp, fn)
    if any(int(c) != c or c < 0 for c in counts):
        raise ValueError("confusion counts must be non-negative integers")
    total = tp + tn + fp + fn
    if total == 0:
        raise ValueError("empty confusion matrix")
    pos, neg = tp + fn, tn + fp
    return Metrics(
        accuracy=Fraction(100 * (tp + tn), total),
        sensitivity=Fraction(100 * tp, pos) if pos else None,
        specificity=Fraction(100 * tn, neg) if neg else None,
    )


def confusion(labels, predictions) -> tuple[int, int, int, int]:
    """(TP, TN, FP, FN) with the deviant class (1) as positive."""
    y = np.asarray(labels)
    p = np.asarray(predictions)
    tp = int(np.sum((p == 1) & (y == 1)))
    tn = int(np.sum((p == 0) & (y == 0)))
    fp = int(np.sum((p == 1) & (y == 0)))
    fn = int(np.sum((p == 0) & (y == 1)))
    return tp, tn, fp, fn


@dataclass
class FoldResult:
    tp: int
    tn: int
    fp: int
    fn: int
    train_acc: float
    selected_epoch: int
    seconds: float = 0.0
    val_losses: list = field(default_factory=list, repr=False)

    @property
    def size(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def metrics(self) -> Metrics:
        return metrics(self.tp, self.tn, self.fp, self.fn)


# -- protocol ----------------------------------------------------------------

def select_epoch(val_losses) -> int:
    """1-based epoch of the minimum validation loss; ties go to the earliest."""
    return int(np.argmin(np.asarray(val_losses))) + 1


def _evaluate(network, data: np.ndarray, labels: np.ndarray, batch: int):
    """Mean cross-entropy and argmax predictions in eval mode."""
    total, preds = 0.0, []
    with T.no_grad():
        for s in range(0, len(labels), batch):
            logits = network.logits(data[s : s + batch])
            loss = T.softmax_cross_entropy(logits, labels[s : s + batch])
            total += float(loss.data) * len(labels[s : s + batch])
            preds.append(np.argmax(logits.data, axis=1))
    return total / len(labels), np.concatenate(preds)


def _train_epoch(network, data, labels, opt, cfg, shuffle_rng, dropout_rng, where):
    params = network.parameters()
    order = shuffle_rng.permutation(len(labels))
    for s in range(0, len(order), cfg.batch_size):
        idx = order[s : s + cfg.batch_size]
        network.zero_grad()
        try:
            loss = T.softmax_cross_entropy(network.logits(data[idx], True, dropout_rng), labels[idx])
        except NonFiniteError as exc:
            raise TrainingDiverged(f"{where}: {exc}") from exc
        if not np.isfinite(loss.data):
            raise TrainingDiverged(f"{where}: non-finite loss")
        T.backward(loss)
        adam_step(params, [p.grad for p in params], opt, cfg)


def train_protocol(
    network,
    fold_data: FoldData,
    cfg: TrainConfig,
    shuffle_rng: np.random.Generator | None = None,
    dropout_rng: np.random.Generator | None = None,
    *,
    on_epoch_end: Callable | None = None,
    on_refit_start: Callable | None = None,
):
    """Select by validation loss, refit on train+val, evaluate once on test.

    Phase 1 trains up to ``select_epochs`` epochs on the training split and
    keeps a snapshot at the epoch of lowest validation loss.  Phase 2 restores
    that snapshot and trains ``refit_epochs`` more on train+val with a fresh
    optimizer.  The test split is read only by the final evaluation.

    Returns ``(network, FoldResult)``.
    """
    start = time.perf_counter()
    shuffle_rng = shuffle_rng if shuffle_rng is not None else np.random.default_rng(cfg.seed)
    dropout_rng = dropout_rng if dropout_rng is not None else np.random.default_rng(cfg.seed + 1)
    dtype = network.dtype

    x_tr = np.asarray(fold_data.train.data, dtype=dtype)
    y_tr = fold_data.train.labels
    x_va = np.asarray(fold_data.val.data, dtype=dtype)
    y_va = fold_data.val.labels

    opt = AdamState.zeros_like(network.parameters())
    best_loss, best_epoch, snapshot = np.inf, 0, None
    val_losses = []
    for ep in range(1, cfg.select_epochs + 1):
        _train_epoch(network, x_tr, y_tr, opt, cfg, shuffle_rng, dropout_rng, f"selection epoch {ep}")
        vloss, _ = _evaluate(network, x_va, y_va, cfg.eval_batch_size)
        if not np.isfinite(vloss):
            raise TrainingDiverged(f"selection epoch {ep}: non-finite validation loss")
        val_losses.append(vloss)
        if vloss < best_loss:
            best_loss, best_epoch, snapshot = vloss, ep, network.state_dict()
        if on_epoch_end is not None:
            on_epoch_end(ep, vloss, network)

    network.load_state_dict(snapshot)
    if on_refit_start is not None:
        on_refit_start(network)
    x_all = np.concatenate([x_tr, x_va])
    y_all = np.concatenate([y_tr, y_va])
    opt = AdamState.zeros_like(network.parameters())
    for ep in range(1, cfg.refit_epochs + 1):
        _train_epoch(network, x_all, y_all, opt, cfg, shuffle_rng, dropout_rng, f"refit epoch {ep}")

    _, train_pred = _evaluate(network, x_all, y_all, cfg.eval_batch_size)
    train_acc = 100.0 * float(np.mean(train_pred == y_all))

    test = fold_data.test
    x_te = np.asarray(test.data, dtype=dtype)
    _, test_pred = _evaluate(network, x_te, test.labels, cfg.eval_batch_size)
    tp, tn, fp, fn = confusion(test.labels, test_pred)
    return network, FoldResult(
        tp, tn, fp, fn,
        train_acc=train_acc,
        selected_epoch=best_epoch,
        seconds=time.perf_counter() - start,
        val_losses=val_losses,
    )
