"""Mini-batch training with early stopping, and single-trace key prediction."""

from __future__ import annotations

import logging
import time

import numpy as np

from ..core import Trace
from ..dataset import SnippetDataset, normalize, snippetize
from .model import N_CLASSES, Network, NumericFailure
from .optim import AdamState, TrainConfig, adam_step

log = logging.getLogger(__name__)

NO_PREDICTION = -1


class TrainingAborted(RuntimeError):
    def __init__(self, cause: Exception, history: list):
        super().__init__(f"training aborted: {cause}")
        self.cause = cause
        self.history = history


def accuracy(net: Network, ds: SnippetDataset, batch_size: int = 1024) -> float:
    if len(ds) == 0:
        return float("nan")
    pred = net.predict_proba(ds.x, batch_size).argmax(axis=1)
    return float(np.mean(pred == ds.labels))


def train(net: Network, train_set: SnippetDataset, val_set: SnippetDataset, config: TrainConfig):
    """Fit ``net`` in place; returns ``(net, history)``.

    ``net`` ends up holding the parameters of the epoch with the best
    validation accuracy. Noise/dropout draws depend only on ``net.rng_seed``
    and the batch order only on ``config.shuffle_seed``.
    """
    if not (train_set.normalized and val_set.normalized):
        raise ValueError("datasets must be normalized before training")
    if (train_set.norm_mean, train_set.norm_std) != (val_set.norm_mean, val_set.norm_std):
        raise ValueError("train and validation sets use different normalization statistics")
    net.norm_mean, net.norm_std = train_set.norm_mean, train_set.norm_std

    layer_rng = np.random.default_rng([net.rng_seed, 1])
    order_rng = np.random.default_rng(config.shuffle_seed)
    adam = AdamState()
    n = len(train_set)
    history: list[dict] = []
    best_acc, best_tensors, since_best = -1.0, None, 0
    step = 0
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = order_rng.permutation(n) if config.shuffle else np.arange(n)
        loss_sum = 0.0
        try:
            for start in range(0, n, config.batch_size):
                idx = order[start : start + config.batch_size]
                loss, grads = net.loss_and_gradients(train_set.x[idx], train_set.labels[idx], rng=layer_rng)
                step += 1
                new = adam_step(net.named_params(), grads, step, config, adam)
                net.update_params(new)
                loss_sum += loss * len(idx)
        except NumericFailure as exc:
            raise TrainingAborted(exc, history) from exc
        val_acc = accuracy(net, val_set)
        history.append(
            {
                "epoch": epoch + 1,
                "train_loss": loss_sum / n,
                "val_accuracy": val_acc,
                "seconds": time.perf_counter() - t0,
            }
        )
        log.info("epoch %d loss %.4f val_acc %.4f", epoch + 1, loss_sum / n, val_acc)
        if val_acc > best_acc:
            best_acc, since_best = val_acc, 0
            best_tensors = {k: v.copy() for k, v in net.named_tensors().items()}
        else:
            since_best += 1
            if since_best >= config.patience:
                break
    if best_tensors is not None:
        net.update_params(best_tensors)
    return net, history


def predict_key(net: Network, test_trace: Trace, window_symbols: int = 5):
    """Predict every symbol of one aligned trace.

    Returns ``(codes, probs)`` of length ``n_symbols``; edge symbols without
    full context carry code ``NO_PREDICTION`` and a row of NaNs.
    """
    if net.norm_mean is None:
        raise ValueError("network carries no normalization statistics; train or load it first")
    ds = normalize(snippetize(test_trace, window_symbols, role="test"), (net.norm_mean, net.norm_std))
    n_seq = test_trace.n_symbols
    if test_trace.key is not None:
        n_seq = min(n_seq, len(test_trace.key))
    codes = np.full(n_seq, NO_PREDICTION, dtype=np.int8)
    probs = np.full((n_seq, N_CLASSES), np.nan)
    p = net.predict_proba(ds.x)
    codes[ds.center_index] = p.argmax(axis=1)
    probs[ds.center_index] = p
    return codes, probs
