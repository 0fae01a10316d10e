"""Loss, Adam optimizer, training loop, and evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .feature_io import stack_features
from .model import ModelParams, forward_batch, init_params
from .tensor import (
    ConfigError,
    RngStream,
    Tape,
    Tensor,
    affine,
    backward,
    clip,
    log,
    mul,
    reduce_mean,
    residual_add,
)

__all__ = [
    "TrainConfig",
    "AdamState",
    "MetricsReport",
    "EpochStats",
    "bce_loss",
    "adam_step",
    "train",
    "evaluate",
    "predict_probabilities",
    "history_to_text",
]

PROB_CLAMP = 1e-7
EVAL_CHUNK = 256


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 256
    learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    dropout: float = 0.3
    seed: int = 0
    shuffle: bool = True

    def validate(self) -> "TrainConfig":
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            # zero is allowed: it freezes the parameters, which has its
            # uses when smoke-testing a pipeline
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        return self


class AdamState:
    """First/second moment accumulators plus the shared timestep."""

    def __init__(self, params: ModelParams):
        self.m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.t = 0
        # scratch reused across steps so the update never allocates
        self._buf = {name: np.empty_like(t.data) for name, t in params.items()}


def bce_loss(p: Tensor, y) -> Tensor:
    """Mean binary cross-entropy with probabilities clamped away from 0/1."""
    if not isinstance(y, Tensor):
        y = Tensor(np.asarray(y, dtype=p.data.dtype))
    if y.shape != p.shape:
        raise ConfigError(f"bce_loss: probability shape {p.shape} vs label shape {y.shape}")
    p_c = clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    pos = mul(y, log(p_c))
    neg = mul(Tensor(1.0 - y.data), log(affine(p_c, -1.0, 1.0)))
    return affine(reduce_mean(residual_add(pos, neg)), -1.0)


def adam_step(params: ModelParams, state: AdamState, cfg: TrainConfig) -> None:
    """One update: theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)."""
    for name, t in params.items():
        if t.grad is None:
            raise ConfigError(f"adam_step: no gradient for parameter {name}")
    state.t += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, t in params.items():
        g = t.grad
        m, v, buf = state.m[name], state.v[name], state._buf[name]
        m *= b1
        np.multiply(g, 1.0 - b1, out=buf)
        m += buf
        v *= b2
        np.multiply(g, g, out=buf)
        buf *= 1.0 - b2
        v += buf
        np.divide(v, c2, out=buf)
        np.sqrt(buf, out=buf)
        buf += cfg.adam_eps
        np.divide(m, buf, out=buf)
        buf *= cfg.learning_rate / c1
        t.data -= buf


@dataclass
class EpochStats:
    epoch: int
    loss: float
    accuracy: float


def history_to_text(history) -> str:
    """One "epoch,loss,accuracy" line per epoch, full float precision."""
    return "\n".join(f"{h.epoch},{h.loss!r},{h.accuracy!r}" for h in history) + "\n"


def predict_probabilities(params: ModelParams, tokens, image_global, regions,
                          chunk: int = EVAL_CHUNK) -> np.ndarray:
    """Eval-mode probabilities for stacked feature arrays, in chunks."""
    n = tokens.shape[0]
    out = np.empty(n, dtype=np.float32)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        res = forward_batch(
            Tensor(tokens[lo:hi]),
            Tensor(image_global[lo:hi]),
            Tensor(regions[lo:hi]),
            params,
            mode="eval",
        )
        out[lo:hi] = res["probs"].data
    return out


def train(train_set, cfg: TrainConfig, params: ModelParams | None = None):
    """Mini-batch training; returns (params, per-epoch history).

    Each epoch: seeded shuffle, batches of cfg.batch_size (final partial
    batch kept), forward in train mode, mean BCE, backward, Adam step. The
    recorded loss is the sample-weighted mean of the batch losses. The
    recorded accuracy is the running one: the fraction of training samples
    whose train-mode prediction during the epoch was correct. The final
    epoch instead runs an eval-mode pass over the training set with the
    finished parameters, so the last entry matches a later evaluation of
    the saved model; doing that every epoch would add a full forward pass
    per epoch for a number nobody consumes.
    """
    cfg.validate()
    records = list(train_set)
    if not records:
        raise ConfigError("train: dataset is empty")
    tokens, image_global, regions, labels, _ = stack_features(records)
    n = len(records)

    if params is None:
        params = init_params(cfg.seed)
    state = AdamState(params)
    root = RngStream(cfg.seed)
    shuffle_stream = root.derive("shuffle")

    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_stream.permutation(n) if cfg.shuffle else np.arange(n)
        epoch_loss = 0.0
        n_correct = 0
        for b, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = order[lo : lo + cfg.batch_size]
            batch_rng = root.derive(f"drop/e{epoch}/b{b}")
            params.zero_grads()
            with Tape():
                out = forward_batch(
                    Tensor(tokens[idx]),
                    Tensor(image_global[idx]),
                    Tensor(regions[idx]),
                    params,
                    mode="train",
                    rng=batch_rng,
                    p_drop=cfg.dropout,
                )
                loss = bce_loss(out["probs"], labels[idx].astype(np.float32))
                backward(loss)
            epoch_loss += loss.item() * len(idx)
            n_correct += int(np.sum((out["probs"].data >= 0.5).astype(np.int64) == labels[idx]))
            adam_step(params, state, cfg)
        if epoch == cfg.epochs:
            probs = predict_probabilities(params, tokens, image_global, regions)
            accuracy = float(np.mean((probs >= 0.5).astype(np.int64) == labels))
        else:
            accuracy = n_correct / n
        history.append(EpochStats(epoch, epoch_loss / n, accuracy))
    return params, history


@dataclass
class MetricsReport:
    """Accuracy plus per-class precision/recall/F1 with fake as class 1."""

    accuracy: float
    fake_precision: float
    fake_recall: float
    fake_f1: float
    real_precision: float
    real_recall: float
    real_f1: float
    tp: int
    fp: int
    tn: int
    fn: int

    @staticmethod
    def _prf(tp: int, fp: int, fn: int):
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        return precision, recall, f1

    @classmethod
    def from_counts(cls, tp: int, fp: int, tn: int, fn: int) -> "MetricsReport":
        total = tp + fp + tn + fn
        if total == 0:
            raise ConfigError("metrics need at least one sample")
        fake_p, fake_r, fake_f1 = cls._prf(tp, fp, fn)
        real_p, real_r, real_f1 = cls._prf(tn, fn, fp)  # real as positive class
        return cls(
            accuracy=(tp + tn) / total,
            fake_precision=fake_p,
            fake_recall=fake_r,
            fake_f1=fake_f1,
            real_precision=real_p,
            real_recall=real_r,
            real_f1=real_f1,
            tp=tp,
            fp=fp,
            tn=tn,
            fn=fn,
        )

    def to_text(self) -> str:
        fields = [
            ("accuracy", self.accuracy),
            ("fake_precision", self.fake_precision),
            ("fake_recall", self.fake_recall),
            ("fake_f1", self.fake_f1),
            ("real_precision", self.real_precision),
            ("real_recall", self.real_recall),
            ("real_f1", self.real_f1),
        ]
        return "\n".join(f"{k}={v:.6f}" for k, v in fields) + "\n"


def evaluate(params: ModelParams, dataset, threshold: float = 0.5) -> MetricsReport:
    """Eval-mode pass; predicts fake when p >= threshold."""
    records = list(dataset)
    if not records:
        raise ConfigError("evaluate: dataset is empty")
    tokens, image_global, regions, labels, _ = stack_features(records)
    probs = predict_probabilities(params, tokens, image_global, regions)
    pred = (probs >= threshold).astype(np.int64)
    tp = int(np.sum((pred == 1) & (labels == 1)))
    fp = int(np.sum((pred == 1) & (labels == 0)))
    tn = int(np.sum((pred == 0) & (labels == 0)))
    fn = int(np.sum((pred == 0) & (labels == 1)))
    return MetricsReport.from_counts(tp, fp, tn, fn)
