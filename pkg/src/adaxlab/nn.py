"""Tiny fully-connected classifier with hand-written backpropagation.

Provides deterministic synthetic classification data (Gaussian blobs), a
one-hidden-layer tanh MLP with softmax cross-entropy loss and analytic
gradients, and a mini-batch training loop that drives any optimizer from
:mod:`adaxlab.optim` while recording per-iteration loss and second-moment
traces.

Randomness is organized as named, splittable streams derived from a single
user seed so the individual sources are independent and reproducible:

* stream ``[seed, 0]`` -- dataset generation (class means, noise, shuffle),
* stream ``[seed, 1]`` -- mini-batch shuffling during training,
* stream ``[seed, 2]`` -- parameter initialization.

Training is unconstrained: updates are applied without any projection.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .optim import (
    NumericsError,
    OptimizerConfig,
    OptimizerState,
    apply_step,
)
from .oracle import avg_second_moment

__all__ = [
    "Dataset",
    "MlpClassifier",
    "MlpParams",
    "TrainReport",
    "forward_backward",
    "init_params",
    "make_blobs",
    "train",
]


@dataclass
class Dataset:
    """Feature matrix with integer labels and a positional train/test split.

    Rows ``0..n_train-1`` are the training set and the remainder the test
    set; ``train_idx`` / ``test_idx`` expose this as index arrays.  Labels
    are integers in ``0..k-1``.
    """

    features: np.ndarray
    labels: np.ndarray
    k: int
    n_train: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {self.features.shape}")
        n = self.features.shape[0]
        if self.labels.shape != (n,):
            raise ValueError(
                f"labels shape {self.labels.shape} does not match {n} rows"
            )
        if self.k < 2:
            raise ValueError(f"k must be >= 2, got {self.k}")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.k):
            raise ValueError(f"labels must lie in [0, {self.k})")
        if not 0 <= self.n_train <= n:
            raise ValueError(f"n_train={self.n_train} out of range for {n} rows")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def train_idx(self) -> np.ndarray:
        return np.arange(self.n_train, dtype=np.int64)

    @property
    def test_idx(self) -> np.ndarray:
        return np.arange(self.n_train, self.n, dtype=np.int64)

    def train_xy(self) -> tuple[np.ndarray, np.ndarray]:
        return self.features[: self.n_train], self.labels[: self.n_train]

    def test_xy(self) -> tuple[np.ndarray, np.ndarray]:
        return self.features[self.n_train :], self.labels[self.n_train :]

    def to_csv(self, path) -> None:
        """Write ``f0..f{d-1},label`` rows in storage order (the row order
        carries the train/test split: first ``n_train`` rows train)."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"f{j}" for j in range(self.d)] + ["label"])
            for i in range(self.n):
                writer.writerow(
                    [repr(float(v)) for v in self.features[i]]
                    + [int(self.labels[i])]
                )

    @classmethod
    def from_csv(cls, path, n_train: Optional[int] = None) -> "Dataset":
        """Read a dataset written by :meth:`to_csv`.  ``n_train`` defaults
        to 80% of the rows (the same convention the generator uses)."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if not header or header[-1] != "label" or header[0] != "f0":
                raise ValueError(f"unrecognized dataset header: {header}")
            d = len(header) - 1
            feats, labels = [], []
            for row in reader:
                if len(row) != d + 1:
                    raise ValueError(f"row length {len(row)} != {d + 1}")
                feats.append([float(v) for v in row[:d]])
                labels.append(int(row[d]))
        features = np.asarray(feats, dtype=np.float64)
        labels_arr = np.asarray(labels, dtype=np.int64)
        k = int(labels_arr.max()) + 1 if labels_arr.size else 2
        if n_train is None:
            n_train = int(round(0.8 * len(labels)))
        return cls(features=features, labels=labels_arr, k=max(k, 2),
                   n_train=n_train)


def make_blobs(
    seed: int, n: int = 3000, d: int = 20, k: int = 3, spread: float = 1.0
) -> Dataset:
    """Deterministic balanced Gaussian-blob classification data.

    Draws ``k`` class means (standard normal scaled by 2) and ``n`` points
    split as evenly as possible across classes with isotropic noise of
    standard deviation ``spread``, shuffles the rows, and marks the first
    80% as training data.  The same seed always yields the bitwise-same
    dataset.
    """
    if not n >= k:
        raise ValueError(f"need n >= k, got n={n}, k={k}")
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if spread < 0:
        raise ValueError(f"spread must be >= 0, got {spread}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    means = 2.0 * rng.standard_normal((k, d))
    counts = [n // k + (1 if c < n % k else 0) for c in range(k)]
    features = np.empty((n, d), dtype=np.float64)
    labels = np.empty(n, dtype=np.int64)
    row = 0
    for c, cnt in enumerate(counts):
        features[row : row + cnt] = means[c] + spread * rng.standard_normal((cnt, d))
        labels[row : row + cnt] = c
        row += cnt
    order = rng.permutation(n)
    return Dataset(
        features=features[order],
        labels=labels[order],
        k=k,
        n_train=int(round(0.8 * n)),
    )


@dataclass
class MlpParams:
    """Flat parameter vector of a one-hidden-layer MLP.

    Layout (contiguous slices of ``flat``): ``W1`` of shape (d, h), then
    ``b1`` (h,), then ``W2`` of shape (h, k), then ``b2`` (k,).  The view
    properties share memory with ``flat``.
    """

    d: int
    h: int
    k: int
    flat: np.ndarray

    def __post_init__(self):
        self.flat = np.asarray(self.flat, dtype=np.float64)
        expected = self.d * self.h + self.h + self.h * self.k + self.k
        if self.flat.shape != (expected,):
            raise ValueError(
                f"flat has shape {self.flat.shape}, expected ({expected},)"
            )

    @property
    def w1(self) -> np.ndarray:
        return self.flat[: self.d * self.h].reshape(self.d, self.h)

    @property
    def b1(self) -> np.ndarray:
        o = self.d * self.h
        return self.flat[o : o + self.h]

    @property
    def w2(self) -> np.ndarray:
        o = self.d * self.h + self.h
        return self.flat[o : o + self.h * self.k].reshape(self.h, self.k)

    @property
    def b2(self) -> np.ndarray:
        return self.flat[-self.k :]


def init_params(d: int, h: int, k: int, rng: np.random.Generator) -> MlpParams:
    """Scaled-normal weight init (1/sqrt(fan-in)), zero biases."""
    w1 = rng.standard_normal((d, h)) / math.sqrt(d)
    w2 = rng.standard_normal((h, k)) / math.sqrt(h)
    flat = np.concatenate(
        [w1.ravel(), np.zeros(h), w2.ravel(), np.zeros(k)]
    )
    return MlpParams(d=d, h=h, k=k, flat=flat)


def _forward_logits(params: MlpParams, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # overflow here surfaces as a non-finite loss, which callers turn into
    # NumericsError; the warning would only duplicate that signal
    with np.errstate(over="ignore", invalid="ignore"):
        hidden = np.tanh(X @ params.w1 + params.b1)
        return hidden, hidden @ params.w2 + params.b2


def forward_backward(
    params: MlpParams, X: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy loss and its analytic gradient.

    ``X`` is a (B, d) batch, ``y`` integer labels (B,).  Returns the loss
    and a flat gradient in the same layout as ``params.flat``.  Raises
    :class:`~adaxlab.optim.NumericsError` if the loss is not finite.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError(f"batch must be a nonempty 2-D array, got shape {X.shape}")
    if y.shape != (X.shape[0],):
        raise ValueError(f"labels shape {y.shape} does not match batch {X.shape}")
    B = X.shape[0]
    hidden, logits = _forward_logits(params, X)
    with np.errstate(over="ignore", invalid="ignore"):
        m = logits.max(axis=1, keepdims=True)
        lse = m + np.log(np.exp(logits - m).sum(axis=1, keepdims=True))
        loss = float(np.mean(lse[:, 0] - logits[np.arange(B), y]))
    if not math.isfinite(loss):
        raise NumericsError(f"non-finite loss {loss}")
    probs = np.exp(logits - lse)
    dlogits = probs
    dlogits[np.arange(B), y] -= 1.0
    dlogits /= B
    g_w2 = hidden.T @ dlogits
    g_b2 = dlogits.sum(axis=0)
    dhidden = (dlogits @ params.w2.T) * (1.0 - hidden * hidden)
    g_w1 = X.T @ dhidden
    g_b1 = dhidden.sum(axis=0)
    grads = np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2])
    return loss, grads


def _evaluate(params: MlpParams, X: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Full-set (loss, accuracy); (nan, nan) on an empty set."""
    if X.shape[0] == 0:
        return float("nan"), float("nan")
    _, logits = _forward_logits(params, X)
    m = logits.max(axis=1, keepdims=True)
    lse = m + np.log(np.exp(logits - m).sum(axis=1, keepdims=True))
    loss = float(np.mean(lse[:, 0] - logits[np.arange(X.shape[0]), y]))
    acc = float(np.mean(logits.argmax(axis=1) == y))
    return loss, acc


@dataclass
class TrainReport:
    """Everything a training run produced.

    Epoch-indexed arrays have length ``epochs_completed + 1``; index 0 is
    the evaluation of the freshly initialized network.  Iteration-indexed
    traces (``batch_loss``, ``batch_epoch``, ``vhat_avg``) have one entry
    per optimizer step actually executed.  ``diverged_at`` is the 1-based
    iteration at which a numeric failure stopped training early (None for
    a clean run); the report then covers everything up to that point.
    ``checksum`` is the SHA-256 hex digest of the final parameter bytes.
    """

    config: OptimizerConfig
    seed: int
    epochs: int
    batch_size: int
    hidden: int
    epoch_train_loss: np.ndarray = field(default_factory=lambda: np.empty(0))
    epoch_train_acc: np.ndarray = field(default_factory=lambda: np.empty(0))
    epoch_test_loss: np.ndarray = field(default_factory=lambda: np.empty(0))
    epoch_test_acc: np.ndarray = field(default_factory=lambda: np.empty(0))
    batch_loss: np.ndarray = field(default_factory=lambda: np.empty(0))
    batch_epoch: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    vhat_avg: np.ndarray = field(default_factory=lambda: np.empty(0))
    params_final: Optional[MlpParams] = None
    checksum: str = ""
    diverged_at: Optional[int] = None

    @property
    def iterations(self) -> int:
        return len(self.batch_loss)

    @property
    def final_test_loss(self) -> float:
        return float(self.epoch_test_loss[-1])

    @property
    def final_test_acc(self) -> float:
        return float(self.epoch_test_acc[-1])


def train(
    config: OptimizerConfig,
    dataset: Dataset,
    epochs: int,
    batch_size: int,
    seed: int,
    hidden: int = 32,
) -> TrainReport:
    """Mini-batch training of the tanh MLP with the given optimizer.

    Shuffles the training set each epoch (stream ``[seed, 1]``), applies
    :func:`~adaxlab.optim.apply_step` without projection, records the
    batch loss and the mean corrected second moment every iteration, and
    evaluates full train/test loss and accuracy before training and after
    every epoch.  A numeric failure stops the run and returns the partial
    report with ``diverged_at`` set.  Deterministic per seed.
    """
    if epochs < 0:
        raise ValueError(f"epochs must be >= 0, got {epochs}")
    X_train, y_train = dataset.train_xy()
    X_test, y_test = dataset.test_xy()
    if not 1 <= batch_size <= X_train.shape[0]:
        raise ValueError(
            f"batch_size must be in [1, {X_train.shape[0]}], got {batch_size}"
        )
    rng_init = np.random.default_rng(np.random.SeedSequence([int(seed), 2]))
    rng_shuffle = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
    params = init_params(dataset.d, hidden, dataset.k, rng_init)
    state = OptimizerState(params.flat.shape[0])

    report = TrainReport(
        config=config, seed=seed, epochs=epochs, batch_size=batch_size,
        hidden=hidden,
    )
    ep_tr_loss, ep_tr_acc, ep_te_loss, ep_te_acc = [], [], [], []
    batch_losses: list[float] = []
    batch_epochs: list[int] = []
    vhat_trace: list[float] = []

    tr = _evaluate(params, X_train, y_train)
    te = _evaluate(params, X_test, y_test)
    ep_tr_loss.append(tr[0]); ep_tr_acc.append(tr[1])
    ep_te_loss.append(te[0]); ep_te_acc.append(te[1])

    iteration = 0
    x = params.flat
    try:
        for epoch in range(1, epochs + 1):
            order = rng_shuffle.permutation(X_train.shape[0])
            for start in range(0, X_train.shape[0], batch_size):
                idx = order[start : start + batch_size]
                iteration += 1
                loss, grads = forward_backward(params, X_train[idx], y_train[idx])
                x, step, state = apply_step(config, state, x, grads)
                params = MlpParams(d=params.d, h=params.h, k=params.k, flat=x)
                batch_losses.append(loss)
                batch_epochs.append(epoch)
                vhat_trace.append(avg_second_moment(step.vhat))
            tr = _evaluate(params, X_train, y_train)
            te = _evaluate(params, X_test, y_test)
            ep_tr_loss.append(tr[0]); ep_tr_acc.append(tr[1])
            ep_te_loss.append(te[0]); ep_te_acc.append(te[1])
    except NumericsError:
        report.diverged_at = iteration
        # drop the failed iteration's partial records, if any
        del batch_losses[iteration - 1 :]
        del batch_epochs[iteration - 1 :]
        del vhat_trace[iteration - 1 :]

    report.epoch_train_loss = np.asarray(ep_tr_loss)
    report.epoch_train_acc = np.asarray(ep_tr_acc)
    report.epoch_test_loss = np.asarray(ep_te_loss)
    report.epoch_test_acc = np.asarray(ep_te_acc)
    report.batch_loss = np.asarray(batch_losses)
    report.batch_epoch = np.asarray(batch_epochs, dtype=np.int64)
    report.vhat_avg = np.asarray(vhat_trace)
    report.params_final = params
    report.checksum = hashlib.sha256(
        np.ascontiguousarray(params.flat).tobytes()
    ).hexdigest()
    return report


class MlpClassifier(ClassifierMixin, BaseEstimator):
    """Scikit-learn estimator front end for the MLP + optimizer stack.

    Follows the estimator protocol: the constructor only stores
    hyperparameters, :meth:`fit` trains and sets fitted attributes with a
    trailing underscore, and :meth:`predict` maps features back to the
    original label values.  ``get_params`` / ``set_params`` / ``score``
    (mean accuracy) and ``sklearn.base.clone`` compatibility come from the
    scikit-learn base classes.
    """

    def __init__(
        self,
        kind: str = "adax",
        hidden: int = 32,
        epochs: int = 10,
        batch_size: int = 128,
        alpha: Optional[float] = None,
        beta1: Optional[float] = None,
        beta2: Optional[float] = None,
        epsilon: Optional[float] = None,
        weight_decay: float = 0.0,
        decay_mode: str = "none",
        seed: int = 0,
    ):
        self.kind = kind
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.alpha = alpha
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.weight_decay = weight_decay
        self.decay_mode = decay_mode
        self.seed = seed

    def fit(self, X, y) -> "MlpClassifier":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        if X.ndim != 2:
            raise ValueError(f"X must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError(f"y shape {y.shape} does not match X rows {X.shape[0]}")
        self.classes_, y_enc = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least 2 classes")
        dataset = Dataset(
            features=X, labels=y_enc.astype(np.int64),
            k=len(self.classes_), n_train=X.shape[0],
        )
        config = OptimizerConfig(
            kind=self.kind, alpha=self.alpha, beta1=self.beta1,
            beta2=self.beta2, epsilon=self.epsilon,
            weight_decay=self.weight_decay, decay_mode=self.decay_mode,
        )
        batch = min(self.batch_size, X.shape[0])
        self.report_ = train(
            config, dataset, epochs=self.epochs, batch_size=batch,
            seed=self.seed, hidden=self.hidden,
        )
        self.params_ = self.report_.params_final
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X) -> np.ndarray:
        if not hasattr(self, "params_"):
            raise ValueError("MlpClassifier is not fitted yet; call fit first")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X must have shape (n, {self.n_features_in_}), got {X.shape}"
            )
        _, logits = _forward_logits(self.params_, X)
        return logits

    def predict_proba(self, X) -> np.ndarray:
        logits = self.decision_function(X)
        m = logits.max(axis=1, keepdims=True)
        e = np.exp(logits - m)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        return self.classes_[self.decision_function(X).argmax(axis=1)]
