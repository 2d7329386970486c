"""Dual-LSTM emotion classifier over the fused K-step sequences.

One LSTM per view; final hidden states are concatenated and passed through a
two-layer head with softmax over the 7 emotion classes. Forward and backward
passes are written out by hand so the whole model is finite-difference
checkable; the backward pass is verified in the test suite at toy size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import EMOTIONS, NUM_EMOTIONS
from .dccae import FusedRepresentation
from .errors import EmptyInput, InvalidInput
from .numkit import Adam, SeededRng
from . import serialize as ser

MAGIC = b"DCVDN-CLF1"


@dataclass
class LstmParams:
    """Stacked gate parameters, gate order (input, forget, output, candidate);
    the forget gate gets `forget_bias` added to its pre-activation."""

    w: np.ndarray              # (4h, d)
    r: np.ndarray              # (4h, h)
    b: np.ndarray              # (4h,)
    forget_bias: float = 0.1

    @property
    def hidden(self) -> int:
        return self.r.shape[1]

    @classmethod
    def create(cls, input_dim: int, hidden: int, rng: SeededRng,
               forget_bias: float = 0.1) -> "LstmParams":
        lim_w = np.sqrt(6.0 / (input_dim + hidden))
        lim_r = np.sqrt(6.0 / (2 * hidden))
        return cls(w=rng.uniform(-lim_w, lim_w, (4 * hidden, input_dim)),
                   r=rng.uniform(-lim_r, lim_r, (4 * hidden, hidden)),
                   b=np.zeros(4 * hidden), forget_bias=forget_bias)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def lstm_forward_batch(params: LstmParams, x: np.ndarray):
    """x: (B, K, d); returns (final hidden state (B, h), cache for backprop)."""
    b_size, steps, _ = x.shape
    h_dim = params.hidden
    h = np.zeros((b_size, h_dim))
    c = np.zeros((b_size, h_dim))
    cache = []
    for t in range(steps):
        xt = x[:, t, :]
        z = xt @ params.w.T + h @ params.r.T + params.b
        z[:, h_dim:2 * h_dim] += params.forget_bias
        i = _sigmoid(z[:, :h_dim])
        f = _sigmoid(z[:, h_dim:2 * h_dim])
        o = _sigmoid(z[:, 2 * h_dim:3 * h_dim])
        g = np.tanh(z[:, 3 * h_dim:])
        c_new = f * c + i * g
        tanh_c = np.tanh(c_new)
        h_new = o * tanh_c
        cache.append((xt, h, c, i, f, o, g, tanh_c))
        h, c = h_new, c_new
    return h, cache


def lstm_backward_batch(params: LstmParams, cache, dh: np.ndarray):
    """Backprop through time from the gradient of the final hidden state.
    Returns ([dW, dR, db], dx) with dx shaped like the input batch."""
    h_dim = params.hidden
    dw = np.zeros_like(params.w)
    dr = np.zeros_like(params.r)
    db = np.zeros_like(params.b)
    dc = np.zeros_like(dh)
    dx = np.zeros((dh.shape[0], len(cache), params.w.shape[1]))
    for t in range(len(cache) - 1, -1, -1):
        xt, h_prev, c_prev, i, f, o, g, tanh_c = cache[t]
        do = dh * tanh_c
        dct = dc + dh * o * (1.0 - tanh_c * tanh_c)
        di = dct * g
        df = dct * c_prev
        dg = dct * i
        dc = dct * f
        dz = np.concatenate([di * i * (1.0 - i),
                             df * f * (1.0 - f),
                             do * o * (1.0 - o),
                             dg * (1.0 - g * g)], axis=1)
        dw += dz.T @ xt
        dr += dz.T @ h_prev
        db += dz.sum(axis=0)
        dx[:, t, :] = dz @ params.w
        dh = dz @ params.r
    return [dw, dr, db], dx


def lstm_forward(params: LstmParams, sequence: np.ndarray) -> np.ndarray:
    """Final hidden state for a single (K, d) sequence, zero initial state."""
    sequence = np.asarray(sequence, dtype=np.float64)
    if sequence.ndim != 2 or sequence.shape[0] < 1:
        raise InvalidInput("lstm_forward expects a non-empty (K, d) sequence")
    h, _ = lstm_forward_batch(params, sequence[None, :, :])
    return h[0]


@dataclass
class Prediction:
    video_id: str
    probs: np.ndarray
    label: int

    @property
    def label_name(self) -> str:
        return EMOTIONS[self.label]


class ClassifierModel:
    def __init__(self, lstm_v: LstmParams, lstm_t: LstmParams,
                 fc1_w: np.ndarray, fc1_b: np.ndarray,
                 fc2_w: np.ndarray, fc2_b: np.ndarray):
        self.lstm_v = lstm_v
        self.lstm_t = lstm_t
        self.fc1_w, self.fc1_b = fc1_w, fc1_b
        self.fc2_w, self.fc2_b = fc2_w, fc2_b

    @classmethod
    def create(cls, dim_v: int, dim_t: int, rng: SeededRng, hidden: int = 64,
               fc_hidden: int | None = None, forget_bias: float = 0.1):
        """fc_hidden defaults to 4096 at the reference hidden size 2048 and
        scales as 2*(2*hidden) otherwise."""
        if fc_hidden is None:
            fc_hidden = 4096 if hidden == 2048 else 2 * (2 * hidden)
        lstm_v = LstmParams.create(dim_v, hidden, rng, forget_bias)
        lstm_t = LstmParams.create(dim_t, hidden, rng, forget_bias)
        lim1 = np.sqrt(6.0 / (2 * hidden + fc_hidden))
        lim2 = np.sqrt(6.0 / (fc_hidden + NUM_EMOTIONS))
        return cls(lstm_v, lstm_t,
                   fc1_w=rng.uniform(-lim1, lim1, (fc_hidden, 2 * hidden)),
                   fc1_b=np.zeros(fc_hidden),
                   fc2_w=rng.uniform(-lim2, lim2, (NUM_EMOTIONS, fc_hidden)),
                   fc2_b=np.zeros(NUM_EMOTIONS))

    def params(self) -> list[np.ndarray]:
        return [self.lstm_v.w, self.lstm_v.r, self.lstm_v.b,
                self.lstm_t.w, self.lstm_t.r, self.lstm_t.b,
                self.fc1_w, self.fc1_b, self.fc2_w, self.fc2_b]

    def clone_params(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params()]

    def load_params(self, values: list[np.ndarray]) -> None:
        for p, v in zip(self.params(), values):
            p[...] = v


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward_batch(model: ClassifierModel, xv: np.ndarray, xt: np.ndarray):
    hv, cache_v = lstm_forward_batch(model.lstm_v, xv)
    ht, cache_t = lstm_forward_batch(model.lstm_t, xt)
    ha = np.concatenate([hv, ht], axis=1)
    z1 = ha @ model.fc1_w.T + model.fc1_b
    a1 = np.tanh(z1)
    z2 = a1 @ model.fc2_w.T + model.fc2_b
    probs = _softmax(z2)
    return probs, (cache_v, cache_t, ha, a1)


def forward(model: ClassifierModel, fused: FusedRepresentation) -> Prediction:
    probs, _ = forward_batch(model, fused.visual_out[None, :, :],
                             fused.textual_out[None, :, :])
    p = probs[0]
    return Prediction(video_id=fused.video_id, probs=p, label=int(p.argmax()))


def loss_and_grads(model: ClassifierModel, xv: np.ndarray, xt: np.ndarray,
                   y: np.ndarray):
    """Mean cross-entropy and gradients for every parameter block."""
    b_size = xv.shape[0]
    probs, (cache_v, cache_t, ha, a1) = forward_batch(model, xv, xt)
    logp = np.log(np.maximum(probs[np.arange(b_size), y], 1e-300))
    loss = -float(logp.mean())
    dz2 = probs.copy()
    dz2[np.arange(b_size), y] -= 1.0
    dz2 /= b_size
    g_fc2_w = dz2.T @ a1
    g_fc2_b = dz2.sum(axis=0)
    da1 = dz2 @ model.fc2_w
    dz1 = da1 * (1.0 - a1 * a1)
    g_fc1_w = dz1.T @ ha
    g_fc1_b = dz1.sum(axis=0)
    dha = dz1 @ model.fc1_w
    hidden = model.lstm_v.hidden
    grads_v, _ = lstm_backward_batch(model.lstm_v, cache_v, dha[:, :hidden])
    grads_t, _ = lstm_backward_batch(model.lstm_t, cache_t, dha[:, hidden:])
    return loss, grads_v + grads_t + [g_fc1_w, g_fc1_b, g_fc2_w, g_fc2_b]


def stratified_split(labels: list[int], rng: SeededRng,
                     fractions: tuple[float, float] = (0.1, 0.1)):
    """Seeded 80/10/10-style split; per class, floor-proportional test and
    validation shares, remainder to train. Guarantees non-empty val and test
    overall (borrowing from the largest class) while every observed class
    keeps at least one training example."""
    by_class: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        by_class.setdefault(lab, []).append(i)
    train, val, test = [], [], []
    for lab in sorted(by_class):
        idx = by_class[lab]
        idx = [idx[i] for i in rng.permutation(len(idx))]
        n = len(idx)
        n_test = int(fractions[1] * n)
        n_val = int(fractions[0] * n)
        test.extend(idx[:n_test])
        val.extend(idx[n_test:n_test + n_val])
        train.extend(idx[n_test + n_val:])
    by_train: dict[int, list[int]] = {}
    for i in train:
        by_train.setdefault(labels[i], []).append(i)
    for bucket in (val, test):
        if not bucket:
            donor = max(by_train, key=lambda lab: len(by_train[lab]))
            if len(by_train[donor]) < 2:
                raise InvalidInput("not enough examples to form non-empty splits")
            moved = by_train[donor].pop()
            train.remove(moved)
            bucket.append(moved)
    if not train:
        raise InvalidInput("empty train split")
    return sorted(train), sorted(val), sorted(test)


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    split: dict[str, list[int]] = field(default_factory=dict)


def train(model: ClassifierModel, fused: list[FusedRepresentation],
          labels: list[int], rng: SeededRng, epochs: int = 200,
          lr: float = 1e-3, patience: int = 10, batch_size: int = 16):
    """Adam training with a seeded stratified 80/10/10 split, early stopping
    on validation accuracy, and best-validation checkpointing."""
    if not fused:
        raise EmptyInput("classifier train: no sequences")
    if len(fused) != len(labels):
        raise InvalidInput("fused sequences and labels differ in length")
    order = sorted(range(len(fused)), key=lambda i: fused[i].video_id)
    fused = [fused[i] for i in order]
    labels = [labels[i] for i in order]
    xv = np.stack([f.visual_out for f in fused])
    xt = np.stack([f.textual_out for f in fused])
    y = np.asarray(labels, dtype=np.int64)

    train_idx, val_idx, test_idx = stratified_split(labels, rng.spawn("split"))
    if not train_idx or not val_idx or not test_idx:
        raise InvalidInput("empty split")
    train_classes = {labels[i] for i in train_idx}
    if train_classes != set(labels):
        raise InvalidInput("train split lost a class; need >= 1 example per class")

    opt = Adam(model.params(), lr=lr)
    history = TrainHistory(split={
        "train": [fused[i].video_id for i in train_idx],
        "val": [fused[i].video_id for i in val_idx],
        "test": [fused[i].video_id for i in test_idx]})
    best_params = model.clone_params()
    best_acc = -1.0
    best_loss = np.inf
    stale = 0
    shuffler = rng.spawn("epochs")
    for epoch in range(epochs):
        perm = shuffler.permutation(len(train_idx))
        epoch_loss = 0.0
        for start in range(0, len(perm), batch_size):
            sel = [train_idx[i] for i in perm[start:start + batch_size]]
            loss, grads = loss_and_grads(model, xv[sel], xt[sel], y[sel])
            opt.step(grads)
            epoch_loss += loss * len(sel)
        history.train_loss.append(epoch_loss / len(train_idx))
        probs, _ = forward_batch(model, xv[val_idx], xt[val_idx])
        val_acc = float((probs.argmax(axis=1) == y[val_idx]).mean())
        val_loss = -float(np.log(np.maximum(
            probs[np.arange(len(val_idx)), y[val_idx]], 1e-300)).mean())
        history.val_accuracy.append(val_acc)
        history.val_loss.append(val_loss)
        # accuracy decides; equal-accuracy ties broken by validation loss so
        # saturated-accuracy runs still pick the sharpest checkpoint
        if val_acc > best_acc or (val_acc == best_acc and val_loss < best_loss):
            best_acc = val_acc
            best_loss = val_loss
            best_params = model.clone_params()
            history.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale > patience:
                break
    model.load_params(best_params)
    return model, history


@dataclass
class EvalMetrics:
    accuracy: float
    precision: list[float]
    precision_defined: list[bool]
    confusion: np.ndarray      # (7, 7), rows true, columns predicted
    n: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": {EMOTIONS[i]: self.precision[i] for i in range(NUM_EMOTIONS)},
            "precision_defined": {EMOTIONS[i]: self.precision_defined[i]
                                  for i in range(NUM_EMOTIONS)},
            "confusion": self.confusion.tolist(),
            "n": self.n,
        }


def metrics_from_predictions(pred: list[int], truth: list[int]) -> EvalMetrics:
    """Accuracy, per-class precision (0 and flagged undefined when the class
    is never predicted), and the full confusion matrix."""
    if len(pred) == 0:
        raise EmptyInput("metrics: no predictions")
    if len(pred) != len(truth):
        raise InvalidInput("predictions and labels differ in length")
    confusion = np.zeros((NUM_EMOTIONS, NUM_EMOTIONS), dtype=np.int64)
    for t, p in zip(truth, pred):
        confusion[t, p] += 1
    precision, defined = [], []
    for c in range(NUM_EMOTIONS):
        denom = confusion[:, c].sum()
        if denom == 0:
            precision.append(0.0)
            defined.append(False)
        else:
            precision.append(float(confusion[c, c] / denom))
            defined.append(True)
    accuracy = float(np.trace(confusion) / confusion.sum())
    return EvalMetrics(accuracy=accuracy, precision=precision,
                       precision_defined=defined, confusion=confusion,
                       n=len(truth))


def evaluate(model: ClassifierModel, fused: list[FusedRepresentation],
             labels: list[int]) -> EvalMetrics:
    if not fused:
        raise EmptyInput("evaluate: no sequences")
    xv = np.stack([f.visual_out for f in fused])
    xt = np.stack([f.textual_out for f in fused])
    probs, _ = forward_batch(model, xv, xt)
    pred = probs.argmax(axis=1).tolist()
    return metrics_from_predictions(pred, list(labels))


def predict(model: ClassifierModel, fused: list[FusedRepresentation]) -> list[Prediction]:
    return [forward(model, f) for f in fused]


def _write_lstm(f, p: LstmParams) -> None:
    ser.write_f64(f, p.forget_bias)
    ser.write_array(f, p.w)
    ser.write_array(f, p.r)
    ser.write_array(f, p.b)


def _read_lstm(f) -> LstmParams:
    fb = ser.read_f64(f)
    return LstmParams(w=ser.read_array(f), r=ser.read_array(f),
                      b=ser.read_array(f), forget_bias=fb)


def save_model(path, model: ClassifierModel) -> None:
    """classifier_model.bin: magic plus every parameter block."""
    with open(path, "wb") as f:
        ser.write_magic(f, MAGIC)
        _write_lstm(f, model.lstm_v)
        _write_lstm(f, model.lstm_t)
        ser.write_array(f, model.fc1_w)
        ser.write_array(f, model.fc1_b)
        ser.write_array(f, model.fc2_w)
        ser.write_array(f, model.fc2_b)


def load_model(path) -> ClassifierModel:
    with open(path, "rb") as f:
        ser.expect_magic(f, MAGIC)
        lstm_v = _read_lstm(f)
        lstm_t = _read_lstm(f)
        return ClassifierModel(lstm_v, lstm_t,
                               fc1_w=ser.read_array(f), fc1_b=ser.read_array(f),
                               fc2_w=ser.read_array(f), fc2_b=ser.read_array(f))
