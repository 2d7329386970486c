"""Emotional word embeddings: Skip-Gram extended with emotion pseudo-words.

Each token occurrence carries a discriminative emotion label (from the topic
model's re-clustering). Training maximizes, for every in-window pair, the log
probability of the context word given the target word AND given the target's
emotion pseudo-word, so words and emotions get embedded in the same space.
The exact softmax objective is kept for test-scale verification
(sg_loss_exact); training itself uses negative sampling with a unigram^0.75
noise distribution, the standard tractable approximation.

A word's emotional embedding is the concatenation of its word vector and its
emotion vector (dimension 2m); document embeddings are tf-idf-weighted sums
of emotional word embeddings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput, InvalidInput, OovError, SchemaError
from .numkit import SeededRng
from . import serialize as ser

MAGIC = b"DCVDN-EWE1"


@dataclass
class EweConfig:
    dim: int = 128
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    lr: float = 0.025
    min_lr: float = 1e-4
    min_count: int = 2
    emotion_term: bool = True     # False reproduces plain Skip-Gram exactly
    shuffle: bool = True          # permute canonical doc order per epoch
    seed: int = 0

    def validate(self) -> None:
        if self.dim < 1 or self.window < 1 or self.negatives < 1:
            raise InvalidInput("dim, window and negatives must be >= 1")
        if self.epochs < 1 or self.min_count < 1:
            raise InvalidInput("epochs and min_count must be >= 1")
        if self.lr <= 0 or self.min_lr <= 0:
            raise InvalidInput("learning rates must be > 0")


@dataclass
class LabeledDocument:
    """Token stream with one emotion label per token occurrence."""

    video_id: str
    cluster_index: int
    tokens: list[str]
    labels: list[int]

    def key(self) -> tuple[str, int]:
        return (self.video_id, self.cluster_index)


@dataclass
class EmbeddingTable:
    vocab: list[str]
    index: dict[str, int]
    dim: int
    v_w: np.ndarray        # (|W|, m) input word vectors
    v_l: np.ndarray        # (N_l, m) emotion vectors
    v_out: np.ndarray      # (|W|, m) output/context vectors
    counts: np.ndarray     # corpus frequency per vocab word
    doc_freq: np.ndarray   # number of training docs containing the word
    n_docs: int = 0

    @property
    def num_labels(self) -> int:
        return self.v_l.shape[0]


def build_vocab(docs: list[LabeledDocument], min_count: int):
    """Frequency-filtered vocabulary, sorted for determinism."""
    freq: dict[str, int] = {}
    dfreq: dict[str, int] = {}
    for doc in docs:
        for tok in doc.tokens:
            freq[tok] = freq.get(tok, 0) + 1
        for tok in set(doc.tokens):
            dfreq[tok] = dfreq.get(tok, 0) + 1
    vocab = sorted(t for t, c in freq.items() if c >= min_count)
    if not vocab:
        raise EmptyInput("empty vocabulary after min_count filtering")
    index = {t: i for i, t in enumerate(vocab)}
    counts = np.array([freq[t] for t in vocab], dtype=np.float64)
    doc_freq = np.array([dfreq[t] for t in vocab], dtype=np.float64)
    return vocab, index, counts, doc_freq


def encode_documents(docs: list[LabeledDocument], index: dict[str, int]):
    """Drop out-of-vocabulary positions (with their labels) before windowing."""
    encoded = []
    for doc in docs:
        ids, labs = [], []
        for tok, lab in zip(doc.tokens, doc.labels):
            i = index.get(tok)
            if i is not None:
                ids.append(i)
                labs.append(int(lab))
        encoded.append((ids, labs))
    return encoded


def build_training_pairs(encoded, window: int):
    """Yield (target_id, emotion_label, context_id) for every in-window
    neighbor; windows clip at document boundaries, no padding token."""
    for ids, labs in encoded:
        n = len(ids)
        for t in range(n):
            lo = max(0, t - window)
            hi = min(n, t + window + 1)
            for c in range(lo, hi):
                if c != t:
                    yield (ids[t], labs[t], ids[c])


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _log_sigmoid(x: float) -> float:
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


def triple_loss(v_w_t: np.ndarray, v_l_t: np.ndarray, outs: np.ndarray,
                emotion_term: bool = True):
    """Negative-sampling objective of one (target, context, negatives) triple.

    outs stacks the positive context row first, then the negatives. Returns
    (loss, grad_w_t, grad_l_t, grad_outs) for the maximized objective.
    """
    signs = np.full(outs.shape[0], -1.0)
    signs[0] = 1.0
    loss = 0.0
    score_w = outs @ v_w_t
    coef_w = signs * _sigmoid(-signs * score_w)
    loss += sum(_log_sigmoid(s * x) for s, x in zip(signs, score_w))
    grad_w = coef_w @ outs
    grad_outs = np.outer(coef_w, v_w_t)
    if emotion_term:
        score_l = outs @ v_l_t
        coef_l = signs * _sigmoid(-signs * score_l)
        loss += sum(_log_sigmoid(s * x) for s, x in zip(signs, score_l))
        grad_l = coef_l @ outs
        grad_outs = grad_outs + np.outer(coef_l, v_l_t)
    else:
        grad_l = np.zeros_like(v_l_t)
    return loss, grad_w, grad_l, grad_outs


def train(docs: list[LabeledDocument], cfg: EweConfig, rng: SeededRng,
          num_labels: int | None = None) -> EmbeddingTable:
    """SGD over (target, emotion, context) pairs with negative sampling.

    Emotion pseudo-words have their own table and are never drawn as
    negatives. Documents are visited in canonical (video_id, cluster_index)
    order, optionally shuffled per epoch from the seeded rng, so training is
    independent of input ordering. The learning rate decays linearly from
    cfg.lr to cfg.min_lr over all updates.
    """
    cfg.validate()
    docs = sorted(docs, key=LabeledDocument.key)
    vocab, index, counts, doc_freq = build_vocab(docs, cfg.min_count)
    if num_labels is None:
        num_labels = 1 + max((int(l) for d in docs for l in d.labels), default=-1)
        num_labels = max(num_labels, 1)
    encoded = encode_documents(docs, index)

    m = cfg.dim
    w_count = len(vocab)
    scale = 0.5 / m
    v_w = rng.uniform(-scale, scale, (w_count, m))
    v_l = rng.uniform(-scale, scale, (num_labels, m))
    v_out = np.zeros((w_count, m))

    noise = counts ** 0.75
    noise_cdf = np.cumsum(noise / noise.sum())

    pairs_per_epoch = sum(1 for _ in build_training_pairs(encoded, cfg.window))
    total = max(pairs_per_epoch * cfg.epochs, 1)
    step = 0
    for _ in range(cfg.epochs):
        order = list(range(len(encoded)))
        if cfg.shuffle:
            order = [order[i] for i in rng.permutation(len(order))]
        for di in order:
            for t, lab, c in build_training_pairs([encoded[di]], cfg.window):
                lr = cfg.lr + (cfg.min_lr - cfg.lr) * (step / total)
                lr = max(lr, cfg.min_lr)
                step += 1
                negs = np.searchsorted(noise_cdf, rng.random(cfg.negatives),
                                       side="right")
                negs = np.minimum(negs, w_count - 1)
                for i in range(cfg.negatives):
                    tries = 0
                    while negs[i] == c and tries < 100:
                        negs[i] = min(int(np.searchsorted(
                            noise_cdf, rng.random(), side="right")), w_count - 1)
                        tries += 1
                ctx_ids = np.concatenate(([c], negs))
                _, g_w, g_l, g_out = triple_loss(
                    v_w[t], v_l[lab], v_out[ctx_ids], cfg.emotion_term)
                v_w[t] += lr * g_w
                if cfg.emotion_term:
                    v_l[lab] += lr * g_l
                np.add.at(v_out, ctx_ids, lr * g_out)

    return EmbeddingTable(vocab=vocab, index=index, dim=m, v_w=v_w, v_l=v_l,
                          v_out=v_out, counts=counts, doc_freq=doc_freq,
                          n_docs=len(docs))


def sg_loss_exact(table: EmbeddingTable, pairs, emotion_term: bool = True) -> float:
    """Mean exact-softmax log probability over pairs (test-scale only).

    Word term: log softmax(v_out @ v_w[t])[c]; emotion term adds
    log softmax(v_out @ v_l[l])[c]. Softmax ranges over the word vocabulary.
    """
    pairs = list(pairs)
    if not pairs:
        raise EmptyInput("sg_loss_exact: no pairs")
    total = 0.0
    for t, lab, c in pairs:
        scores = table.v_out @ table.v_w[t]
        total += scores[c] - _logsumexp(scores)
        if emotion_term:
            scores = table.v_out @ table.v_l[lab]
            total += scores[c] - _logsumexp(scores)
    return total / len(pairs)


def _logsumexp(x: np.ndarray) -> float:
    hi = float(np.max(x))
    return hi + math.log(np.exp(x - hi).sum())


def emotional_word_embedding(table: EmbeddingTable, token: str, label: int) -> np.ndarray:
    """Concatenated word-and-emotion vector, dimension 2m."""
    idx = table.index.get(token)
    if idx is None:
        raise OovError(f"token {token!r} not in vocabulary")
    if not (0 <= label < table.num_labels):
        raise InvalidInput(f"label {label} outside [0, {table.num_labels})")
    return np.concatenate([table.v_w[idx], table.v_l[label]])


def idf_from_table(table: EmbeddingTable) -> dict[str, float]:
    """Smoothed idf over the training corpus: log((1+N)/(1+df)) + 1."""
    n = table.n_docs
    return {tok: math.log((1.0 + n) / (1.0 + table.doc_freq[i])) + 1.0
            for i, tok in enumerate(table.vocab)}


def document_embedding(table: EmbeddingTable, tokens: list[str], labels: list[int],
                       idf: dict[str, float], word_only: bool = False) -> np.ndarray:
    """tf-idf-weighted sum of emotional word embeddings, weights L1-normalized
    within the document. OOV tokens are skipped; an empty or all-OOV document
    yields the zero vector. word_only zeroes the emotion half (ablation mode).
    """
    m = table.dim
    out = np.zeros(2 * m)
    kept = [(table.index[t], lab, idf.get(t, 0.0))
            for t, lab in zip(tokens, labels) if t in table.index]
    z = sum(wt for _, _, wt in kept)
    if z <= 0.0:
        return out
    for idx, lab, wt in kept:
        out[:m] += (wt / z) * table.v_w[idx]
        if not word_only:
            if not (0 <= lab < table.num_labels):
                raise InvalidInput(f"label {lab} outside [0, {table.num_labels})")
            out[m:] += (wt / z) * table.v_l[lab]
    return out


def save_table(path, table: EmbeddingTable) -> None:
    """ewe_model.bin: magic, vocab table with counts and doc frequencies,
    m, N_l, and the three float64 matrices."""
    with open(path, "wb") as f:
        ser.write_magic(f, MAGIC)
        ser.write_u64(f, table.dim)
        ser.write_u64(f, table.num_labels)
        ser.write_u64(f, table.n_docs)
        ser.write_u64(f, len(table.vocab))
        for i, tok in enumerate(table.vocab):
            ser.write_str(f, tok)
            ser.write_u64(f, int(table.counts[i]))
            ser.write_u64(f, int(table.doc_freq[i]))
        ser.write_array(f, table.v_w)
        ser.write_array(f, table.v_l)
        ser.write_array(f, table.v_out)


def load_table(path) -> EmbeddingTable:
    with open(path, "rb") as f:
        ser.expect_magic(f, MAGIC)
        dim = ser.read_u64(f)
        num_labels = ser.read_u64(f)
        n_docs = ser.read_u64(f)
        n_vocab = ser.read_u64(f)
        vocab, counts, doc_freq = [], [], []
        for _ in range(n_vocab):
            vocab.append(ser.read_str(f))
            counts.append(ser.read_u64(f))
            doc_freq.append(ser.read_u64(f))
        v_w = ser.read_array(f)
        v_l = ser.read_array(f)
        v_out = ser.read_array(f)
    if v_w.shape != (n_vocab, dim) or v_out.shape != (n_vocab, dim):
        raise SchemaError("word matrix shapes disagree with header")
    if v_l.shape != (num_labels, dim):
        raise SchemaError("emotion matrix shape disagrees with header")
    return EmbeddingTable(vocab=vocab, index={t: i for i, t in enumerate(vocab)},
                          dim=dim, v_w=v_w, v_l=v_l, v_out=v_out,
                          counts=np.array(counts, dtype=np.float64),
                          doc_freq=np.array(doc_freq, dtype=np.float64),
                          n_docs=n_docs)
