"""Emotion topic model: collapsed Gibbs sampling with lexicon clamping.

Documents are modeled as mixtures over E latent emotions, each emotion as a
distribution over words. Tokens found in the emotion lexicon have their
emotion permanently clamped to the lexicon class and are never resampled;
they still contribute to the count statistics, which is how the prior
knowledge propagates to unclamped tokens.

After sampling, per-occurrence emotion distributions are re-clustered into
KE > E pseudo-emotion labels so downstream embedding training gets a more
discriminative label set than the raw emotion inventory allows.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import lgamma

import numpy as np

from .burst_clustering import DanmuDocument
from .corpus import EmotionLexicon
from .errors import EmptyInput, InvalidInput, SchemaError
from .numkit import SeededRng
from . import serialize as ser

logger = logging.getLogger(__name__)

MAGIC = b"DCVDN-ELDA1"


@dataclass
class EldaConfig:
    num_emotions: int = 7
    alpha: float | None = None        # None -> 50 / num_emotions
    beta: float = 0.01
    gibbs_iters: int = 500
    burn_in: int = 300
    sample_lag: int = 10
    ke: int = 20
    per_type: bool = False            # recluster per word type instead of occurrence
    seed: int = 0

    def resolved_alpha(self) -> float:
        return 50.0 / self.num_emotions if self.alpha is None else self.alpha

    def validate(self) -> None:
        if self.num_emotions < 1:
            raise InvalidInput("num_emotions must be >= 1")
        if self.resolved_alpha() <= 0 or self.beta <= 0:
            raise InvalidInput("alpha and beta must be > 0")
        if not (0 <= self.burn_in < self.gibbs_iters):
            raise InvalidInput("burn_in must satisfy 0 <= burn_in < gibbs_iters")
        if self.sample_lag < 1:
            raise InvalidInput("sample_lag must be >= 1")
        if self.ke < 1:
            raise InvalidInput("ke must be >= 1")


@dataclass
class EmotionPosterior:
    """Averaged post-burn-in posteriors. All rows are probability vectors."""

    num_emotions: int
    vocab: list[str]
    vocab_index: dict[str, int]
    doc_keys: list[tuple[str, int]]
    doc_tokens: list[list[int]]           # vocab ids per doc ([] for empty docs)
    token_posteriors: list[np.ndarray]    # per doc: (n_tokens, E)
    doc_posteriors: np.ndarray            # (n_docs, E)
    word_posteriors: np.ndarray           # (|W|, E), per-type occurrence average
    emotion_word: np.ndarray              # (E, |W|), smoothed word dist per emotion
    log_joint_trace: list[float] = field(default_factory=list)


@dataclass
class EmotionAssignment:
    """Final discriminative labels from re-clustering emotion distributions."""

    doc_keys: list[tuple[str, int]]
    labels: list[np.ndarray]              # per doc: int array, one label per token
    centroids: np.ndarray                 # (ke_eff, E)
    objective: float
    requested_ke: int

    @property
    def num_labels(self) -> int:
        return self.centroids.shape[0]


def _doc_key(doc: DanmuDocument) -> tuple[str, int]:
    return (doc.video_id, doc.cluster_index)


def gibbs_train(docs: list[DanmuDocument], lexicon: EmotionLexicon | None,
                cfg: EldaConfig, rng: SeededRng) -> EmotionPosterior:
    """Collapsed Gibbs sampling with lexicon clamping.

    Per-token posteriors are averages of the sampled assignment indicator over
    post-burn-in samples taken every sample_lag iterations; document and
    emotion-word distributions use the standard smoothed count estimators
    averaged over the same samples. Empty documents are skipped during
    training and receive uniform posteriors.
    """
    cfg.validate()
    if not docs:
        raise EmptyInput("gibbs_train: no documents")
    E = cfg.num_emotions
    alpha = cfg.resolved_alpha()
    beta = cfg.beta

    docs = sorted(docs, key=_doc_key)
    doc_keys = [_doc_key(d) for d in docs]
    vocab = sorted({tok for d in docs for tok in d.tokens()})
    if not vocab:
        raise EmptyInput("gibbs_train: empty vocabulary")
    vocab_index = {w: i for i, w in enumerate(vocab)}
    W = len(vocab)
    wbeta = W * beta

    clamp_of = [-1] * W
    if lexicon is not None:
        for tok, cls in lexicon.entries.items():
            if tok in vocab_index:
                if cls >= E:
                    raise InvalidInput(
                        f"lexicon class {cls} for {tok!r} >= num_emotions {E}")
                clamp_of[vocab_index[tok]] = cls

    doc_ids = [[vocab_index[t] for t in d.tokens()] for d in docs]
    train_idx = [i for i, ids in enumerate(doc_ids) if ids]

    n_de = [[0] * E for _ in doc_ids]
    n_ew = [[0] * W for _ in range(E)]
    n_e = [0] * E
    doc_z: list[list[int]] = []
    doc_clamped: list[list[bool]] = []
    n_unclamped = 0
    for d, ids in enumerate(doc_ids):
        zs, cl = [], []
        for w in ids:
            c = clamp_of[w]
            if c >= 0:
                z = c
                cl.append(True)
            else:
                z = int(rng.integers(0, E))
                cl.append(False)
                n_unclamped += 1
            zs.append(z)
            n_de[d][z] += 1
            n_ew[z][w] += 1
            n_e[z] += 1
        doc_z.append(zs)
        doc_clamped.append(cl)

    def log_joint() -> float:
        lj = 0.0
        const_d = lgamma(E * alpha) - E * lgamma(alpha)
        for d in train_idx:
            row = n_de[d]
            lj += const_d - lgamma(len(doc_ids[d]) + E * alpha)
            for e in range(E):
                lj += lgamma(row[e] + alpha)
        const_e = lgamma(wbeta) - W * lgamma(beta)
        for e in range(E):
            row = n_ew[e]
            lj += const_e - lgamma(n_e[e] + wbeta)
            for w in range(W):
                lj += lgamma(row[w] + beta)
        return lj

    D = len(docs)
    occ_acc = [np.zeros((len(ids), E)) for ids in doc_ids]
    theta_acc = np.zeros((D, E))
    pi_acc = np.zeros((E, W))
    word_sum = np.zeros((W, E))
    word_occ = np.zeros(W)
    n_samples = 0
    trace = [log_joint()]
    doc_len = np.array([len(ids) for ids in doc_ids], dtype=np.float64)
    cum = [0.0] * E

    for it in range(cfg.gibbs_iters):
        draws = rng.random(n_unclamped).tolist() if n_unclamped else []
        ui = 0
        for d in train_idx:
            ids = doc_ids[d]
            zs = doc_z[d]
            cl = doc_clamped[d]
            nde = n_de[d]
            for t in range(len(ids)):
                if cl[t]:
                    continue
                w = ids[t]
                old = zs[t]
                nde[old] -= 1
                n_ew[old][w] -= 1
                n_e[old] -= 1
                acc = 0.0
                for e in range(E):
                    acc += (nde[e] + alpha) * (n_ew[e][w] + beta) / (n_e[e] + wbeta)
                    cum[e] = acc
                r = draws[ui] * acc
                ui += 1
                new = 0
                while cum[new] < r:
                    new += 1
                zs[t] = new
                nde[new] += 1
                n_ew[new][w] += 1
                n_e[new] += 1
        if (it + 1) % 50 == 0:
            trace.append(log_joint())
        if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.sample_lag == 0:
            n_samples += 1
            nde_arr = np.asarray(n_de, dtype=np.float64)
            theta_acc += (nde_arr + alpha) / (doc_len[:, None] + E * alpha)
            new_arr = np.asarray(n_ew, dtype=np.float64)
            ne_arr = np.asarray(n_e, dtype=np.float64)
            pi_acc += (new_arr + beta) / (ne_arr[:, None] + wbeta)
            for d in train_idx:
                z_arr = np.asarray(doc_z[d])
                occ_acc[d][np.arange(len(z_arr)), z_arr] += 1.0

    if n_samples == 0:
        raise InvalidInput("no retained samples; check gibbs_iters/burn_in/sample_lag")

    token_posteriors = []
    for d in range(D):
        post = occ_acc[d] / n_samples
        token_posteriors.append(post)
        if len(doc_ids[d]):
            np.add.at(word_sum, doc_ids[d], post)
            np.add.at(word_occ, doc_ids[d], 1.0)
    doc_posteriors = theta_acc / n_samples
    for d in range(D):
        if not doc_ids[d]:
            doc_posteriors[d] = 1.0 / E
    word_posteriors = word_sum / np.maximum(word_occ, 1.0)[:, None]

    return EmotionPosterior(
        num_emotions=E, vocab=vocab, vocab_index=vocab_index,
        doc_keys=doc_keys, doc_tokens=doc_ids,
        token_posteriors=token_posteriors, doc_posteriors=doc_posteriors,
        word_posteriors=word_posteriors, emotion_word=pi_acc / n_samples,
        log_joint_trace=trace)


def kmeans(x: np.ndarray, k: int, rng: SeededRng, restarts: int = 50,
           max_iters: int = 200):
    """Lloyd's algorithm with k-means++ seeding, best of `restarts` runs.

    Returns (labels, centers, objective, objective_trace_of_best_run).
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n == 0:
        raise EmptyInput("kmeans: no points")
    if k < 1 or k > n:
        raise InvalidInput(f"kmeans: k={k} outside [1, {n}]")
    best = None
    for _ in range(restarts):
        centers = np.empty((k, x.shape[1]))
        centers[0] = x[int(rng.integers(0, n))]
        d2 = ((x - centers[0]) ** 2).sum(axis=1)
        for j in range(1, k):
            total = float(d2.sum())
            if total <= 0.0:
                idx = int(rng.integers(0, n))
            else:
                r = float(rng.random()) * total
                idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
                idx = min(idx, n - 1)
            centers[j] = x[idx]
            d2 = np.minimum(d2, ((x - centers[j]) ** 2).sum(axis=1))
        labels = np.full(n, -1)
        trace = []
        for _ in range(max_iters):
            dist = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            new_labels = dist.argmin(axis=1)
            trace.append(float(dist[np.arange(n), new_labels].sum()))
            if np.array_equal(new_labels, labels):
                break
            labels = new_labels
            mindist = dist[np.arange(n), labels]
            for j in range(k):
                members = x[labels == j]
                if len(members):
                    # identical members: take the value itself so the
                    # objective is exactly zero, not mean round-off
                    if (members == members[0]).all():
                        centers[j] = members[0]
                    else:
                        centers[j] = members.mean(axis=0)
                else:
                    centers[j] = x[int(mindist.argmax())]
        obj = float(((x - centers[labels]) ** 2).sum())
        if best is None or obj < best[2]:
            best = (labels.copy(), centers.copy(), obj, trace)
    return best


def recluster_emotion_distributions(posterior: EmotionPosterior, ke: int,
                                    rng: SeededRng,
                                    per_type: bool = False) -> EmotionAssignment:
    """K-means over emotion distributions producing KE discriminative labels.

    per_type=False clusters one point per token occurrence; per_type=True
    clusters the per-type averages and broadcasts the type label to every
    occurrence of the type.
    """
    if ke < 1:
        raise InvalidInput("ke must be >= 1")
    if per_type:
        points = posterior.word_posteriors
    else:
        occupied = [p for p in posterior.token_posteriors if len(p)]
        if not occupied:
            raise EmptyInput("recluster: no token occurrences")
        points = np.concatenate(occupied, axis=0)
    if points.shape[0] == 0:
        raise EmptyInput("recluster: no token occurrences")
    n_distinct = np.unique(points, axis=0).shape[0]
    ke_eff = min(ke, n_distinct)
    if ke_eff < ke:
        logger.warning("recluster: ke=%d exceeds %d distinct distributions; using %d",
                       ke, n_distinct, ke_eff)
    flat_labels, centers, obj, _ = kmeans(points, ke_eff, rng, restarts=50)

    labels: list[np.ndarray] = []
    if per_type:
        for ids in posterior.doc_tokens:
            labels.append(flat_labels[np.asarray(ids, dtype=int)]
                          if ids else np.empty(0, dtype=flat_labels.dtype))
    else:
        pos = 0
        for p in posterior.token_posteriors:
            labels.append(flat_labels[pos:pos + len(p)])
            pos += len(p)
    return EmotionAssignment(doc_keys=list(posterior.doc_keys), labels=labels,
                             centroids=centers, objective=obj, requested_ke=ke)


def infer_document_emotion(tokens: list[str], posterior: EmotionPosterior) -> np.ndarray:
    """Fold-in: mean of per-token posteriors over in-vocabulary tokens;
    uniform when nothing is known."""
    rows = [posterior.word_posteriors[posterior.vocab_index[t]]
            for t in tokens if t in posterior.vocab_index]
    if not rows:
        return np.full(posterior.num_emotions, 1.0 / posterior.num_emotions)
    return np.mean(rows, axis=0)


def save_model(path, posterior: EmotionPosterior, assignment: EmotionAssignment) -> None:
    """elda_model.bin: magic, vocab table, emotion-word matrix, KE centroids,
    per-token label map keyed by (video_id, cluster_index)."""
    with open(path, "wb") as f:
        ser.write_magic(f, MAGIC)
        ser.write_u64(f, posterior.num_emotions)
        ser.write_u64(f, len(posterior.vocab))
        for w in posterior.vocab:
            ser.write_str(f, w)
        ser.write_array(f, posterior.emotion_word)
        ser.write_array(f, assignment.centroids)
        ser.write_u64(f, len(assignment.doc_keys))
        for (vid, cluster), labs in zip(assignment.doc_keys, assignment.labels):
            ser.write_str(f, vid)
            ser.write_u64(f, cluster)
            ser.write_u32_array(f, labs)


@dataclass
class EldaModel:
    num_emotions: int
    vocab: list[str]
    emotion_word: np.ndarray
    centroids: np.ndarray
    label_map: dict[tuple[str, int], np.ndarray]

    @property
    def num_labels(self) -> int:
        return self.centroids.shape[0]


def load_model(path) -> EldaModel:
    with open(path, "rb") as f:
        ser.expect_magic(f, MAGIC)
        E = ser.read_u64(f)
        vocab = [ser.read_str(f) for _ in range(ser.read_u64(f))]
        emotion_word = ser.read_array(f)
        centroids = ser.read_array(f)
        label_map = {}
        for _ in range(ser.read_u64(f)):
            vid = ser.read_str(f)
            cluster = ser.read_u64(f)
            label_map[(vid, cluster)] = ser.read_u32_array(f).astype(np.int64)
    if emotion_word.shape[0] != E:
        raise SchemaError("emotion_word row count disagrees with header")
    return EldaModel(num_emotions=E, vocab=vocab, emotion_word=emotion_word,
                     centroids=centroids, label_map=label_map)
