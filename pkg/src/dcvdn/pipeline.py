"""Stage-wise pipeline: cluster -> elda -> ewe -> embed-docs -> align ->
dccae -> classify -> eval, each stage reading and writing its module's file
contracts so any stage can be re-run in isolation.

A single global seed fans out to per-stage derived seeds; given identical
inputs and config, every artifact is bit-identical across runs.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import classifier as clf
from . import dccae as dcc
from . import elda
from . import ewe
from .burst_clustering import DanmuDocument, aggregate_documents, burst_frame_times, cluster_offsets
from .corpus import EMOTIONS, load_danmus, load_labels, load_lexicon
from .errors import AlignmentError, DcvdnError, InvalidInput, ParseError
from .numkit import SeededRng, derive_seed
from .visual import assemble_sequences, load_features, save_features, synth_features

logger = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    workdir: str = "."
    danmus: str | None = None
    labels: str | None = None
    lexicon: str | None = None
    features: str | None = None
    seed: int = 0
    k: int = 10
    synth_features: bool = False
    synth_shift: float = 3.0
    # emotion topic model
    elda_emotions: int = 7
    elda_alpha: float | None = None
    elda_beta: float = 0.01
    elda_iters: int = 500
    elda_burn_in: int = 300
    elda_sample_lag: int = 10
    elda_ke: int = 20
    elda_per_type: bool = False
    # emotional word embeddings
    ewe_dim: int = 128
    ewe_window: int = 5
    ewe_negatives: int = 5
    ewe_epochs: int = 5
    ewe_lr: float = 0.025
    ewe_min_count: int = 2
    ewe_emotion_term: bool = True
    # multi-view fusion
    dccae_lambda: float = 1.0
    dccae_ridge: float = 1e-4
    dccae_l: int = 128
    dccae_hidden: int = 256
    dccae_batch: int = 400
    dccae_epochs: int = 20
    dccae_lr: float = 1e-3
    dccae_recon: str = "squared"
    # classifier
    clf_hidden: int = 64
    clf_epochs: int = 200
    clf_patience: int = 10
    clf_batch: int = 16
    clf_lr: float = 1e-3

    @classmethod
    def from_mapping(cls, mapping: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(mapping) - known)
        if unknown:
            raise InvalidInput(f"unknown config keys: {unknown}")
        return cls(**mapping)

    def to_dict(self) -> dict:
        return asdict(self)

    # input paths (overridable), output paths (fixed names under workdir)
    def _in(self, explicit, name):
        return Path(explicit) if explicit else Path(self.workdir) / name

    @property
    def danmus_path(self): return self._in(self.danmus, "danmus.jsonl")
    @property
    def labels_path(self): return self._in(self.labels, "labels.csv")
    @property
    def lexicon_path(self): return self._in(self.lexicon, "lexicon.csv")
    @property
    def features_path(self): return self._in(self.features, "features.jsonl")
    @property
    def clusters_path(self): return Path(self.workdir) / "clusters.jsonl"
    @property
    def elda_model_path(self): return Path(self.workdir) / "elda_model.bin"
    @property
    def ewe_model_path(self): return Path(self.workdir) / "ewe_model.bin"
    @property
    def doc_embeddings_path(self): return Path(self.workdir) / "doc_embeddings.jsonl"
    @property
    def dccae_model_path(self): return Path(self.workdir) / "dccae_model.bin"
    @property
    def fused_path(self): return Path(self.workdir) / "fused.jsonl"
    @property
    def classifier_model_path(self): return Path(self.workdir) / "classifier_model.bin"
    @property
    def split_path(self): return Path(self.workdir) / "split.json"
    @property
    def predictions_path(self): return Path(self.workdir) / "predictions.jsonl"
    @property
    def metrics_path(self): return Path(self.workdir) / "metrics.json"

    def elda_config(self) -> elda.EldaConfig:
        return elda.EldaConfig(
            num_emotions=self.elda_emotions, alpha=self.elda_alpha,
            beta=self.elda_beta, gibbs_iters=self.elda_iters,
            burn_in=self.elda_burn_in, sample_lag=self.elda_sample_lag,
            ke=self.elda_ke, per_type=self.elda_per_type, seed=self.seed)

    def ewe_config(self) -> ewe.EweConfig:
        return ewe.EweConfig(
            dim=self.ewe_dim, window=self.ewe_window,
            negatives=self.ewe_negatives, epochs=self.ewe_epochs,
            lr=self.ewe_lr, min_count=self.ewe_min_count,
            emotion_term=self.ewe_emotion_term, seed=self.seed)


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise InvalidInput(f"missing {what}: {path}")
    return path


def write_clusters(docs: list[DanmuDocument], path) -> None:
    ordered = sorted(docs, key=lambda d: (d.video_id, d.cluster_index))
    with open(path, "w", encoding="utf-8") as f:
        for d in ordered:
            f.write(json.dumps({"video_id": d.video_id,
                                "cluster_index": d.cluster_index,
                                "burst_point": d.burst_point,
                                "text": d.text}, ensure_ascii=False) + "\n")


def read_clusters(path) -> list[DanmuDocument]:
    docs = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                docs.append(DanmuDocument(
                    video_id=rec["video_id"],
                    cluster_index=int(rec["cluster_index"]),
                    text=rec["text"], burst_point=float(rec["burst_point"]),
                    degenerate=(rec["text"] == "")))
            except (KeyError, TypeError, ValueError) as e:
                raise ParseError(f"line {lineno}: bad cluster record ({e})")
    return sorted(docs, key=lambda d: (d.video_id, d.cluster_index))


def _write_vector_rows(path, rows) -> None:
    """rows: iterable of (video_id, cluster_index, dict-of-extra-arrays)."""
    with open(path, "w", encoding="utf-8") as f:
        for video_id, cluster_index, extra in rows:
            rec = {"video_id": video_id, "cluster_index": cluster_index}
            rec.update(extra)
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


def read_doc_embeddings(path) -> list[tuple[str, int, np.ndarray]]:
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                rows.append((rec["video_id"], int(rec["cluster_index"]),
                             np.asarray(rec["vector"], dtype=np.float64)))
            except (KeyError, TypeError, ValueError) as e:
                raise ParseError(f"line {lineno}: bad embedding record ({e})")
    return sorted(rows, key=lambda r: (r[0], r[1]))


def stage_cluster(cfg: PipelineConfig) -> None:
    records = load_danmus(_require(cfg.danmus_path, "danmus file"))
    docs = []
    for rec in records:
        part = cluster_offsets([d.offset for d in rec.danmus], cfg.k,
                               video_id=rec.video_id)
        docs.extend(aggregate_documents(rec, part))
    write_clusters(docs, cfg.clusters_path)
    logger.info("cluster: %d videos -> %d documents", len(records), len(docs))


def stage_elda(cfg: PipelineConfig) -> None:
    docs = read_clusters(_require(cfg.clusters_path, "clusters file"))
    lexicon = load_lexicon(_require(cfg.lexicon_path, "lexicon file"))
    posterior = elda.gibbs_train(docs, lexicon, cfg.elda_config(),
                                 SeededRng(derive_seed(cfg.seed, "elda-gibbs")))
    assignment = elda.recluster_emotion_distributions(
        posterior, cfg.elda_ke, SeededRng(derive_seed(cfg.seed, "elda-recluster")),
        per_type=cfg.elda_per_type)
    elda.save_model(cfg.elda_model_path, posterior, assignment)
    logger.info("elda: %d labels over %d docs", assignment.num_labels, len(docs))


def _labeled_documents(cfg: PipelineConfig):
    docs = read_clusters(_require(cfg.clusters_path, "clusters file"))
    model = elda.load_model(_require(cfg.elda_model_path, "elda model"))
    labeled = []
    for d in docs:
        key = (d.video_id, d.cluster_index)
        if key not in model.label_map:
            raise InvalidInput(f"elda model lacks labels for document {key}")
        labs = model.label_map[key]
        tokens = d.tokens()
        if len(labs) != len(tokens):
            raise InvalidInput(f"label count mismatch for document {key}")
        labeled.append(ewe.LabeledDocument(
            video_id=d.video_id, cluster_index=d.cluster_index,
            tokens=tokens, labels=[int(x) for x in labs]))
    return labeled, model


def stage_ewe(cfg: PipelineConfig) -> None:
    labeled, model = _labeled_documents(cfg)
    table = ewe.train(labeled, cfg.ewe_config(),
                      SeededRng(derive_seed(cfg.seed, "ewe")),
                      num_labels=model.num_labels)
    ewe.save_table(cfg.ewe_model_path, table)
    logger.info("ewe: |W|=%d, N_l=%d", len(table.vocab), table.num_labels)


def stage_embed_docs(cfg: PipelineConfig) -> None:
    labeled, _ = _labeled_documents(cfg)
    table = ewe.load_table(_require(cfg.ewe_model_path, "ewe model"))
    idf = ewe.idf_from_table(table)
    word_only = not cfg.ewe_emotion_term
    rows = []
    for doc in labeled:
        vec = ewe.document_embedding(table, doc.tokens, doc.labels, idf,
                                     word_only=word_only)
        rows.append((doc.video_id, doc.cluster_index,
                     {"vector": vec.tolist()}))
    _write_vector_rows(cfg.doc_embeddings_path, rows)


def _load_views(cfg: PipelineConfig):
    text_rows = read_doc_embeddings(
        _require(cfg.doc_embeddings_path, "document embeddings"))
    labels = load_labels(cfg.labels_path) if cfg.labels_path.exists() else {}
    if not cfg.features_path.exists():
        raise AlignmentError(
            f"features file missing: {cfg.features_path} "
            "(run with synth_features or provide real features)")
    feats, dups = load_features(cfg.features_path)
    if dups:
        logger.warning("features: %d duplicate rows (last wins)", dups)
    vis_rows = [(f.video_id, f.cluster_index, f.vector) for f in feats]
    return assemble_sequences(text_rows, vis_rows, labels=labels or None)


def stage_align(cfg: PipelineConfig) -> None:
    if cfg.synth_features:
        docs = read_clusters(_require(cfg.clusters_path, "clusters file"))
        labels = load_labels(cfg.labels_path) if cfg.labels_path.exists() else {}
        bursts: dict[str, list[float]] = {}
        for d in docs:
            bursts.setdefault(d.video_id, []).append(d.burst_point)
        feats = []
        feature_seed = derive_seed(cfg.seed, "features")
        for video_id in sorted(bursts):
            feats.extend(synth_features(
                video_id, bursts[video_id], feature_seed,
                label=labels.get(video_id), shift=cfg.synth_shift))
        save_features(feats, cfg.features_path)
    sequences = _load_views(cfg)
    logger.info("align: %d videos, K=%d", len(sequences),
                sequences[0].k if sequences else 0)


def stage_dccae(cfg: PipelineConfig) -> None:
    sequences = _load_views(cfg)
    if not sequences:
        raise InvalidInput("no sequences to train on")
    dim_x = sequences[0].textual.shape[1]
    dim_y = sequences[0].visual.shape[1]
    model = dcc.DccaeModel.create(
        dim_x, dim_y, SeededRng(derive_seed(cfg.seed, "dccae-init")),
        hidden=cfg.dccae_hidden, proj_dim=cfg.dccae_l, lam=cfg.dccae_lambda,
        ridge=cfg.dccae_ridge, recon=cfg.dccae_recon)
    model, trace = dcc.train(model, sequences, epochs=cfg.dccae_epochs,
                             rng=SeededRng(derive_seed(cfg.seed, "dccae-train")),
                             batch=cfg.dccae_batch, lr=cfg.dccae_lr)
    dcc.fit_projections(model, sequences)
    dcc.save_model(cfg.dccae_model_path, model)
    rows = []
    for seq in sequences:
        fused = dcc.transform(model, seq)
        for j in range(seq.k):
            rows.append((seq.video_id, j,
                         {"textual_out": fused.textual_out[j].tolist(),
                          "visual_out": fused.visual_out[j].tolist()}))
    _write_vector_rows(cfg.fused_path, rows)
    if trace:
        logger.info("dccae: epoch loss %.4f -> %.4f", trace[0], trace[-1])


def read_fused(path) -> list[dcc.FusedRepresentation]:
    by_video: dict[str, dict[int, tuple[np.ndarray, np.ndarray]]] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                by_video.setdefault(rec["video_id"], {})[int(rec["cluster_index"])] = (
                    np.asarray(rec["textual_out"], dtype=np.float64),
                    np.asarray(rec["visual_out"], dtype=np.float64))
            except (KeyError, TypeError, ValueError) as e:
                raise ParseError(f"line {lineno}: bad fused record ({e})")
    fused = []
    for video_id in sorted(by_video):
        clusters = by_video[video_id]
        k = max(clusters) + 1
        if sorted(clusters) != list(range(k)):
            raise InvalidInput(f"video {video_id}: fused clusters not 0..{k - 1}")
        fused.append(dcc.FusedRepresentation(
            video_id=video_id,
            textual_out=np.stack([clusters[j][0] for j in range(k)]),
            visual_out=np.stack([clusters[j][1] for j in range(k)])))
    return fused


def stage_classify(cfg: PipelineConfig) -> None:
    fused = read_fused(_require(cfg.fused_path, "fused file"))
    labels_map = load_labels(_require(cfg.labels_path, "labels file"))
    pairs = [(f, labels_map[f.video_id]) for f in fused
             if f.video_id in labels_map]
    if not pairs:
        raise InvalidInput("no labeled videos to train on")
    fused_l = [p[0] for p in pairs]
    labels = [p[1] for p in pairs]
    model = clf.ClassifierModel.create(
        fused_l[0].visual_out.shape[1], fused_l[0].textual_out.shape[1],
        SeededRng(derive_seed(cfg.seed, "classifier-init")),
        hidden=cfg.clf_hidden)
    model, history = clf.train(
        model, fused_l, labels, SeededRng(derive_seed(cfg.seed, "classifier-train")),
        epochs=cfg.clf_epochs, lr=cfg.clf_lr, patience=cfg.clf_patience,
        batch_size=cfg.clf_batch)
    clf.save_model(cfg.classifier_model_path, model)
    with open(cfg.split_path, "w", encoding="utf-8") as f:
        json.dump(history.split, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info("classify: best val acc %.3f at epoch %d",
                max(history.val_accuracy), history.best_epoch)


def _write_predictions(path, predictions: list[clf.Prediction]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for p in sorted(predictions, key=lambda p: p.video_id):
            f.write(json.dumps({"video_id": p.video_id,
                                "probs": p.probs.tolist(),
                                "label": p.label_name}) + "\n")


def stage_eval(cfg: PipelineConfig) -> dict:
    fused = read_fused(_require(cfg.fused_path, "fused file"))
    labels_map = load_labels(_require(cfg.labels_path, "labels file"))
    model = clf.load_model(_require(cfg.classifier_model_path, "classifier model"))
    predictions = clf.predict(model, fused)
    _write_predictions(cfg.predictions_path, predictions)

    labeled = [(f, labels_map[f.video_id]) for f in fused
               if f.video_id in labels_map]
    split = {}
    if cfg.split_path.exists():
        with open(cfg.split_path, "r", encoding="utf-8") as f:
            split = json.load(f)

    def metrics_for(subset_ids=None):
        pairs = [(f, y) for f, y in labeled
                 if subset_ids is None or f.video_id in subset_ids]
        if not pairs:
            return None
        m = clf.evaluate(model, [p[0] for p in pairs], [p[1] for p in pairs])
        return m.to_dict()

    test_ids = set(split.get("test", []))
    headline = metrics_for(test_ids if test_ids else None)
    headline["split"] = "test" if test_ids else "all"
    headline["splits"] = {}
    for name in ("train", "val", "test"):
        if split.get(name):
            sub = metrics_for(set(split[name]))
            if sub is not None:
                headline["splits"][name] = {
                    "accuracy": sub["accuracy"], "n": sub["n"]}
    with open(cfg.metrics_path, "w", encoding="utf-8") as f:
        json.dump(headline, f, indent=2, sort_keys=True)
        f.write("\n")
    return headline


def stage_predict(cfg: PipelineConfig) -> None:
    """Prediction for possibly-unlabeled videos from saved models."""
    sequences = _load_views(cfg)
    dccae_model = dcc.load_model(_require(cfg.dccae_model_path, "dccae model"))
    model = clf.load_model(_require(cfg.classifier_model_path, "classifier model"))
    fused = [dcc.transform(dccae_model, s) for s in sequences]
    _write_predictions(cfg.predictions_path, clf.predict(model, fused))


STAGES = (
    ("cluster", stage_cluster),
    ("elda", stage_elda),
    ("ewe", stage_ewe),
    ("embed-docs", stage_embed_docs),
    ("align", stage_align),
    ("dccae", stage_dccae),
    ("classify", stage_classify),
    ("eval", stage_eval),
)


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Execute every stage in order; abort with the stage name on error."""
    metrics = None
    for name, fn in STAGES:
        try:
            result = fn(cfg)
        except DcvdnError as e:
            raise type(e)(f"stage {name}: {e}") from e
        if name == "eval":
            metrics = result
    return metrics
