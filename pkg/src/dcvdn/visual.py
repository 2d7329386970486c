"""Burst-aligned visual features: ingestion, synthesis, and view pairing.

The package performs no image inference; real CNN features arrive through
the features.jsonl contract (one 4096-float vector per burst cluster, the
penultimate-layer width of the reference image network). synth_features is
the deterministic test double used by the synthetic experiments: optionally
class-conditioned by a per-class mean shift so a planted label is linearly
recoverable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, InvalidInput, ParseError, SchemaError
from .numkit import SeededRng, derive_seed

FEATURE_DIM = 4096


@dataclass
class FrameFeature:
    video_id: str
    cluster_index: int
    vector: np.ndarray

    def validate(self) -> None:
        if self.vector.shape != (FEATURE_DIM,):
            raise SchemaError(
                f"feature vector for ({self.video_id}, {self.cluster_index}) "
                f"has length {self.vector.shape[0]}, expected {FEATURE_DIM}")


@dataclass
class ViewSequence:
    """Per-video pair of synchronized K-row views; row i of both views refers
    to the same burst cluster."""

    video_id: str
    textual: np.ndarray            # (K, d_text)
    visual: np.ndarray             # (K, d_vis)
    missing_visual: list[bool] = field(default_factory=list)
    label: int | None = None

    @property
    def k(self) -> int:
        return self.textual.shape[0]


def load_features(path) -> tuple[list[FrameFeature], int]:
    """Parse features.jsonl; duplicate (video_id, cluster_index) rows are
    last-wins. Returns (features, duplicate_warning_count)."""
    rows: dict[tuple[str, int], FrameFeature] = {}
    duplicates = 0
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"line {lineno}: invalid JSON ({e.msg})")
            try:
                video_id = rec["video_id"]
                cluster = rec["cluster_index"]
                vector = rec["vector"]
            except (KeyError, TypeError):
                raise ParseError(f"line {lineno}: expected video_id, cluster_index, vector")
            if not isinstance(video_id, str) or not isinstance(cluster, int):
                raise ParseError(f"line {lineno}: bad video_id/cluster_index types")
            vec = np.asarray(vector, dtype=np.float64)
            if vec.shape != (FEATURE_DIM,):
                raise SchemaError(
                    f"line {lineno}: vector length {vec.shape[0] if vec.ndim == 1 else vec.shape}, "
                    f"expected {FEATURE_DIM}")
            if not np.isfinite(vec).all():
                raise SchemaError(f"line {lineno}: non-finite feature values")
            key = (video_id, cluster)
            if key in rows:
                duplicates += 1
            rows[key] = FrameFeature(video_id, cluster, vec)
    ordered = [rows[k] for k in sorted(rows)]
    return ordered, duplicates


def save_features(features: list[FrameFeature], path) -> None:
    ordered = sorted(features, key=lambda r: (r.video_id, r.cluster_index))
    with open(path, "w", encoding="utf-8") as f:
        for r in ordered:
            f.write(json.dumps({"video_id": r.video_id,
                                "cluster_index": r.cluster_index,
                                "vector": r.vector.tolist()}) + "\n")


def class_direction(seed: int, label: int) -> np.ndarray:
    """Deterministic unit direction for one class (the planted mean shift)."""
    rng = SeededRng(derive_seed(seed, "class-direction", label))
    v = rng.normal(size=FEATURE_DIM)
    return v / np.linalg.norm(v)


def synth_features(video_id: str, burst_times: list[float], seed: int,
                   label: int | None = None, shift: float = 0.0) -> list[FrameFeature]:
    """Deterministic pseudo-random features, one per burst time.

    Each vector is standard normal noise seeded by (seed, video_id,
    cluster_index); with a label and a nonzero shift, the class direction is
    added scaled by `shift`, planting a linearly separable signal.
    """
    out = []
    for j, _ in enumerate(burst_times):
        rng = SeededRng(derive_seed(seed, "synth-feature", video_id, j))
        vec = rng.normal(size=FEATURE_DIM)
        if label is not None and shift != 0.0:
            vec = vec + shift * class_direction(seed, label)
        out.append(FrameFeature(video_id, j, vec))
    return out


def assemble_sequences(textual_rows, visual_rows,
                       labels: dict[str, int] | None = None) -> list[ViewSequence]:
    """Pair textual and visual rows into per-video K-row sequences.

    Inputs are iterables of (video_id, cluster_index, vector). The textual
    view defines each video's K (cluster indices must be 0..K-1 with K shared
    across videos). A missing visual row becomes a zero vector with a flag; a
    video present in only one view raises AlignmentError naming the ids.
    Output ordering is independent of input record order.
    """
    text: dict[str, dict[int, np.ndarray]] = {}
    for vid, cluster, vec in textual_rows:
        text.setdefault(vid, {})[int(cluster)] = np.asarray(vec, dtype=np.float64)
    vis: dict[str, dict[int, np.ndarray]] = {}
    for vid, cluster, vec in visual_rows:
        vis.setdefault(vid, {})[int(cluster)] = np.asarray(vec, dtype=np.float64)

    text_only = sorted(set(text) - set(vis))
    vis_only = sorted(set(vis) - set(text))
    if text_only or vis_only:
        raise AlignmentError(
            f"views disagree; textual-only videos: {text_only}, "
            f"visual-only videos: {vis_only}")
    if not text:
        return []

    ks = {max(clusters) + 1 for clusters in text.values()}
    if len(ks) != 1:
        raise InvalidInput(f"inconsistent cluster counts across videos: {sorted(ks)}")
    k = ks.pop()

    sequences = []
    for vid in sorted(text):
        clusters = text[vid]
        if sorted(clusters) != list(range(k)):
            raise InvalidInput(f"video {vid}: textual cluster indices not 0..{k - 1}")
        extra = [j for j in vis[vid] if j >= k]
        if extra:
            raise InvalidInput(f"video {vid}: visual cluster indices {extra} out of range")
        textual = np.stack([clusters[j] for j in range(k)])
        dim_v = len(next(iter(vis[vid].values()))) if vis[vid] else FEATURE_DIM
        visual = np.zeros((k, dim_v))
        missing = [True] * k
        for j, vec in vis[vid].items():
            visual[j] = vec
            missing[j] = False
        sequences.append(ViewSequence(
            video_id=vid, textual=textual, visual=visual, missing_visual=missing,
            label=labels.get(vid) if labels else None))
    return sequences
