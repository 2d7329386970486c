"""Data model and file ingestion for videos, danmus, labels, and the lexicon.

Inputs are pre-tokenized: danmu text is whitespace-separated tokens and
emoticons are single tokens. File contracts:

  danmus.jsonl   {"video_id": str, "offset": float, "text": str} per line
  lexicon.csv    token,emotion   (header-less)
  labels.csv     video_id,emotion (header-less)

Canonical serialization renders floats with 6 decimal places, UTF-8
throughout, records sorted by (video_id, offset).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidInput, ParseError

EMOTIONS = ("happy", "love", "anger", "sad", "fear", "disgust", "surprise")
EMOTION_INDEX = {name: i for i, name in enumerate(EMOTIONS)}
NUM_EMOTIONS = len(EMOTIONS)


def emotion_index(name: str, where: str = "") -> int:
    try:
        return EMOTION_INDEX[name]
    except KeyError:
        raise ParseError(f"{where}unknown emotion {name!r}; expected one of {EMOTIONS}")


@dataclass(frozen=True)
class DanmuEvent:
    """One timed comment: playback offset in seconds plus tokenized text."""

    video_id: str
    offset: float
    text: str

    def tokens(self) -> list[str]:
        return self.text.split()


@dataclass
class VideoRecord:
    video_id: str
    duration: float
    danmus: list[DanmuEvent] = field(default_factory=list)
    label: int | None = None


@dataclass
class EmotionLexicon:
    """Token -> emotion-class map; duplicates resolved last-wins."""

    entries: dict[str, int] = field(default_factory=dict)
    duplicates: int = 0

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, token: str) -> bool:
        return token in self.entries

    def get(self, token: str) -> int | None:
        return self.entries.get(token)

    def class_counts(self) -> list[int]:
        counts = [0] * NUM_EMOTIONS
        for cls in self.entries.values():
            counts[cls] += 1
        return counts


def load_danmus(path) -> list[VideoRecord]:
    """Parse danmus.jsonl into VideoRecords grouped by id, sorted by offset.

    duration is taken as the max observed offset (the file carries none).
    """
    by_video: dict[str, list[DanmuEvent]] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"line {lineno}: invalid JSON ({e.msg})")
            if not isinstance(rec, dict):
                raise ParseError(f"line {lineno}: expected a JSON object")
            try:
                video_id = rec["video_id"]
                offset = rec["offset"]
                text = rec["text"]
            except KeyError as e:
                raise ParseError(f"line {lineno}: missing field {e.args[0]!r}")
            if not isinstance(video_id, str) or not video_id:
                raise ParseError(f"line {lineno}: video_id must be a non-empty string")
            if isinstance(offset, bool) or not isinstance(offset, (int, float)):
                raise ParseError(f"line {lineno}: offset must be a number")
            offset = float(offset)
            if not math.isfinite(offset) or offset < 0.0:
                raise InvalidInput(f"line {lineno}: offset must be finite and >= 0")
            if not isinstance(text, str) or not text.split():
                raise ParseError(f"line {lineno}: text empty after tokenization")
            by_video.setdefault(video_id, []).append(
                DanmuEvent(video_id, offset, " ".join(text.split()))
            )
    records = []
    for video_id in sorted(by_video):
        danmus = sorted(by_video[video_id], key=lambda d: d.offset)
        records.append(
            VideoRecord(video_id=video_id,
                        duration=danmus[-1].offset if danmus else 0.0,
                        danmus=danmus)
        )
    return records


def save_danmus(records: list[VideoRecord], path) -> None:
    """Canonical serialization: sorted records, offsets with 6 decimals."""
    events = [d for rec in records for d in rec.danmus]
    events.sort(key=lambda d: (d.video_id, d.offset, d.text))
    with open(path, "w", encoding="utf-8") as f:
        for d in events:
            f.write('{"video_id": %s, "offset": %.6f, "text": %s}\n'
                    % (json.dumps(d.video_id, ensure_ascii=False), d.offset,
                       json.dumps(d.text, ensure_ascii=False)))


def load_lexicon(path) -> EmotionLexicon:
    """Parse lexicon.csv; duplicate tokens are last-wins, counted as warnings."""
    lex = EmotionLexicon()
    with open(path, "r", encoding="utf-8", newline="") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(f"line {lineno}: expected token,emotion")
            token, emotion = row[0].strip(), row[1].strip()
            if not token:
                raise ParseError(f"line {lineno}: empty token")
            cls = emotion_index(emotion, where=f"line {lineno}: ")
            if token in lex.entries:
                lex.duplicates += 1
            lex.entries[token] = cls
    return lex


def load_labels(path) -> dict[str, int]:
    """Parse labels.csv into a video_id -> emotion-class map."""
    labels: dict[str, int] = {}
    with open(path, "r", encoding="utf-8", newline="") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(f"line {lineno}: expected video_id,emotion")
            video_id, emotion = row[0].strip(), row[1].strip()
            if not video_id:
                raise ParseError(f"line {lineno}: empty video_id")
            labels[video_id] = emotion_index(emotion, where=f"line {lineno}: ")
    return labels


def class_histogram(labels: dict[str, int]) -> list[int]:
    counts = [0] * NUM_EMOTIONS
    for cls in labels.values():
        counts[cls] += 1
    return counts
