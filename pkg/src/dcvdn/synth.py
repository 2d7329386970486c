"""Planted-signal synthetic corpus generator.

The generation process is fully documented here because the tests reason
about what must be recoverable from it. A video's class influences exactly
three things:

- Lexicon usage (a): each class owns `lex_words` word types plus
  `lex_emoticons` emoticon types, all mapped to the class in lexicon.csv.
  Tokens are drawn from the video's own class lexicon with probability
  `p_lex` (the elevated rate) and from a random other class with `p_lex_noise`.
  The per-class type count is deliberately large, so each individual lexicon
  token is rare: lexicon evidence is strong for a lexicon-clamped model but
  thin at the word-identity level (rare types fall under embedding
  min-count), mirroring how emoticons behave in real danmu streams.
- Burst timing (b): each class has three characteristic burst centers;
  offsets are normal around a uniformly chosen center, clipped to the video
  length.
- Visual features (c): when the pipeline runs with synthetic features, frame
  vectors get a class mean shift (see visual.synth_features).

Everything else is class-neutral: non-lexicon tokens come from one shared
content pool with identical distribution for every class, so document
content words carry no class signal of their own. Labels are assigned
round-robin, so the histogram is balanced within one video and the majority
baseline sits at ~1/7.
"""

from __future__ import annotations

from pathlib import Path

from .corpus import EMOTIONS, NUM_EMOTIONS, DanmuEvent, VideoRecord, save_danmus
from .errors import InvalidInput
from .numkit import SeededRng

DURATION = 120.0


def _lexicon_tokens(lex_words: int, lex_emoticons: int) -> dict[int, list[str]]:
    return {
        cls: [f"lex_{EMOTIONS[cls]}_{i}" for i in range(lex_words)]
        + [f":{EMOTIONS[cls]}{i}:" for i in range(lex_emoticons)]
        for cls in range(NUM_EMOTIONS)
    }


def _burst_centers(cls: int) -> list[float]:
    return [(0.10 + 0.055 * cls) * DURATION,
            (0.42 + 0.045 * cls) * DURATION,
            (0.74 + 0.030 * cls) * DURATION]


def synth_corpus(outdir, num_videos: int = 70, danmus_per_video: int = 30,
                 seed: int = 0, lex_words: int = 150, lex_emoticons: int = 50,
                 shared_pool: int = 70, p_lex: float = 0.18,
                 p_lex_noise: float = 0.05):
    """Write danmus.jsonl, labels.csv, lexicon.csv into outdir.

    Returns the three paths. Byte-identical output for identical arguments.
    """
    if num_videos < 2 * NUM_EMOTIONS:
        raise InvalidInput(f"need at least {2 * NUM_EMOTIONS} videos "
                           f"(2 per class), got {num_videos}")
    if danmus_per_video < 1:
        raise InvalidInput("danmus_per_video must be >= 1")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rng = SeededRng(seed).spawn("synth-corpus")

    lexicon_tokens = _lexicon_tokens(lex_words, lex_emoticons)
    shared = [f"cw_{i}" for i in range(shared_pool)]

    records = []
    labels = []
    for v in range(num_videos):
        cls = v % NUM_EMOTIONS
        video_id = f"v{v:04d}"
        labels.append((video_id, EMOTIONS[cls]))
        centers = _burst_centers(cls)
        danmus = []
        for _ in range(danmus_per_video):
            center = centers[int(rng.integers(0, len(centers)))]
            offset = float(min(max(rng.normal(center, 0.02 * DURATION), 0.0),
                               DURATION))
            n_tokens = 3 + int(rng.integers(0, 4))
            tokens = []
            for _ in range(n_tokens):
                r = float(rng.random())
                if r < p_lex:
                    pool = lexicon_tokens[cls]
                elif r < p_lex + p_lex_noise:
                    other = (cls + 1 + int(rng.integers(0, NUM_EMOTIONS - 1))) \
                        % NUM_EMOTIONS
                    pool = lexicon_tokens[other]
                else:
                    pool = shared
                tokens.append(pool[int(rng.integers(0, len(pool)))])
            danmus.append(DanmuEvent(video_id, offset, " ".join(tokens)))
        danmus.sort(key=lambda d: d.offset)
        records.append(VideoRecord(video_id=video_id, duration=DURATION,
                                   danmus=danmus))

    danmus_path = outdir / "danmus.jsonl"
    labels_path = outdir / "labels.csv"
    lexicon_path = outdir / "lexicon.csv"
    save_danmus(records, danmus_path)
    with open(labels_path, "w", encoding="utf-8") as f:
        for video_id, name in labels:
            f.write(f"{video_id},{name}\n")
    with open(lexicon_path, "w", encoding="utf-8") as f:
        for cls in range(NUM_EMOTIONS):
            for token in lexicon_tokens[cls]:
                f.write(f"{token},{EMOTIONS[cls]}\n")
    return danmus_path, labels_path, lexicon_path
