from collections import Counter

import pytest

from dcvdn.corpus import load_danmus, load_labels, load_lexicon
from dcvdn.errors import InvalidInput
from dcvdn.synth import DURATION, synth_corpus


class TestSynthCorpus:
    def test_byte_identical_for_same_seed(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        synth_corpus(a, num_videos=21, danmus_per_video=8, seed=4)
        synth_corpus(b, num_videos=21, danmus_per_video=8, seed=4)
        for name in ("danmus.jsonl", "labels.csv", "lexicon.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_seed_changes_danmus(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        synth_corpus(a, num_videos=14, danmus_per_video=5, seed=1)
        synth_corpus(b, num_videos=14, danmus_per_video=5, seed=2)
        assert (a / "danmus.jsonl").read_bytes() != (b / "danmus.jsonl").read_bytes()

    def test_class_histogram_balanced(self, tmp_path):
        synth_corpus(tmp_path, num_videos=72, danmus_per_video=3, seed=0)
        labels = load_labels(tmp_path / "labels.csv")
        counts = Counter(labels.values())
        assert max(counts.values()) - min(counts.values()) <= 1

    def test_majority_baseline_near_chance(self, tmp_path):
        synth_corpus(tmp_path, num_videos=70, danmus_per_video=3, seed=0)
        labels = load_labels(tmp_path / "labels.csv")
        counts = Counter(labels.values())
        majority = max(counts.values()) / len(labels)
        assert abs(majority - 1.0 / 7.0) <= 0.03

    def test_outputs_loadable_and_in_range(self, tmp_path):
        synth_corpus(tmp_path, num_videos=14, danmus_per_video=9, seed=3)
        records = load_danmus(tmp_path / "danmus.jsonl")
        assert len(records) == 14
        for rec in records:
            assert len(rec.danmus) == 9
            assert all(0.0 <= d.offset <= DURATION for d in rec.danmus)
        lexicon = load_lexicon(tmp_path / "lexicon.csv")
        assert len(lexicon) == 7 * 200
        assert lexicon.duplicates == 0

    def test_too_few_videos_rejected(self, tmp_path):
        with pytest.raises(InvalidInput):
            synth_corpus(tmp_path, num_videos=13, danmus_per_video=5, seed=0)
