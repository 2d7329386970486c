import json
import subprocess
import sys

import pytest

from dcvdn.cli import main
from dcvdn.synth import synth_corpus

TINY_CONFIG = dict(seed=3, k=10, elda_alpha=0.5, elda_iters=60, elda_burn_in=30,
                   elda_sample_lag=10, elda_ke=8, ewe_epochs=1, dccae_epochs=2,
                   dccae_batch=80, dccae_l=8, dccae_hidden=16, clf_epochs=10,
                   clf_patience=3)


def write_config(tmp_path, **overrides):
    cfg = dict(TINY_CONFIG, workdir=str(tmp_path))
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


class TestSynthCommand:
    def test_writes_corpus(self, tmp_path, capsys):
        rc = main(["synth", "--workdir", str(tmp_path), "--videos", "14",
                   "--danmus-per-video", "4", "--seed", "7"])
        assert rc == 0
        for name in ("danmus.jsonl", "labels.csv", "lexicon.csv"):
            assert (tmp_path / name).exists()


class TestPipelineCommand:
    def test_full_run_with_config_and_overrides(self, tmp_path, capsys):
        synth_corpus(tmp_path, num_videos=14, danmus_per_video=6, seed=3)
        cfg_path = write_config(tmp_path)
        rc = main(["pipeline", "--config", str(cfg_path), "--synth-features",
                   "--set", "elda_iters=50"])
        assert rc == 0
        out = capsys.readouterr().out
        metrics = json.loads(out)
        assert "accuracy" in metrics
        assert (tmp_path / "metrics.json").exists()

    def test_missing_features_exits_2(self, tmp_path, capsys):
        synth_corpus(tmp_path, num_videos=14, danmus_per_video=4, seed=1)
        cfg_path = write_config(tmp_path)
        rc = main(["pipeline", "--config", str(cfg_path)])
        assert rc == 2
        assert "align" in capsys.readouterr().err

    def test_unknown_config_key_exits_2(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path)
        rc = main(["cluster", "--config", str(cfg_path), "--set", "bogus=1"])
        assert rc == 2
        assert "bogus" in capsys.readouterr().err

    def test_missing_input_exits_2(self, tmp_path, capsys):
        rc = main(["cluster", "--workdir", str(tmp_path)])
        assert rc == 2

    def test_stage_sequence_matches_pipeline(self, tmp_path, capsys):
        synth_corpus(tmp_path, num_videos=14, danmus_per_video=6, seed=3)
        cfg_path = write_config(tmp_path)
        for cmd in ("cluster", "elda", "ewe", "embed-docs", "align", "dccae",
                    "classify", "eval"):
            rc = main([cmd, "--config", str(cfg_path), "--synth-features"])
            assert rc == 0, cmd
        assert (tmp_path / "metrics.json").exists()
        capsys.readouterr()
        rc = main(["predict", "--config", str(cfg_path), "--synth-features"])
        assert rc == 0
        assert (tmp_path / "predictions.jsonl").exists()


class TestOverrides:
    def test_abs_recon_flag(self, tmp_path):
        from dcvdn.cli import build_config, make_parser
        args = make_parser().parse_args(
            ["dccae", "--workdir", str(tmp_path), "--abs-recon"])
        assert build_config(args).dccae_recon == "abs"

    def test_set_parses_json_values(self, tmp_path):
        synth_corpus(tmp_path, num_videos=14, danmus_per_video=4, seed=2)
        rc = main(["cluster", "--workdir", str(tmp_path), "--set", "k=3"])
        assert rc == 0
        lines = (tmp_path / "clusters.jsonl").read_text().splitlines()
        assert len(lines) == 14 * 3

    def test_malformed_set_exits_2(self, tmp_path, capsys):
        rc = main(["cluster", "--workdir", str(tmp_path), "--set", "k3"])
        assert rc == 2


class TestConsoleEntry:
    def test_module_invocation(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "dcvdn.cli", "synth", "--workdir",
             str(tmp_path), "--videos", "14", "--danmus-per-video", "3"],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "danmus.jsonl").exists()

    def test_usage_error(self):
        proc = subprocess.run([sys.executable, "-m", "dcvdn.cli"],
                              capture_output=True, text=True)
        assert proc.returncode == 2
