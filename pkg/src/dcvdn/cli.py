"""Command-line entry point.

    dcvdn <subcommand> [--config cfg.json] [--workdir DIR] [--seed N]
                       [--synth-features] [--set key=value ...]

Subcommands: synth, cluster, elda, ewe, embed-docs, align, dccae, classify,
eval, predict, pipeline. Config is a flat JSON object; every CLI flag
overrides the corresponding config key. Exit codes: 0 success, 2 validation
error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import DcvdnError, InvalidInput, ValidationError
from .pipeline import (PipelineConfig, run_pipeline, stage_align,
                       stage_classify, stage_cluster, stage_dccae, stage_elda,
                       stage_embed_docs, stage_eval, stage_ewe, stage_predict)
from .synth import synth_corpus

STAGE_COMMANDS = {
    "cluster": stage_cluster,
    "elda": stage_elda,
    "ewe": stage_ewe,
    "embed-docs": stage_embed_docs,
    "align": stage_align,
    "dccae": stage_dccae,
    "classify": stage_classify,
    "eval": stage_eval,
    "predict": stage_predict,
}


def _parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise InvalidInput(f"--set expects key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings allowed without quoting
    return key.strip(), value


def build_config(args) -> PipelineConfig:
    mapping: dict = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as f:
            loaded = json.load(f)
        if not isinstance(loaded, dict):
            raise InvalidInput("config file must hold a flat JSON object")
        mapping.update(loaded)
    for flag in ("workdir", "seed", "danmus", "labels", "lexicon", "features"):
        value = getattr(args, flag, None)
        if value is not None:
            mapping[flag] = value
    if getattr(args, "synth_features", False):
        mapping["synth_features"] = True
    if getattr(args, "abs_recon", False):
        mapping["dccae_recon"] = "abs"
    for item in getattr(args, "set", None) or []:
        key, value = _parse_override(item)
        mapping[key] = value
    return PipelineConfig.from_mapping(mapping)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat JSON config file")
    p.add_argument("--workdir", help="directory for inputs/outputs (default .)")
    p.add_argument("--seed", type=int, help="global seed")
    p.add_argument("--danmus", help="danmus.jsonl path override")
    p.add_argument("--labels", help="labels.csv path override")
    p.add_argument("--lexicon", help="lexicon.csv path override")
    p.add_argument("--features", help="features.jsonl path override")
    p.add_argument("--synth-features", action="store_true",
                   help="generate deterministic synthetic visual features")
    p.add_argument("--abs-recon", action="store_true",
                   help="train fusion with unsquared reconstruction norms")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config key (repeatable)")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcvdn", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a planted-signal corpus")
    synth.add_argument("--videos", type=int, default=70)
    synth.add_argument("--danmus-per-video", type=int, default=30)
    _add_common(synth)

    for name in list(STAGE_COMMANDS) + ["pipeline"]:
        p = sub.add_parser(name)
        _add_common(p)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        if args.command == "synth":
            paths = synth_corpus(cfg.workdir, num_videos=args.videos,
                                 danmus_per_video=args.danmus_per_video,
                                 seed=cfg.seed)
            for p in paths:
                print(p)
        elif args.command == "pipeline":
            metrics = run_pipeline(cfg)
            print(json.dumps(metrics, indent=2, sort_keys=True))
        else:
            result = STAGE_COMMANDS[args.command](cfg)
            if args.command == "eval" and result is not None:
                print(json.dumps(result, indent=2, sort_keys=True))
    except ValidationError as e:
        print(f"dcvdn: validation error: {e}", file=sys.stderr)
        return 2
    except DcvdnError as e:
        print(f"dcvdn: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
