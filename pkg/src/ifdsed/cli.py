"""Command line entry point: generate, train, evaluate, ablate."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import corpus
from .config import ConfigError, RunConfig, load_config
from .trainer import (SYSTEMS, TrainingAborted, checkpoint_hash, evaluate, load_checkpoint, load_clipset,
                      load_dataset, reports_csv, reports_json, run_ablation, run_experiment, system_config)

log = logging.getLogger("ifdsed")


class CommandError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


def _config(path: str | None, seed: int | None = None) -> RunConfig:
    try:
        cfg = load_config(path)
    except ConfigError as exc:
        raise CommandError(f"invalid config: {exc}", 2) from exc
    except FileNotFoundError as exc:
        raise CommandError(f"config not found: {path}", 2) from exc
    if seed is not None:
        cfg = cfg.replace(train=dataclasses.replace(cfg.train, seed=seed))
    return cfg


def _manifest(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CommandError(f"manifest not found: {path}", 2)
    return p


def cmd_generate(args) -> None:
    cfg = _config(args.config)
    out = Path(args.out)
    try:
        records = corpus.generate_corpus(cfg.corpus, out)
    except OSError as exc:
        raise CommandError(f"cannot write corpus to {out}: {exc}") from exc
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    manifest = out / "manifest.jsonl"
    if len(corpus.load_manifest(manifest)) != len(records):
        raise CommandError("manifest did not parse back")
    print(f"manifest: {manifest}")
    print(json.dumps(corpus.corpus_stats(records, cfg.corpus.num_classes), indent=2))


def _check_run_dir(out: Path) -> None:
    for name in ("config.json", "checkpoint.pt", "loss_log.csv", "step_log.csv", "report.json", "report.csv"):
        if not (out / name).is_file():
            raise CommandError(f"missing artifact {out / name}")
    json.loads((out / "report.json").read_text())
    checkpoint_hash(out / "checkpoint.pt")


def cmd_train(args) -> None:
    cfg = system_config(_config(args.config, args.seed), args.system)
    manifest = _manifest(args.manifest)
    out = Path(args.out)
    try:
        result = run_experiment(manifest, cfg, out)
    except TrainingAborted as exc:
        raise CommandError(f"training aborted: {exc}") from exc
    except (corpus.ManifestError, ValueError) as exc:
        raise CommandError(f"bad manifest: {exc}") from exc
    _check_run_dir(out)
    for name, rep in result.reports.items():
        print(f"{name}: event F1 {rep.event_macro_f1:.4f}  tagging F1 {rep.tagging_macro_f1:.4f}")
    print(f"run directory: {out}")


def cmd_evaluate(args) -> None:
    manifest = _manifest(args.manifest)
    model, cfg = load_checkpoint(args.checkpoint)
    if args.config is not None:
        requested = _config(args.config)
        if requested.model_hash() != cfg.model_hash():
            raise CommandError(
                f"config hash {requested.model_hash()} does not match checkpoint hash {cfg.model_hash()}: "
                "feature, model or class settings differ from the ones the checkpoint was trained with")
        cfg = cfg.replace(eval=requested.eval)
    domain, _, split = args.split.partition("_")
    records = corpus.select(corpus.load_manifest(manifest), domain, split)
    if not records:
        raise CommandError(f"manifest has no {domain}/{split} clips")
    try:
        clips = load_clipset(records, manifest.parent, cfg)
    except ValueError as exc:
        raise CommandError(f"manifest incompatible with checkpoint: {exc}") from exc
    reports = {args.split: evaluate(model, clips, cfg.eval)}
    text = reports_json(reports, cfg)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"report_{args.split}.json").write_text(text)
        (out / f"report_{args.split}.csv").write_text(reports_csv(reports))
        json.loads((out / f"report_{args.split}.json").read_text())
    print(text, end="")


def cmd_ablate(args) -> None:
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError as exc:
        raise CommandError(f"--seeds must be comma-separated integers: {args.seeds}", 2) from exc
    if len(seeds) < 2:
        raise CommandError("--seeds needs at least 2 seeds", 2)
    cfg = _config(args.config)
    manifest = _manifest(args.manifest)
    out = Path(args.out)
    try:
        data = load_dataset(manifest, cfg)
    except (corpus.ManifestError, ValueError) as exc:
        raise CommandError(f"bad manifest: {exc}") from exc
    try:
        table = run_ablation(data, cfg, seeds, out)
    except RuntimeError as exc:
        raise CommandError(str(exc)) from exc
    for system in SYSTEMS:
        for seed in seeds:
            _check_run_dir(out / system / f"seed_{seed}")
    print(table.format())
    print(f"table: {out / 'ablation.csv'}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ifdsed", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize the two-domain corpus")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train and evaluate one system")
    p.add_argument("--config")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--system", choices=list(SYSTEMS), default="sedb_ifd")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on one test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", choices=["real_test", "synthetic_test"], default="real_test")
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="run all four systems over several seeds")
    p.add_argument("--config")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    return 0


if __name__ == "__main__":
    sys.exit(main())
