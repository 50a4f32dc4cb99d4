"""Joint training on weakly-labelled real clips and strongly-labelled synthetic clips."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from . import corpus
from .config import EvalConfig, RunConfig, config_from_dict
from .features import extract_logmel
from .ifd import ifd_loss, make_pseudo_labels, sample_frame_pairs
from .metrics import EvalReport, event_based_macro_f1, frames_to_events, post_process, tagging_counts
from .model import SEDModel, build_model, sedb_loss, weak_loss

logger = logging.getLogger(__name__)

# CLI name -> (display name, enable_ifd, enable_sedb)
SYSTEMS = {
    "baseline": ("baseline", False, False),
    "ifd": ("IFD", True, False),
    "sedb": ("SEDB", False, True),
    "sedb_ifd": ("SEDB&IFD", True, True),
}
EVAL_SPLITS = (("real", "test"), ("synthetic", "test"))
LOSS_FIELDS = ("weak_real", "weak_syn", "ifd", "sedb", "total")


class TrainingAborted(RuntimeError):
    pass


@dataclass
class ClipSet:
    """Features and labels of one (domain, split) slice of a manifest."""

    clip_ids: list[str]
    features: np.ndarray  # (N, T, F) float32
    weak: np.ndarray  # (N, C)
    frame_labels: np.ndarray | None  # (N, T, C), None for weakly-labelled clips
    events: list[list[corpus.EventAnnotation]] | None
    frame_rate: float

    def __len__(self) -> int:
        return len(self.clip_ids)


def load_clipset(records: Sequence[corpus.ClipRecord], root: Path, config: RunConfig) -> ClipSet:
    fcfg = config.features
    num_classes = config.corpus.num_classes
    feats, weak, frames, events = [], [], [], []
    strong = all(r.events is not None for r in records)
    n_frames = None
    for r in records:
        waveform, sr = corpus.read_wav(root / r.audio_path)
        if sr != fcfg.sample_rate:
            raise ValueError(f"{r.clip_id}: audio is {sr} Hz but features.sample_rate is {fcfg.sample_rate}")
        fm = extract_logmel(waveform, fcfg, r.clip_id)
        if n_frames is None:
            n_frames = fm.values.shape[0]
        elif fm.values.shape[0] != n_frames:
            raise ValueError(f"{r.clip_id}: {fm.values.shape[0]} frames, expected {n_frames}")
        if any(c >= num_classes for c in r.weak_labels):
            raise ValueError(f"{r.clip_id}: class id exceeds corpus.num_classes={num_classes}")
        feats.append(fm.values.astype(np.float32))
        weak.append(corpus.weak_vector(r.weak_labels, num_classes))
        if strong:
            events.append(list(r.events))
            frames.append(corpus.events_to_frame_labels(r.events, fcfg.frame_rate, n_frames, num_classes))
    n_frames = n_frames or 0
    return ClipSet(
        clip_ids=[r.clip_id for r in records],
        features=np.stack(feats) if feats else np.zeros((0, n_frames, fcfg.n_mels), np.float32),
        weak=np.stack(weak) if weak else np.zeros((0, num_classes), np.float32),
        frame_labels=np.stack(frames) if strong and frames else None,
        events=events if strong else None,
        frame_rate=fcfg.frame_rate,
    )


def load_dataset(manifest_path: str | Path, config: RunConfig) -> dict[tuple[str, str], ClipSet]:
    """All four (domain, split) slices of a manifest as feature arrays."""
    manifest_path = Path(manifest_path)
    records = corpus.load_manifest(manifest_path)
    data = {}
    for domain in corpus.DOMAINS:
        for split in corpus.SPLITS:
            data[domain, split] = load_clipset(corpus.select(records, domain, split), manifest_path.parent, config)
    for key in (("synthetic", "train"), ("real", "train")):
        if len(data[key]) == 0:
            raise corpus.ManifestError(f"manifest has no {key[0]}/{key[1]} clips")
    return data


@dataclass
class LossBreakdown:
    weak_real: float
    weak_syn: float
    ifd: float
    sedb: float
    total: float

    def as_row(self) -> list[float]:
        return [getattr(self, f) for f in LOSS_FIELDS]


def compute_losses(
    model: SEDModel,
    real_x: torch.Tensor,
    real_weak: torch.Tensor,
    syn_x: torch.Tensor,
    syn_weak: torch.Tensor,
    syn_frames: torch.Tensor,
    config: RunConfig,
    use_ifd: bool,
    generator: torch.Generator | None = None,
) -> dict[str, torch.Tensor]:
    """Branch losses for one mixed batch; both domains share one encoder pass."""
    tc = config.train
    n_real = len(real_x)
    out = model(torch.cat([real_x, syn_x]))
    clip_probs = out["clip_probs"]
    zero = clip_probs.sum() * 0.0
    losses = {
        "weak_real": weak_loss(clip_probs[:n_real], real_weak),
        "weak_syn": weak_loss(clip_probs[n_real:], syn_weak),
        "ifd": zero,
        "sedb": zero,
    }
    if tc.enable_sedb:
        losses["sedb"] = sedb_loss(out["sedb_probs"][n_real:], syn_frames)
    if use_ifd:
        pseudo = make_pseudo_labels(out["frame_probs"][:n_real], real_weak, config.ifd.pseudo_threshold)
        weak = torch.cat([real_weak, syn_weak])
        frame_labels = torch.cat([pseudo, syn_frames])
        pairs = sample_frame_pairs(weak, frame_labels, config.ifd.include_silence_positives)
        losses["ifd"] = ifd_loss(out["domain"], pairs, config.ifd, generator=generator)
    losses["total"] = (
        tc.lambda_weak_real * losses["weak_real"]
        + tc.lambda_weak_syn * losses["weak_syn"]
        + tc.lambda_ifd * losses["ifd"]
        + tc.lambda_sedb * losses["sedb"]
    )
    return losses


def ifd_active(config: RunConfig, epoch: int) -> bool:
    return config.train.enable_ifd and epoch >= config.ifd.warmup_epochs


def train_step(
    model: SEDModel,
    optimizer: torch.optim.Optimizer,
    real_batch: tuple[torch.Tensor, torch.Tensor],
    syn_batch: tuple[torch.Tensor, torch.Tensor, torch.Tensor],
    config: RunConfig,
    epoch: int,
    generator: torch.Generator | None = None,
) -> LossBreakdown:
    """One optimizer step on the weighted sum of the enabled branch losses."""
    model.train()
    optimizer.zero_grad()
    losses = compute_losses(model, *real_batch, *syn_batch, config, ifd_active(config, epoch), generator)
    values = {k: float(v.detach()) for k, v in losses.items() if k != "total"}
    if not all(math.isfinite(v) for v in values.values()):
        raise TrainingAborted(f"non-finite loss at epoch {epoch}: {values}")
    losses["total"].backward()
    optimizer.step()
    tc = config.train
    total = (tc.lambda_weak_real * values["weak_real"] + tc.lambda_weak_syn * values["weak_syn"]
             + tc.lambda_ifd * values["ifd"] + tc.lambda_sedb * values["sedb"])
    return LossBreakdown(total=total, **values)


def epoch_batches(n_real: int, n_syn: int, batch_size: int, rng: np.random.Generator):
    """Index batches pairing s real with s synthetic clips; the shorter domain is cycled."""
    n_steps = max(max(n_real, n_syn) // batch_size, 1)

    def stream(n):
        need = n_steps * batch_size
        reps = -(-need // n)
        return np.concatenate([rng.permutation(n) for _ in range(reps)])[:need]

    real_idx, syn_idx = stream(n_real), stream(n_syn)
    for k in range(n_steps):
        sl = slice(k * batch_size, (k + 1) * batch_size)
        yield real_idx[sl], syn_idx[sl]


@torch.no_grad()
def predict(model: SEDModel, features: np.ndarray, batch_size: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Inference-mode (clip_probs, frame_probs) from the attention-pooling head."""
    model.eval()
    dtype = next(model.parameters()).dtype
    clip, frame = [], []
    for start in range(0, len(features), batch_size):
        x = torch.as_tensor(features[start:start + batch_size], dtype=dtype)
        c, f, _ = model.attention_pool(model.encode(x))
        clip.append(c.numpy())
        frame.append(f.numpy())
    if not clip:
        return np.zeros((0, model.num_classes)), np.zeros((0, features.shape[1], model.num_classes))
    return np.concatenate(clip), np.concatenate(frame)


def evaluate(model: SEDModel, clips: ClipSet, eval_config: EvalConfig) -> EvalReport:
    if clips.events is None:
        raise ValueError("evaluation needs strongly-labelled clips")
    clip_probs, frame_probs = predict(model, clips.features)
    predictions = {cid: frames_to_events(post_process(fp, eval_config), clips.frame_rate)
                   for cid, fp in zip(clips.clip_ids, frame_probs)}
    references = dict(zip(clips.clip_ids, clips.events))
    report = event_based_macro_f1(predictions, references, model.num_classes, eval_config)
    report.tagging = tagging_counts(clip_probs, clips.weak, eval_config.decision_threshold)
    report.extra["num_clips"] = len(clips)
    return report


def save_checkpoint(path: str | Path, model: SEDModel, config: RunConfig) -> None:
    torch.save({"state_dict": model.state_dict(), "model_hash": config.model_hash(), "config": config.to_dict()}, path)


def load_checkpoint(path: str | Path) -> tuple[SEDModel, RunConfig]:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    config = config_from_dict(blob["config"])
    if config.model_hash() != blob["model_hash"]:
        raise ValueError(f"{path}: stored config does not match its model hash")
    model = SEDModel(config.features.n_mels, config.corpus.num_classes, config.model)
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model, config


def checkpoint_hash(path: str | Path) -> str:
    return torch.load(path, map_location="cpu", weights_only=True)["model_hash"]


@dataclass
class ExperimentResult:
    model: SEDModel
    reports: dict[str, EvalReport]
    step_log: list[tuple[int, int, LossBreakdown]] = field(default_factory=list)
    epoch_log: list[tuple[int, LossBreakdown]] = field(default_factory=list)


def _mean_breakdown(rows: list[LossBreakdown]) -> LossBreakdown:
    return LossBreakdown(*(float(np.mean([getattr(r, f) for r in rows])) for f in LOSS_FIELDS))


def run_experiment(
    data: dict[tuple[str, str], ClipSet] | str | Path,
    config: RunConfig,
    out_dir: str | Path | None = None,
) -> ExperimentResult:
    """Train for ``config.train.epochs`` and evaluate on both test splits.

    ``data`` is either a manifest path or the output of :func:`load_dataset`.
    With ``out_dir`` the run directory gets config.json, checkpoint.pt,
    loss_log.csv (per epoch), step_log.csv and report.json / report.csv.
    """
    config.validate()
    if not isinstance(data, dict):
        data = load_dataset(data, config)
    tc = config.train
    real, syn = data["real", "train"], data["synthetic", "train"]
    if syn.frame_labels is None:
        raise corpus.ManifestError("synthetic training clips must carry events")

    torch.manual_seed(tc.seed)
    rng = np.random.default_rng(tc.seed)
    ifd_gen = torch.Generator().manual_seed(tc.seed)
    model = build_model(config.features.n_mels, config.corpus.num_classes, config.model, tc.seed)
    train_feats = np.concatenate([real.features, syn.features]).reshape(-1, config.features.n_mels)
    model.set_normalization(train_feats.mean(axis=0), train_feats.std(axis=0))
    optimizer = torch.optim.Adam(model.parameters(), lr=tc.learning_rate)

    real_x, real_w = torch.from_numpy(real.features), torch.from_numpy(real.weak)
    syn_x, syn_w = torch.from_numpy(syn.features), torch.from_numpy(syn.weak)
    syn_f = torch.from_numpy(syn.frame_labels)

    result = ExperimentResult(model, {})
    step = 0
    for epoch in range(tc.epochs):
        rows = []
        for ri, si in epoch_batches(len(real), len(syn), tc.batch_size, rng):
            ri, si = torch.from_numpy(ri), torch.from_numpy(si)
            lb = train_step(model, optimizer, (real_x[ri], real_w[ri]), (syn_x[si], syn_w[si], syn_f[si]),
                            config, epoch, ifd_gen)
            result.step_log.append((epoch, step, lb))
            rows.append(lb)
            step += 1
        result.epoch_log.append((epoch, _mean_breakdown(rows)))
        logger.info("epoch %d: %s", epoch, result.epoch_log[-1][1])
        if tc.eval_every and (epoch + 1) % tc.eval_every == 0 and len(data["real", "test"]):
            rep = evaluate(model, data["real", "test"], config.eval)
            logger.info("epoch %d real/test event F1 %.4f", epoch, rep.event_macro_f1)

    for domain, split in EVAL_SPLITS:
        clips = data[domain, split]
        if len(clips):
            result.reports[f"{domain}_{split}"] = evaluate(model, clips, config.eval)

    if out_dir is not None:
        write_run_dir(Path(out_dir), result, config)
    return result


def _loss_csv(rows, header) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([*row[:-1], *(repr(v) for v in row[-1].as_row())])
    return buf.getvalue()


def reports_json(reports: dict[str, EvalReport], config: RunConfig) -> str:
    payload = {
        "model_hash": config.model_hash(),
        "loss_weights": {k: getattr(config.train, k) for k in
                         ("lambda_weak_real", "lambda_weak_syn", "lambda_ifd", "lambda_sedb")},
        "enable_ifd": config.train.enable_ifd,
        "enable_sedb": config.train.enable_sedb,
        "seed": config.train.seed,
        "reports": {name: rep.to_dict() for name, rep in reports.items()},
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def reports_csv(reports: dict[str, EvalReport]) -> str:
    chunks = []
    for name, rep in reports.items():
        lines = rep.to_csv().splitlines()
        if not chunks:
            chunks.append("split," + lines[0])
        chunks.extend(f"{name},{line}" for line in lines[1:])
    return "\n".join(chunks) + "\n"


def write_run_dir(out_dir: Path, result: ExperimentResult, config: RunConfig) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    save_checkpoint(out_dir / "checkpoint.pt", result.model, config)
    (out_dir / "loss_log.csv").write_text(_loss_csv(result.epoch_log, ("epoch",) + LOSS_FIELDS))
    (out_dir / "step_log.csv").write_text(_loss_csv(result.step_log, ("epoch", "step") + LOSS_FIELDS))
    (out_dir / "report.json").write_text(reports_json(result.reports, config))
    (out_dir / "report.csv").write_text(reports_csv(result.reports))


def system_config(config: RunConfig, system: str, seed: int | None = None) -> RunConfig:
    _, enable_ifd, enable_sedb = SYSTEMS[system]
    train = dataclasses.replace(config.train, enable_ifd=enable_ifd, enable_sedb=enable_sedb)
    if seed is not None:
        train = dataclasses.replace(train, seed=seed)
    return config.replace(train=train)


@dataclass
class AblationTable:
    """Per (system, split, metric): per-seed values, mean and sample std."""

    seeds: list[int]
    values: dict[tuple[str, str, str], list[float]]

    METRICS = ("event_f1", "tagging_f1")

    def cells(self) -> list[dict]:
        rows = []
        for (system, split, metric), vals in self.values.items():
            arr = np.asarray(vals, dtype=np.float64)
            std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
            rows.append({"system": system, "split": split, "metric": metric,
                         "mean": float(arr.mean()), "std": std, "values": arr.tolist()})
        return rows

    def mean(self, system: str, split: str = "real_test", metric: str = "event_f1") -> float:
        return float(np.mean(self.values[system, split, metric]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["system", "split", "metric", "mean", "std"])
        for row in self.cells():
            writer.writerow([row["system"], row["split"], row["metric"], f"{row['mean']:.6f}", f"{row['std']:.6f}"])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"seeds": self.seeds, "cells": self.cells()}, indent=2) + "\n"

    def format(self) -> str:
        splits = sorted({k[1] for k in self.values})
        systems = list(dict.fromkeys(k[0] for k in self.values))
        lines = []
        for metric, title in (("event_f1", "Event-based macro F1"), ("tagging_f1", "Audio tagging macro F1")):
            lines.append(f"{title} (mean ± std over {len(self.seeds)} seeds)")
            lines.append(f"{'Model':<10}" + "".join(f"{s:>22}" for s in splits))
            for system in systems:
                cells = []
                for split in splits:
                    vals = np.asarray(self.values[system, split, metric])
                    std = vals.std(ddof=1) if len(vals) > 1 else 0.0
                    cells.append(f"{vals.mean():.3f} ± {std:.4f}")
                lines.append(f"{system:<10}" + "".join(f"{c:>22}" for c in cells))
            lines.append("")
        return "\n".join(lines)


def run_ablation(
    data: dict[tuple[str, str], ClipSet] | str | Path,
    base_config: RunConfig,
    seeds: Sequence[int],
    out_dir: str | Path | None = None,
    systems: Sequence[str] = tuple(SYSTEMS),
) -> AblationTable:
    """Train every system once per seed and tabulate test-split F1 scores."""
    if len(seeds) < 2:
        raise ValueError("an ablation needs at least 2 seeds")
    if not isinstance(data, dict):
        data = load_dataset(data, base_config)
    values: dict[tuple[str, str, str], list[float]] = {}
    for system in systems:
        display = SYSTEMS[system][0]
        for seed in seeds:
            cfg = system_config(base_config, system, seed)
            run_dir = None if out_dir is None else Path(out_dir) / system / f"seed_{seed}"
            try:
                result = run_experiment(data, cfg, run_dir)
            except Exception as exc:
                raise RuntimeError(f"system {system}, seed {seed} failed: {exc}") from exc
            for split, rep in result.reports.items():
                values.setdefault((display, split, "event_f1"), []).append(rep.event_macro_f1)
                values.setdefault((display, split, "tagging_f1"), []).append(rep.tagging_macro_f1)
            logger.info("%s seed %d: %s", display, seed,
                        {k: round(v.event_macro_f1, 4) for k, v in result.reports.items()})
    table = AblationTable(list(seeds), values)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.csv").write_text(table.to_csv())
        (out / "ablation.json").write_text(table.to_json())
    return table
