"""Event-based and audio-tagging macro F1."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .config import EvalConfig
from .corpus import EventAnnotation

# boundary slack so that |1.2 - 1.0| <= 0.2 despite binary floating point
_TOL = 1e-9


def post_process(frame_probs: np.ndarray, config: EvalConfig = EvalConfig()) -> np.ndarray:
    """Binarise at the decision threshold, then median filter each class column.

    The window is truncated at the clip edges; a frame stays active when at
    least half of the frames in its (possibly truncated) window are active.
    """
    active = (np.asarray(frame_probs) >= config.decision_threshold).astype(np.int64)
    half = config.median_window // 2
    if half == 0:
        return active.astype(np.float32)
    n = active.shape[0]
    csum = np.concatenate([np.zeros((1, active.shape[1]), dtype=np.int64), np.cumsum(active, axis=0)])
    lo = np.clip(np.arange(n) - half, 0, n)
    hi = np.clip(np.arange(n) + half + 1, 0, n)
    ones = csum[hi] - csum[lo]
    return (2 * ones >= (hi - lo)[:, None]).astype(np.float32)


def frames_to_events(labels: np.ndarray, frame_rate: float) -> list[EventAnnotation]:
    """Each maximal run of ones in a class column becomes one event."""
    labels = np.asarray(labels) > 0
    events = []
    for c in range(labels.shape[1]):
        padded = np.concatenate([[False], labels[:, c], [False]])
        edges = np.flatnonzero(padded[1:] != padded[:-1])
        for start, stop in zip(edges[::2], edges[1::2]):
            events.append(EventAnnotation(c, float(start / frame_rate), float(stop / frame_rate)))
    events.sort(key=lambda e: (e.onset_s, e.class_id))
    return events


@dataclass
class F1Counts:
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray

    @classmethod
    def zeros(cls, num_classes: int) -> "F1Counts":
        z = lambda: np.zeros(num_classes, dtype=np.int64)  # noqa: E731
        return cls(z(), z(), z())

    @property
    def f1(self) -> np.ndarray:
        denom = 2 * self.tp + self.fp + self.fn
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(denom > 0, 2 * self.tp / np.maximum(denom, 1), 0.0)

    @property
    def macro_f1(self) -> float:
        return float(self.f1.mean())

    def to_dict(self) -> dict:
        return {
            "tp": self.tp.tolist(),
            "fp": self.fp.tolist(),
            "fn": self.fn.tolist(),
            "f1": self.f1.tolist(),
            "macro_f1": self.macro_f1,
        }


@dataclass
class EvalReport:
    event: F1Counts
    tagging: F1Counts | None = None
    extra: dict = field(default_factory=dict)

    @property
    def event_macro_f1(self) -> float:
        return self.event.macro_f1

    @property
    def tagging_macro_f1(self) -> float:
        return self.tagging.macro_f1 if self.tagging is not None else float("nan")

    def to_dict(self) -> dict:
        out = {
            "event_macro_f1": self.event_macro_f1,
            "tagging_macro_f1": self.tagging_macro_f1 if self.tagging is not None else None,
            "event": self.event.to_dict(),
            "tagging": self.tagging.to_dict() if self.tagging is not None else None,
        }
        out.update(self.extra)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["class", "event_tp", "event_fp", "event_fn", "event_f1", "tagging_tp", "tagging_fp", "tagging_fn", "tagging_f1"])
        tag = self.tagging
        for c in range(len(self.event.tp)):
            row = [c, self.event.tp[c], self.event.fp[c], self.event.fn[c], f"{self.event.f1[c]:.6f}"]
            row += [tag.tp[c], tag.fp[c], tag.fn[c], f"{tag.f1[c]:.6f}"] if tag is not None else ["", "", "", ""]
            writer.writerow(row)
        writer.writerow(["macro", "", "", "", f"{self.event_macro_f1:.6f}", "", "", "",
                         f"{self.tagging_macro_f1:.6f}" if tag is not None else ""])
        return buf.getvalue()


def match_events(predictions: Sequence[EventAnnotation], references: Sequence[EventAnnotation], config: EvalConfig) -> int:
    """Greedy one-to-one matching for a single class of a single clip; returns TP."""
    preds = sorted(predictions, key=lambda e: (e.onset_s, e.offset_s))
    used = [False] * len(preds)
    tp = 0
    for ref in sorted(references, key=lambda e: (e.onset_s, e.offset_s)):
        offset_collar = max(config.onset_collar_s, config.offset_collar_fraction * (ref.offset_s - ref.onset_s))
        for k, pred in enumerate(preds):
            if used[k]:
                continue
            if (abs(pred.onset_s - ref.onset_s) <= config.onset_collar_s + _TOL
                    and abs(pred.offset_s - ref.offset_s) <= offset_collar + _TOL):
                used[k] = True
                tp += 1
                break
    return tp


def event_based_macro_f1(
    predictions: Mapping[str, Sequence[EventAnnotation]],
    references: Mapping[str, Sequence[EventAnnotation]],
    num_classes: int,
    config: EvalConfig = EvalConfig(),
) -> EvalReport:
    """Collar-matched event F1 per class, pooled over clips, macro-averaged.

    An onset must lie within ``onset_collar_s`` of the reference onset and the
    offset within max(onset_collar_s, offset_collar_fraction * duration).
    Clips missing from ``predictions`` count as having no detections.
    """
    unknown = set(predictions) - set(references)
    if unknown:
        raise KeyError(f"predictions for unknown clip ids: {sorted(unknown)[:5]}")
    counts = F1Counts.zeros(num_classes)
    for clip_id, refs in references.items():
        preds = predictions.get(clip_id, [])
        for c in range(num_classes):
            ref_c = [e for e in refs if e.class_id == c]
            pred_c = [e for e in preds if e.class_id == c]
            tp = match_events(pred_c, ref_c, config)
            counts.tp[c] += tp
            counts.fp[c] += len(pred_c) - tp
            counts.fn[c] += len(ref_c) - tp
    return EvalReport(event=counts)


def tagging_counts(clip_probs: np.ndarray, weak_labels: np.ndarray, threshold: float = 0.5) -> F1Counts:
    """Per-class clip-level counts from (N, C) probabilities and binary labels."""
    pred = np.asarray(clip_probs) >= threshold
    true = np.asarray(weak_labels) > 0
    return F1Counts(
        tp=(pred & true).sum(axis=0).astype(np.int64),
        fp=(pred & ~true).sum(axis=0).astype(np.int64),
        fn=(~pred & true).sum(axis=0).astype(np.int64),
    )


def tagging_macro_f1(clip_probs: np.ndarray, weak_labels: np.ndarray, threshold: float = 0.5) -> float:
    return tagging_counts(clip_probs, weak_labels, threshold).macro_f1
