"""Inter-frame distance (IFD) metric learning between clip pairs.

Clip pairs with identical weak label sets are Positive, pairs with disjoint
sets are Negative, and anything else is skipped. Within a Positive or
Negative clip pair only frames at the same time index are compared: equal
label rows give positive frame pairs (pulled together), differing rows give
negative frame pairs (pushed apart). The loss is a margin hinge between every
negative distance and every positive distance, plus a term keeping each
sampled frame's self-distance at 1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import torch

from .config import IfdConfig


class PairCase(enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    SKIP = "skip"


@dataclass
class FramePairSet:
    positives: torch.Tensor  # (P, 3) rows of (clip_a, clip_b, t), clip_a < clip_b
    negatives: torch.Tensor  # (Q, 3)
    sampled_frames: torch.Tensor  # (K, 2) unique (clip, t)

    def __len__(self) -> int:
        return len(self.positives) + len(self.negatives)


def classify_pair(weak_a, weak_b) -> PairCase:
    a, b = set(weak_a), set(weak_b)
    if not a or not b:
        return PairCase.SKIP
    if a == b:
        return PairCase.POSITIVE
    if not a & b:
        return PairCase.NEGATIVE
    return PairCase.SKIP


def make_pseudo_labels(frame_probs, weak_labels, threshold: float = 0.5):
    """Threshold frame probabilities and mask by the clip's weak labels.

    Works on numpy arrays or tensors with shapes (..., T, C) and (..., C).
    Tensors are detached first; the labels never carry gradient.
    """
    if isinstance(frame_probs, torch.Tensor):
        weak = torch.as_tensor(weak_labels, device=frame_probs.device)
        active = (frame_probs.detach() >= threshold) & (weak.unsqueeze(-2) > 0)
        return active.to(frame_probs.dtype)
    weak = np.asarray(weak_labels)
    return ((np.asarray(frame_probs) >= threshold) & (weak[..., None, :] > 0)).astype(np.float32)


def pair_case_masks(weak: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Boolean (N, N) masks of Positive and Negative unordered pairs (i < j)."""
    weak = weak > 0
    nonempty = weak.any(dim=1)
    both = nonempty[:, None] & nonempty[None, :]
    upper = torch.ones(len(weak), len(weak), dtype=torch.bool, device=weak.device).triu(1)
    same = (weak[:, None, :] == weak[None, :, :]).all(dim=2)
    disjoint = ~(weak[:, None, :] & weak[None, :, :]).any(dim=2)
    return same & both & upper, disjoint & both & upper


def sample_frame_pairs(weak_labels, frame_labels, include_silence_positives: bool = False) -> FramePairSet:
    """Enumerate same-time frame pairs for every Positive / Negative clip pair.

    weak_labels: (N, C) binary; frame_labels: (N, T, C) binary (true labels
    for strongly-labelled clips, pseudo labels for weakly-labelled ones).
    """
    weak = torch.as_tensor(weak_labels)
    labels = torch.as_tensor(frame_labels) > 0
    if labels.ndim != 3 or labels.shape[0] != weak.shape[0]:
        raise ValueError("frame_labels must be (N, T, C) with one row block per clip")
    pos_pairs, neg_pairs = pair_case_masks(weak)
    rows_equal = (labels[:, None] == labels[None, :]).all(dim=3)  # (N, N, T)
    pos_mask = pos_pairs[:, :, None] & rows_equal
    if not include_silence_positives:
        silent = ~labels.any(dim=2)
        pos_mask &= ~(silent[:, None, :] & silent[None, :, :])
    neg_mask = neg_pairs[:, :, None] & ~rows_equal
    positives = pos_mask.nonzero()
    negatives = neg_mask.nonzero()
    frames = torch.cat([positives[:, [0, 2]], positives[:, [1, 2]], negatives[:, [0, 2]], negatives[:, [1, 2]]])
    sampled = torch.unique(frames, dim=0) if len(frames) else frames.reshape(0, 2)
    return FramePairSet(positives, negatives, sampled)


def frame_distance(v_i: torch.Tensor, v_j: torch.Tensor) -> torch.Tensor:
    """Inner product scaled by the embedding width; broadcasts over leading dims."""
    if v_i.shape[-1] != v_j.shape[-1]:
        raise ValueError(f"dimension mismatch {v_i.shape[-1]} vs {v_j.shape[-1]}")
    return (v_i * v_j).sum(dim=-1) / v_i.shape[-1]


def norm_loss(v: torch.Tensor) -> torch.Tensor:
    return (frame_distance(v, v) - 1.0).abs()


def _reduce(x: torch.Tensor, reduction: str) -> torch.Tensor:
    return x.sum() if reduction == "sum" else x.mean()


def ifd_loss(
    domain_embeddings: torch.Tensor,
    pairs: FramePairSet,
    config: IfdConfig = IfdConfig(),
    max_hinge_terms: int | None = -1,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Margin hinge over POS x NEG distances plus the self-distance norm term.

    ``max_hinge_terms`` overrides the config cap; pass None for no cap. When
    the product is larger than the cap, that many (pos, neg) combinations are
    drawn uniformly with replacement from ``generator``.
    """
    v = domain_embeddings
    zero = v.sum() * 0.0
    if len(pairs.sampled_frames) == 0:
        return zero
    cap = config.max_hinge_terms if max_hinge_terms == -1 else max_hinge_terms
    pos = pairs.positives
    neg = pairs.negatives
    hinge = zero
    if len(pos) and len(neg):
        d_pos = frame_distance(v[pos[:, 0], pos[:, 2]], v[pos[:, 1], pos[:, 2]])
        d_neg = frame_distance(v[neg[:, 0], neg[:, 2]], v[neg[:, 1], neg[:, 2]])
        if cap is None or len(d_pos) * len(d_neg) <= cap:
            terms = torch.relu(d_neg[None, :] - d_pos[:, None] + config.margin)
        else:
            pi = torch.randint(len(d_pos), (cap,), generator=generator)
            ni = torch.randint(len(d_neg), (cap,), generator=generator)
            terms = torch.relu(d_neg[ni] - d_pos[pi] + config.margin)
        hinge = _reduce(terms, config.reduction)
    frames = v[pairs.sampled_frames[:, 0], pairs.sampled_frames[:, 1]]
    return hinge + _reduce(norm_loss(frames), config.reduction)
