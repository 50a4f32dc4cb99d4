"""
Inter-frame distance loss, step by step
=======================================

Clips are paired by their weak labels. Pairs with the same classes give
"positive" frame pairs (frames where the two clips agree), pairs with no
classes in common give "negative" ones. The hinge then pushes every
negative distance at least a margin below every positive distance.
"""

import numpy as np
import torch

from ifdsed.config import IfdConfig
from ifdsed.ifd import (PairCase, classify_pair, frame_distance, ifd_loss, make_pseudo_labels, norm_loss,
                        sample_frame_pairs)

print(classify_pair({0, 1}, {0, 1}), classify_pair({0}, {2}), classify_pair({0}, {0, 1}))
assert classify_pair({0}, {0, 1}) is PairCase.SKIP

# pseudo labels: threshold the frame probabilities, then keep only classes the clip is known to contain
probs = np.array([[0.9, 0.8], [0.2, 0.7], [0.6, 0.1]])
print(make_pseudo_labels(probs, weak_labels=np.array([1, 0]), threshold=0.5))

# three clips of four frames: clips 0 and 1 both contain class 0, clip 2 contains class 1
weak = np.array([[1, 0], [1, 0], [0, 1]])
labels = np.zeros((3, 4, 2))
labels[0, 1:3, 0] = 1
labels[1, 1:4, 0] = 1
labels[2, :, 1] = 1
pairs = sample_frame_pairs(weak, labels)
print("positives (i, j, t):", pairs.positives.tolist())
print("negatives:", len(pairs.negatives), "sampled frames:", len(pairs.sampled_frames))

# the distance is an inner product scaled by the width; the norm term wants dis(v, v) = 1
v = torch.tensor([1.0, 1.0])
print(frame_distance(v, v).item(), norm_loss(v).item(), norm_loss(2 * v).item())

# random embeddings give a positive loss; gradients flow back to every used frame
emb = torch.randn(3, 4, 8, requires_grad=True, generator=torch.Generator().manual_seed(0))
loss = ifd_loss(emb, pairs, IfdConfig())
loss.backward()
print("loss %.4f" % loss.item(), "frames with gradient:", int((emb.grad.abs().sum(-1) > 0).sum()))
