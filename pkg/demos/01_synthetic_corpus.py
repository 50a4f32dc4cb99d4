"""
Generating a two-domain corpus
==============================

Every clip is a noisy background with one to three class templates mixed
in at a random SNR. The "real" domain gets a redder background, a low-pass
filter and a gain change, which is the shift the adaptation has to bridge.
"""

import tempfile

import numpy as np

from ifdsed.config import CorpusConfig
from ifdsed.corpus import (EventAnnotation, SceneSpec, corpus_stats, events_to_frame_labels, generate_corpus,
                           synthesize_scene, weaken)

# one hand-made scene: class 0 from 1.0 s to 2.0 s at 6 dB
spec = SceneSpec(duration_s=5.0, sample_rate=16000, events=[(EventAnnotation(0, 1.0, 2.0), 6.0)])
wave, events = synthesize_scene(spec, rng=0)
print(len(wave) / 16000, "seconds,", events)

inside = wave[16000:32000]
outside = np.concatenate([wave[:16000], wave[32000:]])
print("rms inside the event %.3f, outside %.3f" % (np.sqrt(np.mean(inside ** 2)), np.sqrt(np.mean(outside ** 2))))

# same spec and seed, same samples
assert np.array_equal(wave, synthesize_scene(spec, rng=0)[0])

# strong labels become a frame grid at 20 frames/s; weak labels are just the set of classes
frames = events_to_frame_labels(events, frame_rate=20.0, n_frames=100, num_classes=5)
print("active frames of class 0:", np.flatnonzero(frames[:, 0])[[0, -1]], "weak:", weaken(events))

# a small corpus on disk: audio/*.wav plus manifest.jsonl
config = CorpusConfig(clips_per_domain=20, real_test_clips=10, synthetic_test_clips=10)
with tempfile.TemporaryDirectory() as out:
    records = generate_corpus(config, out)
    stats = corpus_stats(records, config.num_classes)
    print(stats)
    real_train = [r for r in records if r.domain == "real" and r.split == "train"]
    # weakly labelled real clips carry no event list
    print(real_train[0].clip_id, real_train[0].weak_labels, real_train[0].events)
