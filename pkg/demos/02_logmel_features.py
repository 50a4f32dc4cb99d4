"""
Log-mel features
================

Frames are centred on (t + 0.5) * hop, so frame t of the feature matrix
and frame t of the label grid describe the same instant.
"""

import numpy as np

from ifdsed.config import FeatureConfig
from ifdsed.corpus import EventAnnotation, SceneSpec, synthesize_scene
from ifdsed.features import extract_logmel, mel_filterbank

config = FeatureConfig()
print("frame rate", config.frame_rate, "frames/s")

spec = SceneSpec(duration_s=5.0, sample_rate=16000, events=[(EventAnnotation(2, 1.0, 2.5), 10.0)])
wave, _ = synthesize_scene(spec, rng=1)
feats = extract_logmel(wave, config, clip_id="demo")
print(feats.values.shape)  # (T, n_mels)

# energy per frame jumps while the event plays
energy = feats.values.mean(axis=1)
print("mean log-energy before %.2f, during %.2f" % (energy[:20].mean(), energy[20:50].mean()))

# triangular filters on an HTK mel scale, each peaking near 1
fb = mel_filterbank(16000, 512, 64)
print(fb.shape, fb.max())

# silence sits at the log floor
silent = extract_logmel(np.zeros(16000), config)
print(np.unique(silent.values))
