"""
Event-based F1
==============

Frame probabilities are binarized, median filtered and turned into events.
A predicted event matches a reference of the same class when its onset is
within 0.2 s and its offset within max(0.2 s, 20% of the reference length).
"""

import numpy as np

from ifdsed.config import EvalConfig
from ifdsed.corpus import EventAnnotation as Ev
from ifdsed.metrics import event_based_macro_f1, frames_to_events, post_process, tagging_macro_f1

frame_rate = 20.0
probs = np.zeros((100, 2))
probs[20:40, 0] = 0.9
probs[30, 0] = 0.1  # a one-frame dropout the median filter removes
probs[70:72, 1] = 0.8  # too short to survive
binary = post_process(probs, EvalConfig())
print(frames_to_events(binary, frame_rate))

refs = {"clip": [Ev(0, 1.0, 2.0), Ev(1, 3.5, 4.5)]}
preds = {"clip": frames_to_events(binary, frame_rate)}
report = event_based_macro_f1(preds, refs, num_classes=2)
print(report.event.to_dict(), report.event_macro_f1)

# the onset collar is inclusive
print(event_based_macro_f1({"c": [Ev(0, 1.2, 2.0)]}, {"c": [Ev(0, 1.0, 2.0)]}, 1).event_macro_f1)
print(event_based_macro_f1({"c": [Ev(0, 1.21, 2.0)]}, {"c": [Ev(0, 1.0, 2.0)]}, 1).event_macro_f1)

# a class with no references and no predictions scores 0, not 1
print(event_based_macro_f1({"c": []}, {"c": []}, 1).event_macro_f1)

# clip-level tagging
clip_probs = np.array([[0.9, 0.2], [0.1, 0.7]])
print(tagging_macro_f1(clip_probs, np.array([[1, 0], [0, 1]])))
