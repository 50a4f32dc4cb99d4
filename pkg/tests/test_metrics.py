import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import hand_f1
from ifdsed.config import EvalConfig
from ifdsed.corpus import EventAnnotation as Ev
from ifdsed.metrics import (event_based_macro_f1, frames_to_events, post_process, tagging_counts,
                            tagging_macro_f1)


def test_post_process_threshold():
    np.testing.assert_array_equal(post_process(np.full((10, 2), 0.9)), np.ones((10, 2)))


def test_post_process_removes_isolated_frame():
    probs = np.zeros((15, 1))
    probs[7] = 1.0
    assert post_process(probs, EvalConfig(median_window=7)).sum() == 0
    probs = np.zeros((15, 1))
    probs[0] = 1.0
    assert post_process(probs, EvalConfig(median_window=7)).sum() == 0


def test_post_process_keeps_long_runs():
    probs = np.zeros((20, 1))
    probs[5:12] = 0.8
    out = post_process(probs, EvalConfig(median_window=7))
    np.testing.assert_array_equal(out[:, 0], (np.arange(20) >= 5) & (np.arange(20) < 12))


@given(st.lists(st.floats(0, 1), min_size=1, max_size=30))
def test_post_process_window_one_is_idempotent_threshold(values):
    cfg = EvalConfig(median_window=1)
    probs = np.array(values)[:, None]
    once = post_process(probs, cfg)
    np.testing.assert_array_equal(once[:, 0], probs[:, 0] >= 0.5)
    np.testing.assert_array_equal(post_process(once, cfg), once)


@pytest.mark.parametrize("active, expected", [
    ([1, 2], [Ev(0, 0.1, 0.3)]),
    ([], []),
    ([0, 1, 3, 4], [Ev(0, 0.0, 0.2), Ev(0, 0.3, 0.5)]),
])
def test_frames_to_events(active, expected):
    labels = np.zeros((5, 1))
    labels[active, 0] = 1
    assert frames_to_events(labels, 10.0) == expected


@given(st.lists(st.floats(0, 1), min_size=1, max_size=40), st.sampled_from([1, 3, 5, 7]))
def test_post_processed_events_have_positive_length(values, window):
    out = post_process(np.array(values)[:, None], EvalConfig(median_window=window))
    assert all(e.offset_s > e.onset_s for e in frames_to_events(out, 20.0))


def _f1(pred, ref, num_classes=1, cfg=EvalConfig()):
    return event_based_macro_f1({"a": pred}, {"a": ref}, num_classes, cfg)


def test_event_f1_examples():
    rep = _f1([Ev(0, 1.05, 2.1)], [Ev(0, 1.0, 2.0)])
    assert (rep.event.tp[0], rep.event.fp[0], rep.event.fn[0]) == (1, 0, 0)
    assert rep.event_macro_f1 == 1.0
    rep = _f1([Ev(0, 1.5, 2.0)], [Ev(0, 1.0, 2.0)])
    assert (rep.event.tp[0], rep.event.fp[0], rep.event.fn[0]) == (0, 1, 1)
    assert rep.event_macro_f1 == 0.0
    rep = _f1([], [Ev(0, 1.0, 2.0)])
    assert rep.event_macro_f1 == 0.0


def test_event_f1_unknown_clip():
    with pytest.raises(KeyError):
        event_based_macro_f1({"zzz": []}, {"a": []}, 1)


def test_event_f1_missing_prediction_clip_counts_as_misses():
    rep = event_based_macro_f1({}, {"a": [Ev(0, 0.0, 1.0)]}, 1)
    assert rep.event.fn[0] == 1


def test_tagging_examples():
    labels = np.array([[1, 0], [0, 1], [1, 1]])
    assert tagging_macro_f1(labels.astype(float), labels) == 1.0
    assert tagging_macro_f1(np.zeros((3, 2)), labels) == 0.0
    counts = tagging_counts(np.array([[0.9], [0.8]]), np.array([[1], [0]]))
    assert (counts.tp[0], counts.fp[0], counts.fn[0]) == (1, 1, 0)
    assert counts.f1[0] == pytest.approx(2 / 3)


event_lists = st.lists(
    st.tuples(st.integers(0, 2), st.floats(0, 9, allow_nan=False), st.floats(0.05, 3)).map(
        lambda x: Ev(x[0], round(x[1], 3), round(x[1] + x[2], 3))),
    max_size=6)


@given(st.dictionaries(st.sampled_from(["a", "b", "c"]), event_lists, min_size=1))
def test_self_match_is_perfect(refs):
    if not any(refs.values()):
        return
    rep = event_based_macro_f1(refs, refs, 3)
    present = [c for c in range(3) if any(e.class_id == c for evs in refs.values() for e in evs)]
    assert all(rep.event.f1[c] == 1.0 for c in present)
    assert rep.event.fp.sum() == 0 and rep.event.fn.sum() == 0


@settings(max_examples=300)
@given(event_lists, event_lists, st.floats(0.05, 0.5), st.floats(0.0, 0.5))
def test_collar_monotone(preds, refs, collar, extra):
    small = event_based_macro_f1({"a": preds}, {"a": refs}, 3, EvalConfig(onset_collar_s=collar))
    large = event_based_macro_f1({"a": preds}, {"a": refs}, 3, EvalConfig(onset_collar_s=collar + extra))
    assert np.all(large.event.f1 >= small.event.f1 - 1e-12)


@given(st.dictionaries(st.sampled_from(list("abcdef")), st.tuples(event_lists, event_lists), min_size=1),
       st.randoms())
def test_clip_order_invariance(clips, random):
    keys = list(clips)
    shuffled = keys[:]
    random.shuffle(shuffled)
    first = event_based_macro_f1({k: clips[k][0] for k in keys}, {k: clips[k][1] for k in keys}, 3)
    second = event_based_macro_f1({k: clips[k][0] for k in shuffled}, {k: clips[k][1] for k in shuffled}, 3)
    assert first.to_dict() == second.to_dict()


def test_report_serialization():
    rep = _f1([Ev(0, 1.0, 2.0)], [Ev(0, 1.0, 2.0)], num_classes=2)
    rep.tagging = tagging_counts(np.array([[0.9, 0.1]]), np.array([[1, 0]]))
    d = rep.to_dict()
    assert d["event"]["tp"] == [1, 0] and d["tagging_macro_f1"] == 0.5
    csv_lines = rep.to_csv().splitlines()
    assert csv_lines[0].startswith("class,event_tp") and csv_lines[-1].startswith("macro")
    assert hand_f1(1, 0, 0) == d["event"]["f1"][0]
