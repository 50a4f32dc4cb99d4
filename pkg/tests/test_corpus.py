import hashlib
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ifdsed.config import CorpusConfig, ConfigError, FeatureConfig
from ifdsed.corpus import (BACKGROUND_RMS, ClipRecord, EventAnnotation, ManifestError, SceneSpec, corpus_stats,
                           events_to_frame_labels, generate_corpus, load_manifest, read_wav, synthesize_scene,
                           weaken)
from ifdsed.features import extract_logmel
from ifdsed.metrics import frames_to_events

SMALL = CorpusConfig(clips_per_domain=6, real_test_clips=3, synthetic_test_clips=2, duration_s=2.0, seed=7)


def test_event_validation():
    with pytest.raises(ValueError):
        EventAnnotation(0, 2.0, 1.0)
    with pytest.raises(ValueError):
        EventAnnotation(0, -0.1, 1.0)


@pytest.mark.parametrize("events, expected", [
    ([EventAnnotation(0, 1.0, 2.0), EventAnnotation(0, 3.0, 4.0), EventAnnotation(2, 0.5, 1.5)], {0, 2}),
    ([], set()),
    ([EventAnnotation(1, 0.0, 5.0)], {1}),
])
def test_weaken(events, expected):
    assert weaken(events) == expected


def test_frame_labels_center_rule():
    labels = events_to_frame_labels([EventAnnotation(0, 0.1, 0.35)], 10.0, 5, 2)
    assert np.flatnonzero(labels[:, 0]).tolist() == [1, 2]
    assert labels[:, 1].sum() == 0
    assert events_to_frame_labels([], 10.0, 5, 2).sum() == 0
    full = events_to_frame_labels([EventAnnotation(1, 0.0, 0.5)], 10.0, 5, 2)
    assert full[:, 1].tolist() == [1] * 5


def test_frame_labels_rejects_unknown_class():
    with pytest.raises(ValueError):
        events_to_frame_labels([EventAnnotation(3, 0.0, 1.0)], 10.0, 10, 3)


@st.composite
def same_class_events(draw, duration_cs=500):
    """Non-overlapping events of one class on a 10 ms grid, gaps and lengths >= 2 hops."""
    events = []
    pos = draw(st.integers(0, 50))
    while True:
        length = draw(st.integers(10, 150))
        if pos + length > duration_cs:
            break
        events.append(EventAnnotation(0, pos / 100, (pos + length) / 100))
        pos += length + draw(st.integers(10, 100))
    return events


def round_trips(events, frame_rate=20.0, n_frames=100):
    decoded = frames_to_events(events_to_frame_labels(events, frame_rate, n_frames, 1), frame_rate)
    hop = 1 / frame_rate
    return len(decoded) == len(events) and all(
        abs(d.onset_s - e.onset_s) <= hop + 1e-9 and abs(d.offset_s - e.offset_s) <= hop + 1e-9
        for d, e in zip(decoded, events))


@given(same_class_events())
def test_frame_event_round_trip(events):
    assert round_trips(events)


def test_synthesize_background_only():
    spec = SceneSpec(2.0, 16000)
    wave, events = synthesize_scene(spec, 0)
    assert events == [] and len(wave) == 32000
    assert np.sqrt(np.mean(wave ** 2)) == pytest.approx(BACKGROUND_RMS, rel=1e-6)


def test_synthesize_single_event_energy():
    ev = EventAnnotation(0, 1.0, 2.0)
    wave, events = synthesize_scene(SceneSpec(5.0, 16000, [(ev, 6.0)]), 3)
    assert events == [ev]
    inside = np.mean(wave[16000:32000] ** 2)
    outside = np.mean(np.concatenate([wave[:16000], wave[32000:]]) ** 2)
    assert inside > outside


def test_synthesize_deterministic_and_rejects_overflow():
    spec = SceneSpec(3.0, 16000, [(EventAnnotation(k, 0.5 * k, 0.5 * k + 1.0), 3.0) for k in range(5)])
    a, _ = synthesize_scene(spec, 11)
    b, _ = synthesize_scene(spec, 11)
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        synthesize_scene(SceneSpec(1.0, 16000, [(EventAnnotation(0, 0.5, 1.5), 0.0)]), 0)


def test_generate_corpus(tmp_path):
    records = generate_corpus(SMALL, tmp_path / "a")
    by_split = {}
    for r in records:
        by_split.setdefault((r.domain, r.split), []).append(r)
    assert {k: len(v) for k, v in by_split.items()} == {
        ("synthetic", "train"): 6, ("real", "train"): 6, ("real", "test"): 3, ("synthetic", "test"): 2}
    for r in by_split["real", "train"]:
        assert r.events is None and r.weak_labels
    for r in by_split["synthetic", "train"] + by_split["real", "test"]:
        assert set(r.weak_labels) == weaken(r.events)
        assert all(e.offset_s <= r.duration_s for e in r.events)
    wave, sr = read_wav(tmp_path / "a" / records[0].audio_path)
    assert sr == 16000 and len(wave) == 32000

    manifest = (tmp_path / "a" / "manifest.jsonl").read_bytes()
    generate_corpus(SMALL, tmp_path / "b")
    assert (tmp_path / "b" / "manifest.jsonl").read_bytes() == manifest
    for r in records:
        digest = lambda root: hashlib.sha256((root / r.audio_path).read_bytes()).hexdigest()  # noqa: E731
        assert digest(tmp_path / "a") == digest(tmp_path / "b")

    line = json.loads(manifest.splitlines()[0])
    assert list(line) == ["clip_id", "domain", "split", "duration_s", "audio_path", "weak_labels", "events"]
    assert load_manifest(tmp_path / "a" / "manifest.jsonl")[0].to_dict() == line
    stats = corpus_stats(records, SMALL.num_classes)
    assert sum(stats["clips"].values()) == 17 and stats["mean_polyphony"] >= 1.0


def test_corpus_config_validation():
    with pytest.raises(ConfigError, match="num_classes"):
        CorpusConfig(num_classes=0).validate()
    with pytest.raises(ConfigError, match="snr_db_real"):
        CorpusConfig(snr_db_real=(5.0, 1.0)).validate()


def test_manifest_schema_errors(tmp_path):
    good = {"clip_id": "x", "domain": "real", "split": "train", "duration_s": 1.0, "audio_path": "x.wav",
            "weak_labels": [1], "events": None}
    assert ClipRecord.from_dict(good).weak_labels == [1]
    for bad in ({**good, "domain": "studio"},
                {**good, "split": "valid"},
                {**good, "split": "test"},
                {**good, "events": [{"class_id": 0, "onset_s": 0.0, "offset_s": 0.5}]},
                {k: v for k, v in good.items() if k != "events"}):
        with pytest.raises(ManifestError):
            ClipRecord.from_dict(bad)
    path = tmp_path / "m.jsonl"
    path.write_text(json.dumps(good) + "\n" + json.dumps(good) + "\n")
    with pytest.raises(ManifestError, match="duplicate"):
        load_manifest(path)


def test_domain_shift_is_measurable(tmp_path):
    cfg = CorpusConfig(clips_per_domain=30, real_test_clips=0, synthetic_test_clips=0, duration_s=2.0, seed=1)
    records = generate_corpus(cfg, tmp_path)
    fcfg = FeatureConfig()
    means = {"synthetic": [], "real": []}
    for r in records:
        wave, _ = read_wav(tmp_path / r.audio_path)
        means[r.domain].append(extract_logmel(wave, fcfg).values.mean(axis=0))
    syn, real = np.array(means["synthetic"]), np.array(means["real"])
    gap = np.linalg.norm(syn.mean(0) - real.mean(0))
    stderr = max(np.linalg.norm(syn.std(0)) / np.sqrt(len(syn)), np.linalg.norm(real.std(0)) / np.sqrt(len(real)))
    assert gap > stderr
