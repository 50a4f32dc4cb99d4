"""Procedural two-domain sound event corpus.

The synthetic domain mixes class templates over white background noise.
The real domain uses the same templates, but a coloured background, a
first-order low-pass over the mix and a global gain offset, which shifts the
feature distribution without changing what the labels mean.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import signal
from scipy.io import wavfile

from .config import CorpusConfig

DOMAINS = ("synthetic", "real")
SPLITS = ("train", "test")
TEMPLATE_FAMILIES = ("harmonic", "chirp", "am_tone", "narrowband_noise", "click_train")

BACKGROUND_RMS = 0.05
FADE_S = 0.01
# split codes keep per-clip random streams disjoint
_SPLIT_CODES = {("synthetic", "train"): 0, ("real", "train"): 1, ("real", "test"): 2, ("synthetic", "test"): 3}


class ManifestError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class EventAnnotation:
    class_id: int
    onset_s: float
    offset_s: float

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError(f"class_id must be >= 0, got {self.class_id}")
        if self.onset_s < 0 or not self.offset_s > self.onset_s:
            raise ValueError(f"invalid event bounds [{self.onset_s}, {self.offset_s}]")

    def to_dict(self) -> dict:
        return {"class_id": self.class_id, "onset_s": self.onset_s, "offset_s": self.offset_s}


@dataclass
class ClipRecord:
    clip_id: str
    domain: str
    split: str
    duration_s: float
    audio_path: str
    weak_labels: list[int]
    events: list[EventAnnotation] | None = None

    def to_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "domain": self.domain,
            "split": self.split,
            "duration_s": self.duration_s,
            "audio_path": self.audio_path,
            "weak_labels": list(self.weak_labels),
            "events": None if self.events is None else [e.to_dict() for e in self.events],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ClipRecord":
        required = ("clip_id", "domain", "split", "duration_s", "audio_path", "weak_labels", "events")
        missing = [k for k in required if k not in data]
        if missing:
            raise ManifestError(f"record missing keys {missing}")
        if data["domain"] not in DOMAINS:
            raise ManifestError(f"{data['clip_id']}: unknown domain {data['domain']!r}")
        if data["split"] not in SPLITS:
            raise ManifestError(f"{data['clip_id']}: unknown split {data['split']!r}")
        events = data["events"]
        if events is not None:
            try:
                events = [EventAnnotation(int(e["class_id"]), float(e["onset_s"]), float(e["offset_s"])) for e in events]
            except (KeyError, TypeError, ValueError) as exc:
                raise ManifestError(f"{data['clip_id']}: bad event ({exc})") from exc
        record = cls(
            clip_id=str(data["clip_id"]),
            domain=data["domain"],
            split=data["split"],
            duration_s=float(data["duration_s"]),
            audio_path=str(data["audio_path"]),
            weak_labels=sorted(int(c) for c in data["weak_labels"]),
            events=events,
        )
        record.check()
        return record

    def check(self) -> None:
        if self.events is not None:
            if set(self.weak_labels) != weaken(self.events):
                raise ManifestError(f"{self.clip_id}: weak_labels disagree with events")
            if any(e.offset_s > self.duration_s + 1e-9 for e in self.events):
                raise ManifestError(f"{self.clip_id}: event exceeds clip duration")
        elif self.domain == "synthetic" or self.split == "test":
            raise ManifestError(f"{self.clip_id}: {self.domain}/{self.split} clips need events")


@dataclass
class SceneSpec:
    """Everything needed to render one clip.

    ``events`` pairs each annotation with the event-to-background SNR in dB.
    ``lowpass_cutoff_hz`` and ``gain_db`` are the domain-shift transform; leave
    them as None / 0 for the synthetic domain.
    """

    duration_s: float
    sample_rate: int
    events: list[tuple[EventAnnotation, float]] = field(default_factory=list)
    background_tilt: float = 0.0
    lowpass_cutoff_hz: float | None = None
    gain_db: float = 0.0


def weaken(events: Iterable[EventAnnotation]) -> set[int]:
    """Project strong labels to the clip-level class set."""
    return {e.class_id for e in events}


def weak_vector(labels: Iterable[int], num_classes: int) -> np.ndarray:
    vec = np.zeros(num_classes, dtype=np.float32)
    for c in labels:
        vec[c] = 1.0
    return vec


def num_frames(duration_s: float, frame_rate: float) -> int:
    # round first so 5.0 * 20 does not become 101 through float error
    return int(math.ceil(round(duration_s * frame_rate, 6)))


def events_to_frame_labels(events: Sequence[EventAnnotation], frame_rate: float, n_frames: int, num_classes: int) -> np.ndarray:
    """Binary T x C activity matrix; frame t is active when an event covers its centre."""
    labels = np.zeros((n_frames, num_classes), dtype=np.float32)
    centers = (np.arange(n_frames) + 0.5) / frame_rate
    for e in events:
        if e.class_id >= num_classes:
            raise ValueError(f"class_id {e.class_id} >= num_classes {num_classes}")
        active = (centers >= e.onset_s) & (centers < e.offset_s)
        labels[active, e.class_id] = 1.0
    return labels


# --------------------------------------------------------------------------
# Synthesis


def class_frequency(class_id: int) -> float:
    """Characteristic frequency of a class template (Hz)."""
    return 350.0 * 1.5 ** class_id


def _fade(x: np.ndarray, sample_rate: int) -> np.ndarray:
    n = min(int(FADE_S * sample_rate), len(x) // 2)
    if n > 0:
        ramp = np.linspace(0.0, 1.0, n, endpoint=False)
        x[:n] *= ramp
        x[-n:] *= ramp[::-1]
    return x


def render_template(class_id: int, n_samples: int, sample_rate: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-RMS waveform of the template for ``class_id``.

    Families cycle with the class index; later cycles move up in frequency,
    so every class keeps a distinct spectral signature.
    """
    family = TEMPLATE_FAMILIES[class_id % len(TEMPLATE_FAMILIES)]
    f0 = class_frequency(class_id)
    t = np.arange(n_samples) / sample_rate
    phase = rng.uniform(0, 2 * np.pi)
    if family == "harmonic":
        x = sum(np.sin(2 * np.pi * k * f0 * t + k * phase) / k for k in (1, 2, 3))
    elif family == "chirp":
        x = signal.chirp(t, f0=f0, t1=max(t[-1], 1e-3), f1=1.6 * f0, phi=np.degrees(phase))
    elif family == "am_tone":
        x = (1.0 + 0.9 * np.sin(2 * np.pi * 6.0 * t)) * np.sin(2 * np.pi * f0 * t + phase)
    elif family == "narrowband_noise":
        spec = np.fft.rfft(rng.standard_normal(n_samples))
        freqs = np.fft.rfftfreq(n_samples, 1.0 / sample_rate)
        spec[np.abs(freqs - f0) > 0.15 * f0] = 0.0
        x = np.fft.irfft(spec, n_samples)
    else:
        x = np.zeros(n_samples)
        period = max(int(sample_rate / 25.0), 1)
        x[int(rng.integers(period))::period] = 1.0
        # ring each click at the class frequency so it is not pure broadband
        ring_t = np.arange(int(0.01 * sample_rate)) / sample_rate
        ring = np.sin(2 * np.pi * f0 * ring_t) * np.exp(-ring_t / 0.003)
        x = np.convolve(x, ring)[:n_samples]
    x = np.asarray(x, dtype=np.float64)
    rms = np.sqrt(np.mean(x ** 2))
    if rms > 0:
        x = x / rms
    return _fade(x, sample_rate)


def coloured_noise(n_samples: int, tilt: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian noise with power spectrum proportional to f**tilt, unit RMS."""
    spec = np.fft.rfft(rng.standard_normal(n_samples))
    freqs = np.arange(len(spec), dtype=np.float64)
    shape = np.zeros_like(freqs)
    shape[1:] = freqs[1:] ** (tilt / 2.0)
    x = np.fft.irfft(spec * shape, n_samples)
    return x / np.sqrt(np.mean(x ** 2))


def synthesize_scene(spec: SceneSpec, rng: np.random.Generator | int) -> tuple[np.ndarray, list[EventAnnotation]]:
    """Render a labelled mono clip.

    Returns the float64 waveform in [-1, 1] and the event list sorted by onset.
    The same (spec, seed) pair always yields bit-identical samples.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    sr = spec.sample_rate
    n = int(round(spec.duration_s * sr))
    for event, _ in spec.events:
        if event.offset_s > spec.duration_s + 1e-9:
            raise ValueError(f"event {event} does not fit a {spec.duration_s}s clip")

    mix = BACKGROUND_RMS * coloured_noise(n, spec.background_tilt, rng)
    events = []
    for event, snr_db in sorted(spec.events):
        start = int(round(event.onset_s * sr))
        stop = min(int(round(event.offset_s * sr)), n)
        gain = BACKGROUND_RMS * 10.0 ** (snr_db / 20.0)
        mix[start:stop] += gain * render_template(event.class_id, stop - start, sr, rng)
        events.append(event)

    if spec.lowpass_cutoff_hz is not None:
        b, a = signal.butter(1, spec.lowpass_cutoff_hz, btype="low", fs=sr)
        mix = signal.lfilter(b, a, mix)
    mix = mix * 10.0 ** (spec.gain_db / 20.0)
    return np.clip(mix, -1.0, 1.0), events


def random_scene(config: CorpusConfig, domain: str, rng: np.random.Generator) -> SceneSpec:
    lo, hi = config.events_per_clip
    n_events = int(rng.integers(lo, hi + 1))
    classes = rng.choice(config.num_classes, size=n_events, replace=False)
    snr_lo, snr_hi = config.snr_db_real if domain == "real" else config.snr_db_synthetic
    events = []
    for c in classes:
        dur = round(float(rng.uniform(*config.event_duration_s)), 2)
        onset = round(float(rng.uniform(0.0, config.duration_s - dur)), 2)
        offset = min(round(onset + dur, 2), config.duration_s)
        events.append((EventAnnotation(int(c), onset, offset), float(rng.uniform(snr_lo, snr_hi))))
    if domain == "real":
        shift = config.domain_shift
        return SceneSpec(config.duration_s, config.sample_rate, events, shift.background_tilt,
                         shift.lowpass_cutoff_hz, shift.gain_db)
    return SceneSpec(config.duration_s, config.sample_rate, events, config.synthetic_background_tilt)


def write_wav(path: Path, waveform: np.ndarray, sample_rate: int) -> None:
    pcm = np.round(np.clip(waveform, -1.0, 1.0) * 32767.0).astype(np.int16)
    wavfile.write(path, sample_rate, pcm)


def read_wav(path: str | Path) -> tuple[np.ndarray, int]:
    sample_rate, pcm = wavfile.read(path)
    if pcm.ndim != 1:
        raise ValueError(f"{path}: expected mono audio")
    if pcm.dtype == np.int16:
        return pcm.astype(np.float64) / 32767.0, sample_rate
    return pcm.astype(np.float64), sample_rate


def _render_clip(config: CorpusConfig, domain: str, split: str, index: int, out_dir: Path) -> ClipRecord:
    rng = np.random.default_rng([config.seed, _SPLIT_CODES[domain, split], index])
    scene = random_scene(config, domain, rng)
    waveform, events = synthesize_scene(scene, rng)
    clip_id = f"{domain}_{split}_{index:05d}"
    rel_path = f"audio/{clip_id}.wav"
    write_wav(out_dir / rel_path, waveform, config.sample_rate)
    weak = sorted(weaken(events))
    keep_strong = not (domain == "real" and split == "train")
    return ClipRecord(clip_id, domain, split, config.duration_s, rel_path, weak, events if keep_strong else None)


def generate_corpus(config: CorpusConfig, out_dir: str | Path) -> list[ClipRecord]:
    """Render every split to ``out_dir/audio`` and write ``out_dir/manifest.jsonl``."""
    config.validate()
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    plan = [
        ("synthetic", "train", config.clips_per_domain),
        ("real", "train", config.clips_per_domain),
        ("real", "test", config.real_test_clips),
        ("synthetic", "test", config.synthetic_test_clips),
    ]
    records = []
    for domain, split, count in plan:
        for i in range(count):
            records.append(_render_clip(config, domain, split, i, out_dir))
    write_manifest(records, out_dir / "manifest.jsonl")
    return records


def write_manifest(records: Sequence[ClipRecord], path: str | Path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict()) + "\n")


def load_manifest(path: str | Path) -> list[ClipRecord]:
    records = []
    seen = set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from exc
            record = ClipRecord.from_dict(data)
            if record.clip_id in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate clip_id {record.clip_id}")
            seen.add(record.clip_id)
            records.append(record)
    return records


def select(records: Iterable[ClipRecord], domain: str, split: str) -> list[ClipRecord]:
    return [r for r in records if r.domain == domain and r.split == split]


def corpus_stats(records: Sequence[ClipRecord], num_classes: int) -> dict:
    """Clip counts per split, class histogram over weak labels and mean polyphony."""
    counts: dict[str, int] = {}
    hist = [0] * num_classes
    polyphony = []
    for r in records:
        key = f"{r.domain}/{r.split}"
        counts[key] = counts.get(key, 0) + 1
        for c in r.weak_labels:
            hist[c] += 1
        if r.events:
            fr = 100.0
            labels = events_to_frame_labels(r.events, fr, num_frames(r.duration_s, fr), num_classes)
            active = labels.sum(axis=1)
            if (active > 0).any():
                polyphony.append(float(active[active > 0].mean()))
    return {
        "clips": counts,
        "class_histogram": hist,
        "mean_polyphony": float(np.mean(polyphony)) if polyphony else 0.0,
    }
