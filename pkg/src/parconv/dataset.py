"""Drum dataset manifests, featurisation and a seeded synthetic toy set.

A manifest is JSON lines, one ``{"path": ..., "label": ..., "split": ...}``
per clip.  Relative paths resolve against the manifest's directory.
"""
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import AudioBuffer, MelConfig, StftConfig, fit_frames, mel_power_spectrogram, write_wav
from .errors import InvalidConfig, IoError, LabelError, SplitError
from .network import DRUM_CLASSES

SPLITS = ("train", "val")
LABEL_INDEX = {name: i for i, name in enumerate(DRUM_CLASSES)}


@dataclass(frozen=True)
class Entry:
    path: Path
    label: str
    split: str

    @property
    def label_index(self):
        return LABEL_INDEX[self.label]


@dataclass
class DatasetManifest:
    entries: list
    root: Path = Path(".")

    def split(self, name):
        return [e for e in self.entries if e.split == name]

    def class_counts(self, split=None):
        entries = self.entries if split is None else self.split(split)
        counts = Counter(e.label for e in entries)
        return {name: counts.get(name, 0) for name in DRUM_CLASSES}

    def write(self, path):
        path = Path(path)
        lines = []
        for e in self.entries:
            try:
                rel = e.path.relative_to(path.parent)
            except ValueError:
                rel = e.path
            lines.append(json.dumps({"path": rel.as_posix(), "label": e.label, "split": e.split}))
        path.write_text("\n".join(lines) + "\n")
        return path


def validate_entries(entries):
    bad = [e for e in entries if e.label not in LABEL_INDEX]
    if bad:
        raise LabelError(
            f"unknown label(s) {sorted({e.label for e in bad})}; valid labels are: {', '.join(DRUM_CLASSES)}"
        )
    bad_split = [e for e in entries if e.split not in SPLITS]
    if bad_split:
        raise SplitError(f"unknown split(s) {sorted({e.split for e in bad_split})}; expected one of {SPLITS}")
    seen = {}
    for e in entries:
        key = e.path.resolve()
        if key in seen and seen[key] != e.split:
            raise SplitError(f"{e.path} appears in both the {seen[key]} and {e.split} splits")
        seen.setdefault(key, e.split)
    missing = [str(e.path) for e in entries if not e.path.is_file()]
    if missing:
        raise IoError(f"{len(missing)} file(s) missing: " + ", ".join(missing))


def load_dataset(manifest_path):
    manifest_path = Path(manifest_path)
    try:
        text = manifest_path.read_text()
    except OSError as exc:
        raise IoError(f"cannot read manifest {manifest_path}: {exc}") from exc
    root = manifest_path.parent
    entries = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            path = Path(row["path"])
            entries.append(Entry(path if path.is_absolute() else root / path, row["label"], row["split"]))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise InvalidConfig(f"{manifest_path}:{lineno}: bad manifest line ({exc})") from None
    validate_entries(entries)
    return DatasetManifest(entries, root)


# ---------------------------------------------------------------- features


NORMALIZATIONS = ("rms", "max", "none")


def normalize_features(spec, mode="rms"):
    """Divide by the per-sample RMS (unit second moment) or max; all-zero input is left alone."""
    if mode == "none":
        return spec
    if mode == "rms":
        scale = float(np.sqrt(np.mean(np.square(spec))))
    elif mode == "max":
        scale = float(spec.max())
    else:
        raise InvalidConfig(f"unknown normalization {mode!r}; expected one of {NORMALIZATIONS}")
    return spec / scale if scale > 0 else spec


def featurize_audio(audio, target_frames=128, normalization="rms", stft_cfg=StftConfig(), mel_cfg=MelConfig()):
    """Mel power spectrogram fitted to ``target_frames`` and normalised per sample."""
    spec = fit_frames(mel_power_spectrogram(audio, stft_cfg, mel_cfg), target_frames).data
    return normalize_features(spec, normalization)


def featurize_entries(entries, target_frames=128, normalization="rms"):
    """Stack features as float32 (N, 1, n_mels, target_frames) with int labels."""
    feats = [featurize_audio(AudioBuffer.from_wav(e.path), target_frames, normalization) for e in entries]
    x = np.stack(feats)[:, None].astype(np.float32) if feats else np.zeros((0, 1, 128, target_frames), np.float32)
    y = np.array([e.label_index for e in entries], dtype=np.int64)
    return x, y


# ---------------------------------------------------------------- synthetic drums

TOY_SAMPLE_RATE = 44100
TOY_DURATION_S = 0.75


def _band_noise(rng, n, sr, lo_hz, hi_hz):
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / sr)
    spectrum[(freqs < lo_hz) | (freqs > hi_hz)] = 0
    out = np.fft.irfft(spectrum, n)
    return out / (np.abs(out).max() + 1e-12)


def _decay(t, seconds):
    return np.exp(-t / seconds)


def synth_hit(label, rng, sr=TOY_SAMPLE_RATE, duration=TOY_DURATION_S):
    """One drum hit with a class-specific spectral signature, peak 0.9."""
    n = int(round(sr * duration))
    t = np.arange(n) / sr
    u = rng.uniform
    if label == "kick":
        f0 = u(45, 70)
        sweep = f0 + u(60, 100) * np.exp(-t / 0.03)
        phase = 2 * np.pi * np.cumsum(sweep) / sr
        click = _band_noise(rng, n, sr, 1000, 4000) * _decay(t, 0.003) * 0.3
        x = np.sin(phase) * _decay(t, u(0.15, 0.3)) + click
    elif label == "tom":
        f0 = u(90, 160)
        sweep = f0 * (1 + 0.3 * np.exp(-t / 0.05))
        phase = 2 * np.pi * np.cumsum(sweep) / sr
        x = np.sin(phase) * _decay(t, u(0.2, 0.4)) + 0.05 * _band_noise(rng, n, sr, 200, 2000) * _decay(t, 0.05)
    elif label == "snare":
        f0 = u(170, 240)
        tone = np.sin(2 * np.pi * f0 * t) * _decay(t, 0.08)
        x = 0.6 * tone + _band_noise(rng, n, sr, 1500, 9000) * _decay(t, u(0.1, 0.18))
    elif label == "closed_hat":
        x = _band_noise(rng, n, sr, u(7000, 8500), 16000) * _decay(t, u(0.015, 0.04))
    elif label == "open_hat":
        x = _band_noise(rng, n, sr, u(6000, 7500), 16000) * _decay(t, u(0.25, 0.45))
    elif label == "ride":
        bell = sum(np.sin(2 * np.pi * f * t) for f in u(2500, 4500, size=3)) / 3
        x = 0.5 * bell * _decay(t, 0.4) + _band_noise(rng, n, sr, 3000, 7000) * _decay(t, u(0.5, 0.8))
    elif label == "crash":
        x = _band_noise(rng, n, sr, u(1500, 2500), 14000) * _decay(t, u(0.6, 1.0))
    else:
        raise LabelError(f"unknown label {label!r}; valid labels are: {', '.join(DRUM_CLASSES)}")
    onset = int(rng.integers(0, int(0.05 * sr)))
    x = np.concatenate([np.zeros(onset), x[: n - onset]])
    x = x + 1e-3 * rng.standard_normal(n)
    return 0.9 * x / np.abs(x).max()


def synthesize_toy_dataset(n_per_class, seed, out_dir, splits=SPLITS):
    """Write ``n_per_class`` clips per class per split plus ``manifest.jsonl``.

    Returns the manifest.  Same seed, same bytes.
    """
    if n_per_class < 1:
        raise InvalidConfig("n_per_class must be >= 1")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out_dir}: {exc}") from exc
    entries = []
    for s_idx, split in enumerate(splits):
        for c_idx, label in enumerate(DRUM_CLASSES):
            rng = np.random.default_rng([seed, s_idx, c_idx])
            for i in range(n_per_class):
                path = out_dir / split / label / f"{label}_{i:03d}.wav"
                path.parent.mkdir(parents=True, exist_ok=True)
                write_wav(path, synth_hit(label, rng), TOY_SAMPLE_RATE)
                entries.append(Entry(path, label, split))
    manifest = DatasetManifest(entries, out_dir)
    manifest.write(out_dir / "manifest.jsonl")
    return manifest
