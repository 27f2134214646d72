"""STFT, Mel filterbank and Mel power spectrogram.

Follows librosa's conventions without depending on it: centred frames with
reflection padding, periodic Hann window, HTK Mel scale and Slaney-style
area normalisation of the triangular filters.
"""
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import EmptyAudio, InvalidConfig
from ..kernels import fft_rows
from .wav import read_wav


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise InvalidConfig(f"audio must be mono 1-D, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise InvalidConfig("audio contains non-finite samples")
        if int(self.sample_rate_hz) <= 0:
            raise InvalidConfig(f"sample rate must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    @classmethod
    def from_wav(cls, path):
        samples, rate = read_wav(path)
        return cls(samples, rate)

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class StftConfig:
    window_size: int = 2048
    hop_length: int = 512
    window_kind: str = "hann"
    centered: bool = True

    def validate(self):
        n = self.window_size
        if n <= 0 or self.hop_length <= 0:
            raise InvalidConfig("window_size and hop_length must be positive")
        if n & (n - 1):
            raise InvalidConfig(f"window_size {n} is not a power of two")
        if self.hop_length > n:
            raise InvalidConfig(f"hop_length {self.hop_length} exceeds window_size {n}")
        if self.window_kind != "hann":
            raise InvalidConfig(f"unsupported window {self.window_kind!r}; only 'hann'")
        return self


@dataclass(frozen=True)
class MelConfig:
    n_mels: int = 128
    f_min_hz: float = 20.0
    f_max_hz: float = 20000.0
    mel_scale: str = "htk"
    normalization: str = "area"

    def validate(self, sample_rate_hz=None):
        if self.n_mels <= 0:
            raise InvalidConfig("n_mels must be positive")
        if self.f_min_hz < 0 or self.f_max_hz <= self.f_min_hz:
            raise InvalidConfig(f"need 0 <= f_min < f_max, got {self.f_min_hz}, {self.f_max_hz}")
        if sample_rate_hz is not None and self.f_max_hz > sample_rate_hz / 2:
            raise InvalidConfig(
                f"f_max {self.f_max_hz} Hz exceeds Nyquist {sample_rate_hz / 2} Hz "
                f"(sample rate {sample_rate_hz}); resample the source or lower f_max"
            )
        if self.mel_scale != "htk":
            raise InvalidConfig(f"unsupported mel scale {self.mel_scale!r}")
        if self.normalization not in ("area", "none"):
            raise InvalidConfig(f"unsupported normalization {self.normalization!r}")
        return self


@dataclass
class Spectrogram:
    data: np.ndarray
    sample_rate_hz: int
    stft: StftConfig = field(default_factory=StftConfig)
    mel: MelConfig = field(default_factory=MelConfig)

    @property
    def shape(self):
        return self.data.shape

    @property
    def n_frames(self):
        return self.data.shape[1]


def hann_window(n):
    """Periodic Hann window (the DFT-even form used for spectral analysis)."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def frame_signal(samples, cfg):
    n = cfg.window_size
    if cfg.centered:
        pad = n // 2
        if len(samples) <= pad:
            # reflect mode needs len > pad; fall back to repeated reflection
            samples = np.pad(samples, pad, mode="symmetric")
        else:
            samples = np.pad(samples, pad, mode="reflect")
    if len(samples) < n:
        samples = np.pad(samples, (0, n - len(samples)))
    n_frames = 1 + (len(samples) - n) // cfg.hop_length
    idx = np.arange(n)[None, :] + cfg.hop_length * np.arange(n_frames)[:, None]
    return samples[idx]


def stft(audio, cfg=StftConfig()):
    """Complex STFT of shape (window_size // 2 + 1, n_frames)."""
    cfg.validate()
    if len(audio.samples) == 0:
        raise EmptyAudio("cannot take the STFT of an empty signal")
    frames = frame_signal(audio.samples, cfg) * hann_window(cfg.window_size)
    spectrum = fft_rows(frames)
    return spectrum[:, : cfg.window_size // 2 + 1].T


def mel_band_edges(cfg):
    """The n_mels + 2 band points in Hz; centres are ``edges[1:-1]``."""
    mels = np.linspace(hz_to_mel(cfg.f_min_hz), hz_to_mel(cfg.f_max_hz), cfg.n_mels + 2)
    return mel_to_hz(mels)


def mel_center_frequencies(cfg=MelConfig()):
    return mel_band_edges(cfg)[1:-1]


def mel_filterbank(sr_hz, n_fft, cfg=MelConfig()):
    """Triangular Mel filterbank of shape (n_mels, n_fft // 2 + 1)."""
    cfg.validate(sr_hz)
    freqs = np.arange(n_fft // 2 + 1) * (sr_hz / n_fft)
    edges = mel_band_edges(cfg)
    lo, ctr, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lo) / (ctr - lo)
    falling = (hi - freqs[None, :]) / (hi - ctr)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    if cfg.normalization == "area":
        # unit continuous area: triangle of height 1 and base (hi - lo) has area (hi - lo) / 2
        weights *= 2.0 / (hi - lo)
    return weights


def mel_power_spectrogram(audio, s=StftConfig(), m=MelConfig(), log_compress=False):
    m.validate(audio.sample_rate_hz)
    spectrum = stft(audio, s)
    power = spectrum.real**2 + spectrum.imag**2
    data = mel_filterbank(audio.sample_rate_hz, s.window_size, m) @ power
    if log_compress:
        data = np.log1p(data)
    return Spectrogram(data, audio.sample_rate_hz, s, m)


def fit_frames(spec, target_frames):
    """Centre-crop or symmetrically zero-pad the time axis to ``target_frames``.

    Odd padding puts the extra column on the right.
    """
    if target_frames <= 0:
        raise InvalidConfig("target_frames must be positive")
    data = spec.data if isinstance(spec, Spectrogram) else np.asarray(spec)
    n = data.shape[1]
    if n > target_frames:
        start = (n - target_frames) // 2
        out = data[:, start : start + target_frames].copy()
    elif n < target_frames:
        left = (target_frames - n) // 2
        out = np.pad(data, ((0, 0), (left, target_frames - n - left)))
    else:
        out = data.copy()
    if isinstance(spec, Spectrogram):
        return Spectrogram(out, spec.sample_rate_hz, spec.stft, spec.mel)
    return out


def sidecar_path(path):
    path = Path(path)
    if path.suffix == ".json":
        raise InvalidConfig("spectrogram output path must not end in .json (reserved for the sidecar)")
    return path.with_name(path.name + ".json")


def save_spectrogram(spec, path):
    """Write ``path`` (flat little-endian float32) and ``path.json`` (metadata)."""
    path = Path(path)
    meta_path = sidecar_path(path)
    path.write_bytes(np.ascontiguousarray(spec.data, dtype="<f4").tobytes())
    meta = {
        "shape": list(spec.data.shape),
        "dtype": "float32-le",
        "sample_rate": spec.sample_rate_hz,
        "stft": asdict(spec.stft),
        "mel": asdict(spec.mel),
    }
    meta_path.write_text(json.dumps(meta, indent=2) + "\n")
    return path, meta_path


def load_spectrogram(path):
    path = Path(path)
    meta = json.loads(sidecar_path(path).read_text())
    shape = tuple(meta["shape"])
    data = np.frombuffer(path.read_bytes(), dtype="<f4")
    if data.size != int(np.prod(shape)):
        raise InvalidConfig(f"{path}: expected {int(np.prod(shape))} floats, found {data.size}")
    return Spectrogram(
        data.reshape(shape).astype(np.float64),
        meta["sample_rate"],
        StftConfig(**meta["stft"]),
        MelConfig(**meta["mel"]),
    )
