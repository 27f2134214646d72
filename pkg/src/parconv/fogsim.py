"""Single-task placement latency across cloud and fog devices.

Total time is transmission (T) plus computing (C).  Cloud T is drawn
uniformly from ``mean +/- jitter``; fog devices sit next to the data source
and have no T.  C scales linearly with the number of input frames.

C is composed in decimal so that, e.g., 10 frames at 1.437 ms/frame is
14.37 ms and not 14.370000000000001.
"""
import json
import math
import statistics
import time
import zlib
from dataclasses import asdict, dataclass
from decimal import Decimal
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, IoError

CLOUD = "cloud"
FOG = "fog"
TIERS = (CLOUD, FOG)


@dataclass(frozen=True)
class DeviceProfile:
    id: str
    tier: str
    t_time_mean_ms: float
    t_time_jitter_ms: float
    c_time_per_frame_ms: float

    def validate(self):
        if not self.id:
            raise ConfigError("device id must be non-empty")
        if self.tier not in TIERS:
            raise ConfigError(f"{self.id}: tier must be one of {TIERS}, got {self.tier!r}")
        for name in ("t_time_mean_ms", "t_time_jitter_ms", "c_time_per_frame_ms"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value) or value < 0:
                raise ConfigError(f"{self.id}: {name} must be a finite number >= 0, got {value!r}")
        if self.c_time_per_frame_ms <= 0:
            raise ConfigError(f"{self.id}: c_time_per_frame_ms must be > 0")
        if self.tier == FOG and (self.t_time_mean_ms or self.t_time_jitter_ms):
            raise ConfigError(f"{self.id}: fog devices have no transmission time")
        return self

    def c_time(self, n_frames):
        return float(Decimal(repr(float(self.c_time_per_frame_ms))) * n_frames)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(
                str(d["id"]), d["tier"], d["t_time_mean_ms"], d["t_time_jitter_ms"], d["c_time_per_frame_ms"]
            ).validate()
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad device profile {d!r}: {exc}") from None


@dataclass(frozen=True)
class TaskSpec:
    n_frames: int = 10

    def validate(self):
        if not isinstance(self.n_frames, int) or self.n_frames < 1:
            raise ConfigError(f"n_frames must be a positive integer, got {self.n_frames!r}")
        return self


@dataclass(frozen=True)
class SimResult:
    device_id: str
    t_time_ms: float
    c_time_ms: float
    total_ms: float


def _rng(seed, profile):
    # keyed by device id so a device's draws do not depend on list order
    return np.random.default_rng([seed, zlib.crc32(profile.id.encode())])


def _draw_t(profile, rng, size=None):
    mean, jitter = profile.t_time_mean_ms, profile.t_time_jitter_ms
    if jitter == 0:
        return np.full(size, float(mean)) if size is not None else float(mean)
    t = rng.uniform(mean - jitter, mean + jitter, size)
    return np.maximum(t, 0.0) if size is not None else max(float(t), 0.0)


def simulate(profile, task=TaskSpec(), seed=0):
    """One trial.  With zero jitter this is a pure function of its inputs."""
    profile.validate()
    task.validate()
    t = _draw_t(profile, _rng(seed, profile))
    c = profile.c_time(task.n_frames)
    return SimResult(profile.id, t, c, t + c)


def _mean_total(profile, task, seed, trials):
    t = _draw_t(profile, _rng(seed, profile), trials)
    return math.fsum(t) / trials + profile.c_time(task.n_frames)


def rank_placements(profiles, task=TaskSpec(), seed=0, trials=1000):
    """``[(device_id, mean_total_ms), ...]`` ascending by Monte-Carlo mean total."""
    profiles = list(profiles)
    if not profiles:
        raise ConfigError("no device profiles to rank")
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    task.validate()
    for p in profiles:
        p.validate()
    means = [(p.id, _mean_total(p, task, seed, trials)) for p in profiles]
    return sorted(means, key=lambda row: row[1])


@dataclass
class SweepTable:
    frames: list
    rows: dict  # device_id -> list of mean totals, aligned with frames

    def to_dict(self):
        return {"frames": self.frames, "totals_ms": self.rows}

    def to_text(self):
        width = max(len(d) for d in self.rows) if self.rows else 6
        head = f"{'device':<{width}} " + " ".join(f"{f'{n} fr':>10}" for n in self.frames)
        lines = [head, "-" * len(head)]
        for device, totals in self.rows.items():
            lines.append(f"{device:<{width}} " + " ".join(f"{v:>10.2f}" for v in totals))
        return "\n".join(lines)


def sweep_frames(profiles, frame_list, seed=0, trials=1000):
    """Mean total per device per frame count.

    Each device reuses the same T draws at every frame count, so rows are
    nondecreasing in frames.
    """
    frame_list = [int(n) for n in frame_list]
    if not frame_list:
        raise ConfigError("frame list is empty")
    for n in frame_list:
        TaskSpec(n).validate()
    rows = {}
    for p in profiles:
        p.validate()
        rows[p.id] = [_mean_total(p, TaskSpec(n), seed, trials) for n in frame_list]
    return SweepTable(frame_list, rows)


# ---------------------------------------------------------------- profile packs


def load_profiles(path=None):
    """Read a JSON array of profiles; ``None`` loads the shipped four-device pack."""
    try:
        if path is None:
            text = resources.files("parconv").joinpath("data/profiles.json").read_text()
        else:
            text = Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read profile pack {path}: {exc}") from exc
    try:
        rows = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"profile pack {path} is not valid JSON: {exc}") from None
    if not isinstance(rows, list):
        raise ConfigError("a profile pack is a JSON array of device profiles")
    profiles = [DeviceProfile.from_dict(r) for r in rows]
    ids = [p.id for p in profiles]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate device ids in {path}")
    return profiles


def dump_profiles(profiles, path=None):
    text = json.dumps([p.to_dict() for p in profiles], indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


# ---------------------------------------------------------------- local calibration


def measure_local(model, spectrogram, repeats=5, clock=time.perf_counter):
    """Wall-clock a single forward pass: 1 warmup, then ``repeats`` timed runs."""
    if repeats < 3:
        raise ConfigError("repeats must be >= 3")
    data = getattr(spectrogram, "data", spectrogram)
    x = np.asarray(data, dtype=model.dtype)
    while x.ndim < 4:
        x = x[None]
    model.predict_proba(x)
    times = []
    for _ in range(repeats):
        start = clock()
        model.predict_proba(x)
        times.append((clock() - start) * 1e3)
    return {"mean_ms": statistics.fmean(times), "std_ms": statistics.stdev(times), "runs_ms": times}


def profile_from_measurement(device_id, measurement, n_frames=10, tier=FOG, t_time_mean_ms=0.0, t_time_jitter_ms=0.0):
    """Calibrate per-frame C-time from a measurement over ``n_frames`` frames."""
    return DeviceProfile(
        device_id, tier, t_time_mean_ms, t_time_jitter_ms, measurement["mean_ms"] / n_frames
    ).validate()
