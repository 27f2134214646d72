"""Minimal RIFF/WAVE reader and writer.

Reads 16-bit PCM and 32-bit IEEE float (plain or WAVE_FORMAT_EXTENSIBLE),
any channel count and sample rate.  Multichannel audio is downmixed to
mono by averaging.  Writes 16-bit PCM or 32-bit float mono.
"""
import struct
from pathlib import Path

import numpy as np

from ..errors import UnsupportedFormat

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


def _iter_chunks(buf, offset):
    while offset + 8 <= len(buf):
        cid, size = struct.unpack_from("<4sI", buf, offset)
        body = buf[offset + 8 : offset + 8 + size]
        if len(body) < size:
            # tolerate a data chunk cut short by a sloppy writer
            if cid != b"data":
                raise UnsupportedFormat(f"unsupported format: truncated {cid!r} chunk")
        yield cid, body
        offset += 8 + size + (size & 1)


def parse_wav(buf):
    """Decode WAV bytes; returns ``(samples float64 mono, sample_rate)``."""
    if len(buf) < 12 or buf[:4] != b"RIFF" or buf[8:12] != b"WAVE":
        raise UnsupportedFormat("unsupported format: not a RIFF/WAVE file")
    fmt = None
    data = None
    for cid, body in _iter_chunks(buf, 12):
        if cid == b"fmt ":
            if len(body) < 16:
                raise UnsupportedFormat("unsupported format: fmt chunk too short")
            fmt = body
        elif cid == b"data":
            data = body
    if fmt is None or data is None:
        raise UnsupportedFormat("unsupported format: missing fmt or data chunk")

    tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if tag == WAVE_FORMAT_EXTENSIBLE:
        if len(fmt) < 26:
            raise UnsupportedFormat("unsupported format: extensible fmt chunk too short")
        # first two bytes of the SubFormat GUID carry the real format tag
        (tag,) = struct.unpack_from("<H", fmt, 24)
    if channels < 1 or rate < 1:
        raise UnsupportedFormat(f"unsupported format: {channels} channels at {rate} Hz")

    if tag == WAVE_FORMAT_PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise UnsupportedFormat(
            f"unsupported format: tag 0x{tag:04x} with {bits} bits per sample "
            "(only 16-bit PCM and 32-bit float are read)"
        )
    frame_bytes = channels * dtype.itemsize
    n_frames = len(data) // frame_bytes
    raw = np.frombuffer(data[: n_frames * frame_bytes], dtype=dtype)
    samples = raw.astype(np.float64).reshape(n_frames, channels)
    mono = samples.mean(axis=1) if channels > 1 else samples[:, 0]
    return mono * scale, int(rate)


def read_wav(path):
    return parse_wav(Path(path).read_bytes())


def encode_wav(samples, sample_rate, fmt="pcm16"):
    samples = np.asarray(samples, dtype=np.float64)
    if fmt == "pcm16":
        q = np.clip(np.round(samples * 32768.0), -32768, 32767).astype("<i2")
        tag, bits = WAVE_FORMAT_PCM, 16
    elif fmt == "float32":
        q = samples.astype("<f4")
        tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
    else:
        raise ValueError(f"unknown sample format {fmt!r}")
    payload = q.tobytes()
    block_align = bits // 8
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(payload),
        b"WAVE",
        b"fmt ",
        16,
        tag,
        1,
        int(sample_rate),
        int(sample_rate) * block_align,
        block_align,
        bits,
        b"data",
        len(payload),
    )
    pad = b"\x00" if len(payload) & 1 else b""
    return header + payload + pad


def write_wav(path, samples, sample_rate, fmt="pcm16"):
    Path(path).write_bytes(encode_wav(samples, sample_rate, fmt))
