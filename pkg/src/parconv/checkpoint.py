"""Versioned binary checkpoint format.

Layout (little-endian)::

    b"PCNN"  u16 version
    u32 in_channels, u32 height, u32 width, u32 num_classes, u32 groups
    u32 n_layers, then per layer:
        u8 kind, u8 bias, u32 d_k, u32 d_m, u32 d_n, u32 groups
    f32 weights, every parameter flattened in manifest order
    u32 CRC-32 of everything above
"""
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import FormatError
from .network import (
    AvgPoolSpec,
    FullyConnectedSpec,
    GlobalAvgPoolSpec,
    Model,
    NetworkSpec,
    param_shapes,
)
from .ops import GROUPED, PARALLEL, POINTWISE, STANDARD, ConvLayerSpec
from .tensor import Tensor

MAGIC = b"PCNN"
VERSION = 1

_KIND_CODES = {STANDARD: 0, GROUPED: 1, POINTWISE: 2, PARALLEL: 3, "avgpool": 10, "gap": 11, "fc": 12}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}
_HEADER = struct.Struct("<4sH5II")
_LAYER = struct.Struct("<BB4I")


def _layer_record(layer):
    if isinstance(layer, ConvLayerSpec):
        return _LAYER.pack(_KIND_CODES[layer.kind], layer.bias, layer.d_k, layer.d_m, layer.d_n, layer.groups)
    if isinstance(layer, FullyConnectedSpec):
        return _LAYER.pack(_KIND_CODES["fc"], layer.bias, 0, layer.in_features, layer.num_classes, 1)
    return _LAYER.pack(_KIND_CODES[layer.kind], 0, 0, 0, 0, 0)


def encode_model(model):
    spec = model.spec
    c, h, w = spec.input_shape
    parts = [_HEADER.pack(MAGIC, VERSION, c, h, w, spec.num_classes, spec.groups, len(spec.layers))]
    parts += [_layer_record(layer) for layer in spec.layers]
    for name, _ in param_shapes(spec):
        parts.append(np.ascontiguousarray(model.params[name].data, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save_model(model, path):
    """Write atomically: a truncated file never replaces a good one."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_model(model))
    tmp.replace(path)
    return path


def decode_model(buf, dtype=np.float32):
    if len(buf) < _HEADER.size:
        raise FormatError(f"truncated checkpoint: {len(buf)} bytes is shorter than the header")
    magic, version, c, h, w, num_classes, groups, n_layers = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version: expected {VERSION}, found {version}")
    offset = _HEADER.size
    if len(buf) < offset + n_layers * _LAYER.size:
        raise FormatError("truncated checkpoint: layer manifest cut short")
    layers = []
    for _ in range(n_layers):
        code, bias, d_k, d_m, d_n, g = _LAYER.unpack_from(buf, offset)
        offset += _LAYER.size
        kind = _CODE_KINDS.get(code)
        if kind is None:
            raise FormatError(f"unknown layer kind code {code}")
        if kind == "avgpool":
            layers.append(AvgPoolSpec())
        elif kind == "gap":
            layers.append(GlobalAvgPoolSpec())
        elif kind == "fc":
            layers.append(FullyConnectedSpec(d_m, d_n, bool(bias)))
        else:
            layers.append(ConvLayerSpec(kind, d_m, d_n, d_k=d_k, groups=g, bias=bool(bias)))
    spec = NetworkSpec(tuple(layers), (c, h, w), num_classes, groups)
    try:
        spec.validate()
    except Exception as exc:
        raise FormatError(f"inconsistent layer manifest: {exc}") from None
    shapes = param_shapes(spec)
    n_floats = sum(int(np.prod(s)) for _, s in shapes)
    expected = offset + 4 * n_floats + 4
    if len(buf) != expected:
        kind = "truncated" if len(buf) < expected else "oversized"
        raise FormatError(f"{kind} checkpoint: expected {expected} bytes, found {len(buf)}")
    (crc,) = struct.unpack_from("<I", buf, expected - 4)
    if crc != zlib.crc32(buf[: expected - 4]):
        raise FormatError("checkpoint CRC mismatch (corrupted file)")
    flat = np.frombuffer(buf, dtype="<f4", count=n_floats, offset=offset)
    params = {}
    pos = 0
    for name, shape in shapes:
        size = int(np.prod(shape))
        params[name] = Tensor(flat[pos : pos + size].reshape(shape).astype(dtype), requires_grad=True, name=name)
        pos += size
    return Model(spec, params)


def load_model(path, dtype=np.float32):
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode_model(buf, dtype)
