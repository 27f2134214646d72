"""The Parallel-Conv classifier: layer plan, parameter init and forward pass."""
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import ops
from .errors import GroupError, ShapeError
from .ops import PARALLEL, STANDARD, ConvLayerSpec
from .tensor import Tensor, no_grad

log = logging.getLogger(__name__)

DRUM_CLASSES = ("tom", "kick", "snare", "closed_hat", "ride", "crash", "open_hat")

# output channels per stage; an average pool separates consecutive stages
STAGES = ((64, 64), (128, 128), (256, 256, 256), (512, 512, 512, 512, 512), (1024, 1024))


@dataclass(frozen=True)
class AvgPoolSpec:
    kind: str = "avgpool"


@dataclass(frozen=True)
class GlobalAvgPoolSpec:
    kind: str = "gap"


@dataclass(frozen=True)
class FullyConnectedSpec:
    in_features: int
    num_classes: int
    bias: bool = True
    kind: str = "fc"


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple
    input_shape: tuple = (1, 128, 128)
    num_classes: int = 7
    groups: int = 4

    @classmethod
    def drum_net(cls, groups=4, num_classes=7, input_shape=(1, 128, 128), kind=PARALLEL, bias=True, d_k=3):
        """The 14-conv, 4-pool network with a global-pool + FC head.

        ``groups`` is clamped to 1 on any layer whose input has a single
        channel (the first layer); every other layer must be divisible.
        """
        layers = []
        d_m = input_shape[0]
        for stage_idx, stage in enumerate(STAGES):
            if stage_idx:
                layers.append(AvgPoolSpec())
            for d_n in stage:
                g = groups if kind != STANDARD else 1
                if d_m == 1 and g != 1:
                    log.info("layer %d: %d input channel(s), clamping groups %d -> 1", len(layers), d_m, g)
                    g = 1
                layers.append(ConvLayerSpec(kind, d_m, d_n, d_k=d_k, groups=g, bias=bias))
                d_m = d_n
        layers.append(GlobalAvgPoolSpec())
        layers.append(FullyConnectedSpec(d_m, num_classes, bias=bias))
        spec = cls(tuple(layers), tuple(input_shape), num_classes, groups)
        spec.validate()
        return spec

    def with_kind(self, kind):
        """Same channel chain with every conv layer switched to ``kind``."""
        layers = []
        for layer in self.layers:
            if isinstance(layer, ConvLayerSpec):
                g = 1 if kind == STANDARD else layer.groups
                layer = replace(layer, kind=kind, groups=g)
            layers.append(layer)
        return replace(self, layers=tuple(layers))

    def conv_layers(self):
        return [layer for layer in self.layers if isinstance(layer, ConvLayerSpec)]

    def validate(self):
        c, h, w = self.input_shape
        if min(c, h, w) < 1:
            raise ShapeError(f"bad input shape {self.input_shape}")
        for idx, layer in enumerate(self.layers):
            if isinstance(layer, ConvLayerSpec):
                try:
                    layer.validate()
                except GroupError as exc:
                    raise GroupError(f"layer {idx}: {exc}") from None
                if layer.d_m != c:
                    raise ShapeError(f"layer {idx} expects {layer.d_m} channels, previous layer gives {c}")
                c = layer.d_n
            elif isinstance(layer, AvgPoolSpec):
                if h % 2 or w % 2:
                    raise ShapeError(f"layer {idx}: cannot 2x2-pool a {h}x{w} map")
                h, w = h // 2, w // 2
            elif isinstance(layer, GlobalAvgPoolSpec):
                h = w = 1
            elif isinstance(layer, FullyConnectedSpec):
                if h != 1 or w != 1 or layer.in_features != c:
                    raise ShapeError(f"layer {idx}: FC expects {layer.in_features} features, got {c}x{h}x{w}")
                if layer.num_classes != self.num_classes:
                    raise ShapeError(f"FC width {layer.num_classes} != num_classes {self.num_classes}")
                c = layer.num_classes
            else:
                raise ShapeError(f"unknown layer {layer!r}")
        return self

    def spatial_sizes(self):
        """(h, w) seen by each layer, in order."""
        _, h, w = self.input_shape
        sizes = []
        for layer in self.layers:
            sizes.append((h, w))
            if isinstance(layer, AvgPoolSpec):
                h, w = h // 2, w // 2
            elif isinstance(layer, GlobalAvgPoolSpec):
                h = w = 1
        return sizes


def param_shapes(spec):
    """Ordered ``(name, shape)`` list; this order is the checkpoint order."""
    shapes = []
    for idx, layer in enumerate(spec.layers):
        if isinstance(layer, ConvLayerSpec):
            main, pointwise, bias = layer.weight_shapes()
            shapes.append((f"l{idx}.weight", main))
            if pointwise is not None:
                shapes.append((f"l{idx}.pointwise", pointwise))
            if bias is not None:
                shapes.append((f"l{idx}.bias", bias))
        elif isinstance(layer, FullyConnectedSpec):
            shapes.append((f"l{idx}.weight", (layer.num_classes, layer.in_features)))
            if layer.bias:
                shapes.append((f"l{idx}.bias", (layer.num_classes,)))
    return shapes


def _fan_in(layer):
    if isinstance(layer, FullyConnectedSpec):
        return layer.in_features
    fan = layer.d_k * layer.d_k * layer.d_m // layer.groups
    if layer.kind == PARALLEL:
        # both branches feed the same sum; count them together so the
        # block as a whole preserves activation variance
        fan += layer.d_m
    return fan


class Model:
    """Immutable layer plan plus a name -> Tensor parameter table."""

    def __init__(self, spec, params):
        self.spec = spec
        self.params = params

    def parameters(self):
        return [self.params[name] for name, _ in param_shapes(self.spec)]

    def named_parameters(self):
        return [(name, self.params[name]) for name, _ in param_shapes(self.spec)]

    def n_parameters(self):
        return sum(p.size for p in self.params.values())

    def forward(self, x):
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=self.dtype))
        if x.ndim != 4 or tuple(x.shape[1:]) != tuple(self.spec.input_shape):
            raise ShapeError(f"model expects N x {self.spec.input_shape}, got {x.shape}")
        p = self.params
        for idx, layer in enumerate(self.spec.layers):
            if isinstance(layer, ConvLayerSpec):
                x = ops.conv_layer(
                    x, layer, p[f"l{idx}.weight"], p.get(f"l{idx}.pointwise"), p.get(f"l{idx}.bias")
                )
                x = ops.relu(x)
            elif isinstance(layer, AvgPoolSpec):
                x = ops.avg_pool2(x)
            elif isinstance(layer, GlobalAvgPoolSpec):
                x = ops.global_avg_pool(x)
            else:
                x = ops.linear(x, p[f"l{idx}.weight"], p.get(f"l{idx}.bias"))
        return x

    __call__ = forward

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def predict_proba(self, x, batch_size=16):
        x = np.asarray(x, dtype=self.dtype)
        out = []
        with no_grad():
            for start in range(0, len(x), batch_size):
                out.append(ops.softmax_np(self.forward(x[start : start + batch_size]).data.astype(np.float64)))
        return np.concatenate(out) if out else np.zeros((0, self.spec.num_classes))

    def astype(self, dtype):
        params = {k: Tensor(v.data.astype(dtype), requires_grad=True) for k, v in self.params.items()}
        return Model(self.spec, params)


def build_network(spec=None, seed=0, dtype=np.float32):
    """Instantiate ``spec`` (default: the 14-conv drum network) with seeded Kaiming-uniform weights.

    Biases start at zero.  Weights are drawn in checkpoint order, so the
    same seed always gives the same model.
    """
    spec = (spec or NetworkSpec.drum_net()).validate()
    rng = np.random.default_rng(seed)
    layer_of = {f"l{i}": layer for i, layer in enumerate(spec.layers)}
    params = {}
    for name, shape in param_shapes(spec):
        layer = layer_of[name.split(".")[0]]
        if name.endswith(".bias"):
            values = np.zeros(shape)
        elif isinstance(layer, FullyConnectedSpec):
            bound = 1.0 / np.sqrt(_fan_in(layer))
            values = rng.uniform(-bound, bound, size=shape)
        else:
            bound = np.sqrt(6.0 / _fan_in(layer))
            values = rng.uniform(-bound, bound, size=shape)
        params[name] = Tensor(values.astype(dtype), requires_grad=True, name=name)
    return Model(spec, params)
