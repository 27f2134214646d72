"""Analytic FLOP (multiply-accumulate) and parameter accounting.

One MAC counts as one FLOP unit.  Bias additions and the branch-merge sum
are excluded from the headline counts, matching the layer cost formulas;
``all_ops`` adds them back (plus every accumulate) for a fuller picture.
"""
import json
import logging
from dataclasses import asdict, dataclass, field
from fractions import Fraction

from .errors import GroupError
from .network import FullyConnectedSpec, NetworkSpec
from .ops import PARALLEL, STANDARD, ConvLayerSpec

log = logging.getLogger(__name__)


def _check_groups(layer):
    if layer.d_m % layer.groups or layer.d_n % layer.groups:
        raise GroupError(f"groups={layer.groups} must divide d_m={layer.d_m} and d_n={layer.d_n}")


def flops_standard(layer, h, w):
    """H * W * K * K * M * N."""
    return h * w * layer.d_k * layer.d_k * layer.d_m * layer.d_n


def flops_parallel(layer, h, w):
    """Grouped K x K branch plus pointwise branch: H*W*K*K*(M/g)*N + H*W*M*N."""
    _check_groups(layer)
    k2 = layer.d_k * layer.d_k
    return h * w * k2 * (layer.d_m // layer.groups) * layer.d_n + h * w * layer.d_m * layer.d_n


def reduction_ratio(layer):
    """Exact parallel/standard cost ratio, 1/g + 1/K^2."""
    ratio = Fraction(1, layer.groups) + Fraction(1, layer.d_k * layer.d_k)
    if ratio >= 1:
        log.info("layer %s: ratio %s >= 1, the parallel form gives no reduction", layer, ratio)
    return ratio


def params_standard(layer):
    return layer.d_k * layer.d_k * layer.d_m * layer.d_n + (layer.d_n if layer.bias else 0)


def params_parallel(layer):
    _check_groups(layer)
    grouped = layer.d_k * layer.d_k * (layer.d_m // layer.groups) * layer.d_n
    return grouped + layer.d_m * layer.d_n + (layer.d_n if layer.bias else 0)


def all_ops_standard(layer, h, w):
    """Multiplies + adds: each output sums K*K*M products, plus the bias."""
    return h * w * layer.d_n * 2 * layer.d_k * layer.d_k * layer.d_m


def all_ops_parallel(layer, h, w):
    macs = flops_parallel(layer, h, w)
    per_output_terms = layer.d_k * layer.d_k * layer.d_m // layer.groups + layer.d_m
    # accumulates inside both branches, one merge add, one bias add
    adds = h * w * layer.d_n * (per_output_terms - 2 + 1 + (1 if layer.bias else 0))
    return macs + adds


def layer_flops(layer, h, w):
    if isinstance(layer, ConvLayerSpec):
        return flops_parallel(layer, h, w) if layer.kind == PARALLEL else flops_standard(layer, h, w)
    if isinstance(layer, FullyConnectedSpec):
        return layer.in_features * layer.num_classes
    return 0


@dataclass
class LayerCost:
    index: int
    name: str
    d_m: int
    d_n: int
    height: int
    width: int
    groups: int
    standard_flops: int
    parallel_flops: int
    standard_params: int
    parallel_params: int
    reduction: Fraction = None

    @property
    def flops_ratio(self):
        return Fraction(self.parallel_flops, self.standard_flops) if self.standard_flops else None


@dataclass
class CostReport:
    layers: list = field(default_factory=list)
    input_shape: tuple = (1, 128, 128)
    groups: int = 4

    def total(self, key):
        return sum(getattr(row, key) for row in self.layers)

    @property
    def totals(self):
        keys = ("standard_flops", "parallel_flops", "standard_params", "parallel_params")
        return {k: self.total(k) for k in keys}

    @property
    def total_reduction(self):
        t = self.totals
        return Fraction(t["parallel_flops"], t["standard_flops"])

    def to_dict(self):
        rows = []
        for row in self.layers:
            d = asdict(row)
            d["reduction"] = None if row.reduction is None else str(row.reduction)
            d["reduction_float"] = None if row.reduction is None else float(row.reduction)
            d["no_reduction"] = row.reduction is not None and row.reduction >= 1
            rows.append(d)
        totals = self.totals
        return {
            "input_shape": list(self.input_shape),
            "groups": self.groups,
            "layers": rows,
            "totals": totals,
            "total_reduction": str(self.total_reduction),
            "total_reduction_float": float(self.total_reduction),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self):
        head = (
            f"{'#':>3} {'layer':<9} {'in':>5} {'out':>5} {'HxW':>9} {'g':>3} "
            f"{'std MACs':>14} {'par MACs':>14} {'std params':>11} {'par params':>11} {'R':>8}"
        )
        lines = [head, "-" * len(head)]
        for row in self.layers:
            if row.reduction is None:
                r = ""
            else:
                r = f"{float(row.reduction):.4f}" + ("*" if row.reduction >= 1 else "")
            lines.append(
                f"{row.index:>3} {row.name:<9} {row.d_m:>5} {row.d_n:>5} {f'{row.height}x{row.width}':>9} "
                f"{row.groups:>3} {row.standard_flops:>14,} {row.parallel_flops:>14,} "
                f"{row.standard_params:>11,} {row.parallel_params:>11,} {r:>8}"
            )
        t = self.totals
        lines.append("-" * len(head))
        lines.append(
            f"{'':>3} {'total':<9} {'':>5} {'':>5} {'':>9} {'':>3} {t['standard_flops']:>14,} "
            f"{t['parallel_flops']:>14,} {t['standard_params']:>11,} {t['parallel_params']:>11,} "
            f"{float(self.total_reduction):>8.4f}"
        )
        if any(row.reduction is not None and row.reduction >= 1 for row in self.layers):
            lines.append("* R >= 1: no reduction (single input channel forces g = 1)")
        return "\n".join(lines)


def cost_report(spec=None):
    """Per-layer standard vs parallel MACs and parameters for ``spec``'s channel chain."""
    spec = spec or NetworkSpec.drum_net()
    report = CostReport(input_shape=tuple(spec.input_shape), groups=spec.groups)
    for idx, (layer, (h, w)) in enumerate(zip(spec.layers, spec.spatial_sizes())):
        if isinstance(layer, ConvLayerSpec):
            std = ConvLayerSpec(STANDARD, layer.d_m, layer.d_n, layer.d_k, 1, bias=layer.bias)
            par = ConvLayerSpec(PARALLEL, layer.d_m, layer.d_n, layer.d_k, layer.groups, bias=layer.bias)
            report.layers.append(
                LayerCost(
                    idx, "conv", layer.d_m, layer.d_n, h, w, layer.groups,
                    flops_standard(std, h, w), flops_parallel(par, h, w),
                    params_standard(std), params_parallel(par),
                    reduction_ratio(par),
                )
            )
        elif isinstance(layer, FullyConnectedSpec):
            macs = layer.in_features * layer.num_classes
            params = macs + (layer.num_classes if layer.bias else 0)
            report.layers.append(
                LayerCost(idx, "fc", layer.in_features, layer.num_classes, 1, 1, 1, macs, macs, params, params)
            )
    return report
