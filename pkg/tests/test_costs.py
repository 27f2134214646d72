import json
from fractions import Fraction

import numpy as np
import pytest

from parconv import kernels, ops
from parconv.costs import (
    all_ops_parallel,
    all_ops_standard,
    cost_report,
    flops_parallel,
    flops_standard,
    params_parallel,
    params_standard,
    reduction_ratio,
)
from parconv.errors import GroupError
from parconv.network import NetworkSpec
from parconv.ops import PARALLEL, STANDARD, ConvLayerSpec
from parconv.tensor import count_macs


def test_formulas_by_hand():
    layer = ConvLayerSpec(PARALLEL, 64, 128, groups=4)
    assert flops_standard(layer, 32, 32) == 32 * 32 * 9 * 64 * 128
    assert flops_parallel(layer, 32, 32) == 32 * 32 * 9 * 16 * 128 + 32 * 32 * 64 * 128
    assert params_standard(layer) == 9 * 64 * 128 + 128
    assert params_parallel(layer) == 9 * 16 * 128 + 64 * 128 + 128
    assert reduction_ratio(layer) == Fraction(1, 4) + Fraction(1, 9)


@pytest.mark.parametrize("g", [1, 2, 4, 8])
def test_ratio_exact_on_network_layers(g):
    for layer in NetworkSpec.drum_net(groups=1).conv_layers():
        if layer.d_m % g or layer.d_n % g:
            continue
        par = ConvLayerSpec(PARALLEL, layer.d_m, layer.d_n, groups=g)
        std = ConvLayerSpec(STANDARD, layer.d_m, layer.d_n)
        assert Fraction(flops_parallel(par, 16, 16), flops_standard(std, 16, 16)) == Fraction(1, g) + Fraction(1, 9)


def test_cli_examples_for_ratios():
    assert reduction_ratio(ConvLayerSpec(PARALLEL, 64, 64, groups=2)) == Fraction(11, 18)
    assert reduction_ratio(ConvLayerSpec(PARALLEL, 64, 64, groups=8)) == Fraction(17, 72)


def test_no_reduction_flagged():
    report = cost_report(NetworkSpec.drum_net(groups=4))
    first = report.to_dict()["layers"][0]
    assert first["groups"] == 1 and first["no_reduction"]
    assert "*" in report.to_text().splitlines()[2]


def test_all_ops_counts_adds():
    layer = ConvLayerSpec(PARALLEL, 4, 4, d_k=3, groups=2, bias=True)
    h = w = 2
    # per output: 9*2 + 4 products, 21 accumulates, 1 merge folded in, 1 bias
    assert all_ops_parallel(layer, h, w) == h * w * 4 * (18 + 4) + h * w * 4 * (22 - 2 + 1 + 1)
    assert all_ops_standard(ConvLayerSpec(STANDARD, 4, 4), h, w) == h * w * 4 * 2 * 36


@pytest.mark.parametrize("g", [2, 4, 8])
def test_parallel_totals_below_standard(g):
    t = cost_report(NetworkSpec.drum_net(groups=g)).totals
    assert t["parallel_flops"] < t["standard_flops"]
    assert t["parallel_params"] < t["standard_params"]


def test_report_json_matches_text():
    report = cost_report()
    data = json.loads(report.to_json())
    total_line = report.to_text().splitlines()[-2]
    assert f"{data['totals']['standard_flops']:,}" in total_line
    assert f"{data['totals']['parallel_params']:,}" in total_line


def test_model_parameter_count_matches_report():
    from parconv.network import build_network

    spec = NetworkSpec.drum_net(input_shape=(1, 32, 32))
    assert build_network(spec).n_parameters() == cost_report(spec).totals["parallel_params"]


def test_group_error():
    with pytest.raises(GroupError):
        flops_parallel(ConvLayerSpec(PARALLEL, 6, 8, groups=4), 4, 4)


def random_layers(n, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        g = int(rng.choice([1, 2, 4]))
        d_m = g * int(rng.integers(1, 4))
        d_n = g * int(rng.integers(1, 4))
        k = int(rng.choice([1, 3, 5]))
        out.append((ConvLayerSpec(PARALLEL, d_m, d_n, d_k=k, groups=g), int(rng.integers(1, 17)), int(rng.integers(1, 17))))
    return out


def test_executed_counts_match_formulas(kernel_path):
    rng = np.random.default_rng(0)
    for layer, h, w in random_layers(15, 1):
        x = rng.standard_normal((1, layer.d_m, h, w)).astype(np.float32)
        w_std = rng.standard_normal((layer.d_n, layer.d_m, layer.d_k, layer.d_k)).astype(np.float32)
        w3 = rng.standard_normal((layer.d_n, layer.d_m // layer.groups, layer.d_k, layer.d_k)).astype(np.float32)
        w1 = rng.standard_normal((layer.d_n, layer.d_m, 1, 1)).astype(np.float32)
        with count_macs() as c:
            ops.conv2d_standard(x, w_std)
        assert c.macs == flops_standard(layer, h, w)
        with count_macs() as c:
            ops.parallel_conv(x, w3, w1, layer.groups)
        assert c.macs == flops_parallel(layer, h, w)
        _, direct = kernels.conv2d_direct_counted(x, w3, layer.groups)
        _, direct1 = kernels.conv2d_direct_counted(x, w1, 1)
        assert direct + direct1 == flops_parallel(layer, h, w)
