import numpy as np
import pytest

from parconv.errors import GroupError, ShapeError
from parconv.network import (
    DRUM_CLASSES,
    AvgPoolSpec,
    FullyConnectedSpec,
    GlobalAvgPoolSpec,
    NetworkSpec,
    build_network,
    param_shapes,
)
from parconv.ops import PARALLEL, STANDARD, ConvLayerSpec


def test_stage_chain():
    spec = NetworkSpec.drum_net()
    convs = spec.conv_layers()
    assert len(convs) == 14
    assert [c.d_n for c in convs] == [64, 64, 128, 128, 256, 256, 256] + [512] * 5 + [1024, 1024]
    assert sum(isinstance(layer, AvgPoolSpec) for layer in spec.layers) == 4
    assert isinstance(spec.layers[-2], GlobalAvgPoolSpec)
    assert spec.layers[-1] == FullyConnectedSpec(1024, 7)
    assert convs[0].groups == 1 and all(c.groups == 4 for c in convs[1:])
    assert spec.spatial_sizes()[-3] == (8, 8)


def test_group_validation():
    with pytest.raises(GroupError):
        NetworkSpec.drum_net(groups=3)
    with pytest.raises(ShapeError):
        NetworkSpec.drum_net(input_shape=(1, 128, 100))


def test_standard_variant_has_no_groups():
    spec = NetworkSpec.drum_net().with_kind(STANDARD)
    assert all(c.kind == STANDARD and c.groups == 1 for c in spec.conv_layers())


def test_param_count_default_model():
    model = build_network(seed=0)
    assert model.n_parameters() == 9_584_903
    assert len(model.parameters()) == len(param_shapes(model.spec))


def test_build_is_seeded():
    spec = NetworkSpec.drum_net(input_shape=(1, 32, 32))
    a, b, c = build_network(spec, 1), build_network(spec, 1), build_network(spec, 2)
    for (na, pa), (_, pb), (_, pc) in zip(a.named_parameters(), b.named_parameters(), c.named_parameters()):
        np.testing.assert_array_equal(pa.data, pb.data)
        if not na.endswith("bias"):
            assert not np.array_equal(pa.data, pc.data)


def test_forward_shapes_and_probabilities(rng):
    model = build_network(NetworkSpec.drum_net(input_shape=(1, 32, 16)), seed=0)
    x = rng.random((3, 1, 32, 16)).astype(np.float32)
    assert model.forward(x).shape == (3, len(DRUM_CLASSES))
    p = model.predict_proba(x, batch_size=2)
    assert p.shape == (3, 7)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)
    with pytest.raises(ShapeError):
        model.forward(x[:, :, :16])


def test_init_keeps_activations_alive(rng):
    # the last feature map must not collapse to zero or explode at init
    spec = NetworkSpec.drum_net(input_shape=(1, 32, 32))
    model = build_network(spec, seed=0)
    x = rng.random((4, 1, 32, 32)).astype(np.float32)
    x /= np.sqrt(np.mean(x**2))
    logits = model.forward(x).data
    assert np.all(np.isfinite(logits))
    assert 1e-3 < np.std(logits) < 10


def test_custom_spec_channel_mismatch():
    spec = NetworkSpec((ConvLayerSpec(PARALLEL, 1, 4), ConvLayerSpec(PARALLEL, 8, 8)), (1, 4, 4), 7)
    with pytest.raises(ShapeError):
        spec.validate()
