import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parconv.errors import ConfigError, IoError
from parconv.fogsim import (
    DeviceProfile,
    TaskSpec,
    dump_profiles,
    load_profiles,
    measure_local,
    profile_from_measurement,
    rank_placements,
    simulate,
    sweep_frames,
)


@pytest.fixture
def pack():
    return {p.id: p for p in load_profiles()}


def test_shipped_pack(pack):
    assert set(pack) == {"cloud-cpu", "cloud-gpu", "fog-pi-npu", "fog-rk3399pro"}
    assert pack["cloud-cpu"].t_time_mean_ms == 560 and pack["cloud-cpu"].t_time_jitter_ms == 20


def test_rk3399pro_ten_frames_exact(pack):
    r = simulate(pack["fog-rk3399pro"], TaskSpec(10), seed=123)
    assert (r.t_time_ms, r.c_time_ms, r.total_ms) == (0.0, 11.68, 11.68)


def test_rk3399pro_twenty_frames(pack):
    assert simulate(pack["fog-rk3399pro"], TaskSpec(20)).c_time_ms == 23.36


def test_cloud_cpu_bounds(pack):
    totals = [simulate(pack["cloud-cpu"], TaskSpec(10), seed=s).total_ms for s in range(200)]
    assert min(totals) >= 554.37 and max(totals) <= 594.37
    assert np.mean(totals) == pytest.approx(574.37, abs=2.0)


@given(seed=st.integers(0, 2**32 - 1), frames=st.integers(1, 500))
@settings(max_examples=100, deadline=None)
def test_total_is_exact_sum(seed, frames):
    for p in load_profiles():
        r = simulate(p, TaskSpec(frames), seed)
        assert r.total_ms == r.t_time_ms + r.c_time_ms


def test_zero_jitter_is_pure(pack):
    p = replace(pack["cloud-gpu"], t_time_jitter_ms=0.0)
    assert {simulate(p, TaskSpec(10), s) for s in range(5)} == {simulate(p, TaskSpec(10), 0)}


def test_ranking_fog_first(pack):
    ranking = rank_placements(pack.values(), TaskSpec(10), seed=0, trials=500)
    assert [d for d, _ in ranking][:2] == ["fog-rk3399pro", "fog-pi-npu"]
    assert {d for d, _ in ranking[2:]} == {"cloud-cpu", "cloud-gpu"}


def test_ranking_seed_independent_without_jitter(pack):
    flat = [replace(p, t_time_jitter_ms=0.0) for p in pack.values()]
    runs = {tuple(rank_placements(flat, TaskSpec(10), seed=s, trials=t)) for s in (0, 1) for t in (1, 7)}
    assert len(runs) == 1


def test_ranking_order_does_not_change_draws(pack):
    ps = list(pack.values())
    assert sorted(rank_placements(ps, seed=4, trials=50)) == sorted(rank_placements(ps[::-1], seed=4, trials=50))


def test_ranking_invariant_under_rescale():
    ps = [DeviceProfile(f"d{i}", "fog", 0.0, 0.0, c) for i, c in enumerate([1.3, 0.7, 2.9])]
    scaled = [replace(p, c_time_per_frame_ms=p.c_time_per_frame_ms * 3.5) for p in ps]
    order = [d for d, _ in rank_placements(ps, TaskSpec(10))]
    assert order == [d for d, _ in rank_placements(scaled, TaskSpec(10))] == ["d1", "d0", "d2"]


def test_single_profile_and_empty(pack):
    assert rank_placements([pack["cloud-cpu"]], trials=3)[0][0] == "cloud-cpu"
    with pytest.raises(ConfigError):
        rank_placements([])


@pytest.mark.parametrize("frames", [1, 10, 100, 380])
def test_fog_beats_cloud_floor(pack, frames):
    fog = [p for p in pack.values() if p.tier == "fog"]
    cloud = [p for p in pack.values() if p.tier == "cloud"]
    worst_fog = max(simulate(p, TaskSpec(frames)).total_ms for p in fog)
    best_cloud_floor = min(p.t_time_mean_ms - p.t_time_jitter_ms + p.c_time(frames) for p in cloud)
    assert worst_fog < best_cloud_floor


def test_sweep_linear_and_monotone(pack):
    table = sweep_frames(pack.values(), [10, 20, 40, 80], seed=1, trials=200)
    fog = table.rows["fog-rk3399pro"]
    assert fog == [11.68, 23.36, 46.72, 93.44]
    for totals in table.rows.values():
        assert all(a <= b for a, b in zip(totals, totals[1:]))
    cloud = table.rows["cloud-cpu"]
    assert cloud[0] > 10 * pack["cloud-cpu"].c_time(10)
    assert "80 fr" in table.to_text()
    with pytest.raises(ConfigError):
        sweep_frames(pack.values(), [])


def test_one_trial_without_jitter_is_analytic(pack):
    p = replace(pack["cloud-cpu"], t_time_jitter_ms=0.0)
    assert sweep_frames([p], [10], trials=1).rows["cloud-cpu"] == [574.37]


@pytest.mark.parametrize(
    "bad",
    [
        {"id": "x", "tier": "edge", "t_time_mean_ms": 0, "t_time_jitter_ms": 0, "c_time_per_frame_ms": 1},
        {"id": "x", "tier": "fog", "t_time_mean_ms": 5, "t_time_jitter_ms": 0, "c_time_per_frame_ms": 1},
        {"id": "x", "tier": "cloud", "t_time_mean_ms": 5, "t_time_jitter_ms": 0, "c_time_per_frame_ms": 0},
        {"id": "x", "tier": "cloud", "t_time_mean_ms": -1, "t_time_jitter_ms": 0, "c_time_per_frame_ms": 1},
        {"id": "x", "tier": "cloud"},
    ],
)
def test_invalid_profiles(bad):
    with pytest.raises(ConfigError):
        DeviceProfile.from_dict(bad)


def test_pack_io(tmp_path, pack):
    path = tmp_path / "pack.json"
    dump_profiles(pack.values(), path)
    assert load_profiles(path) == list(pack.values())
    with pytest.raises(IoError):
        load_profiles(tmp_path / "missing.json")
    path.write_text(json.dumps([pack["cloud-cpu"].to_dict()] * 2))
    with pytest.raises(ConfigError, match="duplicate"):
        load_profiles(path)
    with pytest.raises(ConfigError):
        TaskSpec(0).validate()


class FakeModel:
    dtype = np.float32

    def __init__(self):
        self.calls = 0

    def predict_proba(self, x):
        assert x.ndim == 4
        self.calls += 1


def test_measure_local_counts_runs_and_sample_std():
    ticks = iter([0.0, 0.001, 0.0, 0.002, 0.0, 0.006])
    model = FakeModel()
    m = measure_local(model, np.zeros((128, 16)), repeats=3, clock=lambda: next(ticks))
    assert model.calls == 4  # 1 warmup + 3 timed
    assert m["runs_ms"] == pytest.approx([1.0, 2.0, 6.0])
    assert m["mean_ms"] == pytest.approx(3.0)
    assert m["std_ms"] == pytest.approx(np.std([1.0, 2.0, 6.0], ddof=1))
    with pytest.raises(ConfigError):
        measure_local(model, np.zeros((128, 16)), repeats=2)


def test_measured_profile_roundtrips(tmp_path):
    from parconv.network import NetworkSpec, build_network

    model = build_network(NetworkSpec.drum_net(input_shape=(1, 128, 16)))
    m = measure_local(model, np.random.default_rng(0).random((128, 16)), repeats=3)
    prof = profile_from_measurement("this-host", m, n_frames=10)
    assert prof.c_time_per_frame_ms == pytest.approx(m["mean_ms"] / 10)
    dump_profiles([prof], tmp_path / "p.json")
    assert load_profiles(tmp_path / "p.json") == [prof]
