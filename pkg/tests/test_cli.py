import json
import struct
import subprocess
import sys

import numpy as np
import pytest

from parconv.audio import write_wav
from parconv.checkpoint import encode_model, save_model
from parconv.cli import main
from parconv.network import DRUM_CLASSES, NetworkSpec, build_network


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def wav(tmp_path, rng):
    path = tmp_path / "hit.wav"
    write_wav(path, rng.uniform(-0.5, 0.5, 22050), 44100)
    return path


@pytest.fixture(scope="module")
def ckpt(tmp_path_factory):
    path = tmp_path_factory.mktemp("ck") / "m.pcnn"
    save_model(build_network(NetworkSpec.drum_net(input_shape=(1, 128, 16)), seed=0), path)
    return path


def test_featurize(capsys, tmp_path, wav):
    code, out, _ = run(capsys, "--json", "featurize", "--in", wav, "--out", tmp_path / "s.bin")
    assert code == 0
    meta = json.loads((tmp_path / "s.bin.json").read_text())
    assert meta["shape"] == [128, 1 + 22050 // 512] == json.loads(out)["shape"]
    code, _, _ = run(capsys, "featurize", "--in", wav, "--out", tmp_path / "t.bin", "--frames", 128)
    assert json.loads((tmp_path / "t.bin.json").read_text())["shape"] == [128, 128]


def test_featurize_rejects_non_wav(capsys, tmp_path):
    bad = tmp_path / "x.wav"
    bad.write_text("hello")
    code, out, err = run(capsys, "featurize", "--in", bad, "--out", tmp_path / "o")
    assert code == 2 and "unsupported format" in err and out == ""


def test_featurize_missing_input(capsys, tmp_path):
    code, _, err = run(capsys, "featurize", "--in", tmp_path / "none.wav", "--out", tmp_path / "o")
    assert code == 2 and err


def test_cost_ratios(capsys):
    code, out, _ = run(capsys, "cost", "--g", 2)
    assert code == 0
    rows = [line.split() for line in out.splitlines() if line.split() and line.split()[0].isdigit()]
    ratios = [r[-1] for r in rows if r[1] == "conv"]
    # layer 0 has one input channel, so its groups are clamped to 1
    assert ratios[0] == "1.1111*" and set(ratios[1:]) == {"0.6111"}
    code, out, _ = run(capsys, "--json", "cost", "--g", 8)
    data = json.loads(out)
    assert {r["reduction"] for r in data["layers"][1:] if r["name"] == "conv"} == {"17/72"}


def test_cost_json_totals_match_text(capsys):
    _, text, _ = run(capsys, "cost", "--input", "64x64")
    _, js, _ = run(capsys, "cost", "--input", "64x64", "--json")
    totals = json.loads(js)["totals"]
    assert f"{totals['standard_flops']:,}" in text and f"{totals['parallel_flops']:,}" in text


def test_cost_bad_group(capsys):
    code, out, err = run(capsys, "cost", "--g", 3)
    assert code == 2 and "groups" in err and out == ""
    assert run(capsys, "cost", "--input", "12xx")[0] == 2


def test_classify(capsys, ckpt, wav, tmp_path):
    code, out, _ = run(capsys, "--json", "classify", "--model", ckpt, "--in", wav)
    res = json.loads(out)
    assert code == 0 and res["label"] in DRUM_CLASSES and len(res["probs"]) == 7
    assert abs(sum(res["probs"]) - 1) < 1e-6
    silent = tmp_path / "silence.wav"
    write_wav(silent, np.zeros(44100), 44100)
    code, out, _ = run(capsys, "--json", "classify", "--model", ckpt, "--in", silent)
    probs = json.loads(out)["probs"]
    assert code == 0 and all(np.isfinite(probs)) and abs(sum(probs) - 1) < 1e-6


def test_classify_version_mismatch(capsys, ckpt, wav, tmp_path):
    buf = bytearray(ckpt.read_bytes())
    buf[4:6] = struct.pack("<H", 9)
    bad = tmp_path / "v9.pcnn"
    bad.write_bytes(bytes(buf))
    code, _, err = run(capsys, "classify", "--model", bad, "--in", wav)
    assert code == 2 and "version" in err


def test_simulate(capsys):
    code, out, _ = run(capsys, "--json", "simulate", "--frames", 10)
    ranking = json.loads(out)["ranking"]
    assert code == 0 and ranking[0]["device_id"] == "fog-rk3399pro"
    code, out, _ = run(capsys, "simulate", "--frames", "10,20,40,80")
    assert code == 0 and "80 fr" in out and len(out.splitlines()) == 6
    a = run(capsys, "--seed", 7, "simulate", "--trials", 1)
    b = run(capsys, "simulate", "--trials", 1, "--seed", 7)
    assert a == b


def test_simulate_missing_pack(capsys, tmp_path):
    code, _, err = run(capsys, "simulate", "--profiles", tmp_path / "nope.json")
    assert code == 2 and "nope.json" in err


def test_config_file_and_override(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"g": 8, "input": "32x32", "json": True}))
    code, out, _ = run(capsys, "cost", "--config", cfg)
    data = json.loads(out)
    assert code == 0 and data["groups"] == 8 and data["input_shape"] == [1, 32, 32]
    code, out, _ = run(capsys, "cost", "--config", cfg, "--g", 2)
    assert json.loads(out)["groups"] == 2
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(capsys, "cost", "--config", cfg)[0] == 2


def test_config_satisfies_required_flags(capsys, tmp_path, wav):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"in": str(wav), "out": str(tmp_path / "s.bin")}))
    assert run(capsys, "featurize", "--config", cfg)[0] == 0


def test_synth_train_eval(capsys, tmp_path):
    data = tmp_path / "toy"
    code, out, _ = run(capsys, "--json", "synth-data", "--out", data, "--n-per-class", 1)
    assert code == 0 and json.loads(out)["files"] == 14
    model = tmp_path / "m.pcnn"
    code, out, err = run(
        capsys, "--json", "train", "--manifest", data / "manifest.jsonl", "--out", model,
        "--epochs", 1, "--frames", 16, "--stop-at", "none",
    )
    assert code == 0 and "epoch   1" in err
    assert len(json.loads(out)["epochs"]) == 1
    assert (tmp_path / "m.pcnn.report.json").exists()
    code, out, _ = run(capsys, "--json", "eval", "--model", model, "--manifest", data / "manifest.jsonl")
    res = json.loads(out)
    assert code == 0 and res["top1_accuracy"] == np.trace(res["confusion"]) / 7


def test_divergence_exit_code(capsys, tmp_path):
    data = tmp_path / "toy"
    run(capsys, "synth-data", "--out", data, "--n-per-class", 1)
    code, _, err = run(
        capsys, "train", "--manifest", data / "manifest.jsonl", "--out", tmp_path / "m.pcnn",
        "--epochs", 2, "--frames", 16, "--lr", 1e30, "--stop-at", "none",
    )
    assert code == 3 and "diverged" in err


def test_usage_error_exit_code():
    proc = subprocess.run([sys.executable, "-m", "parconv", "cost", "--nope"], capture_output=True, text=True)
    assert proc.returncode == 2 and proc.stdout == "" and "usage" in proc.stderr
