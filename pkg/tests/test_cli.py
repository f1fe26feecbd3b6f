import json

import numpy as np
import pytest

from hsirnn.cli import main
from hsirnn.data import HSICube, load_envi, synth_dataset, write_envi
from hsirnn.maps import PALETTE, Palette, encode_ppm, read_ppm
from hsirnn.models import ModelSpec, build, load, save

SMALL_ARCH = ["--hidden", "8", "--filters", "4", "--shorten-filters", "4", "--timesteps", "4"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def usage_code(capsys, *argv):
    with pytest.raises(SystemExit) as exc:
        main([str(a) for a in argv])
    err = capsys.readouterr().err
    return exc.value.code, err


@pytest.fixture
def scene(tmp_path, capsys):
    d = tmp_path / "scene"
    code, _, _ = run(capsys, "synth", "--out", d, "--size", "16x16", "--bands", "16",
                     "--classes", "3", "--seed", "2")
    assert code == 0
    return d


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"lr": 0.01, "epochs": 3, "batch_size": 16}))
    return path


def test_synth_defaults_round_trip(tmp_path, capsys):
    code, out, _ = run(capsys, "synth", "--out", tmp_path / "a")
    assert code == 0 and "40x40x64" in out
    cube, gt = synth_dataset(C=4, D=64, rows=40, cols=40, noise=0.05, seed=0)
    assert load_envi(str(tmp_path / "a" / "cube.hdr")).values.tobytes() == cube.values.tobytes()
    np.testing.assert_array_equal(load_envi(str(tmp_path / "a" / "gt.hdr")).labels, gt.labels)
    assert json.loads((tmp_path / "a" / "split.json").read_text())["per_class"] == 50


def test_synth_is_repeatable(tmp_path, capsys):
    run(capsys, "synth", "--out", tmp_path / "a", "--size", "8x9")
    run(capsys, "synth", "--out", tmp_path / "b", "--size", "8x9")
    for name in ("cube.hdr", "cube.img", "gt.hdr", "gt.img", "split.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_synth_one_class_is_usage_error(tmp_path, capsys):
    code, err = usage_code(capsys, "synth", "--out", tmp_path, "--classes", "1")
    assert code == 2 and "--classes" in err


def test_unknown_model_lists_variants(scene, tmp_path, capsys):
    code, err = usage_code(capsys, "train", "--cube", scene / "cube.hdr", "--gt",
                           scene / "gt.hdr", "--model", "resnet", "--out", tmp_path / "m")
    assert code == 2
    for v in ("rnn", "lstm", "gru", "st-gru", "st-ss-gru", "st-ss-pgru"):
        assert v in err


def test_train_eval_and_report(scene, config, tmp_path, capsys):
    model = tmp_path / "m.hsrn"
    code, out, _ = run(capsys, "train", "--cube", scene / "cube.hdr", "--gt", scene / "gt.hdr",
                       "--split", scene / "split.json", "--config", config,
                       "--model", "st-ss-pgru", *SMALL_ARCH, "--out", model)
    assert code == 0 and model.exists() and "OA" in out
    report = json.loads((tmp_path / "m.hsrn.metrics.json").read_text())
    assert report["n_train"] == 150 and report["n_test"] == 256 - 150
    assert len(report["loss_history"]) == 3
    assert report["model"]["H"] == 8
    m = load(model)
    assert m.spec.variant == "st_ss_pgru" and m.spec.K == 2

    code, out, _ = run(capsys, "eval", "--model", model, "--cube", scene / "cube.hdr",
                       "--gt", scene / "gt.hdr", "--split", scene / "split.json", "--json")
    assert code == 0
    ev = json.loads(out)
    assert ev["n_samples"] == 106
    assert ev["overall_accuracy"] == report["metrics"]["overall_accuracy"]


def test_train_is_bit_identical(scene, config, tmp_path, capsys):
    args = ["train", "--cube", scene / "cube.hdr", "--gt", scene / "gt.hdr", "--config", config,
            "--model", "st-ss-gru", *SMALL_ARCH]
    run(capsys, *args, "--out", tmp_path / "a.hsrn")
    run(capsys, *args, "--out", tmp_path / "b.hsrn")
    assert (tmp_path / "a.hsrn").read_bytes() == (tmp_path / "b.hsrn").read_bytes()


def test_config_model_block(scene, tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"epochs": 1, "model": {"H": 3, "T": 2}}))
    code, _, _ = run(capsys, "train", "--cube", scene / "cube.hdr", "--gt", scene / "gt.hdr",
                     "--config", cfg, "--model", "st-gru", "--out", tmp_path / "m")
    assert code == 0
    spec = load(tmp_path / "m").spec
    assert (spec.H, spec.T) == (3, 2)


def test_eval_band_mismatch(scene, tmp_path, capsys):
    m = build(ModelSpec("gru", D=10, C=3, H=4))
    save(m, tmp_path / "m")
    code, _, err = run(capsys, "eval", "--model", tmp_path / "m", "--cube", scene / "cube.hdr",
                       "--gt", scene / "gt.hdr")
    assert code == 1 and err.startswith("error:") and "10" in err and "16" in err
    assert len(err.strip().splitlines()) == 1


def test_missing_file_is_runtime_error(tmp_path, capsys):
    code, _, err = run(capsys, "eval", "--model", tmp_path / "none", "--cube", tmp_path / "x.hdr",
                       "--gt", tmp_path / "y.hdr")
    assert code == 1 and err.startswith("error:")


def test_corrupt_model_is_runtime_error(scene, tmp_path, capsys):
    (tmp_path / "bad").write_bytes(b"nope" + bytes(20))
    code, _, err = run(capsys, "map", "--model", tmp_path / "bad", "--cube", scene / "cube.hdr",
                       "--out", tmp_path / "x.ppm")
    assert code == 1 and "magic" in err


def test_runs_needs_two(scene, capsys):
    code, err = usage_code(capsys, "runs", "--cube", scene / "cube.hdr", "--gt", scene / "gt.hdr",
                           "--model", "gru", "--n", "1")
    assert code == 2 and "--n" in err


def test_runs_output_line(scene, config, capsys):
    code, out, _ = run(capsys, "runs", "--cube", scene / "cube.hdr", "--gt", scene / "gt.hdr",
                       "--config", config, "--model", "st-gru", *SMALL_ARCH, "--n", "2")
    assert code == 0
    line = out.strip().splitlines()[-1]
    name, stats = line.split("  ")
    assert name == "st-gru"
    mean, std = stats.rstrip("%").split("±")
    assert 0 <= float(mean) <= 100 and float(std) >= 0


def test_map_matches_ground_truth_when_noiseless(tmp_path, capsys):
    d = tmp_path / "clean"
    run(capsys, "synth", "--out", d, "--noise", "0", "--size", "24x24", "--bands", "32")
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"lr": 0.01, "epochs": 60}))
    run(capsys, "train", "--cube", d / "cube.hdr", "--gt", d / "gt.hdr", "--config", cfg,
        "--model", "st-gru", "--hidden", "16", "--shorten-filters", "8", "--out", tmp_path / "m")
    code, out, _ = run(capsys, "map", "--model", tmp_path / "m", "--cube", d / "cube.hdr",
                       "--gt", d / "gt.hdr", "--out", tmp_path / "map.ppm")
    assert code == 0
    data = (tmp_path / "map.ppm").read_bytes()
    assert data.startswith(b"P6\n24 24\n255\n")
    assert len(data) == len(b"P6\n24 24\n255\n") + 24 * 24 * 3
    rgb = read_ppm(tmp_path / "map.ppm")
    gt = load_envi(str(d / "gt.hdr")).labels
    expected = Palette().colorize(gt)
    agree = np.all(rgb == expected, axis=-1).mean()
    assert agree >= 0.99


def test_map_of_constant_model_is_one_color(scene, tmp_path, capsys):
    m = build(ModelSpec("gru", D=16, C=3, H=4))
    m.parameters()["head.W_y"][...] = 0
    m.parameters()["head.b_y"][...] = [0, 5, 0]
    save(m, tmp_path / "m")
    code, _, _ = run(capsys, "map", "--model", tmp_path / "m", "--cube", scene / "cube.hdr",
                     "--out", tmp_path / "map.ppm")
    assert code == 0
    rgb = read_ppm(tmp_path / "map.ppm")
    assert rgb.shape == (16, 16, 3)
    assert np.all(rgb == PALETTE[2])


def test_gradcheck_report(capsys):
    code, out, _ = run(capsys, "gradcheck", "--seed", "0")
    lines = out.strip().splitlines()
    assert code == 0
    assert len(lines) >= 7 and all(line.endswith("pass") for line in lines)
    for name in ("rnn_cell", "lstm_cell", "gru_cell", "output_head", "shorten_conv",
                 "per_band_conv", "parallel_gru", "st_ss_pgru_model"):
        assert any(f" {name} " in line for line in lines)
    assert run(capsys, "gradcheck", "--seed", "0")[1] == out


def test_palette():
    assert len(PALETTE) == 17 and PALETTE[0] == (0, 0, 0)
    assert len(set(PALETTE)) == 17
    assert Palette()[3] == PALETTE[3]
    with pytest.raises(ValueError):
        Palette().colorize(np.array([[17]]))


def test_encode_ppm_layout():
    rgb = np.arange(2 * 3 * 3, dtype=np.uint8).reshape(2, 3, 3)
    data = encode_ppm(rgb)
    assert data == b"P6\n3 2\n255\n" + rgb.tobytes()


def test_cube_without_labels_rejected_as_gt(scene, tmp_path, capsys):
    code, _, err = run(capsys, "train", "--cube", scene / "cube.hdr", "--gt", scene / "cube.hdr",
                       "--model", "gru", "--out", tmp_path / "m")
    assert code == 1 and "label" in err


def test_band_error_wrapped(tmp_path, capsys):
    cube = HSICube(np.random.default_rng(0).normal(size=(4, 4, 5)))
    write_envi(cube, str(tmp_path / "c.hdr"))
    m = build(ModelSpec("gru", D=6, C=3, H=4))
    save(m, tmp_path / "m")
    code, _, err = run(capsys, "map", "--model", tmp_path / "m", "--cube", tmp_path / "c.hdr",
                       "--out", tmp_path / "x.ppm")
    assert code == 1 and "mismatch" in err
