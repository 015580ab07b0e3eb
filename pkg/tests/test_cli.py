import csv
import shutil
from pathlib import Path

import numpy as np
import pytest

from stt.checkpoint import load_checkpoint, save_checkpoint
from stt.cli import main
from stt.imageio import load_image, save_image
from stt.model import ModelConfig, init_params, stylize_array

FIXTURES = Path(__file__).parent / "fixtures"
TINY = ModelConfig(embed_dim=8, heads=2, enc_layers=1, transfer_layers=1)

TRAIN_INI = """[model]
embed_dim = 8
heads = 2
enc_layers = 1
transfer_layers = 1

[train]
iterations = {iterations}
batch_size = 1
crop = 32
shorter_side = 64
checkpoint_every = 5
"""


@pytest.fixture(scope="module")
def model_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "m.sttw"
    save_checkpoint(init_params(TINY, 0), None, path, TINY)
    return path


@pytest.fixture
def dirs(tmp_path):
    (tmp_path / "content").mkdir()
    (tmp_path / "style").mkdir()
    shutil.copy(FIXTURES / "content64.ppm", tmp_path / "content")
    shutil.copy(FIXTURES / "style64.ppm", tmp_path / "style")
    return tmp_path


def write_config(path, iterations):
    path.write_text(TRAIN_INI.format(iterations=iterations))
    return path


@pytest.mark.parametrize("command", [None, "train", "stylize", "edges", "eval", "repeat"])
def test_help_exits_zero(command, capsys):
    argv = ([command] if command else []) + ["--help"]
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 0
    assert "--" in capsys.readouterr().out


def test_unknown_flag_is_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["stylize", "--bogus"])
    assert info.value.code == 2


class TestTrain:
    def test_twenty_iterations(self, dirs):
        cfg = write_config(dirs / "run.ini", 20)
        out = dirs / "out"
        assert main(["train", "--config", str(cfg), "--content-dir", str(dirs / "content"),
                     "--style-dir", str(dirs / "style"), "--out-dir", str(out)]) == 0
        rows = list(csv.reader((out / "loss.csv").open()))
        assert len(rows) == 21 and rows[0] == ["iter", "lr", "content", "style", "id1", "id2", "edge", "total"]
        assert all(np.isfinite(float(x)) for r in rows[1:] for x in r)
        _, state, cfg_back = load_checkpoint(out / "checkpoint.sttw")
        assert state.t == 20 and cfg_back == TINY
        assert (out / "config.ini").exists()

    def test_resume_continues_counter(self, dirs):
        out = dirs / "out"
        common = ["--content-dir", str(dirs / "content"), "--style-dir", str(dirs / "style"), "--out-dir", str(out)]
        assert main(["train", "--config", str(write_config(dirs / "a.ini", 4))] + common) == 0
        assert main(["train", "--config", str(write_config(dirs / "b.ini", 7)), "--resume",
                     str(out / "checkpoint.sttw")] + common) == 0
        rows = list(csv.reader((out / "loss.csv").open()))
        assert [r[0] for r in rows[1:]] == [str(i) for i in range(1, 8)]
        assert load_checkpoint(out / "checkpoint.sttw")[1].t == 7

    def test_missing_config(self, dirs, capsys):
        code = main(["train", "--config", str(dirs / "nope.ini"), "--content-dir", str(dirs / "content"),
                     "--style-dir", str(dirs / "style"), "--out-dir", str(dirs / "out")])
        assert code == 2 and "config" in capsys.readouterr().err

    def test_empty_dir(self, dirs):
        (dirs / "empty").mkdir()
        code = main(["train", "--config", str(write_config(dirs / "c.ini", 2)), "--content-dir", str(dirs / "empty"),
                     "--style-dir", str(dirs / "style"), "--out-dir", str(dirs / "out")])
        assert code == 2


class TestStylize:
    def run(self, model, content, style, out):
        return main(["stylize", "--model", str(model), "--content", str(content), "--style", str(style),
                     "--out", str(out)])

    def test_shape_and_determinism(self, model_path, tmp_path):
        c, s = FIXTURES / "content64.ppm", FIXTURES / "style96.ppm"
        assert self.run(model_path, c, s, tmp_path / "a.ppm") == 0
        assert self.run(model_path, c, s, tmp_path / "b.ppm") == 0
        assert load_image(tmp_path / "a.ppm").shape == (64, 64, 3)
        assert (tmp_path / "a.ppm").read_bytes() == (tmp_path / "b.ppm").read_bytes()

    def test_odd_size_cropped_with_warning(self, model_path, tmp_path, caplog):
        img = np.concatenate([load_image(FIXTURES / "content64.ppm"), np.zeros((1, 64, 3), np.float32)])
        save_image(img, tmp_path / "c65.ppm")
        assert self.run(model_path, tmp_path / "c65.ppm", FIXTURES / "style64.ppm", tmp_path / "o.png") == 0
        assert load_image(tmp_path / "o.png").shape == (64, 64, 3)
        assert "cropped" in caplog.text

    def test_bad_model(self, tmp_path):
        (tmp_path / "bad.sttw").write_bytes(b"nope")
        assert self.run(tmp_path / "bad.sttw", FIXTURES / "content64.ppm", FIXTURES / "style64.ppm",
                        tmp_path / "o.ppm") == 2

    def test_missing_image(self, model_path, tmp_path):
        assert self.run(model_path, tmp_path / "none.ppm", FIXTURES / "style64.ppm", tmp_path / "o.ppm") == 2
        assert not (tmp_path / "o.ppm").exists()


class TestRepeat:
    def run(self, model, rounds, out):
        return main(["repeat", "--model", str(model), "--content", str(FIXTURES / "content64.ppm"),
                     "--style", str(FIXTURES / "style64.ppm"), "--rounds", str(rounds), "--out-dir", str(out)])

    def test_one_round_equals_stylize(self, model_path, tmp_path):
        assert self.run(model_path, 1, tmp_path / "rep") == 0
        main(["stylize", "--model", str(model_path), "--content", str(FIXTURES / "content64.ppm"),
              "--style", str(FIXTURES / "style64.ppm"), "--out", str(tmp_path / "s.ppm")])
        assert (tmp_path / "rep" / "round_001.ppm").read_bytes() == (tmp_path / "s.ppm").read_bytes()

    def test_rounds_chain_through_files(self, model_path, tmp_path):
        out = tmp_path / "rep"
        assert self.run(model_path, 3, out) == 0
        params, config = load_checkpoint(model_path)[0], TINY
        prev = load_image(out / "round_002.ppm")
        expected = stylize_array(prev, load_image(FIXTURES / "style64.ppm"), params, config)
        save_image(expected, tmp_path / "expect.ppm")
        assert (tmp_path / "expect.ppm").read_bytes() == (out / "round_003.ppm").read_bytes()
        rows = list(csv.reader((out / "content_leak.csv").open()))
        assert rows[0] == ["round", "content_loss"] and len(rows) == 4

    def test_zero_rounds(self, model_path, tmp_path):
        assert self.run(model_path, 0, tmp_path / "rep") == 2


class TestEdges:
    def run(self, content, stylized, out, tau=None):
        argv = ["edges", "--content", str(content), "--stylized", str(stylized), "--out-dir", str(out)]
        return main(argv + (["--tau", str(tau)] if tau is not None else []))

    def test_identical_images(self, tmp_path, capsys):
        assert self.run(FIXTURES / "content64.ppm", FIXTURES / "content64.ppm", tmp_path) == 0
        assert capsys.readouterr().out.strip() == "edge_loss 0.0"
        assert load_image(tmp_path / "edges_content.ppm").any()
        assert (tmp_path / "edges_content.ppm").read_bytes() == (tmp_path / "edges_stylized.ppm").read_bytes()

    def test_constant_stylized_is_black(self, tmp_path):
        save_image(np.full((64, 64, 3), 0.5), tmp_path / "flat.ppm")
        assert self.run(FIXTURES / "content64.ppm", tmp_path / "flat.ppm", tmp_path / "o") == 0
        assert not load_image(tmp_path / "o" / "edges_stylized.ppm").any()

    def test_tau_sweep_monotone(self, tmp_path):
        counts = []
        for tau in (0.1, 0.2, 0.4):
            out = tmp_path / str(tau)
            assert self.run(FIXTURES / "content64.ppm", FIXTURES / "style64.ppm", out, tau) == 0
            counts.append(int((load_image(out / "edges_content.ppm")[..., 0] > 0).sum()))
        assert counts == sorted(counts, reverse=True) and counts[0] > 0

    def test_dims_mismatch(self, tmp_path):
        assert self.run(FIXTURES / "content64.ppm", FIXTURES / "content96.ppm", tmp_path) == 2


class TestEval:
    def run(self, model, samples, seed=0):
        return main(["eval", "--model", str(model), "--content-dir", str(FIXTURES), "--style-dir", str(FIXTURES),
                     "--samples", str(samples), "--seed", str(seed)])

    def test_columns_and_determinism(self, model_path, capsys):
        assert self.run(model_path, 1, 3) == 0
        first = capsys.readouterr().out.splitlines()
        assert first[0].split("\t") == ["content", "style", "id1", "id2", "time"]
        assert self.run(model_path, 1, 3) == 0
        second = capsys.readouterr().out.splitlines()
        assert first[1].split("\t")[:4] == second[1].split("\t")[:4]
        assert all(np.isfinite(float(v)) for v in first[1].split("\t"))

    def test_zero_samples(self, model_path):
        assert self.run(model_path, 0) == 2


class TestNumericalAbort:
    @pytest.fixture
    def nan_model(self, tmp_path):
        params = init_params(TINY, 0)
        params["out.bias"].data[0] = np.nan
        save_checkpoint(params, None, tmp_path / "nan.sttw", TINY)
        return tmp_path / "nan.sttw"

    def test_stylize(self, nan_model, tmp_path):
        assert main(["stylize", "--model", str(nan_model), "--content", str(FIXTURES / "content64.ppm"),
                     "--style", str(FIXTURES / "style64.ppm"), "--out", str(tmp_path / "o.ppm")]) == 3
        assert not (tmp_path / "o.ppm").exists()

    def test_repeat(self, nan_model, tmp_path):
        assert main(["repeat", "--model", str(nan_model), "--content", str(FIXTURES / "content64.ppm"),
                     "--style", str(FIXTURES / "style64.ppm"), "--rounds", "2", "--out-dir", str(tmp_path / "r")]) == 3

    def test_train(self, nan_model, dirs, capsys):
        code = main(["train", "--config", str(write_config(dirs / "n.ini", 3)), "--content-dir", str(dirs / "content"),
                     "--style-dir", str(dirs / "style"), "--out-dir", str(dirs / "out"), "--resume", str(nan_model)])
        assert code == 3 and "bad tensor" in capsys.readouterr().err


def test_module_entry_point():
    import subprocess
    import sys

    proc = subprocess.run([sys.executable, "-m", "stt", "edges", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "--tau" in proc.stdout
