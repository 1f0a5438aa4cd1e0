import json

import pytest

from elemvae.cli import main


@pytest.fixture(scope="module")
def dense_ckpt(tmp_path_factory):
    out = tmp_path_factory.mktemp("models") / "d7.ckpt"
    assert main(["train", "--model", "dense7", "--dup", "3", "--epochs", "2", "--seed", "1",
                 "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def conv_ckpt(tmp_path_factory):
    out = tmp_path_factory.mktemp("models") / "conv.ckpt"
    assert main(["train", "--model", "conv", "--dup", "2", "--epochs", "1", "--out", str(out)]) == 0
    return out


def header(path):
    return dict(line[2:].split(": ", 1) for line in path.read_text().splitlines() if line.startswith("# "))


def test_validate_bundled_data(capsys):
    assert main(["elements", "validate"]) == 0
    out = capsys.readouterr().out
    assert "structural empty cells: all empty" in out
    assert "period sizes" in out


def test_show_element(capsys):
    assert main(["elements", "show", "Ir"]) == 0
    assert "77 Ir Iridium" in capsys.readouterr().out


def test_unknown_flag_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["featurize", "--bogus", "--out", "x.csv"])
    assert exc.value.code == 2


def test_unknown_symbol_is_error(capsys):
    assert main(["elements", "show", "Xx"]) == 1
    assert capsys.readouterr().err.startswith("error:")


def test_featurize_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["featurize", "--variant", "image28", "--dup", "2", "--alpha", "0.01", "--noise-seed", "4"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    meta = header(a)
    assert {"seed", "config_hash", "tool_version"} <= set(meta)
    body = [line for line in a.read_text().splitlines() if not line.startswith("#")]
    assert len(body) == 1 + 236


def test_featurize_transposed(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["featurize", "--transposed", "--dup", "1", "--out", str(out)]) == 0
    body = [line for line in out.read_text().splitlines() if not line.startswith("#")]
    assert len(body) == 20
    assert len(body[0].split(",")) == 119


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"variant": "shell7", "dup": 2}))
    out = tmp_path / "m.csv"
    assert main(["featurize", "--config", str(cfg), "--out", str(out)]) == 0
    body = [line for line in out.read_text().splitlines() if not line.startswith("#")]
    assert len(body) == 1 + 236 and len(body[0].split(",")) == 8
    assert main(["featurize", "--config", str(cfg), "--dup", "1", "--out", str(out)]) == 0
    body = [line for line in out.read_text().splitlines() if not line.startswith("#")]
    assert len(body) == 1 + 118


def test_config_file_rejects_unknown_keys(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"colour": "red"}))
    assert main(["featurize", "--config", str(cfg), "--out", str(tmp_path / "x.csv")]) == 1
    assert "unknown option" in capsys.readouterr().err


def test_train_writes_history(dense_ckpt):
    hist = dense_ckpt.with_suffix(".history.csv")
    lines = [line for line in hist.read_text().splitlines() if not line.startswith("#")]
    assert lines[0].startswith("epoch,")
    assert len(lines) == 3


def test_encode_is_reproducible(tmp_path, dense_ckpt):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["encode", "--model", str(dense_ckpt), "--out", str(a)]) == 0
    assert main(["encode", "--model", str(dense_ckpt), "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    body = [line for line in a.read_text().splitlines() if not line.startswith("#")]
    assert body[0] == "z,symbol,mu1,mu2,logvar1,logvar2"
    assert len(body) == 119


def test_analyze_outputs(tmp_path, dense_ckpt):
    out = tmp_path / "an"
    assert main(["analyze", "--model", str(dense_ckpt), "--plot", "period", "block", "--polar",
                 "--permutations", "10", "--out", str(out)]) == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert set(metrics["separation"]) == {"period", "block"}
    assert (out / "latent_period.svg").exists() and (out / "polar_block.csv").exists()
    assert "config_hash" in metrics["meta"]


def test_grid(tmp_path, conv_ckpt):
    out = tmp_path / "grid.csv"
    assert main(["grid", "--model", str(conv_ckpt), "--n", "5", "--out", str(out)]) == 0
    body = [line for line in out.read_text().splitlines() if not line.startswith("#")]
    assert len(body) == 26
    assert body[0].split(",")[:5] == ["i", "j", "x", "y", "z_estimate"]
    assert len(body[0].split(",")) == 5 + 28


def test_bad_bounds(tmp_path, conv_ckpt):
    assert main(["grid", "--model", str(conv_ckpt), "--bounds", "1:0:0:1",
                 "--out", str(tmp_path / "g.csv")]) == 1


def test_dual_is_reproducible(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ["dual", "--dup", "5", "--epochs", "1", "--seed", "2"]
    assert main(args + ["--report", str(a)]) == 0
    assert main(args + ["--report", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    report = json.loads(a.read_text())
    assert report["alignments_searched"] == 38
    assert (tmp_path / "a_variables.svg").exists()
