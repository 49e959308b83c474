import csv
import json

import pytest

from bearingdx.cli import (
    CONFIG_KEYS,
    EXIT_OK,
    EXIT_RUNTIME,
    EXIT_USAGE,
    main,
    parse_config_text,
    resolve_config,
)
from bearingdx.exceptions import ConfigError
from bearingdx.signal import FaultClass, read_manifest


@pytest.fixture(scope="module")
def small_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    assert main(["generate", "--n-per-class", "6", "--len", "4000", "--seed", "3", "--out", str(root), "--quiet"]) == 0
    return root / "manifest.csv"


def _train(manifest, out, *extra):
    args = ["train", "--data", str(manifest), "--out", str(out), "--segment-len", "1000", "--batch-size", "8",
            "--quiet", *extra]
    return main(args)


@pytest.fixture(scope="module")
def runs(small_data, tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    out = {}
    for model, extra in [(1, ["--epochs", "3"]), (5, ["--epochs", "5"]), (7, ["--epochs", "3"]),
                         (8, ["--timesteps", "300"])]:
        out[model] = root / f"m{model}"
        assert _train(small_data, out[model], "--model", str(model), "--seed", "1", *extra) == EXIT_OK
    return out


# --------------------------------------------------------------------------
# configuration

def test_three_layer_precedence():
    file_values = parse_config_text("model_id = 7\nepochs = 12\nbatch_size = 32\n")
    cfg = resolve_config({"epochs": "3"}, file_values)
    assert cfg["epochs"] == 3  # flag beats file
    assert cfg["batch_size"] == 32  # file beats default
    assert cfg["learning_rate"] == CONFIG_KEYS["learning_rate"][1]  # default
    assert cfg["model_id"] == 7


def test_config_parsing_errors():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config_text("colour = blue")
    with pytest.raises(ConfigError, match="key = value"):
        parse_config_text("epochs 5")
    with pytest.raises(ConfigError):
        resolve_config({"model_id": "5", "epochs": "many"})
    assert parse_config_text("# comment\n\nepochs = 4  # trailing\n") == {"epochs": "4"}


def test_model_id_drives_feature_mode_and_matrix():
    assert resolve_config({"model_id": 2})["feature_mode"] == "windows"
    assert resolve_config({"model_id": 6})["feature_mode"] == "stats"
    assert resolve_config({"model_id": 8})["reward_matrix"] == "table6"
    assert resolve_config({"model_id": 7})["reward_matrix"] == "default"
    assert resolve_config({"model_id": 5, "reward_matrix": "table6"})["reward_matrix"] == "none"
    with pytest.raises(ConfigError, match="feature_mode"):
        resolve_config({"model_id": 1, "feature_mode": "stats"})


@pytest.mark.parametrize("model", ["0", "9"])
def test_model_out_of_range(model, capsys):
    assert main(["train", "--model", model]) == EXIT_USAGE
    assert "1-8" in capsys.readouterr().err


def test_usage_errors_exit_2(tmp_path, capsys):
    assert main([]) == EXIT_USAGE
    assert main(["train", "--model", "5", "--config", str(tmp_path / "missing.cfg")]) == EXIT_USAGE
    assert main(["generate", "--n-per-class", "0", "--out", str(tmp_path / "g")]) == EXIT_USAGE
    assert "n_per_class" in capsys.readouterr().err


# --------------------------------------------------------------------------
# generate

def test_generate_counts_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["generate", "--n-per-class", "4", "--len", "2000", "--seed", "9", "--out", str(out),
                     "--quiet"]) == EXIT_OK
    manifest = read_manifest(a / "manifest.csv")
    assert len(manifest.entries) == 12
    assert sorted({label for _, label in manifest.entries}) == list(FaultClass)
    files = sorted(p.name for p in a.glob("*.f32"))
    assert len(files) == 12
    for name in files + ["manifest.csv"]:
        assert (a / name).read_bytes() == (b / name).read_bytes()


# --------------------------------------------------------------------------
# train

def test_run_directory_contents(runs):
    common = {"model.ckpt", "report.json", "confusion.csv", "normalizer.csv", "config.txt", "timing.json"}
    assert {p.name for p in runs[8].iterdir()} == common | {"reward_curve.csv"}
    assert {p.name for p in runs[7].iterdir()} == common | {"reward_curve.csv"}
    assert {p.name for p in runs[1].iterdir()} == common | {"loss_log.csv"}
    assert "reward_curve" in json.loads((runs[8] / "report.json").read_text())
    assert "reward_curve" not in json.loads((runs[5] / "report.json").read_text())


def test_loss_and_reward_csv_headers(runs):
    assert (runs[5] / "loss_log.csv").read_text().splitlines()[0] == "epoch,mean_loss"
    assert len((runs[5] / "loss_log.csv").read_text().splitlines()) == 1 + 5
    lines = (runs[7] / "reward_curve.csv").read_text().splitlines()
    assert lines[0] == "episode,cumulative_reward,epsilon" and len(lines) == 1 + 3


def test_training_is_byte_reproducible(small_data, runs, tmp_path):
    again = tmp_path / "again"
    assert _train(small_data, again, "--model", "8", "--seed", "1", "--timesteps", "300") == EXIT_OK
    for name in ("report.json", "model.ckpt", "reward_curve.csv"):
        assert (again / name).read_bytes() == (runs[8] / name).read_bytes()


def test_config_file_run(small_data, tmp_path):
    matrix = tmp_path / "rewards.csv"
    matrix.write_text("1,-2,-1\n-2,1,-1\n-1,-1,1\n")
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(f"model_id = 7\nepochs = 2\nbatch_size = 8\nsegment_len = 1000\n"
                   f"reward_matrix = {matrix}\ndata = {small_data}\nseed = 4\n")
    out = tmp_path / "run"
    assert main(["--config", str(cfg), "train", "--out", str(out), "--quiet"]) == EXIT_OK
    stored = parse_config_text((out / "config.txt").read_text())
    assert stored["reward_matrix"] == str(matrix) and stored["epochs"] == "2" and stored["seed"] == "4"


def test_train_too_little_data_is_a_validation_error(small_data, tmp_path):
    out = tmp_path / "r"
    assert main(["train", "--model", "5", "--data", str(small_data), "--segment-len", "1000", "--out", str(out),
                 "--quiet"]) == EXIT_USAGE
    assert not out.exists()


def test_train_missing_manifest_is_runtime_error(tmp_path, capsys):
    assert main(["train", "--model", "5", "--data", str(tmp_path / "nope.csv"), "--quiet"]) == EXIT_RUNTIME
    assert "MissingFileError" in capsys.readouterr().err


# --------------------------------------------------------------------------
# evaluate

@pytest.mark.parametrize("model", [7, 8, 1])
def test_evaluate_reproduces_stored_report(runs, model, capsys):
    assert main(["evaluate", str(runs[model])]) == EXIT_OK
    assert capsys.readouterr().out == (runs[model] / "report.json").read_text()


def test_evaluate_shape_mismatch(runs, capsys):
    assert main(["evaluate", str(runs[7]), "--feature-mode", "windows"]) == EXIT_RUNTIME
    assert "ShapeMismatchError" in capsys.readouterr().err


def test_evaluate_empty_set(runs, tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("path,label\n")
    assert main(["evaluate", str(runs[7]), "--data", str(empty), "--split", "all"]) == EXIT_USAGE
    assert "empty" in capsys.readouterr().err


def test_evaluate_does_not_touch_checkpoint(runs, tmp_path):
    before = (runs[8] / "model.ckpt").read_bytes()
    assert main(["evaluate", str(runs[8]), "--split", "all", "--out", str(tmp_path)]) == EXIT_OK
    assert (runs[8] / "model.ckpt").read_bytes() == before
    assert json.loads((tmp_path / "report.json").read_text())["model_id"] == 8


# --------------------------------------------------------------------------
# report

def test_report_table_sorted_by_model(runs, tmp_path, capsys):
    out_csv = tmp_path / "cmp.csv"
    dirs = [str(runs[m]) for m in (8, 1, 7, 5)]
    assert main(["report", *dirs, "--csv", str(out_csv)]) == EXIT_OK
    text = capsys.readouterr().out.splitlines()
    assert text[0].split("  ")[0] == "Model"
    with open(out_csv, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["Model", "Accuracy (%)", "Precision", "Recall", "F-1 Score", "Training time"]
    assert [r[0] for r in rows[1:]] == ["1", "5", "7", "8"]
    acc = json.loads((runs[5] / "report.json").read_text())["accuracy"]
    assert rows[2][1] == f"{100 * acc:.2f}"
    assert rows[2][5].endswith(" s")


def test_report_single_and_duplicate_runs(small_data, runs, tmp_path, capsys):
    assert main(["report", str(runs[7]), "--quiet", "--csv", str(tmp_path / "one.csv")]) == EXIT_OK
    assert len((tmp_path / "one.csv").read_text().splitlines()) == 2
    twin = tmp_path / "m7s2"
    assert _train(small_data, twin, "--model", "7", "--seed", "2", "--epochs", "2") == EXIT_OK
    assert main(["report", str(twin), str(runs[7]), "--out", str(tmp_path / "cmp")]) == EXIT_OK
    rows = (tmp_path / "cmp" / "comparison.csv").read_text().splitlines()[1:]
    assert [r.split(",")[0] for r in rows] == ["7 (seed 1)", "7 (seed 2)"]


def test_report_missing_directory(tmp_path, capsys):
    assert main(["report", str(tmp_path)]) == EXIT_RUNTIME
    assert "report.json" in capsys.readouterr().err
