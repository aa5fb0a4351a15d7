"""
Command-line tests: exit codes, error lines and a train -> eval -> generate ->
report round on a tiny synthetic dataset.
"""

import argparse
import json

import pandas as pd
import pytest

from translator.checkpoint import load_checkpoint
from translator.cli import build_parser, main
from translator.metrics import METRIC_COLUMNS

DATA_FLAGS = ["--synth", "vocab=6,n=40,len=2-4,noise=0.1", "--feature-dim", "8", "--seed", "0"]
MODEL_FLAGS = [
    "--lstm-hidden", "4", "--lstm-layers", "1", "--model-dim", "8", "--heads", "2",
    "--ffn-dim", "16", "--enc-layers", "1", "--dec-layers", "1", "--maxlen", "12",
    "--dtype", "float64",
]
TRAIN_FLAGS = [
    "--epochs-stage1", "1", "--epochs-stage2", "1", "--lr-stage1", "0.01", "--lr-stage2", "0.01",
    "--batch-size", "8",
]


def _train(out, *extra):
    return main(["train", *DATA_FLAGS, *MODEL_FLAGS, *TRAIN_FLAGS, "--out", str(out), *extra])


def _error_line(capsys):
    lines = capsys.readouterr().err.strip().splitlines()
    errors = [line for line in lines if line.startswith("error: ")]
    assert len(errors) == 1, lines
    return errors[0]


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    assert _train(out) == 0
    return out


# ---------------------------------------------------------------------------
# Usage and file errors
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["fly"],
        ["train", "--no-such-flag"],
        ["train", "--synth", "vocab=6,n=40"],
        ["train", "--synth", "vocab=6,n=40", "--data", "x.jsonl", "--seed", "1"],
        ["eval", "--synth", "vocab=6,n=40"],
        ["eval", "--mode", "sideways"],
    ],
)
def test_usage_errors_exit_2(capsys, argv):
    assert main(argv) == 2
    assert _error_line(capsys).startswith("error: USAGE: ")


def test_missing_dataset_exits_3(tmp_path, capsys):
    absent = str(tmp_path / "absent.jsonl")
    argv = ["train", "--data", absent, "--seed", "1", "--out", str(tmp_path)]
    assert main(argv) == 3
    assert _error_line(capsys).startswith("error: FILE: ")


def test_missing_checkpoint_exits_3(tmp_path, capsys):
    absent = str(tmp_path / "absent.r1ck")
    argv = ["eval", *DATA_FLAGS, "--checkpoint", absent, "--out", str(tmp_path)]
    assert main(argv) == 3
    assert "absent.r1ck" in _error_line(capsys)


def test_missing_eval_csv_exits_3(tmp_path, capsys):
    assert main(["report", str(tmp_path / "absent.csv"), "--out", str(tmp_path)]) == 3


def test_other_failures_exit_1_with_their_code(tmp_path, capsys):
    bad = tmp_path / "bad.r1ck"
    bad.write_bytes(b"NOPE")
    assert main(["eval", *DATA_FLAGS, "--checkpoint", str(bad), "--out", str(tmp_path)]) == 1
    assert _error_line(capsys).startswith("error: FORMAT: ")


def test_every_run_field_has_a_flag():
    actions = build_parser()._actions
    subparsers = next(a for a in actions if isinstance(a, argparse._SubParsersAction))
    train = subparsers.choices["train"]
    flags = {opt for action in train._actions for opt in action.option_strings}
    expected = {"--synth", "--noise-control", "--beam", "--length-penalty", "--step-size-stage2"}
    assert expected | {"--maxlen"} <= flags


# ---------------------------------------------------------------------------
# Full round
# ---------------------------------------------------------------------------


def test_train_writes_run_artifacts(trained):
    names = {p.name for p in trained.iterdir()}
    expected = {"checkpoint.r1ck", "train_log.csv", "run_config.conf", "split_manifest.json"}
    assert expected | {"vocab.json"} <= names

    log = pd.read_csv(trained / "train_log.csv")
    assert log["stage"].tolist() == [1, 2]

    checkpoint = load_checkpoint(trained / "checkpoint.r1ck")
    assert checkpoint.extra["model_name"] == "r1"
    assert checkpoint.config.model_dim == 8
    assert checkpoint.best_val_loss == pytest.approx(log["val_loss"].min(), rel=1e-9)

    manifest = json.loads((trained / "split_manifest.json").read_text())
    assert not set(manifest["train"]) & set(manifest["test"])
    assert "seed=0" in (trained / "run_config.conf").read_text().splitlines()


def test_training_is_deterministic(trained, tmp_path):
    assert _train(tmp_path) == 0
    assert (tmp_path / "checkpoint.r1ck").read_bytes() == (trained / "checkpoint.r1ck").read_bytes()
    assert (tmp_path / "train_log.csv").read_bytes() == (trained / "train_log.csv").read_bytes()


def test_eval_generate_report(trained, tmp_path):
    checkpoint = str(trained / "checkpoint.r1ck")
    decode = ["--beam", "2", "--max-len", "6"]
    for run in ("a", "b"):
        out = str(tmp_path / run)
        argv = ["eval", *DATA_FLAGS, "--checkpoint", checkpoint, "--out", out, *decode]
        assert main(argv) == 0
    first, second = tmp_path / "a" / "eval.csv", tmp_path / "b" / "eval.csv"
    assert first.read_bytes() == second.read_bytes()

    table = pd.read_csv(first)
    assert list(table.columns) == METRIC_COLUMNS
    assert len(table) == 32

    manifest = json.loads((trained / "split_manifest.json").read_text())
    out = str(tmp_path / "gen")
    argv = ["generate", *DATA_FLAGS, "--checkpoint", checkpoint, "--out", out, *decode]
    assert main(argv) == 0
    generated = pd.read_csv(tmp_path / "gen" / "generate.csv")
    assert generated["sentence_id"].tolist() == manifest["test"]

    assert main(["report", str(first), str(second), "--out", str(tmp_path / "summary")]) == 0
    summary = pd.read_csv(tmp_path / "summary" / "report.csv")
    assert len(summary) == 32
    assert (summary["sem"] == 0.0).all()
    assert (tmp_path / "summary" / "charts" / "bleu.svg").exists()


def test_eval_on_dev_split_in_tf_mode(trained, tmp_path):
    argv = [
        "eval", *DATA_FLAGS, "--checkpoint", str(trained / "checkpoint.r1ck"),
        "--out", str(tmp_path), "--split", "dev", "--mode", "tf",
    ]
    assert main(argv) == 0
    assert set(pd.read_csv(tmp_path / "eval.csv")["mode"]) == {"tf"}
