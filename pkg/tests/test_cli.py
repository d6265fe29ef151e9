"""End-to-end CLI pipeline, exit codes, and config handling."""

import json
import os

import numpy as np
import pytest

from prvr.cli import main
from prvr.corpus import read_corpus

CORPUS_SPEC = """
# tiny synthetic corpus
n_q = 12
n_v = 6
l_q = 3
l_v = 4
d_t = 8
d_v = 9
seed = 5
segments_per_video = 2
ambiguity_rate = 0.4
noise_scale = 0.2
"""

TRAIN_CFG = """
epochs = 3
batch_size = 4
warmup_epochs = 1
learning_rate = 0.002
seed = 9
embed_dim = 10
"""


@pytest.fixture
def spec_file(tmp_path):
    path = tmp_path / "corpus.cfg"
    path.write_text(CORPUS_SPEC)
    return str(path)


@pytest.fixture
def train_file(tmp_path):
    path = tmp_path / "train.cfg"
    path.write_text(TRAIN_CFG)
    return str(path)


def test_full_pipeline(tmp_path, spec_file, train_file, capsys):
    corpus_path = str(tmp_path / "c.prvc")
    assert main(["gen-corpus", "--spec", spec_file, "--out", corpus_path]) == 0
    out = capsys.readouterr().out
    assert "config seed=5" in out
    corpus = read_corpus(corpus_path)
    assert corpus.n_q == 12

    out_dir = str(tmp_path / "run")
    assert main(["train", "--corpus", corpus_path, "--config", train_file,
                 "--out", out_dir]) == 0
    assert os.path.isfile(os.path.join(out_dir, "checkpoint.ckpt"))
    assert os.path.isfile(os.path.join(out_dir, "training_log.csv"))
    resolved = open(os.path.join(out_dir, "config.resolved")).read()
    assert "epochs=3" in resolved and "margin_m=0.2" in resolved

    report_path = str(tmp_path / "report.json")
    assert main(["evaluate", "--checkpoint", os.path.join(out_dir, "checkpoint.ckpt"),
                 "--corpus", corpus_path, "--out", report_path]) == 0
    report = json.load(open(report_path))
    assert set(report) == {"r1", "r5", "r10", "r100", "sumr"}
    assert 0.0 <= report["r1"] <= report["r5"] <= report["r10"] <= report["r100"] <= 1.0
    assert report["sumr"] == pytest.approx(
        100 * (report["r1"] + report["r5"] + report["r10"] + report["r100"]))

    audit_path = str(tmp_path / "audit.csv")
    assert main(["audit", "--checkpoint", os.path.join(out_dir, "checkpoint.ckpt"),
                 "--corpus", corpus_path, "--out", audit_path]) == 0
    lines = open(audit_path).read().splitlines()
    assert lines[0] == "record,field,value,extra"
    assert any(line.startswith("summary,f1,") for line in lines)
    assert any(line.startswith("hist_similarity_positive,") for line in lines)


def test_unknown_subcommand_exits_2():
    assert main(["frobnicate"]) == 2


def test_unknown_flag_exits_2(spec_file, tmp_path):
    assert main(["gen-corpus", "--spec", spec_file, "--out",
                 str(tmp_path / "x.prvc"), "--frobnicate"]) == 2


def test_missing_file_exits_3(tmp_path):
    assert main(["gen-corpus", "--spec", str(tmp_path / "nope.cfg"),
                 "--out", str(tmp_path / "x.prvc")]) == 3


def test_unknown_config_key_exits_3(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text(CORPUS_SPEC + "\nwibble = 3\n")
    assert main(["gen-corpus", "--spec", str(bad),
                 "--out", str(tmp_path / "x.prvc")]) == 3


def test_invalid_value_exits_3(tmp_path, spec_file):
    assert main(["gen-corpus", "--spec", spec_file, "--out",
                 str(tmp_path / "x.prvc"), "--set", "ambiguity_rate=2.0"]) == 3


def test_corrupt_corpus_exits_3(tmp_path, train_file):
    bad = tmp_path / "bad.prvc"
    bad.write_bytes(b"not a corpus")
    assert main(["train", "--corpus", str(bad), "--config", train_file,
                 "--out", str(tmp_path / "run")]) == 3


def test_override_applies(tmp_path, spec_file, capsys):
    out = str(tmp_path / "c.prvc")
    assert main(["gen-corpus", "--spec", spec_file, "--out", out,
                 "--set", "n_q=6", "--set", "ambiguity_rate=0.0"]) == 0
    corpus = read_corpus(out)
    assert corpus.n_q == 6
    assert corpus.planted_ambiguity == set()
    assert "config n_q=6" in capsys.readouterr().out


def test_gen_corpus_test_split(tmp_path, spec_file):
    out = str(tmp_path / "t.prvc")
    assert main(["gen-corpus", "--spec", spec_file, "--out", out,
                 "--split", "test"]) == 0
    assert read_corpus(out).split == "test"


def test_grad_check_small(capsys):
    assert main(["grad-check", "--seed", "3", "--instances", "2"]) == 0
    out = capsys.readouterr().out
    assert "max_rel_error=" in out


def test_training_log_columns(tmp_path, spec_file, train_file):
    corpus_path = str(tmp_path / "c.prvc")
    main(["gen-corpus", "--spec", spec_file, "--out", corpus_path])
    out_dir = str(tmp_path / "run")
    main(["train", "--corpus", corpus_path, "--config", train_file, "--out", out_dir])
    lines = open(os.path.join(out_dir, "training_log.csv")).read().splitlines()
    header = lines[0].split(",")
    assert header[:5] == ["epoch", "branch", "phase", "tau_s", "tau_u"]
    warm = [l for l in lines[1:] if ",warmup," in l]
    arl = [l for l in lines[1:] if ",arl," in l]
    assert warm and arl
    for line in warm:
        cells = line.split(",")
        assert cells[3] == "" and cells[4] == ""
