"""End-to-end command-line behavior, run in-process via main(argv)."""

import json
from types import SimpleNamespace

import pytest

from reqqual.artifact import load_model
from reqqual.cli import main
from reqqual.corpus import PROPERTIES, PropertyName, generate_synthetic, load_dataset, save_dataset
from reqqual.nn import CellType
from reqqual.search import SearchSpace
from reqqual.textpipe import TagVocabulary


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Shared dataset + one small trained model for the read-only tests."""
    root = tmp_path_factory.mktemp("cli")
    dataset = root / "data.jsonl"
    save_dataset(generate_synthetic(24, seed=3), dataset)
    model = root / "singular.rqm"
    code = main([
        "train", "--input", str(dataset), "--property", "singular",
        "--out", str(model), "--epochs", "2", "--units", "8", "--embedding", "8",
        "--seed", "1",
    ])
    assert code == 0
    return SimpleNamespace(root=root, dataset=dataset, model=model)


# ---------------------------------------------------------------- synth


def test_synth_writes_dataset(tmp_path, capsys):
    out = tmp_path / "synth.jsonl"
    assert main(["synth", "--n", "20", "--out", str(out), "--seed", "7"]) == 0
    dataset = load_dataset(out)
    assert len(dataset) == 20
    assert all(set(r.labels) == set(PROPERTIES) for r in dataset.requirements)
    assert "wrote 20 synthetic requirements" in capsys.readouterr().out


def test_synth_rate_flag(tmp_path, capsys):
    out = tmp_path / "synth.jsonl"
    code = main([
        "synth", "--n", "20", "--out", str(out), "--seed", "7",
        "--rate", "singular=0.25",
    ])
    assert code == 0
    dataset = load_dataset(out)
    violated = sum(1 for r in dataset.requirements if not r.labels[PropertyName.SINGULAR])
    assert violated == 5
    assert "singular=5" in capsys.readouterr().out


def test_synth_bad_rate_exits_2(tmp_path, capsys):
    out = tmp_path / "synth.jsonl"
    assert main(["synth", "--n", "5", "--out", str(out), "--rate", "singular:0.2"]) == 2
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------- preprocess


def test_preprocess_builds_vocabulary(workdir, tmp_path, capsys):
    out = tmp_path / "encoded.jsonl"
    vocab_path = tmp_path / "vocab.json"
    code = main([
        "preprocess", "--input", str(workdir.dataset),
        "--out", str(out), "--vocab-out", str(vocab_path),
    ])
    assert code == 0
    lines = out.read_text("utf-8").splitlines()
    assert len(lines) == 24
    record = json.loads(lines[0])
    assert set(record) == {"id", "ids", "tags"}
    assert len(record["ids"]) == len(record["tags"])
    assert all(isinstance(i, int) and i >= 2 for i in record["ids"])  # no PAD/UNK
    vocab = TagVocabulary.load(vocab_path)
    assert vocab.tags[:2] == ("<PAD>", "<UNK>")
    stdout = capsys.readouterr().out
    assert "tag frequencies:" in stdout
    assert "unknown tags: 0 of" in stdout
    assert f"encoded 24 requirements -> {out}" in stdout


def test_preprocess_with_vocab_in_substitutes_unknown(workdir, tmp_path, capsys):
    vocab_path = tmp_path / "tiny-vocab.json"
    TagVocabulary(("<PAD>", "<UNK>", "DT")).save(vocab_path)
    out = tmp_path / "encoded.jsonl"
    code = main([
        "preprocess", "--input", str(workdir.dataset),
        "--out", str(out), "--vocab-in", str(vocab_path),
    ])
    assert code == 0
    stdout = capsys.readouterr().out
    assert "unknown tags: 0 of" not in stdout
    assert "unknown tags:" in stdout
    ids = json.loads(out.read_text("utf-8").splitlines()[0])["ids"]
    assert 1 in ids  # UNK substitutions present


def test_preprocess_missing_input_exits_2(tmp_path, capsys):
    missing = tmp_path / "nope.jsonl"
    code = main([
        "preprocess", "--input", str(missing),
        "--out", str(tmp_path / "o.jsonl"), "--vocab-out", str(tmp_path / "v.json"),
    ])
    assert code == 2
    assert str(missing) in capsys.readouterr().err


def test_preprocess_malformed_input_names_line(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "a", "text": "The system shall work."}\n{broken\n', "utf-8")
    code = main([
        "preprocess", "--input", str(bad),
        "--out", str(tmp_path / "o.jsonl"), "--vocab-out", str(tmp_path / "v.json"),
    ])
    assert code == 2
    assert "line 2" in capsys.readouterr().err


def test_preprocess_requires_vocab_flag(workdir, tmp_path):
    with pytest.raises(SystemExit) as excinfo:
        main(["preprocess", "--input", str(workdir.dataset), "--out", str(tmp_path / "o")])
    assert excinfo.value.code == 2


# ---------------------------------------------------------------- train


def test_train_writes_model_and_curve(workdir, capsys):
    model = load_model(workdir.model)
    assert model.property is PropertyName.SINGULAR
    assert model.model_config.hidden_units == 8
    assert model.metadata["trained_on"] == 24
    curve = workdir.model.with_suffix(".curve.csv")
    lines = curve.read_text("utf-8").splitlines()
    assert lines[0] == "epoch,train_loss,val_loss,train_acc"
    assert len(lines) == 3  # 2 epochs


def test_train_summary_line(tmp_path, capsys, workdir):
    out = tmp_path / "m.rqm"
    code = main([
        "train", "--input", str(workdir.dataset), "--property", "singular",
        "--out", str(out), "--epochs", "1", "--units", "4", "--embedding", "4",
    ])
    assert code == 0
    stdout = capsys.readouterr().out
    assert stdout.startswith("singular: trained gru on 24 requirements")
    assert str(out) in stdout


def test_train_preset_with_override(tmp_path, workdir):
    out = tmp_path / "complete.rqm"
    code = main([
        "train", "--input", str(workdir.dataset), "--property", "complete",
        "--out", str(out), "--preset", "paper", "--epochs", "2",
    ])
    assert code == 0
    model = load_model(out)
    # preset values for "complete", with the explicit --epochs override applied
    assert model.model_config.cell is CellType.GRU
    assert model.model_config.embedding_dim == 64
    assert model.model_config.hidden_units == 256
    assert model.model_config.num_layers == 1
    assert model.model_config.dropout_p == 0.0


def test_train_custom_curve_path_and_validation(tmp_path, workdir):
    out = tmp_path / "m.rqm"
    curve = tmp_path / "curve.csv"
    code = main([
        "train", "--input", str(workdir.dataset), "--property", "singular",
        "--out", str(out), "--curve", str(curve), "--epochs", "2",
        "--units", "4", "--embedding", "4", "--val-fraction", "0.25",
    ])
    assert code == 0
    lines = curve.read_text("utf-8").splitlines()
    assert len(lines) == 3
    val_loss = lines[1].split(",")[2]
    assert val_loss != ""
    assert float(val_loss) > 0.0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")  # overflow on the way to the error
def test_train_divergence_exits_1(tmp_path, workdir, capsys):
    code = main([
        "train", "--input", str(workdir.dataset), "--property", "singular",
        "--out", str(tmp_path / "m.rqm"), "--epochs", "2", "--units", "4",
        "--embedding", "4", "--lr", "1e308", "--batch-size", "8",
    ])
    assert code == 1
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------- evaluate


def test_evaluate_writes_predictions_and_report(workdir, tmp_path, capsys):
    preds = tmp_path / "preds.jsonl"
    report = tmp_path / "metrics.json"
    code = main([
        "evaluate", "--model", str(workdir.model), "--input", str(workdir.dataset),
        "--out", str(preds), "--report", str(report),
    ])
    assert code == 0
    lines = preds.read_text("utf-8").splitlines()
    assert len(lines) == 24
    assert set(json.loads(lines[0])) == {"id", "predicted", "prob_positive", "label"}
    metrics = json.loads(report.read_text("utf-8"))
    assert 0.0 <= metrics["accuracy"] <= 1.0
    stdout = capsys.readouterr().out
    assert stdout.startswith("singular: accuracy")
    assert "on 24 labeled requirements" in stdout


def test_evaluate_without_out_prints_only(workdir, capsys):
    code = main(["evaluate", "--model", str(workdir.model), "--input", str(workdir.dataset)])
    assert code == 0
    assert "accuracy" in capsys.readouterr().out


def test_evaluate_property_mismatch_exits_2(workdir, capsys):
    code = main([
        "evaluate", "--model", str(workdir.model), "--input", str(workdir.dataset),
        "--property", "complete",
    ])
    assert code == 2
    assert "trained for property" in capsys.readouterr().err


# ---------------------------------------------------------------- predict


def test_predict_single_text(workdir, capsys):
    code = main([
        "predict", "--model", str(workdir.model),
        "--text", "The system shall log events.",
    ])
    assert code == 0
    stdout = capsys.readouterr().out
    assert stdout.startswith("singular: ")
    assert ("satisfied" in stdout) or ("violated" in stdout)
    assert "prob_positive" in stdout


def test_predict_file(workdir, tmp_path, capsys):
    out = tmp_path / "preds.jsonl"
    code = main([
        "predict", "--model", str(workdir.model),
        "--input", str(workdir.dataset), "--out", str(out),
    ])
    assert code == 0
    assert len(out.read_text("utf-8").splitlines()) == 24
    assert "predicted 24 requirements" in capsys.readouterr().out


def test_predict_file_requires_out(workdir, capsys):
    code = main(["predict", "--model", str(workdir.model), "--input", str(workdir.dataset)])
    assert code == 2
    assert "requires --out" in capsys.readouterr().err


# ---------------------------------------------------------------- crossval


def crossval_args(workdir, report):
    return [
        "crossval", "--input", str(workdir.dataset), "--property", "singular",
        "--folds", "3", "--seed", "42", "--report", str(report),
        "--epochs", "2", "--units", "8", "--embedding", "8",
    ]


def test_crossval_deterministic_report(workdir, tmp_path, capsys):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    assert main(crossval_args(workdir, a)) == 0
    assert main(crossval_args(workdir, b)) == 0
    assert a.read_bytes() == b.read_bytes()
    report = json.loads(a.read_text("utf-8"))
    assert set(report) == {"property", "config", "folds", "aggregate", "best_fold", "seed"}
    assert report["seed"] == 42
    for i in range(3):
        fold_curve = tmp_path / f"a-fold{i}.csv"
        assert fold_curve.exists()
        assert len(fold_curve.read_text("utf-8").splitlines()) == 3
    stdout = capsys.readouterr().out
    assert "3-fold accuracy" in stdout


def test_crossval_too_many_folds_exits_2(workdir, tmp_path, capsys):
    code = main([
        "crossval", "--input", str(workdir.dataset), "--property", "singular",
        "--folds", "50", "--report", str(tmp_path / "r.json"),
        "--epochs", "1", "--units", "4", "--embedding", "4",
    ])
    assert code == 2
    assert "need >= k=50" in capsys.readouterr().err


# ---------------------------------------------------------------- search


def tiny_space(path):
    SearchSpace(
        cell=("gru",), epochs=(1, 2), learning_rate=(0.05,),
        embedding_dim=(8,), num_layers=(1,), num_units=(8,), dropout=(0.0,),
    ).save(path)


def test_search_random_writes_trials(workdir, tmp_path, capsys):
    space = tmp_path / "space.json"
    tiny_space(space)
    trials = tmp_path / "trials.csv"
    code = main([
        "search", "--input", str(workdir.dataset), "--property", "singular",
        "--mode", "random", "--budget", "2", "--eval-mode", "cv:2",
        "--space", str(space), "--trials-out", str(trials), "--seed", "9",
    ])
    assert code == 0
    lines = trials.read_text("utf-8").splitlines()
    assert lines[0].startswith("trial,cell,epochs,lr,")
    assert len(lines) == 3
    assert "best trial" in capsys.readouterr().out


def test_search_exhaustive_rejects_budget(workdir, tmp_path, capsys):
    space = tmp_path / "space.json"
    tiny_space(space)
    code = main([
        "search", "--input", str(workdir.dataset), "--property", "singular",
        "--mode", "exhaustive", "--budget", "2", "--eval-mode", "cv:2",
        "--space", str(space), "--trials-out", str(tmp_path / "t.csv"),
    ])
    assert code == 2
    assert "takes no budget" in capsys.readouterr().err


def test_search_missing_input_exits_2(tmp_path, capsys):
    code = main([
        "search", "--input", str(tmp_path / "nope.jsonl"), "--property", "singular",
        "--mode", "random", "--budget", "1",
    ])
    assert code == 2
    assert "not found" in capsys.readouterr().err


# ---------------------------------------------------------------- gradcheck


@pytest.mark.parametrize("cell,layers", [("gru", "1"), ("lstm", "2")])
def test_gradcheck_passes(cell, layers, capsys):
    code = main(["gradcheck", "--cell", cell, "--layers", layers, "--seed", "4"])
    assert code == 0
    assert capsys.readouterr().out.startswith("pass")


def test_gradcheck_failure_exits_1(monkeypatch, capsys):
    fake = SimpleNamespace(passed=False, summary=lambda: "fail: forced for the exit-code path")
    monkeypatch.setattr("reqqual.cli.gradient_check", lambda *a, **k: fake)
    code = main(["gradcheck", "--cell", "gru"])
    assert code == 1
    assert capsys.readouterr().out.startswith("fail")


# ---------------------------------------------------------------- parser


def test_no_subcommand_exits_2():
    with pytest.raises(SystemExit) as excinfo:
        main([])
    assert excinfo.value.code == 2


def test_unknown_property_exits_2(workdir, tmp_path):
    with pytest.raises(SystemExit) as excinfo:
        main([
            "train", "--input", str(workdir.dataset), "--property", "concise",
            "--out", str(tmp_path / "m.rqm"),
        ])
    assert excinfo.value.code == 2
