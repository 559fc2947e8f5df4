import json

import numpy as np
import pytest

from servicemonitor.catalog import default_catalog
from servicemonitor.cli import main
from servicemonitor.trace import BC_TRANSACTION, TransactionRecord, write_trace

EXAMPLE_CATALOG_TSV = (
    "com.android.internal.telephony.IPhoneSubInfo\t4\tgetSubscriberId\tTelephonyManager\n"
    "android.location.ILocationManager\t2\trequestLocationUpdates\tLocationManager\n"
    "com.android.internal.telephony.ISms\t1\tsendText\tTelephonyManager\n"
)

EXAMPLE_SEQUENCE = [
    ("com.android.internal.telephony.IPhoneSubInfo", 4),
    ("android.location.ILocationManager", 2),
    ("com.android.internal.telephony.ISms", 1),
    ("android.location.ILocationManager", 2),
    ("com.android.internal.telephony.ISms", 1),
]


@pytest.fixture
def example_dir(tmp_path):
    catalog_path = tmp_path / "catalog.tsv"
    catalog_path.write_text(EXAMPLE_CATALOG_TSV, encoding="utf-8")
    records = [
        TransactionRecord(i * 10, 42, BC_TRANSACTION, token, code)
        for i, (token, code) in enumerate(EXAMPLE_SEQUENCE)
    ]
    trace_path = tmp_path / "example-app.smtr"
    trace_path.write_bytes(write_trace(records))
    return tmp_path


def test_parse_prints_function_names_in_order(example_dir, capsys):
    code = main(["parse", "--catalog", str(example_dir / "catalog.tsv"), str(example_dir / "example-app.smtr")])
    assert code == 0
    expected = "getSubscriberId\nrequestLocationUpdates\nsendText\nrequestLocationUpdates\nsendText\n"
    assert capsys.readouterr().out == expected


def test_parse_missing_file_exits_2(example_dir, capsys):
    code = main(["parse", "--catalog", str(example_dir / "catalog.tsv"), str(example_dir / "nope.smtr")])
    assert code == 2


def test_parse_unknown_policy_error_names_token(example_dir, capsys):
    records = [TransactionRecord(1, 2, BC_TRANSACTION, "mystery.IThing", 9)]
    path = example_dir / "mystery.smtr"
    path.write_bytes(write_trace(records))
    code = main([
        "parse", "--catalog", str(example_dir / "catalog.tsv"),
        "--unknown-policy", "error", str(path),
    ])
    assert code == 2
    assert "mystery.IThing" in capsys.readouterr().err


def test_featurize_reproduces_worked_example(example_dir, capsys):
    out = example_dir / "features.jsonl"
    code = main([
        "featurize", "--catalog", str(example_dir / "catalog.tsv"),
        "--label", "malicious", "-o", str(out), str(example_dir / "example-app.smtr"),
    ])
    assert code == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 2  # header + one vector
    row = json.loads(lines[1])
    assert row["app_id"] == "example-app"
    assert row["label"] == "malicious"
    np.testing.assert_allclose(row["values"], [0, 0.64, 0.36, 0, 0, 1, 0, 1, 0], atol=1e-9)


def test_featurize_empty_trace_gives_zero_vector(example_dir):
    empty = example_dir / "empty.smtr"
    empty.write_bytes(write_trace([]))
    out = example_dir / "features.jsonl"
    code = main([
        "featurize", "--catalog", str(example_dir / "catalog.tsv"),
        "--label", "benign", "-o", str(out), str(empty),
    ])
    assert code == 0
    row = json.loads(out.read_text().splitlines()[1])
    assert row["values"] == [0.0] * 9


def test_gen_is_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        code = main(["gen", "--count", "8", "--seed", "7", "--output-dir", str(tmp_path / name)])
        assert code == 0
    a_files = sorted(p.name for p in (tmp_path / "a").iterdir())
    b_files = sorted(p.name for p in (tmp_path / "b").iterdir())
    assert a_files == b_files
    for name in a_files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    manifest = [(tmp_path / "a" / "manifest.jsonl").read_text().splitlines()]
    assert len(manifest[0]) == 8


def test_gen_with_profile_document(tmp_path):
    from servicemonitor.syngen import default_profiles, profiles_to_json

    doc = tmp_path / "profiles.json"
    doc.write_text(profiles_to_json(default_profiles()), encoding="utf-8")
    code = main(["gen", "--count", "4", "--seed", "3", "--profiles", str(doc),
                 "--output-dir", str(tmp_path / "corpus")])
    assert code == 0
    names = {p.name for p in (tmp_path / "corpus").iterdir()}
    assert "manifest.jsonl" in names and len(names) == 5


@pytest.fixture
def corpus_features(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    assert main(["gen", "--count", "40", "--seed", "11", "--output-dir", str(corpus)]) == 0
    traces = sorted(str(p) for p in corpus.glob("*.smtr"))
    features = tmp_path / "features.jsonl"
    code = main([
        "featurize", "--labels", str(corpus / "manifest.jsonl"),
        "-o", str(features), *traces,
    ])
    assert code == 0
    capsys.readouterr()
    return features


def test_featurize_counts_lines(corpus_features):
    lines = corpus_features.read_text().splitlines()
    assert len(lines) == 41  # header + 40 vectors
    header = json.loads(lines[0])
    assert header["catalog_digest"] == default_catalog().digest_hex


def test_evaluate_report_schema(tmp_path, corpus_features, capsys):
    report_path = tmp_path / "report.json"
    roc_path = tmp_path / "roc.csv"
    code = main([
        "evaluate", "--folds", "4", "--seed", "42", "--trees", "30",
        "--pca-dims", "8", "-o", str(report_path), "--roc-csv", str(roc_path),
        str(corpus_features),
    ])
    assert code == 0
    report = json.loads(report_path.read_text())
    for key in ("accuracy", "fpr", "fnr", "auc", "confusion", "fold_count", "seed", "roc_points"):
        assert key in report
    assert report["fold_count"] == 4
    assert roc_path.read_text().startswith("fpr,tpr")
    table = capsys.readouterr().out
    assert "accuracy" in table


def test_evaluate_deterministic(tmp_path, corpus_features):
    outs = []
    for name in ("r1.json", "r2.json"):
        path = tmp_path / name
        code = main(["evaluate", "--folds", "4", "--seed", "9", "--trees", "20",
                     "--pca-dims", "6", "-o", str(path), str(corpus_features)])
        assert code == 0
        outs.append(path.read_text())
    assert outs[0] == outs[1]


def test_train_and_predict_round_trip(tmp_path, corpus_features, capsys):
    model_path = tmp_path / "model.smdl"
    code = main(["train", "--trees", "25", "--pca-dims", "6", "--seed", "4",
                 "-o", str(model_path), str(corpus_features)])
    assert code == 0
    capsys.readouterr()

    corpus = tmp_path / "corpus"
    traces = sorted(str(p) for p in corpus.glob("*.smtr"))[:6]
    code = main(["predict", "--model", str(model_path), *traces])
    assert code == 0
    out_lines = capsys.readouterr().out.strip().splitlines()
    assert len(out_lines) == 6
    manifest = {
        json.loads(line)["app_id"]: json.loads(line)["label"]
        for line in (corpus / "manifest.jsonl").read_text().splitlines()
    }
    correct = 0
    for line in out_lines:
        app_id, score, label = line.split("\t")
        assert 0.0 <= float(score) <= 1.0
        assert label in ("benign", "malicious")
        correct += label == manifest[app_id]
    assert correct >= 5  # training-set predictions should be nearly all right


def test_predict_rejects_mismatched_catalog(tmp_path, corpus_features, example_dir, capsys):
    model_path = tmp_path / "model.smdl"
    assert main(["train", "--trees", "10", "--pca-dims", "4", "-o", str(model_path),
                 str(corpus_features)]) == 0
    capsys.readouterr()
    code = main([
        "predict", "--model", str(model_path),
        "--catalog", str(example_dir / "catalog.tsv"),
        str(example_dir / "example-app.smtr"),
    ])
    assert code == 2
    assert "catalog" in capsys.readouterr().err


def test_train_single_class_exits_3(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    assert main(["gen", "--count", "10", "--seed", "2", "--output-dir", str(corpus)]) == 0
    traces = sorted(str(p) for p in corpus.glob("*.smtr"))
    features = tmp_path / "single.jsonl"
    assert main(["featurize", "--label", "benign", "-o", str(features), *traces]) == 0
    capsys.readouterr()
    code = main(["train", "-o", str(tmp_path / "m.smdl"), str(features)])
    assert code == 3


def test_usage_errors_exit_1(capsys):
    assert main(["parse"]) == 1  # missing traces
    assert main(["no-such-command"]) == 1
    assert main(["gen", "--count", "notanumber", "--output-dir", "x"]) == 1
    assert main([]) == 1


def test_help_exits_0():
    for args in (["--help"], ["parse", "--help"], ["featurize", "--help"], ["gen", "--help"],
                 ["train", "--help"], ["evaluate", "--help"], ["predict", "--help"]):
        with pytest.raises(SystemExit) as exc_info:
            main(args)
        assert exc_info.value.code == 0


def test_print_config_and_precedence(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"trees": 77, "folds": 4}), encoding="utf-8")
    code = main(["evaluate", "--config", str(config), "--trees", "88",
                 "--print-config", "features.jsonl"])
    assert code == 0
    effective = json.loads(capsys.readouterr().out)
    assert effective["trees"] == 88       # flag beats config file
    assert effective["folds"] == 4        # config file beats default
    assert effective["pca_dims"] == 200   # built-in default
    assert effective["threshold"] == 0.5
    assert effective["unknown_policy"] == "skip"


def test_config_rejects_unknown_keys(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"treez": 1}), encoding="utf-8")
    code = main(["evaluate", "--config", str(config), "features.jsonl"])
    assert code == 2
    assert "unknown keys" in capsys.readouterr().err


def test_thread_env_var_does_not_change_output(tmp_path, monkeypatch, capsys):
    corpus = tmp_path / "corpus"
    assert main(["gen", "--count", "10", "--seed", "5", "--output-dir", str(corpus)]) == 0
    traces = sorted(str(p) for p in corpus.glob("*.smtr"))
    outputs = []
    for threads in ("1", "4"):
        monkeypatch.setenv("SERVICEMONITOR_THREADS", threads)
        out = tmp_path / f"f{threads}.jsonl"
        assert main(["featurize", "--label", "benign", "-o", str(out), *traces]) == 0
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]
    monkeypatch.setenv("SERVICEMONITOR_THREADS", "zero")
    assert main(["featurize", "--label", "benign", "-o", str(tmp_path / "x.jsonl"), *traces]) == 2
