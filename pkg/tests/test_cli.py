import csv
import hashlib
import json

import numpy as np
import pytest

from kpidnn import cli, datagen

GEN_FLAGS = ["--n-series", "2", "--test-series", "1", "--train-anomalies", "40",
             "--train-normals", "40", "--test-anomalies", "15", "--test-normals", "30",
             "--k", "6"]


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert cli.main(["gen", "--seed", "2", "--out", str(root / "gen"), "-q", *GEN_FLAGS]) == 0
    assert cli.main(["train", "--seed", "2", "--train", str(root / "gen" / "train.csv"),
                     "--out", str(root / "model.txt"), "--epochs", "10", "--hidden-dims", "8,8",
                     "-q"]) == 0
    return root


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _digest(root):
    return {p.relative_to(root): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def test_gen_layout(generated):
    gen = generated / "gen"
    assert sorted(p.name for p in (gen / "series").iterdir()) == ["s0000.csv", "s0001.csv",
                                                                  "t0000.csv"]
    train = datagen.read_dataset(gen / "train.csv")
    assert train.k == 6 and train.counts() == (40, 40)
    assert datagen.read_anomalies(gen / "anomalies.csv")
    trace = _rows(generated / "model.trace.csv")
    assert [r["epoch"] for r in trace] == [str(i) for i in range(1, 11)]


def test_train_predict_eval_pipeline(generated, tmp_path, capsys):
    test = generated / "gen" / "test.csv"
    preds = tmp_path / "pred.csv"
    assert cli.main(["predict", "--model", str(generated / "model.txt"), "--in", str(test),
                     "--out", str(preds), "-q"]) == 0
    rows = _rows(preds)
    assert list(rows[0]) == ["id", "timestamp", "label", "predicted", "p_anomaly"]
    assert len(rows) == 45
    assert all(0.0 <= float(r["p_anomaly"]) <= 1.0 for r in rows)
    report = tmp_path / "report.csv"
    assert cli.main(["eval", "--in", str(preds), "--out", str(report), "-q"]) == 0
    (row,) = _rows(report)
    tp, fn, fp, tn = (int(row[c]) for c in ("tp", "fn", "fp", "tn"))
    assert tp + fn + fp + tn == 45 and tn + fp == 15
    assert "DNN" in capsys.readouterr().out


def test_predict_raw_series(generated, tmp_path):
    out = tmp_path / "pred.csv"
    series = generated / "gen" / "series" / "t0000.csv"
    assert cli.main(["predict", "--model", str(generated / "model.txt"), "--series", str(series),
                     "--stride", "500", "--k", "6", "--out", str(out), "-q"]) == 0
    rows = _rows(out)
    assert rows and all(r["id"] == "t0000" for r in rows)


def test_window_command_undersamples(generated, tmp_path):
    out = tmp_path / "w.csv"
    assert cli.main(["window", "--in", str(generated / "gen" / "series"),
                     "--anomalies", str(generated / "gen" / "anomalies.csv"), "--k", "6",
                     "--stride", "7", "--undersample-ratio", "2", "--out", str(out), "-q"]) == 0
    anomalies, normals = datagen.read_dataset(out).counts()
    assert anomalies > 0 and normals == round(anomalies / 2)


def test_bench_report(generated, tmp_path):
    out = tmp_path / "bench.csv"
    assert cli.main(["bench", "--model", str(generated / "model.txt"),
                     "--test", str(generated / "gen" / "test.csv"), "--out", str(out), "-q"]) == 0
    rows = _rows(out)
    assert [r["name"] for r in rows] == ["DNN", "3-Sigma", "EWMA Control Chart",
                                         "Polynomial Regression", "Isolation Forest"]
    assert len(rows[0]) == 8


def test_embed_cluster_similar(generated, tmp_path, capsys):
    emb = tmp_path / "emb.csv"
    assert cli.main(["embed", "--model", str(generated / "model.txt"),
                     "--in", str(generated / "gen" / "test.csv"), "--out", str(emb), "-q"]) == 0
    rows = _rows(emb)
    assert len(rows) == 45 and len(rows[0]) == 2 + 16
    clusters = tmp_path / "clusters.csv"
    assert cli.main(["cluster", "--in", str(emb), "--clusters", "3", "--out", str(clusters),
                     "-q"]) == 0
    assert {r["cluster"] for r in _rows(clusters)} == {"0", "1", "2"}
    capsys.readouterr()
    assert cli.main(["similar", "--in", str(emb), "--query", "0", "--top", "4", "-q"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "rank,id,timestamp,similarity" and len(lines) == 5
    sims = [float(line.split(",")[3]) for line in lines[1:]]
    assert sims == sorted(sims, reverse=True)


def test_embed_per_series_layer(generated, tmp_path):
    emb = tmp_path / "emb.csv"
    assert cli.main(["embed", "--model", str(generated / "model.txt"), "--per-series",
                     "--series", str(generated / "gen" / "series"), "--k", "6", "--stride", "60",
                     "--layer", "2", "--out", str(emb), "-q"]) == 0
    rows = _rows(emb)
    assert [r["id"] for r in rows] == ["s0000", "s0001", "t0000"] and len(rows[0]) == 2 + 8


def test_commands_do_not_touch_inputs(generated, tmp_path):
    before = _digest(generated)
    cli.main(["predict", "--model", str(generated / "model.txt"),
              "--in", str(generated / "gen" / "test.csv"), "--out", str(tmp_path / "p.csv"), "-q"])
    cli.main(["bench", "--model", str(generated / "model.txt"),
              "--test", str(generated / "gen" / "test.csv"), "--out", str(tmp_path / "b.csv"), "-q"])
    assert _digest(generated) == before


def test_config_precedence(tmp_path):
    config = tmp_path / "run.ini"
    config.write_text("[run]\nseed = 5\n[mlp]\nepochs = 7\nhidden_dims = 3,3\n")
    args = cli.build_parser().parse_args(["train", "--config", str(config), "--epochs", "9"])
    cfg = cli.resolve(args)
    assert cfg["run"]["seed"] == 5 and cfg["mlp"]["epochs"] == 9
    assert cfg["mlp"]["hidden_dims"] == (3, 3) and cfg["mlp"]["learning_rate"] == 0.01


def test_resolved_config_is_logged(tmp_path, capfd):
    cli.main(["eval", "--in", str(tmp_path / "missing.csv"), "--seed", "4"])
    err = capfd.readouterr().err
    (line,) = [x for x in err.splitlines() if "resolved config" in x]
    assert json.loads(line.split("resolved config: ", 1)[1])["run"]["seed"] == 4
    cli.main(["eval", "--in", str(tmp_path / "missing.csv"), "-q"])
    assert "resolved config" not in capfd.readouterr().err


@pytest.mark.parametrize("text", ["[mlp]\nepochz = 3\n", "[nope]\nx = 1\n", "[mlp]\nepochs = many\n"])
def test_bad_config_exits_1(tmp_path, text):
    config = tmp_path / "bad.ini"
    config.write_text(text)
    assert cli.main(["eval", "--config", str(config), "--in", "x.csv", "-q"]) == 1


def test_exit_codes(tmp_path):
    assert cli.main(["no-such-command"]) == 1
    assert cli.main(["bench", "--epochs", "lots"]) == 1
    assert cli.main(["train", "-q"]) == 1                                   # missing --train
    assert cli.main(["eval", "--in", str(tmp_path / "missing.csv"), "-q"]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("0,0,1,0,1,0,1,0\n")
    assert cli.main(["train", "--train", str(bad), "--out", str(tmp_path / "m.txt"), "-q"]) == 2


def test_verify_features_exit_codes(tmp_path, capsys):
    graph = tmp_path / "g.txt"
    assert cli.main(["compile-features", "--n", "10", "--out", str(graph), "-q"]) == 0
    assert cli.main(["verify-features", "--n", "10", "--trials", "50", "--graph", str(graph),
                     "-q"]) == 0
    lines = graph.read_text().splitlines()
    last_edge = max(i for i, line in enumerate(lines) if line.startswith("bias")) - 1
    src, dst, weight = lines[last_edge].split()
    lines[last_edge] = f"{src} {dst} {float(weight) * 1.5 + 1.0!r}"
    graph.write_text("\n".join(lines) + "\n")
    assert cli.main(["verify-features", "--n", "10", "--trials", "50", "--graph", str(graph),
                     "-q"]) == 3
    assert cli.main(["verify-features", "--n", "11", "--graph", str(graph), "-q"]) == 2
    assert "FAIL" in capsys.readouterr().out
