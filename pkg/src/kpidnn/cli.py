"""``kpidnn`` command-line entry point.

Every command accepts ``--config PATH`` (INI file), ``--seed`` and ``--k``.
Values resolve as built-in default < config file < command-line flag, and
the resolved configuration is logged to standard error before the command
runs. Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 verification failure.

Config file sections and keys::

    [run]        seed
    [window]     k, stride, undersample_ratio
    [mlp]        hidden_dims, leaky_slope, dropout_keep, learning_rate,
                 momentum, batch_size, epochs, optimizer, keep_best
    [baselines]  sigma_multiplier, ewma_coefficient, ewma_alpha,
                 poly_degree, poly_threshold, iforest_estimators,
                 iforest_contamination
    [generator]  n_series, test_series, days, pattern, level, amplitude,
                 noise_sigma, spike_rate, dip_rate, level_shift_rate,
                 magnitude_low, magnitude_high, train_anomalies,
                 train_normals, test_anomalies, test_normals
    [features]   threshold, trials
    [ts2vec]     clusters, top, layer
    [paths]      in, out, model, train, test, val, series, anomalies, trace
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import baselines, datagen, metrics, mlp, netfab, seeds, ts2vec
from .core import Dataset, Label
from .datagen import atomic_write
from .exceptions import ConfigError, DataError, KpiError, ParamError, ParseError
from .features import FeatureProfile
from .windowing import WindowSpec, extract

logger = logging.getLogger("kpidnn")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).split(",") if v.strip())


SCHEMA = {
    "run": {"seed": int},
    "window": {"k": int, "stride": int, "undersample_ratio": float},
    "mlp": {"hidden_dims": _ints, "leaky_slope": float, "dropout_keep": float,
            "learning_rate": float, "momentum": float, "batch_size": int, "epochs": int,
            "optimizer": str, "keep_best": _bool},
    "baselines": {"sigma_multiplier": float, "ewma_coefficient": float, "ewma_alpha": float,
                  "poly_degree": int, "poly_threshold": float, "iforest_estimators": int,
                  "iforest_contamination": float},
    "generator": {"n_series": int, "test_series": int, "days": int, "pattern": str,
                  "level": float, "amplitude": float, "noise_sigma": float,
                  "spike_rate": float, "dip_rate": float, "level_shift_rate": float,
                  "magnitude_low": float, "magnitude_high": float,
                  "train_anomalies": int, "train_normals": int,
                  "test_anomalies": int, "test_normals": int},
    "features": {"threshold": float, "trials": int},
    "ts2vec": {"clusters": int, "top": int, "layer": str},
    "paths": {key: str for key in ("in", "out", "model", "train", "test", "val", "series",
                                   "anomalies", "trace")},
}


def _defaults() -> dict:
    m = mlp.MlpConfig()
    bench = datagen.BenchmarkSpec()
    s = bench.synth
    return {
        "run": {"seed": 0},
        "window": {"k": 180, "stride": 1, "undersample_ratio": 0.0},
        "mlp": {"hidden_dims": m.hidden_dims, "leaky_slope": m.leaky_slope,
                "dropout_keep": m.dropout_keep, "learning_rate": m.learning_rate,
                "momentum": m.momentum, "batch_size": m.batch_size, "epochs": m.epochs,
                "optimizer": m.optimizer, "keep_best": m.keep_best},
        "baselines": {"sigma_multiplier": 3.0, "ewma_coefficient": 3.0, "ewma_alpha": 0.3,
                      "poly_degree": 4, "poly_threshold": 0.3, "iforest_estimators": 3,
                      "iforest_contamination": 0.15},
        "generator": {"n_series": s.n_series, "test_series": bench.test_series, "days": s.days,
                      "pattern": s.pattern, "level": s.level, "amplitude": s.amplitude,
                      "noise_sigma": s.noise_sigma, "spike_rate": s.rates["spike"],
                      "dip_rate": s.rates["dip"], "level_shift_rate": s.rates["level_shift"],
                      "magnitude_low": s.magnitude[0], "magnitude_high": s.magnitude[1],
                      "train_anomalies": bench.train_counts[0],
                      "train_normals": bench.train_counts[1],
                      "test_anomalies": bench.test_counts[0],
                      "test_normals": bench.test_counts[1]},
        "features": {"threshold": 0.0, "trials": 1000},
        "ts2vec": {"clusters": 2, "top": 3, "layer": "combined"},
        "paths": {key: None for key in SCHEMA["paths"]},
    }


def _coerce(section, key, value):
    try:
        return SCHEMA[section][key](value)
    except (TypeError, ValueError):
        raise ConfigError(f"[{section}] {key}: cannot parse {value!r}") from None


def read_config_file(path) -> dict:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    out = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, value in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{path}: unknown key '{key}' in [{section}]")
            out.setdefault(section, {})[key] = _coerce(section, key, value)
    return out


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, the optional config file and explicit flags (flags win)."""
    cfg = _defaults()
    explicit = set()
    if getattr(args, "config", None):
        for section, values in read_config_file(args.config).items():
            cfg[section].update(values)
            explicit.update((section, key) for key in values)
    for dest, value in vars(args).items():
        if "__" not in dest or value is None:
            continue
        section, key = dest.split("__", 1)
        cfg[section][key] = _coerce(section, key, value)
        explicit.add((section, key))
    args.explicit = explicit
    return cfg


# ---------------------------------------------------------------- config -> objects

def _window_spec(cfg) -> WindowSpec:
    return WindowSpec(cfg["window"]["k"])


def _mlp_config(cfg, input_dim: int) -> mlp.MlpConfig:
    m = cfg["mlp"]
    return mlp.MlpConfig(input_dim=input_dim, seed=cfg["run"]["seed"], **m)


def _baseline_config(cfg) -> baselines.BaselineConfig:
    b = cfg["baselines"]
    return baselines.BaselineConfig(
        three_sigma=baselines.ThreeSigmaConfig(b["sigma_multiplier"]),
        ewma_chart=baselines.EwmaChartConfig(b["ewma_coefficient"], b["ewma_alpha"]),
        poly=baselines.PolyConfig(b["poly_degree"], b["poly_threshold"]),
        iforest=baselines.IForestConfig(b["iforest_estimators"], "auto",
                                        b["iforest_contamination"], cfg["run"]["seed"]),
    )


def _benchmark_spec(cfg) -> datagen.BenchmarkSpec:
    g = cfg["generator"]
    synth = datagen.SynthSpec(
        n_series=g["n_series"], days=g["days"], pattern=g["pattern"], level=g["level"],
        amplitude=g["amplitude"], noise_sigma=g["noise_sigma"],
        rates={"spike": g["spike_rate"], "dip": g["dip_rate"], "level_shift": g["level_shift_rate"]},
        magnitude=(g["magnitude_low"], g["magnitude_high"]),
    )
    return datagen.BenchmarkSpec(
        k=cfg["window"]["k"], train_counts=(g["train_anomalies"], g["train_normals"]),
        test_counts=(g["test_anomalies"], g["test_normals"]), synth=synth,
        test_series=g["test_series"], seed=cfg["run"]["seed"],
    )


def _need(cfg, key: str) -> Path:
    value = cfg["paths"][key]
    if not value:
        raise ConfigError(f"missing required path: --{key} (or [paths] {key})")
    return Path(value)


def _series_files(path: Path) -> list:
    if path.is_dir():
        files = sorted(path.glob("*.csv"))
        if not files:
            raise DataError(f"no .csv series in {path}")
        return files
    if not path.exists():
        raise DataError(f"no such file: {path}")
    return [path]


def _load_model(path: Path) -> mlp.MlpModel:
    if not path.exists():
        raise DataError(f"no such model file: {path}")
    with open(path) as fh:
        return mlp.load_model(fh)


def _dataset_k(cfg, args):
    """``k`` to enforce on dataset files; inferred from the width unless set explicitly."""
    return cfg["window"]["k"] if ("window", "k") in getattr(args, "explicit", ()) else None


def _load_dataset(path: Path, k=None) -> Dataset:
    if not path.exists():
        raise DataError(f"no such dataset file: {path}")
    return datagen.read_dataset(path, k)


def _anomaly_index(path) -> dict:
    index = {}
    if path:
        for a in datagen.read_anomalies(path):
            index.setdefault(a.series_id, set()).add(a.timestamp)
    return index


def _series_windows(cfg):
    """Windows over every valid timestamp of the input series, labelled when anomalies are given."""
    spec = _window_spec(cfg)
    stride = cfg["window"]["stride"]
    bad = _anomaly_index(cfg["paths"]["anomalies"])
    samples = []
    for path in _series_files(_need(cfg, "series")):
        series = datagen.read_series(path)
        marked = bad.get(series.id, set())
        for t in range(spec.first_valid(series), spec.last_valid(series) + 1, stride):
            try:
                label = None
                if bad:
                    label = Label.ANOMALY if t in marked else Label.NORMAL
                samples.append(extract(series, t, spec, label))
            except DataError:
                continue
    return samples


def _input_samples(cfg, k_default=None):
    """Samples from ``--in`` (dataset CSV) or ``--series`` (raw series file or directory)."""
    if cfg["paths"]["in"]:
        return list(_load_dataset(Path(cfg["paths"]["in"]), k_default).samples)
    if cfg["paths"]["series"]:
        return _series_windows(cfg)
    raise ConfigError("need --in DATASET or --series PATH")


# ---------------------------------------------------------------- commands

def cmd_gen(cfg, args) -> int:
    out = _need(cfg, "out")
    train, test, train_gen, test_gen = datagen.build_benchmark(_benchmark_spec(cfg))
    for series in train_gen.series + test_gen.series:
        datagen.write_series(series, out / "series" / f"{series.id}.csv")
    datagen.write_anomalies(train_gen.anomalies + test_gen.anomalies, out / "anomalies.csv")
    datagen.write_dataset(train, out / "train.csv")
    datagen.write_dataset(test, out / "test.csv")
    logger.info("wrote %d series, train %s, test %s (anomaly, normal) to %s",
                len(train_gen.series) + len(test_gen.series), train.counts(), test.counts(), out)
    return EXIT_OK


def cmd_window(cfg, args) -> int:
    spec = _window_spec(cfg)
    out = _need(cfg, "out")
    stride = cfg["window"]["stride"]
    ratio = cfg["window"]["undersample_ratio"]
    bad = _anomaly_index(cfg["paths"]["anomalies"])
    loaded, anomalous, normal = [], [], []
    for path in _series_files(_need(cfg, "in")):
        series = datagen.read_series(path)
        loaded.append(series)
        marked = bad.get(series.id, set())
        for t in range(spec.first_valid(series), spec.last_valid(series) + 1, stride):
            (anomalous if t in marked else normal).append((len(loaded) - 1, t))
    if ratio > 0:
        target = max(1, int(round(len(anomalous) / ratio)))
        if target < len(normal):
            rng = seeds.generator(cfg["run"]["seed"], "undersample")
            keep = np.sort(rng.choice(len(normal), size=target, replace=False))
            normal = [normal[i] for i in keep]
    samples, skipped = [], 0
    for label, chosen in ((Label.ANOMALY, anomalous), (Label.NORMAL, normal)):
        for i, t in chosen:
            try:
                samples.append(extract(loaded[i], t, spec, label))
            except DataError:
                skipped += 1
    dataset = Dataset(spec.k, tuple(samples))
    datagen.write_dataset(dataset, out)
    logger.info("wrote %d windows %s (anomaly, normal), skipped %d", len(dataset),
                dataset.counts(), skipped)
    return EXIT_OK


def cmd_train(cfg, args) -> int:
    data = _load_dataset(_need(cfg, "train"), _dataset_k(cfg, args))
    out = _need(cfg, "out")
    val = _load_dataset(Path(cfg["paths"]["val"]), data.k) if cfg["paths"]["val"] else None
    config = _mlp_config(cfg, 5 * data.k + 3)
    model, trace = mlp.train(data, config, validation=val)
    with atomic_write(out) as fh:
        mlp.dump_model(model, fh)
    trace_path = Path(cfg["paths"]["trace"]) if cfg["paths"]["trace"] \
        else out.with_name(out.stem + ".trace.csv")
    with atomic_write(trace_path) as fh:
        mlp.write_trace(trace, fh)
    logger.info("trained %d epochs, final loss %.5f; model %s, trace %s",
                model.epochs_run, model.final_loss, out, trace_path)
    return EXIT_OK


def _label_text(label) -> str:
    return "" if label is None else str(int(label))


def cmd_predict(cfg, args) -> int:
    model = _load_model(_need(cfg, "model"))
    out = _need(cfg, "out")
    samples = _input_samples(cfg, (model.config.input_dim - 3) // 5)
    if not samples:
        raise DataError("no windows to predict")
    X = np.stack([s.joint for s in samples])
    degenerate = np.array([s.degenerate for s in samples])
    labels, p = mlp.predict_batch(model, X, degenerate)
    with atomic_write(out) as fh:
        fh.write("id,timestamp,label,predicted,p_anomaly\n")
        for s, pred, prob in zip(samples, labels, p):
            fh.write(f"{s.source_id},{s.pending_timestamp},{_label_text(s.label)},"
                     f"{int(pred)},{prob:.9g}\n")
    logger.info("predicted %d windows, %d flagged", len(samples), int(np.sum(labels == 0)))
    return EXIT_OK


def read_predictions(path):
    """``(label, predicted)`` pairs from a prediction CSV."""
    pairs = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"label", "predicted"} <= set(reader.fieldnames):
            raise ParseError("expected columns id,timestamp,label,predicted,p_anomaly", 1)
        for lineno, row in enumerate(reader, start=2):
            try:
                pairs.append((Label.parse(row["label"]), Label.parse(row["predicted"])))
            except ValueError:
                raise ParseError(f"row has no usable label/predicted: {row}", lineno) from None
    if not pairs:
        raise DataError(f"{path}: no predictions")
    return pairs


def _emit_report(report: metrics.EvalReport, cfg) -> None:
    sys.stdout.write(report.to_text())
    if cfg["paths"]["out"]:
        with atomic_write(cfg["paths"]["out"]) as fh:
            fh.write(report.to_csv())


def cmd_eval(cfg, args) -> int:
    path = _need(cfg, "in")
    if not path.exists():
        raise DataError(f"no such file: {path}")
    matrix = metrics.accumulate(read_predictions(path))
    _emit_report(metrics.report([(args.name, matrix)]), cfg)
    return EXIT_OK


def bench_rows(train: Dataset, test: Dataset, mlp_config: mlp.MlpConfig,
               baseline_config: baselines.BaselineConfig, model: mlp.MlpModel | None = None):
    """``[(name, ConfusionMatrix)]`` for the network and the four baselines on ``test``."""
    if model is None:
        model, _ = mlp.train(train, mlp_config)
    X, y = test.X, test.y
    labels, _ = mlp.predict_batch(model, X, test.degenerate)
    rows = [("DNN", metrics.accumulate(zip(y, labels)))]
    for name, detector in baselines.baseline_detectors(baseline_config).items():
        pred = detector.fit(X).predict(X)
        rows.append((name, metrics.accumulate(zip(y, pred))))
    return rows


def cmd_bench(cfg, args) -> int:
    if cfg["paths"]["train"] or cfg["paths"]["test"]:
        test = _load_dataset(_need(cfg, "test"), _dataset_k(cfg, args))
        train = _load_dataset(Path(cfg["paths"]["train"]), test.k) if cfg["paths"]["train"] else None
    else:
        train, test, _, _ = datagen.build_benchmark(_benchmark_spec(cfg))
    model = _load_model(Path(cfg["paths"]["model"])) if cfg["paths"]["model"] else None
    if model is None and train is None:
        raise ConfigError("bench needs --train or --model")
    rows = bench_rows(train, test, _mlp_config(cfg, 5 * test.k + 3), _baseline_config(cfg), model)
    _emit_report(metrics.report(rows), cfg)
    return EXIT_OK


def cmd_compile_features(cfg, args) -> int:
    out = _need(cfg, "out")
    graph = netfab.build_feature_network(FeatureProfile(threshold=cfg["features"]["threshold"]), args.n)
    with atomic_write(out) as fh:
        netfab.dump_graph(graph, fh)
    logger.info("n=%d: %d layers, %d outputs -> %s", args.n, graph.depth, graph.output_dim, out)
    return EXIT_OK


def cmd_verify_features(cfg, args) -> int:
    profile = FeatureProfile(threshold=cfg["features"]["threshold"])
    ok = True
    for n in args.n:
        if args.graph:
            with open(args.graph) as fh:
                graph = netfab.load_graph(fh)
            if graph.input_dim != n:
                raise DataError(f"graph takes n={graph.input_dim}, asked to verify n={n}")
        else:
            graph = netfab.build_feature_network(profile, n)
        report = netfab.verify(graph, profile.specs(n), cfg["features"]["trials"],
                               seeds.int_seed(cfg["run"]["seed"], "verify", n))
        sys.stdout.write(report.render() + "\n")
        ok = ok and report.passed
    return EXIT_OK if ok else EXIT_VERIFY


def _embedding_vectors(embeddings, layer: str) -> np.ndarray:
    if layer == "1":
        return np.stack([e.layer1 for e in embeddings])
    if layer == "2":
        return np.stack([e.layer2 for e in embeddings])
    if layer == "combined":
        return np.stack([e.combined for e in embeddings])
    raise ConfigError(f"layer must be 1, 2 or combined, got {layer!r}")


def cmd_embed(cfg, args) -> int:
    model = _load_model(_need(cfg, "model"))
    out = _need(cfg, "out")
    if args.per_series:
        embeddings = [ts2vec.embed_series(model, datagen.read_series(path), cfg["window"]["stride"],
                                          spec=_window_spec(cfg))
                      for path in _series_files(_need(cfg, "series"))]
    else:
        samples = _input_samples(cfg, (model.config.input_dim - 3) // 5)
        if not samples:
            raise DataError("no windows to embed")
        embeddings = ts2vec.embed_many(model, samples)
    vectors = _embedding_vectors(embeddings, cfg["ts2vec"]["layer"])
    with atomic_write(out) as fh:
        fh.write("id,timestamp," + ",".join(f"v{i}" for i in range(1, vectors.shape[1] + 1)) + "\n")
        for e, v in zip(embeddings, vectors):
            fh.write(f"{e.source_id},{e.pending_timestamp}," + ",".join(f"{x:.9g}" for x in v) + "\n")
    logger.info("wrote %d embeddings of dimension %d", len(embeddings), vectors.shape[1])
    return EXIT_OK


def read_embeddings(path) -> list:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["id", "timestamp"] or len(header) < 3:
            raise ParseError("expected header id,timestamp,v1..", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", lineno)
            try:
                vec = np.array([float(v) for v in row[2:]])
                out.append(ts2vec.Embedding(vec, np.empty(0), row[0], int(row[1])))
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
    if not out:
        raise DataError(f"{path}: no embeddings")
    return out


def cmd_cluster(cfg, args) -> int:
    embeddings = read_embeddings(_need(cfg, "in"))
    out = _need(cfg, "out")
    result = ts2vec.kmeans(embeddings, cfg["ts2vec"]["clusters"], seed=cfg["run"]["seed"])
    with atomic_write(out) as fh:
        fh.write("id,timestamp,cluster\n")
        for e, c in zip(embeddings, result.assignments):
            fh.write(f"{e.source_id},{e.pending_timestamp},{int(c)}\n")
    logger.info("k=%d: inertia %.6g after %d iterations", cfg["ts2vec"]["clusters"],
                result.inertia, result.n_iter)
    return EXIT_OK


def cmd_similar(cfg, args) -> int:
    embeddings = read_embeddings(_need(cfg, "in"))
    if args.query_id is not None:
        matches = [i for i, e in enumerate(embeddings)
                   if e.source_id == args.query_id and e.pending_timestamp == args.query_timestamp]
        if not matches:
            raise DataError(f"no embedding for ({args.query_id}, {args.query_timestamp})")
        index = matches[0]
    else:
        index = args.query
        if not 0 <= index < len(embeddings):
            raise DataError(f"query row {index} outside 0..{len(embeddings) - 1}")
    hits = ts2vec.top_k_similar(embeddings[index], embeddings, cfg["ts2vec"]["top"])
    lines = ["rank,id,timestamp,similarity"]
    lines += [f"{rank},{embeddings[i].source_id},{embeddings[i].pending_timestamp},{sim:.12g}"
              for rank, (i, sim) in enumerate(hits, start=1)]
    text = "\n".join(lines) + "\n"
    if cfg["paths"]["out"]:
        with atomic_write(cfg["paths"]["out"]) as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    """Usage errors exit with code 1 instead of argparse's 2 (reserved for data errors)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _path(p, *names):
    for name in names:
        p.add_argument(f"--{name}", dest=f"paths__{name}", metavar="PATH")


def _mlp_flags(p):
    g = p.add_argument_group("network")
    g.add_argument("--hidden-dims", dest="mlp__hidden_dims", metavar="H1,H2")
    g.add_argument("--leaky-slope", dest="mlp__leaky_slope", type=float)
    g.add_argument("--dropout-keep", dest="mlp__dropout_keep", type=float)
    g.add_argument("--learning-rate", dest="mlp__learning_rate", type=float)
    g.add_argument("--momentum", dest="mlp__momentum", type=float)
    g.add_argument("--batch-size", dest="mlp__batch_size", type=int)
    g.add_argument("--epochs", dest="mlp__epochs", type=int)
    g.add_argument("--optimizer", dest="mlp__optimizer", choices=mlp.OPTIMIZERS)
    g.add_argument("--keep-best", dest="mlp__keep_best", metavar="BOOL",
                   help="restore the lowest training-loss epoch (default true)")


def _generator_flags(p):
    g = p.add_argument_group("generator")
    for key, kind in SCHEMA["generator"].items():
        g.add_argument(f"--{key.replace('_', '-')}", dest=f"generator__{key}", type=kind)


def _baseline_flags(p):
    g = p.add_argument_group("baselines")
    for key, kind in SCHEMA["baselines"].items():
        g.add_argument(f"--{key.replace('_', '-')}", dest=f"baselines__{key}", type=kind)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI config file")
    common.add_argument("--seed", dest="run__seed", type=int, help="root seed (default 0)")
    common.add_argument("--k", dest="window__k", type=int, help="window half-width (default 180)")
    common.add_argument("-q", "--quiet", action="store_true", help="log warnings only")

    parser = _Parser(prog="kpidnn", description="KPI anomaly detection pipeline")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", parents=[common], help="generate synthetic series and datasets")
    _path(p, "out")
    _generator_flags(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("window", parents=[common], help="turn raw series into a labelled dataset")
    _path(p, "in", "anomalies", "out")
    p.add_argument("--stride", dest="window__stride", type=int)
    p.add_argument("--undersample-ratio", dest="window__undersample_ratio", type=float,
                   help="keep anomalies/normals near this ratio (0 keeps all)")
    p.set_defaults(func=cmd_window)

    p = sub.add_parser("train", parents=[common], help="fit the network")
    _path(p, "train", "val", "out", "trace")
    _mlp_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="label a dataset or raw series")
    _path(p, "model", "in", "series", "anomalies", "out")
    p.add_argument("--stride", dest="window__stride", type=int)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", parents=[common], help="score a prediction CSV")
    _path(p, "in", "out")
    p.add_argument("--name", default="DNN", help="row name in the report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", parents=[common], help="network and baselines on one test set")
    _path(p, "train", "test", "model", "out")
    _mlp_flags(p)
    _baseline_flags(p)
    _generator_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("compile-features", parents=[common], help="write the feature network")
    _path(p, "out")
    p.add_argument("--n", type=int, required=True, help="input length")
    p.add_argument("--threshold", dest="features__threshold", type=float)
    p.set_defaults(func=cmd_compile_features)

    p = sub.add_parser("verify-features", parents=[common],
                       help="check feature networks against direct computation")
    p.add_argument("--n", type=int, nargs="+", default=[10, 50, 100, 200])
    p.add_argument("--trials", dest="features__trials", type=int)
    p.add_argument("--threshold", dest="features__threshold", type=float)
    p.add_argument("--graph", metavar="PATH", help="verify a serialized graph instead")
    p.set_defaults(func=cmd_verify_features)

    p = sub.add_parser("embed", parents=[common], help="hidden-layer embeddings of windows")
    _path(p, "model", "in", "series", "anomalies", "out")
    p.add_argument("--stride", dest="window__stride", type=int)
    p.add_argument("--layer", dest="ts2vec__layer", choices=("1", "2", "combined"))
    p.add_argument("--per-series", action="store_true",
                   help="one embedding per --series file: mean over a day of windows at --stride")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("cluster", parents=[common], help="k-means over embeddings")
    _path(p, "in", "out")
    p.add_argument("--clusters", dest="ts2vec__clusters", type=int)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("similar", parents=[common], help="most similar embeddings to a query")
    _path(p, "in", "out")
    q = p.add_mutually_exclusive_group(required=True)
    q.add_argument("--query", type=int, help="0-based row of the query embedding")
    q.add_argument("--query-id", help="series id of the query (with --query-timestamp)")
    p.add_argument("--query-timestamp", type=int)
    p.add_argument("--top", dest="ts2vec__top", type=int)
    p.set_defaults(func=cmd_similar)
    return parser


def _setup_logging(quiet: bool) -> None:
    logger.handlers.clear()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logger.addHandler(handler)
    logger.setLevel(logging.WARNING if quiet else logging.INFO)
    logger.propagate = False


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _setup_logging(args.quiet)
    try:
        if args.command == "similar" and args.query_id is not None and args.query_timestamp is None:
            raise ConfigError("--query-id needs --query-timestamp")
        cfg = resolve(args)
        logger.info("resolved config: %s", json.dumps(cfg, sort_keys=True, default=list))
        return args.func(cfg, args)
    except ParamError as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except (DataError, KpiError, OSError, ValueError) as exc:
        logger.error("%s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
