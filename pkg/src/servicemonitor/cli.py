"""Command-line front end: parse, featurize, gen, train, evaluate, predict.

Config precedence is flags > config file > built-in defaults, and every
command is deterministic given identical flags, files, and seed (the
model timestamp defaults to 0 for that reason; pass --timestamp-us to
stamp real time). SERVICEMONITOR_THREADS caps internal parallelism;
outputs do not depend on the thread count.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 training
infeasibility.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

from .catalog import ServiceCatalog, default_catalog, load_catalog_path
from .errors import (
    ConfigError,
    LabelError,
    ServiceMonitorError,
    TraceFormatError,
    TrainingError,
)
from .evaluation import cross_validate, roc_points_to_csv
from .features import (
    FeatureVector,
    dataset_from_rows,
    featurize_trace,
    read_features_jsonl,
    write_features_jsonl,
)
from .forest import ForestParams, predict_score, train_forest
from .labels import index_to_label
from .pca import fit_pca, transform
from .persist import ModelBundle, TrainingMetadata, load_model, save_model, MODEL_VERSION
from .rng import derive_seed
from .syngen import default_profiles, gen_corpus, load_profiles
from .trace import parse_trace, resolve_events, write_trace
from .validation import as_label_indices

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_TRAINING = 3

THREADS_ENV = "SERVICEMONITOR_THREADS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    catalog: str | None = None
    seed: int = 0
    pca_dims: int = 200
    trees: int = 500
    mtry: int | None = None
    min_leaf: int = 1
    folds: int = 10
    threshold: float = 0.5
    unknown_policy: str = "skip"
    output: str | None = None

    def validate(self) -> None:
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.pca_dims < 1 or self.trees < 1 or self.min_leaf < 1:
            raise ConfigError("pca_dims, trees, and min_leaf must be positive")
        if self.mtry is not None and self.mtry < 1:
            raise ConfigError("mtry must be positive when given")
        if self.folds < 2:
            raise ConfigError("folds must be at least 2")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must lie in [0, 1]")
        if self.unknown_policy not in ("skip", "error"):
            raise ConfigError(f"unknown_policy must be 'skip' or 'error', got {self.unknown_policy!r}")


_CONFIG_KEYS = set(RunConfig.__dataclass_fields__)


def _load_config_file(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"config file {path} has unknown keys: {', '.join(sorted(unknown))}")
    return doc


def _effective_config(args: argparse.Namespace) -> tuple[RunConfig, set[str]]:
    """Merge defaults, config file, and explicit flags; track explicit keys."""
    values = asdict(RunConfig())
    explicit: set[str] = set()
    if getattr(args, "config", None):
        file_values = _load_config_file(args.config)
        values.update(file_values)
        explicit.update(file_values)
    for key in _CONFIG_KEYS:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            values[key] = flag_value
            explicit.add(key)
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg, explicit


def max_workers() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1, got {value}")
    return value


def _map_ordered(fn, items):
    workers = max_workers()
    items = list(items)
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _load_cli_catalog(cfg: RunConfig) -> ServiceCatalog:
    if cfg.catalog:
        return load_catalog_path(cfg.catalog)
    return default_catalog()


def _read_trace_file(path: str):
    data = Path(path).read_bytes()
    try:
        return parse_trace(data)
    except TraceFormatError as exc:
        # keep the subclass, prefix the file name (offset is in the message)
        raise type(exc)(f"{path}: {exc}") from exc


def _read_labels_manifest(path: str) -> dict[str, str]:
    labels: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                labels[str(obj["app_id"])] = str(obj["label"])
            except (json.JSONDecodeError, KeyError) as exc:
                raise LabelError(f"{path}:{lineno}: invalid manifest line: {exc}") from exc
    return labels


def _write_output(path: str | None, data: str) -> None:
    if path:
        Path(path).write_text(data, encoding="utf-8")
    else:
        sys.stdout.write(data)


def cmd_parse(cfg: RunConfig, args) -> int:
    catalog = _load_cli_catalog(cfg)
    lines = []
    for path in args.traces:
        records = _read_trace_file(path)
        trace = resolve_events(records, catalog, cfg.unknown_policy, app_id=Path(path).stem)
        lines.extend(catalog.entry(fid).function_name for fid in trace.events)
    _write_output(cfg.output, "".join(f"{name}\n" for name in lines))
    return EXIT_OK


def cmd_featurize(cfg: RunConfig, args) -> int:
    catalog = _load_cli_catalog(cfg)
    manifest = _read_labels_manifest(args.labels) if args.labels else None

    def one(path: str) -> FeatureVector:
        app_id = Path(path).stem
        label = args.label
        if manifest is not None:
            if app_id not in manifest:
                raise LabelError(f"label manifest has no entry for app {app_id!r}")
            label = manifest[app_id]
        records = _read_trace_file(path)
        trace = resolve_events(records, catalog, cfg.unknown_policy, app_id=app_id, label=label)
        return featurize_trace(trace, catalog)

    vectors = _map_ordered(one, args.traces)
    payload = write_features_jsonl(vectors, catalog.content_digest)
    if cfg.output:
        Path(cfg.output).write_bytes(payload)
    else:
        sys.stdout.write(payload.decode("utf-8"))
    return EXIT_OK


def cmd_gen(cfg: RunConfig, args) -> int:
    catalog = _load_cli_catalog(cfg)
    if args.profiles:
        profiles = load_profiles(Path(args.profiles).read_bytes())
    else:
        profiles = default_profiles(catalog)
    apps = gen_corpus(profiles, args.count, catalog, cfg.seed)
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_lines = []
    for app in apps:
        file_name = f"{app.app_id}.smtr"
        (out_dir / file_name).write_bytes(write_trace(app.records))
        manifest_lines.append(
            json.dumps({"app_id": app.app_id, "label": app.label, "file": file_name}, sort_keys=True)
        )
    (out_dir / "manifest.jsonl").write_text("\n".join(manifest_lines) + "\n", encoding="utf-8")
    print(f"wrote {len(apps)} traces to {out_dir}")
    return EXIT_OK


def _load_labeled_dataset(path: str):
    vectors, digest = read_features_jsonl(Path(path).read_bytes())
    for vec in vectors:
        if vec.label is None:
            raise LabelError(f"feature row {vec.app_id!r} has no label")
    return dataset_from_rows(vectors, digest)


def cmd_train(cfg: RunConfig, args) -> int:
    dataset = _load_labeled_dataset(args.features)
    X = dataset.matrix()
    y = as_label_indices(dataset.labels(), count=len(dataset))
    pca = fit_pca(X, cfg.pca_dims)
    reduced = transform(pca, X)
    params = ForestParams(
        tree_count=cfg.trees,
        mtry=cfg.mtry,
        min_leaf=cfg.min_leaf,
        seed=derive_seed(cfg.seed, "train-forest", 0),
    )
    forest = train_forest(reduced, y, params, catalog_digest=dataset.catalog_digest)
    bundle = ModelBundle(
        format_version=MODEL_VERSION,
        catalog_digest=dataset.catalog_digest,
        pca=pca,
        forest=forest,
        threshold=cfg.threshold,
        metadata=TrainingMetadata(
            seed=cfg.seed,
            params={
                "pca_dims": cfg.pca_dims,
                "trees": cfg.trees,
                "mtry": cfg.mtry,
                "min_leaf": cfg.min_leaf,
            },
            timestamp_us=args.timestamp_us,
        ),
    )
    out = cfg.output or "model.smdl"
    Path(out).write_bytes(save_model(bundle))
    print(f"trained on {len(dataset)} samples; wrote {out} (pca k={pca.k}, trees={forest.tree_count})")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, args) -> int:
    dataset = _load_labeled_dataset(args.features)
    report = cross_validate(
        dataset,
        pca_k=cfg.pca_dims,
        forest_params=ForestParams(tree_count=cfg.trees, mtry=cfg.mtry, min_leaf=cfg.min_leaf),
        k=cfg.folds,
        seed=cfg.seed,
        threshold=cfg.threshold,
        pca_scope=args.pca_scope,
        auc_scope=args.auc_scope,
    )
    if args.roc_csv:
        Path(args.roc_csv).write_text(roc_points_to_csv(report.roc_points), encoding="utf-8")
    if cfg.output:
        Path(cfg.output).write_text(report.to_json() + "\n", encoding="utf-8")
        print(report.to_table())
    else:
        print(report.to_json())
    return EXIT_OK


def cmd_predict(cfg: RunConfig, args, threshold_explicit: bool) -> int:
    catalog = _load_cli_catalog(cfg)
    bundle = load_model(Path(args.model).read_bytes(), catalog=catalog)
    threshold = cfg.threshold if threshold_explicit else bundle.threshold

    def one(path: str) -> tuple[str, float]:
        app_id = Path(path).stem
        records = _read_trace_file(path)
        trace = resolve_events(records, catalog, cfg.unknown_policy, app_id=app_id)
        vector = featurize_trace(trace, catalog).values
        score = predict_score(bundle.forest, transform(bundle.pca, vector[None, :])[0])
        return app_id, score

    lines = []
    for app_id, score in _map_ordered(one, args.traces):
        label = index_to_label(1 if score > threshold else 0)
        lines.append(f"{app_id}\t{score:.6f}\t{label}")
    _write_output(None, "".join(f"{line}\n" for line in lines))
    return EXIT_OK


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--print-config", action="store_true",
                        help="print the effective config as JSON and exit")
    parser.add_argument("--catalog", help="catalog TSV path (default: shipped catalog)")
    parser.add_argument("--seed", type=int, help="master seed (default 0)")
    parser.add_argument("--pca-dims", type=int, dest="pca_dims", help="PCA components (default 200)")
    parser.add_argument("--trees", type=int, help="forest size (default 500)")
    parser.add_argument("--mtry", type=int, help="features per split (default floor(sqrt(k)))")
    parser.add_argument("--min-leaf", type=int, dest="min_leaf", help="stop splitting nodes at or below this size (default 1)")
    parser.add_argument("--folds", type=int, help="cross-validation folds (default 10)")
    parser.add_argument("--threshold", type=float, help="malicious vote-fraction threshold (default 0.5)")
    parser.add_argument("--unknown-policy", dest="unknown_policy", choices=("skip", "error"),
                        help="how to treat uncataloged (interface, code) pairs (default skip)")
    parser.add_argument("--output", "-o", help="output path (default: stdout or command-specific)")


def build_parser() -> _Parser:
    parser = _Parser(prog="servicemonitor",
                     description="Markov-chain behavioral modeling and malware classification "
                                 "for recorded Binder transaction logs.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("parse", help="decode traces and list resolved function names")
    _add_common_flags(p)
    p.add_argument("traces", nargs="+", help="SMTR or JSONL trace files")

    p = sub.add_parser("featurize", help="turn traces into a feature JSONL file")
    _add_common_flags(p)
    label_source = p.add_mutually_exclusive_group()
    label_source.add_argument("--labels", help="JSONL manifest mapping app_id to label")
    label_source.add_argument("--label", choices=("benign", "malicious"),
                              help="label applied to every trace")
    p.add_argument("traces", nargs="+", help="SMTR or JSONL trace files")

    p = sub.add_parser("gen", help="generate a synthetic labeled trace corpus")
    _add_common_flags(p)
    p.add_argument("--profiles", help="profile JSON document (default: shipped profiles)")
    p.add_argument("--count", type=int, required=True, help="number of traces to generate")
    p.add_argument("--output-dir", dest="output_dir", required=True, help="directory for traces + manifest")

    p = sub.add_parser("train", help="fit PCA + forest on labeled features, write a model bundle")
    _add_common_flags(p)
    p.add_argument("--timestamp-us", dest="timestamp_us", type=int, default=0,
                   help="training timestamp stored in the bundle (default 0 for determinism)")
    p.add_argument("features", help="feature JSONL file")

    p = sub.add_parser("evaluate", help="stratified cross-validation report")
    _add_common_flags(p)
    p.add_argument("--roc-csv", dest="roc_csv", help="also dump ROC points as CSV")
    p.add_argument("--pca-scope", dest="pca_scope", choices=("fold", "global"), default="fold",
                   help="fit PCA per training fold (default) or once globally")
    p.add_argument("--auc-scope", dest="auc_scope", choices=("pooled", "fold-mean"), default="pooled",
                   help="AUC over pooled held-out scores (default) or mean of per-fold AUCs")
    p.add_argument("features", help="feature JSONL file")

    p = sub.add_parser("predict", help="score traces with a trained model bundle")
    _add_common_flags(p)
    p.add_argument("--model", required=True, help="model bundle path (.smdl)")
    p.add_argument("traces", nargs="+", help="SMTR or JSONL trace files")

    return parser


_COMMANDS = {
    "parse": cmd_parse,
    "featurize": cmd_featurize,
    "gen": cmd_gen,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_help()
            return EXIT_USAGE
        cfg, explicit = _effective_config(args)
        if args.print_config:
            print(json.dumps(asdict(cfg), sort_keys=True, indent=2))
            return EXIT_OK
        if args.command == "predict":
            return cmd_predict(cfg, args, threshold_explicit="threshold" in explicit)
        return _COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except ServiceMonitorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
