"""Command-line entry point: ``pmwnet <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .data import (
    ArrayDataset,
    CsvFormatError,
    CsvMapping,
    ImageDecodeError,
    ManifestError,
    SampleManifest,
    apply_exclude,
    dataset_stats,
    dedupe,
    format_stats,
    ingest_directory,
    ingest_inaturalist_csv,
    load_image,
    read_exclude_list,
    stratified_split,
    synth,
)
from .data.images import IMAGE_SUFFIXES
from .evaluation import emit_report, evaluate_predictions
from .models import (
    ARCHITECTURES,
    DESK_ARCHITECTURES,
    HeadConfig,
    WeightFormatError,
    WeightShapeError,
    build,
    load_weights,
    save_weights,
)
from .training import NumericalError, TrainConfig, checkpoint, predict, pretrain_transfer, resume, train

log = logging.getLogger("pmwnet")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
DATA_ERRORS = (ManifestError, ImageDecodeError, CsvFormatError, WeightFormatError, WeightShapeError, FileNotFoundError)

RUN_FILES = ("config.json", "history.jsonl", "weights.bin", "report.json")
RUN_KEYS = ("arch", "width", "image_size", "hidden_width", "dropout_rate", "threshold", "pretrained_weights")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ------------------------------------------------------------------ config


def default_config() -> dict:
    cfg = TrainConfig().to_dict()
    cfg.update(arch="resnet_s", width=16, image_size=None, hidden_width=256, dropout_rate=0.30, threshold=0.5, pretrained_weights=None)
    cfg["seed"] = None
    return cfg


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _apply(cfg: dict, key: str, value) -> None:
    head, _, rest = key.partition(".")
    if head not in cfg:
        raise UsageError(f"unknown config key {key!r}")
    if rest:
        if not isinstance(cfg[head], dict):
            raise UsageError(f"config key {head!r} has no sub-keys")
        _apply(cfg[head], rest, value)
    else:
        cfg[head] = value


def resolve_config(config_file, overrides, seed_flag=None) -> tuple[dict, dict | None]:
    """Defaults < config file < ``--set`` overrides < ``--seed``; ``PMW_SEED``
    fills the seed if nothing else did.  Returns (resolved, raw file contents)."""
    cfg = default_config()
    raw = None
    if config_file:
        try:
            raw = json.loads(Path(config_file).read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"{config_file}: invalid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise UsageError(f"{config_file}: config must be a JSON object")
        for k, v in raw.items():
            if isinstance(v, dict) and isinstance(cfg.get(k), dict):
                for sk, sv in v.items():
                    _apply(cfg, f"{k}.{sk}", sv)
            else:
                _apply(cfg, k, v)
    for item in overrides or []:
        key, eq, value = item.partition("=")
        if not eq:
            raise UsageError(f"override {item!r} is not key=value")
        _apply(cfg, key.strip(), _parse_value(value))
    if seed_flag is not None:
        cfg["seed"] = seed_flag
    if cfg["seed"] is None:
        cfg["seed"] = env_seed()
    if cfg["arch"] not in ARCHITECTURES:
        raise UsageError(f"unknown architecture {cfg['arch']!r}; choose from {', '.join(ARCHITECTURES)}")
    if cfg["image_size"] is None:
        cfg["image_size"] = 32 if cfg["arch"] in DESK_ARCHITECTURES else (299 if cfg["arch"] == "inception_v3" else 224)
    return cfg, raw


def env_seed(default: int = 0) -> int:
    text = os.environ.get("PMW_SEED")
    if text is None or text == "":
        return default
    try:
        return int(text)
    except ValueError:
        raise UsageError(f"PMW_SEED must be an integer, got {text!r}") from None


def train_config(cfg: dict) -> TrainConfig:
    try:
        return TrainConfig.from_dict({k: v for k, v in cfg.items() if k not in RUN_KEYS})
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad training config: {exc}") from exc


def model_for(cfg: dict):
    s = int(cfg["image_size"])
    head = HeadConfig(hidden_width=int(cfg["hidden_width"]), dropout_rate=float(cfg["dropout_rate"]))
    return build(cfg["arch"], input_shape=(3, s, s), width=int(cfg["width"]), seed=int(cfg["seed"]), head=head)


# ------------------------------------------------------------------ helpers


def prepare_dir(path, force: bool) -> Path:
    p = Path(path)
    if p.exists() and (not p.is_dir() or any(p.iterdir())) and not force:
        raise UsageError(f"{p} already exists; pass --force to overwrite")
    p.mkdir(parents=True, exist_ok=True)
    return p


def prepare_file(path, force: bool) -> Path:
    p = Path(path)
    if p.exists() and not force:
        raise UsageError(f"{p} already exists; pass --force to overwrite")
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def rebase(manifest: SampleManifest, new_dir: Path) -> SampleManifest:
    """Rewrite relative image paths so they resolve from ``new_dir``."""
    new_dir = new_dir.resolve()
    recs = []
    for r in manifest.records:
        if "://" in r.image_path:
            recs.append(r)
            continue
        path = Path(os.path.relpath(manifest.resolve(r).resolve(), new_dir)).as_posix()
        recs.append(type(r)(path, r.class_, r.type_tag, r.source, r.split, r.content_hash))
    out = manifest.with_records(recs)
    out.base_dir = new_dir
    return out


def load_split(manifest: SampleManifest, split: str, size: int, required: bool = True) -> ArrayDataset | None:
    if not manifest.split(split):
        if required:
            raise ManifestError(f"manifest has no {split!r} records; run `pmwnet dataset split` first")
        return None
    return ArrayDataset.from_manifest(manifest, split, (size, size))


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_run_config(run_dir: Path) -> dict:
    path = run_dir / "config.json"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; is {run_dir} a run directory?")
    return json.loads(path.read_text())


# ----------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    out = prepare_dir(args.out, args.force)
    seed = args.seed if args.seed is not None else env_seed()
    if args.n_per_class < 1:
        raise UsageError("--n-per-class must be >= 1")
    m = synth.generate(out, args.n_per_class, seed=seed, size=args.size)
    print(f"wrote {len(m)} images and {out / 'manifest.jsonl'}")
    return EXIT_OK


def cmd_dataset_build(args) -> int:
    out = prepare_file(args.out, args.force)
    if not args.dir and not args.csv:
        raise UsageError("give at least one --dir or --csv source")
    manifest = SampleManifest(base_dir=out.parent.resolve())
    for spec in args.dir or []:
        if len(spec) not in (3, 4):
            raise UsageError("--dir takes PATH CLASS TYPE [SOURCE]")
        res = ingest_directory(Path(spec[0]).resolve(), spec[1], spec[2], spec[3] if len(spec) == 4 else "other")
        manifest.extend(res.records)
    if args.csv:
        mapping = CsvMapping.load(args.mapping) if args.mapping else None
        res = ingest_inaturalist_csv(args.csv, mapping)
        base = Path(args.csv).resolve().parent
        for r in res.records:
            if "://" not in r.image_path and not Path(r.image_path).is_absolute():
                r = type(r)(str(base / r.image_path), r.class_, r.type_tag, r.source, r.split, r.content_hash)
            manifest.records.append(r)
    manifest = rebase(manifest, out.parent)
    manifest, n_dup = dedupe(manifest)
    n_excl = 0
    if args.exclude:
        manifest, n_excl = apply_exclude(manifest, read_exclude_list(args.exclude))
    manifest.notes.append(f"built: {n_dup} duplicates removed, {n_excl} excluded")
    manifest.save(out)
    print(f"wrote {len(manifest)} records to {out} ({n_dup} duplicates removed, {n_excl} excluded)")
    return EXIT_OK


def cmd_dataset_split(args) -> int:
    out = prepare_file(args.out, args.force)
    seed = args.seed if args.seed is not None else env_seed()
    if len(args.ratios) != 3 or any(r < 0 for r in args.ratios) or sum(args.ratios) <= 0:
        raise UsageError("--ratios takes three non-negative numbers")
    m = SampleManifest.load(args.manifest)
    m = stratified_split(m, tuple(args.ratios), seed=seed)
    m = rebase(m, out.parent)
    m.save(out)
    counts = dataset_stats(m)["split"]
    print(f"wrote {out}: train {counts['train']}, val {counts['val']}, test {counts['test']}")
    return EXIT_OK


def cmd_dataset_stats(args) -> int:
    stats = dataset_stats(SampleManifest.load(args.manifest))
    print(json.dumps(stats, indent=2) if args.format == "json" else format_stats(stats))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg, raw = resolve_config(args.config, args.set, args.seed)
    if args.pretrained_weights:
        cfg["pretrained_weights"] = str(Path(args.pretrained_weights).resolve())
    if cfg["pretrained_weights"] and not cfg["freeze_selector"]:
        cfg["freeze_selector"] = "backbone"
    tcfg = train_config(cfg)
    run = Path(args.out)
    ckpt = run / "checkpoint.bin"
    resuming = args.resume and ckpt.exists()
    if not resuming:
        prepare_dir(run, args.force)
    log.info("resolved config: %s", json.dumps(cfg, sort_keys=True))

    manifest = SampleManifest.load(args.manifest)
    size = int(cfg["image_size"])
    train_set = load_split(manifest, "train", size)
    val_set = load_split(manifest, "val", size)
    test_set = load_split(manifest, "test", size, required=False)

    model = model_for(cfg)
    state = None
    if resuming:
        state, tcfg = resume(ckpt, model)
        log.info("resuming after epoch %d", state.epoch)
    elif cfg["pretrained_weights"]:
        rep = load_weights(cfg["pretrained_weights"], model, allow_partial=True)
        log.info("pretrained weights: %d loaded, %d skipped, %d missing", len(rep.loaded), len(rep.skipped), len(rep.missing))

    write_json(run / "config.json", {"config": cfg, "config_file": raw, "overrides": list(args.set or []), "manifest": str(Path(args.manifest).resolve())})
    _, hist = train(model, train_set, val_set, tcfg, resume_from=state, on_epoch_end=lambda s, m: checkpoint(m, ckpt, s, tcfg))

    save_weights(model, run / "weights.bin")
    (run / "history.jsonl").write_text(hist.to_jsonl())
    write_json(run / "timing.json", {"wall_time_seconds": hist.wall_time})
    split, data = ("test", test_set) if test_set is not None else ("val", val_set)
    report = evaluate_predictions(predict(model, data.x), data.y, data.records, cfg["threshold"], cfg["arch"])
    (run / "report.json").write_bytes(emit_report(report, "json"))
    print(f"best epoch {hist.best_epoch} of {hist.stopped_epoch}; {split} accuracy {report.accuracy:.4f}; run in {run}")
    return EXIT_OK


def cmd_eval(args) -> int:
    run = Path(args.run_dir)
    meta = read_run_config(run)
    cfg = meta["config"]
    manifest = SampleManifest.load(args.manifest or meta["manifest"])
    data = load_split(manifest, args.split, int(cfg["image_size"]))
    model = model_for(cfg)
    load_weights(run / "weights.bin", model)
    threshold = args.threshold if args.threshold is not None else cfg["threshold"]
    report = evaluate_predictions(predict(model, data.x), data.y, data.records, threshold, cfg["arch"])
    outputs = {"json": f"eval_{args.split}.json", "csv": f"eval_{args.split}.csv", "text-table": f"eval_{args.split}.txt"}
    for fmt, name in outputs.items():
        target = prepare_file(run / name, args.force)
        target.write_bytes(emit_report(report, fmt))
    sys.stdout.write(emit_report(report, "text-table").decode())
    return EXIT_OK


def _predict_inputs(source: Path) -> list[Path]:
    if source.is_dir():
        return sorted(p for p in source.rglob("*") if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
    if source.is_file():
        m = SampleManifest.load(source)
        return [m.resolve(r) for r in m.records]
    raise FileNotFoundError(f"{source}: no such image directory or manifest")


def cmd_predict(args) -> int:
    run = Path(args.run_dir)
    cfg = read_run_config(run)["config"]
    out = prepare_file(args.out, args.force)
    model = model_for(cfg)
    load_weights(args.weights or run / "weights.bin", model)
    paths = _predict_inputs(Path(args.input))
    size = int(cfg["image_size"])
    x = np.stack([load_image(p, (size, size)) for p in paths]) if paths else np.zeros((0, 3, size, size), np.float32)
    probs = predict(model, x)
    threshold = args.threshold if args.threshold is not None else cfg["threshold"]
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "probability", "label"])
        for p, prob in zip(paths, probs):
            w.writerow([p.as_posix(), f"{prob:.6f}", "PMW" if prob >= threshold else "not-PMW"])
    print(f"wrote {len(paths)} predictions to {out}")
    return EXIT_OK


def cmd_transfer(args) -> int:
    cfg, raw = resolve_config(args.config, args.set, args.seed)
    tcfg = train_config(cfg)
    run = prepare_dir(args.out, args.force)
    size = int(cfg["image_size"])
    src = SampleManifest.load(args.source)
    tgt = SampleManifest.load(args.target)
    source = (load_split(src, "train", size), load_split(src, "val", size))
    target = (load_split(tgt, "train", size), load_split(tgt, "val", size))
    test = load_split(tgt, "test", size, required=False)
    write_json(run / "config.json", {"config": cfg, "config_file": raw, "overrides": list(args.set or []),
                                     "source": str(Path(args.source).resolve()), "target": str(Path(args.target).resolve())})
    rep = pretrain_transfer(lambda: model_for(cfg), source, target, tcfg, target_test=test, backbone_path=run / "backbone.bin")
    for arm in (rep.source, rep.pretrained, rep.random):
        (run / f"history_{arm.name}.jsonl").write_text(arm.history.to_jsonl())
    write_json(run / "transfer.json", rep.as_dict())
    print(
        f"pretrained val accuracy {rep.pretrained.val_accuracy:.4f}, random-init {rep.random.val_accuracy:.4f}; "
        f"backbone unchanged: {rep.backbone_unchanged}"
    )
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _add_run_options(p) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable; dotted keys for augment)")
    p.add_argument("--seed", type=int, help="global seed (default: config, then $PMW_SEED, then 0)")
    p.add_argument("--force", action="store_true", help="overwrite an existing output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pmwnet", description="Portuguese man-of-war image classification pipeline.")
    parser.add_argument("-q", "--quiet", action="store_true", help="only log warnings")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="generate the synthetic image set")
    p.add_argument("out")
    p.add_argument("--n-per-class", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--size", type=int, default=synth.DEFAULT_SIZE)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_synth)

    ds = sub.add_parser("dataset", help="build, split or summarize manifests").add_subparsers(dest="action", parser_class=_Parser)
    ds.required = True
    p = ds.add_parser("build", help="ingest image directories and/or an iNaturalist CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--dir", nargs="+", action="append", metavar="ARG", help="PATH CLASS TYPE [SOURCE] (repeatable)")
    p.add_argument("--csv")
    p.add_argument("--mapping", help="JSON taxon mapping for --csv")
    p.add_argument("--exclude", help="file of content hashes to drop")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_dataset_build)
    p = ds.add_parser("split", help="assign stratified train/val/test splits")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--ratios", type=float, nargs=3, default=[0.6, 0.2, 0.2])
    p.add_argument("--seed", type=int)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_dataset_split)
    p = ds.add_parser("stats", help="record counts by class, type, source and split")
    p.add_argument("manifest")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_dataset_stats)

    p = sub.add_parser("train", help="train a model into a run directory")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--arch", help=f"one of {', '.join(ARCHITECTURES)}")
    p.add_argument("--pretrained-weights", help="backbone weight file; its layers are frozen")
    p.add_argument("--resume", action="store_true", help="continue from the run directory's checkpoint")
    _add_run_options(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a run directory on a split")
    p.add_argument("run_dir")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--manifest", help="override the manifest recorded in the run")
    p.add_argument("--threshold", type=float)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="score images with a trained run")
    p.add_argument("run_dir")
    p.add_argument("input", help="image directory or manifest")
    p.add_argument("--out", required=True, help="CSV of path, probability, label")
    p.add_argument("--weights", help="weight file (default: the run's weights.bin)")
    p.add_argument("--threshold", type=float)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("transfer", help="pretrain on a source manifest, fine-tune a frozen backbone on a target")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--arch")
    _add_run_options(p)
    p.set_defaults(func=cmd_transfer)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s")
        if getattr(args, "arch", None):
            args.set = list(args.set or []) + [f"arch={json.dumps(args.arch)}"]
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
