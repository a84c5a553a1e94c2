"""Command-line pipeline: dataset build, GAN training/sampling, the face
gate, classifier training/evaluation, and report assembly.

Every stage is a pure function of (config file, flags, seed, input files);
re-running a stage with the same inputs reproduces its artifacts bitwise.
Exit codes: 0 success, 1 stage error (with a diagnostic on stderr), 2 usage.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import classifier as clf_mod
from . import data as data_mod
from . import dcgan, facegate, metrics
from .errors import ForgegateError, UsageError
from .ioutils import atomic_write_text
from .rng import make_rng

PROG = "forgegate"


def _parse_scalar(raw: str):
    text = raw.strip()
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    if lowered in ("none", "null"):
        return None
    for caster in (int, float):
        try:
            return caster(text)
        except ValueError:
            continue
    if text.startswith("[") or text.startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError:
            pass
    return text


def load_config(path: str | None) -> dict:
    """Key=value lines or a JSON object; '#' starts a comment line."""
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise UsageError(f"config {path} must hold a JSON object")
        return payload
    config: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.strip()
        if not body or body.startswith("#"):
            continue
        if "=" not in body:
            raise UsageError(f"config {path} line {lineno}: expected key=value, got {body!r}")
        key, value = body.split("=", 1)
        config[key.strip()] = _parse_scalar(value)
    return config


def _take(config: dict, key: str, default):
    return config[key] if key in config else default


def _gan_config(config: dict) -> dcgan.GanConfig:
    fields = {
        "resolution", "z_dim", "gen_base_maps", "disc_first_maps", "kernel", "stride",
        "lr", "loss_mode", "clip_limit", "batch_size", "max_epochs", "stop_rule",
        "label_smoothing", "grad_clip_norm",
    }
    return dcgan.GanConfig(**{k: v for k, v in config.items() if k in fields})


def _classifier_config(config: dict) -> clf_mod.ClassifierConfig:
    fields = {
        "stage_blocks", "cardinality", "base_width", "stem_maps", "stem_kernel",
        "stem_stride", "input_resolution", "lr", "epochs", "batch_size",
        "head_only_finetune",
    }
    kwargs = {k: v for k, v in config.items() if k in fields}
    preset = _take(config, "preset", "desk")
    if preset == "paper":
        return clf_mod.ClassifierConfig.paper(**kwargs)
    return clf_mod.ClassifierConfig.desk(**kwargs)


# ---------------------------------------------------------------------------
# stages


def cmd_dataset_build(args) -> int:
    config = load_config(args.config)
    kind = _take(config, "kind", "blobs")
    if kind == "blobs":
        count = int(_take(config, "count_per_class", 100))
        resolution = int(_take(config, "resolution", 16))
        manifest_path, total = data_mod.make_blob_corpus(
            args.out, count, resolution, seed=args.seed
        )
        print(f"wrote {total} images and {manifest_path}")
        return 0
    if kind == "manifest":
        source = _take(config, "manifest", None)
        if source is None:
            raise UsageError("config key 'manifest' is required for kind=manifest")
        expected = _take(config, "expected_total", None)
        manifest = data_mod.load_manifest(source, expected_total=expected)
        for warning in manifest.warnings:
            print(f"warning: {warning}", file=sys.stderr)
        print(f"manifest ok: {len(manifest.rows)} rows, counts sum to {manifest.total_count}")
        return 0
    raise UsageError(f"unknown dataset kind {kind!r} (expected blobs or manifest)")


def cmd_gan_train(args) -> int:
    config = load_config(args.config)
    gan_config = _gan_config(config)
    label = _take(config, "label", "edited")
    manifest = data_mod.load_manifest(args.data)
    records = data_mod.load_records_from_manifest(manifest, gan_config.resolution)
    subset = [r for r in records if r.label == label]
    if not subset:
        raise UsageError(f"no {label!r} records under manifest {args.data}")
    images, _ = data_mod.records_to_arrays(subset)
    ckpt, curve = dcgan.train_gan(
        images, gan_config, seed=args.seed, checkpoint_path=args.out
    )
    if args.curve:
        metrics.emit_curves(curve, args.curve)
    print(
        f"trained {label} GAN for {ckpt.epoch} epochs "
        f"(g_loss={ckpt.g_loss:.4f}, d_loss={ckpt.d_loss:.4f}) -> {args.out}"
    )
    return 0


def cmd_gan_sample(args) -> int:
    rng = make_rng(args.seed)
    ckpt = dcgan.load_checkpoint(args.ckpt)
    gen = dcgan.generator_from_checkpoint(ckpt)
    os.makedirs(args.out, exist_ok=True)
    if args.ckpt_unedited:
        gen_unedited = dcgan.generator_from_checkpoint(dcgan.load_checkpoint(args.ckpt_unedited))
        records = data_mod.synthesize_dataset(gen, gen_unedited, args.count, rng)
        counters = {"edited": 0, "unedited": 0}
        for record in records:
            index = counters[record.label]
            counters[record.label] += 1
            directory = os.path.join(args.out, record.label)
            os.makedirs(directory, exist_ok=True)
            data_mod.write_png(record.pixels, os.path.join(directory, f"{record.label}_{index:05d}.png"))
        print(f"wrote {counters['edited']} edited + {counters['unedited']} unedited samples to {args.out}")
        return 0
    batch = dcgan.sample_images(gen, args.count, rng)
    for i in range(args.count):
        data_mod.write_png(batch.data[i], os.path.join(args.out, f"sample_{i:05d}.png"))
    print(f"wrote {args.count} samples to {args.out}")
    return 0


def cmd_gate(args) -> int:
    cascade = facegate.load_cascade(args.cascade)
    files = []
    for root, _, names in sorted(os.walk(args.images)):
        for name in sorted(names):
            if name.lower().endswith(data_mod.IMAGE_EXTENSIONS):
                files.append(os.path.join(root, name))
    if not files:
        raise UsageError(f"no images under {args.images}")
    batch = np.stack([data_mod.decode_and_normalize(f, resolution=None) for f in files])
    report = facegate.gate_report(
        cascade,
        batch,
        scale_factor=args.scale_factor,
        step=args.step,
        min_neighbors=args.min_neighbors,
    )
    lines = ["image,passed"]
    lines += [
        f"{os.path.relpath(path, args.images)},{str(ok).lower()}"
        for path, ok in zip(files, report.passed)
    ]
    lines.append(f"__summary__,pass_fraction={report.pass_fraction:.6f}")
    atomic_write_text(args.report, "\n".join(lines) + "\n")
    print(f"gate pass fraction: {report.pass_fraction:.4f} ({sum(report.passed)}/{len(files)})")
    return 0


def _load_generated_records(directory: str, resolution: int) -> list[data_mod.ImageRecord]:
    records = []
    for label in ("edited", "unedited"):
        subdir = os.path.join(directory, label)
        if not os.path.isdir(subdir):
            continue
        for path in data_mod.list_image_files(subdir):
            records.append(
                data_mod.ImageRecord(
                    pixels=data_mod.decode_and_normalize(path, resolution),
                    label=label,
                    provenance="generated",
                    source_tag=f"gan:{label}",
                    path=path,
                )
            )
    return records


def cmd_clf_train(args) -> int:
    config = load_config(args.config)
    clf_config = _classifier_config(config)
    resolution = clf_config.input_resolution

    generated_dir = os.path.join(args.data, _take(config, "generated_subdir", "generated"))
    real_manifest = os.path.join(args.data, _take(config, "real_manifest", "real/manifest.csv"))
    generated = _load_generated_records(generated_dir, resolution)
    if not generated:
        raise UsageError(f"no generated records under {generated_dir}")
    manifest = data_mod.load_manifest(real_manifest)
    real = data_mod.load_records_from_manifest(manifest, resolution)

    split = data_mod.split_dataset(
        generated + real,
        test_per_class=int(_take(config, "test_per_class", 333)),
        val_fraction=float(_take(config, "val_fraction", 0.2)),
        seed=args.seed if args.seed is not None else 0,
        mix_real_count=int(_take(config, "mix_real_count", 0)),
    )
    if args.split_out:
        data_mod.save_split(split, args.split_out)

    rng = make_rng(args.seed)
    model = clf_mod.build_classifier(clf_config, rng)
    model, curve = clf_mod.train_classifier(
        model,
        data_mod.records_to_arrays(split.train),
        data_mod.records_to_arrays(split.val if split.val else split.train),
        clf_config,
        rng,
    )
    clf_mod.save_classifier(model, args.out)
    if args.curve and len(curve):
        metrics.emit_curves(curve, args.curve)
    best = min((row[1] for row in curve.rows), default=float("nan"))
    print(
        f"trained classifier on {len(split.train)} records "
        f"(best val loss {best:.4f}) -> {args.out}"
    )
    return 0


def cmd_clf_eval(args) -> int:
    model = clf_mod.load_classifier(args.model)
    split = data_mod.load_split(args.test, model.config.input_resolution)
    if not split.test:
        raise UsageError(f"split {args.test} holds no test records")
    images, labels = data_mod.records_to_arrays(split.test)
    predictions = clf_mod.predict(model, images)
    report = metrics.compute_metrics(
        [label for _, label in predictions],
        labels,
        model_name=args.model_name,
        dataset_name=args.dataset_name,
    )
    metrics.save_report(report, args.report)
    precision = "n/a" if report.precision is None else f"{report.precision:.4f}"
    print(f"accuracy={report.accuracy:.4f} precision={precision} -> {args.report}")
    return 0


def cmd_report(args) -> int:
    reports = [metrics.load_report(path) for path in args.inputs]
    text = metrics.emit_table(reports, args.out)
    print(text, end="")
    return 0


# ---------------------------------------------------------------------------
# argument wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=PROG, description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    dataset = sub.add_parser("dataset", help="dataset stages").add_subparsers(
        dest="subcommand", required=True
    )
    build = dataset.add_parser("build", help="materialize a corpus or validate a manifest")
    build.add_argument("--config", help="key=value or JSON config file")
    build.add_argument("--out", default="corpus", help="output directory (blobs mode)")
    build.add_argument("--seed", type=int, default=0)
    build.set_defaults(func=cmd_dataset_build)

    gan = sub.add_parser("gan", help="GAN stages").add_subparsers(dest="subcommand", required=True)
    train = gan.add_parser("train", help="train a GAN on one labeled subset")
    train.add_argument("--config", help="key=value or JSON config file")
    train.add_argument("--data", required=True, help="source manifest CSV")
    train.add_argument("--out", required=True, help="checkpoint output path")
    train.add_argument("--curve", help="optional loss-curve CSV path")
    train.add_argument("--seed", type=int, default=0)
    train.set_defaults(func=cmd_gan_train)

    sample = gan.add_parser("sample", help="draw images from a trained GAN")
    sample.add_argument("--ckpt", required=True, help="generator checkpoint")
    sample.add_argument(
        "--ckpt-unedited",
        help="second checkpoint; emits a labeled edited/unedited dataset with mirrors",
    )
    sample.add_argument("--count", type=int, required=True)
    sample.add_argument("--out", required=True, help="output directory")
    sample.add_argument("--seed", type=int, default=0)
    sample.set_defaults(func=cmd_gan_sample)

    gate = sub.add_parser("gate", help="run the Haar-cascade face gate over a directory")
    gate.add_argument("--cascade", required=True, help="cascade JSON file")
    gate.add_argument("--images", required=True, help="image directory (recursive)")
    gate.add_argument("--report", required=True, help="per-image CSV output")
    gate.add_argument("--scale-factor", type=float, default=1.25)
    gate.add_argument("--step", type=int, default=1)
    gate.add_argument("--min-neighbors", type=int, default=1)
    gate.set_defaults(func=cmd_gate)

    clf = sub.add_parser("clf", help="classifier stages").add_subparsers(
        dest="subcommand", required=True
    )
    ctrain = clf.add_parser("train", help="train the binary classifier")
    ctrain.add_argument("--config", help="key=value or JSON config file")
    ctrain.add_argument("--data", required=True, help="directory with generated/ and real/")
    ctrain.add_argument("--out", required=True, help="model output path (.fgt)")
    ctrain.add_argument("--split-out", help="persist the dataset split as JSON")
    ctrain.add_argument("--curve", help="optional validation-curve CSV path")
    ctrain.add_argument("--seed", type=int, default=0)
    ctrain.set_defaults(func=cmd_clf_train)

    ceval = clf.add_parser("eval", help="evaluate a model on a persisted split")
    ceval.add_argument("--model", required=True, help="model file (.fgt)")
    ceval.add_argument("--test", required=True, help="split JSON with test records")
    ceval.add_argument("--report", default="metrics.json", help="metrics JSON output")
    ceval.add_argument("--model-name", default="ResNeXt-desk")
    ceval.add_argument("--dataset-name", default="real-holdout")
    ceval.set_defaults(func=cmd_clf_eval)

    report = sub.add_parser("report", help="combine metrics files into a text table")
    report.add_argument("--inputs", nargs="+", required=True, help="metrics JSON files")
    report.add_argument("--out", required=True, help="table output path")
    report.set_defaults(func=cmd_report)

    return parser


def cli_main(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"{PROG}: usage error: {exc}", file=sys.stderr)
        return 2
    except (ForgegateError, OSError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
