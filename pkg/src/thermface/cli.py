"""
Batch command-line interface.

Exit status: 0 on success, 1 for input or validation errors, 2 for
numerical failures (diverged training, degenerate radius).
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import evaluation
from .config import CONFIG_ENV, VARIANTS, PipelineConfig, apply_overrides, load_config
from .classifier import rank_scores
from .errors import InputError, InvalidK, NumericalFailure, ThermfaceError, WriteFailure
from .imaging import atomic_write_bytes, generate_corpus, load_image, load_manifest, save_image
from .modelfile import ModelFile, load_model, save_model


def _floats(text: str) -> list:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _config(args) -> PipelineConfig:
    path = args.config or os.environ.get(CONFIG_ENV)
    cfg = load_config(path)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = str(args.seed)
    if getattr(args, "variant", None) is not None:
        overrides["eval.variant"] = args.variant
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise InputError(f"--set expects key=value, got {item!r}")
        overrides[key.strip()] = value
    return apply_overrides(cfg, overrides)


def _prepared_manifest(path, cfg: PipelineConfig):
    manifest = load_manifest(path)
    return evaluation.assign_folds(manifest, cfg.eval.fold_sizes, cfg.seed)


# ---------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------
def cmd_transform(args) -> int:
    cfg = _config(args)
    out_dir = Path(args.output_dir) if args.output_dir else None
    if out_dir is not None:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise WriteFailure(f"{out_dir}: {exc.strerror or exc}") from None
    bank = None
    if cfg.eval.variant in ("line_skeletal", "polar_line_skeletal"):
        bank = evaluation.resolve_bank(cfg)
    failures = 0
    for src in args.inputs:
        src = Path(src)
        dest = (out_dir or src.parent) / f"{src.stem}.{cfg.eval.variant}.pgm"
        try:
            out = evaluation.transform_image(load_image(src), cfg.eval.variant, cfg, bank)
            save_image(out, dest)
        except ThermfaceError as exc:
            failures += 1
            print(f"{src}: error: {exc}", file=sys.stderr, flush=True)
            continue
        print(f"{src} -> {dest} ({out.shape[1]}x{out.shape[0]})", flush=True)
    return 1 if failures else 0


def _train_entries(manifest, cfg: PipelineConfig):
    exclude = cfg.eval.train_exclude_fold
    if exclude is None or not manifest.has_folds:
        return list(manifest.entries)
    return [e for e in manifest.entries if e.fold != exclude]


def cmd_train(args) -> int:
    cfg = _config(args)
    manifest = load_manifest(args.manifest)
    entries = _train_entries(manifest, cfg)
    pipeline = evaluation.make_pipeline(cfg.eval.variant, cfg)
    vectors = np.array([pipeline(load_image(manifest.resolve(e))) for e in entries])
    labels = [e.subject for e in entries]
    model = evaluation.fit_model(vectors, labels, manifest.num_subjects, cfg)
    bank = evaluation.resolve_bank(cfg)
    save_model(ModelFile(cfg, bank, model), args.output)
    final = model.history[-1] if model.history else float("nan")
    print(
        f"trained on {len(entries)} images, {manifest.num_subjects} classes, "
        f"k={model.eigenspace.k}: {len(model.history)} epochs, final loss {final:.6g}"
    )
    print(f"model written to {args.output}")
    return 0


def cmd_identify(args) -> int:
    mf = load_model(args.model)
    model = mf.model
    if not 1 <= args.k <= len(model.labels):
        raise InvalidK(f"k={args.k} outside 1..{len(model.labels)}")
    pipeline = evaluation.make_pipeline(model.variant, mf.config, mf.bank)
    failures = 0
    for path in args.images:
        try:
            scores = model.scores(pipeline(load_image(path)))[0]
        except InputError as exc:
            failures += 1
            print(f"{path}: error: {exc}", file=sys.stderr, flush=True)
            continue
        ranked = rank_scores(scores)[: args.k]
        picks = "  ".join(
            f"{rank}. {model.labels[c]} ({scores[c]:+.4f})" for rank, c in enumerate(ranked, start=1)
        )
        print(f"{path}: {picks}", flush=True)
    return 1 if failures else 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    manifest = _prepared_manifest(args.manifest, cfg)
    if args.all_variants:
        reports = evaluation.compare_transforms(manifest, cfg)
    else:
        reports = [evaluation.run_cross_validation(manifest, cfg.eval.variant, cfg)]
    out_dir = Path(args.output_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise WriteFailure(f"{out_dir}: {exc.strerror or exc}") from None
    atomic_write_bytes(out_dir / "report.csv", evaluation.report_csv(reports).encode())
    for rep in reports:
        atomic_write_bytes(out_dir / f"confusion_{rep.variant}.csv", evaluation.confusion_csv(rep).encode())
    summary = evaluation.summary_text(reports)
    atomic_write_bytes(out_dir / "summary.txt", summary.encode())
    print(summary)
    return 0


def cmd_synth(args) -> int:
    cfg = _config(args)
    manifest = generate_corpus(
        args.output_dir,
        args.subjects,
        args.per_subject,
        args.rotations,
        args.scales,
        args.size or cfg.synth_size,
        cfg.seed,
    )
    print(f"wrote {len(manifest)} images and manifest.csv to {args.output_dir}")
    return 0


# ---------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"key=value config file (default: ${CONFIG_ENV})")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    seeded = argparse.ArgumentParser(add_help=False)
    seeded.add_argument("--seed", type=int, help="global random seed")
    variant = argparse.ArgumentParser(add_help=False)
    variant.add_argument("--variant", choices=VARIANTS, help="transform variant")

    parser = argparse.ArgumentParser(prog="thermface", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", parents=[common, variant], help="write transformed images as PGM")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--output-dir", "-o")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("train", parents=[common, seeded, variant], help="fit eigenspace and MLP")
    p.add_argument("manifest")
    p.add_argument("--output", "-o", required=True, help="model file to write")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("identify", help="rank classes for images")
    p.add_argument("model")
    p.add_argument("images", nargs="+")
    p.add_argument("-k", type=int, default=3, help="number of ranked labels (default 3)")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("eval", parents=[common, seeded, variant], help="3-fold cross-validation")
    p.add_argument("manifest")
    p.add_argument("--output-dir", "-o", required=True)
    p.add_argument("--all-variants", action="store_true", help="compare all four transforms")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", parents=[common, seeded], help="generate a synthetic corpus")
    p.add_argument("--subjects", type=int, default=4)
    p.add_argument("--per-subject", type=int, default=10)
    p.add_argument("--rotations", type=_floats, default=[0.0, 15.0, -15.0, 45.0, -45.0])
    p.add_argument("--scales", type=_floats, default=[1.0])
    p.add_argument("--size", type=int)
    p.add_argument("--output-dir", "-o", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ThermfaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
