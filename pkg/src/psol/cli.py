"""Command-line front end wiring the pipeline end to end.

Every command reads one JSON config (flags override fields), writes its
results as files under the configured output directory, and is idempotent
for fixed inputs and seed. Exit codes: 0 ok, 1 config error, 2 data error,
3 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__, boxreg, evaluation, pseudoboxes
from .config import RunConfig, load_run_config
from .errors import ConfigError, DataError
from .tensor_io import (
    TEST,
    TRAIN,
    discover_class_files,
    load_manifest,
    load_scores,
    read_classifier_weights,
    read_pooled_features,
    write_scores,
)

_TRAIN_FLAGS = (
    "lr",
    "momentum",
    "weight_decay",
    "batch_size",
    "epochs",
    "lr_policy",
    "lr_step_every",
    "seed",
    "hidden_width",
    "lr_multiplier",
)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--weight-decay", type=float, dest="weight_decay")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr-policy", choices=[boxreg.LR_FIXED, boxreg.LR_STEP], dest="lr_policy")
    p.add_argument("--lr-step-every", type=int, dest="lr_step_every")
    p.add_argument("--seed", type=int)
    p.add_argument("--hidden-width", type=int, dest="hidden_width")
    p.add_argument("--lr-multiplier", type=float, dest="lr_multiplier")


def _load_config(args) -> RunConfig:
    overrides: dict = {}
    train_overrides = {
        name: getattr(args, name)
        for name in _TRAIN_FLAGS
        if getattr(args, name, None) is not None
    }
    if train_overrides:
        overrides["train"] = train_overrides
    for name in ("method", "threads", "joint_lambda"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return load_run_config(args.config, overrides)


def _features_for_split(cfg: RunConfig, split: str):
    field = "features_train_dir" if split == TRAIN else "features_test_dir"
    return discover_class_files(cfg.require(field, is_dir=True))


def _pooled_for_split(cfg: RunConfig, split: str):
    field = "pooled_train" if split == TRAIN else "pooled_test"
    return read_pooled_features(cfg.require(field))


def _train_labels(manifest) -> dict[str, int]:
    return {r.image_id: r.class_label for r in manifest if r.split == TRAIN}


def _n_classes(manifest) -> int:
    return max(r.class_label for r in manifest) + 1


def _schedule_for(cfg: RunConfig, task: str) -> boxreg.TrainConfig:
    """Regression on noisy boxes keeps the learning rate fixed; pure
    classification steps it down, unless the config says otherwise."""
    tc = cfg.train
    if "lr_policy" in cfg.explicit_train_keys:
        return tc
    return replace(tc, lr_policy=boxreg.LR_STEP if task == "cls" else boxreg.LR_FIXED)


def _out_path(explicit, default: Path) -> Path:
    path = Path(explicit) if explicit else default
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def cmd_generate_boxes(args) -> int:
    cfg = _load_config(args)
    manifest = load_manifest(cfg.require("manifest"))
    split = args.split
    feature_files = _features_for_split(cfg, split)
    stats_files = None
    if cfg.method == pseudoboxes.METHOD_DDT and split != TRAIN:
        stats_files = _features_for_split(cfg, TRAIN)
    weights = None
    if cfg.method == pseudoboxes.METHOD_CAM:
        weights = read_classifier_weights(cfg.require("classifier_weights"))
    annotations = pseudoboxes.generate_pseudo_boxes(
        manifest,
        feature_files,
        method=cfg.method,
        classifier_weights=weights,
        split=split,
        stats_feature_files=stats_files,
        threads=cfg.threads,
    )
    out_dir = cfg.resolved_output_dir()
    suffix = "" if split == TRAIN else f"_{split}"
    out_path = _out_path(args.out, out_dir / f"pseudo_boxes{suffix}.jsonl")
    pseudoboxes.write_pseudo_annotations(annotations, out_path)
    fallback = sum(a.source == pseudoboxes.SOURCE_FALLBACK for a in annotations)
    summary = {
        "method": cfg.method,
        "split": split,
        "count": len(annotations),
        "fallback_count": fallback,
        "fallback_rate": fallback / len(annotations),
        "annotations": str(out_path),
    }
    summary_path = out_path.with_name(out_path.stem + "_summary.json")
    with open(summary_path, "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    print(
        f"wrote {len(annotations)} pseudo boxes to {out_path} "
        f"({fallback} full-image fallbacks)"
    )
    return 0


def cmd_train_reg(args) -> int:
    cfg = _load_config(args)
    manifest = load_manifest(cfg.require("manifest"))
    features = _pooled_for_split(cfg, TRAIN)
    ann_path = (
        Path(args.annotations)
        if args.annotations
        else cfg.resolved_output_dir() / "pseudo_boxes.jsonl"
    )
    if not ann_path.is_file():
        raise ConfigError(f"no pseudo-annotation file at {ann_path}; run generate-boxes")
    annotations = pseudoboxes.read_pseudo_annotations(ann_path, manifest)
    tc = _schedule_for(cfg, "reg")
    params, losses = boxreg.train_regressor(features, annotations, manifest, tc)
    out_dir = cfg.resolved_output_dir()
    ckpt = _out_path(args.out, out_dir / "regressor.tnsr")
    boxreg.save_checkpoint(ckpt, reg=params, cfg=tc)
    boxreg.write_loss_csv(
        ckpt.with_name(ckpt.stem + "_loss.csv"),
        [(e, TRAIN, loss) for e, loss in enumerate(losses)],
    )
    print(f"trained regression head for {tc.epochs} epochs -> {ckpt}")
    return 0


def cmd_train_cls(args) -> int:
    cfg = _load_config(args)
    manifest = load_manifest(cfg.require("manifest"))
    features = _pooled_for_split(cfg, TRAIN)
    tc = _schedule_for(cfg, "cls")
    params, losses = boxreg.train_classifier(
        features, _train_labels(manifest), tc, n_classes=_n_classes(manifest)
    )
    out_dir = cfg.resolved_output_dir()
    ckpt = _out_path(args.out, out_dir / "classifier.tnsr")
    boxreg.save_checkpoint(ckpt, cls=params, cfg=tc)
    boxreg.write_loss_csv(
        ckpt.with_name(ckpt.stem + "_loss.csv"),
        [(e, TRAIN, loss) for e, loss in enumerate(losses)],
    )
    print(f"trained classifier head for {tc.epochs} epochs -> {ckpt}")
    return 0


def cmd_train_joint(args) -> int:
    cfg = _load_config(args)
    manifest = load_manifest(cfg.require("manifest"))
    features = _pooled_for_split(cfg, TRAIN)
    ann_path = (
        Path(args.annotations)
        if args.annotations
        else cfg.resolved_output_dir() / "pseudo_boxes.jsonl"
    )
    if not ann_path.is_file():
        raise ConfigError(f"no pseudo-annotation file at {ann_path}; run generate-boxes")
    annotations = pseudoboxes.read_pseudo_annotations(ann_path, manifest)
    tc = _schedule_for(cfg, "cls")  # the joint loss includes classification
    reg_params, cls_params, log = boxreg.train_joint(
        features,
        _train_labels(manifest),
        annotations,
        manifest,
        tc,
        joint_lambda=cfg.joint_lambda,
        n_classes=_n_classes(manifest),
    )
    out_dir = cfg.resolved_output_dir()
    ckpt = _out_path(args.out, out_dir / "joint.tnsr")
    boxreg.save_checkpoint(
        ckpt, reg=reg_params, cls=cls_params, cfg=tc,
        extra={"joint_lambda": cfg.joint_lambda},
    )
    rows = []
    for epoch, entry in enumerate(log):
        rows.append((epoch, "train-total", entry["total"]))
        rows.append((epoch, "train-cls", entry["cls"]))
        rows.append((epoch, "train-reg", entry["reg"]))
    boxreg.write_loss_csv(ckpt.with_name(ckpt.stem + "_loss.csv"), rows)
    print(f"trained joint heads for {tc.epochs} epochs -> {ckpt}")
    return 0


def cmd_predict(args) -> int:
    cfg = _load_config(args)
    manifest = load_manifest(cfg.require("manifest"))
    split = args.split
    features = _pooled_for_split(cfg, split)
    kind, reg_params, cls_params, _ = boxreg.load_checkpoint(args.checkpoint)
    out_dir = cfg.resolved_output_dir()
    wrote = []
    if reg_params is not None:
        predicted = boxreg.predict_boxes(reg_params, features, manifest, split=split)
        out_path = _out_path(args.out, out_dir / f"predictions_{split}.jsonl")
        evaluation.write_predictions(predicted, out_path)
        wrote.append(str(out_path))
    if cls_params is not None:
        score_map = boxreg.predict_scores(cls_params, features, manifest, split=split)
        scores_path = out_dir / f"scores_pred_{split}.jsonl"
        write_scores(score_map, scores_path)
        wrote.append(str(scores_path))
    print(f"predicted with {kind} checkpoint -> {', '.join(wrote)}")
    return 0


def _write_report(report, out_dir: Path, prefix: str) -> None:
    with open(out_dir / f"{prefix}_report.json", "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    with open(out_dir / f"{prefix}_report.txt", "w", encoding="utf-8") as f:
        f.write(report.to_text_table())
    with open(out_dir / f"{prefix}_verdicts.csv", "w", encoding="utf-8") as f:
        f.write(report.verdicts_csv())


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    manifest = load_manifest(cfg.require("manifest"))
    split = args.split
    predictions = evaluation.read_predictions(args.predictions)
    scores = None
    scores_path = Path(args.scores) if args.scores else cfg.scores
    if scores_path is not None:
        if not Path(scores_path).is_file():
            raise ConfigError(f"no such scores file: {scores_path}")
        scores = load_scores(scores_path)
    report = evaluation.evaluate_run(predictions, scores, manifest, split=split)
    out_dir = cfg.resolved_output_dir()
    _write_report(report, out_dir, args.prefix)
    print(report.to_text_table(), end="")
    return 0


def cmd_transfer_eval(args) -> int:
    cfg = _load_config(args)
    manifest = load_manifest(cfg.require("manifest"))
    features = _pooled_for_split(cfg, args.split)
    _, reg_params, _, _ = boxreg.load_checkpoint(args.checkpoint)
    if reg_params is None:
        raise DataError(f"{args.checkpoint}: no regression head in checkpoint")
    depth = len(next(iter(features.values()))) if features else 0
    if depth != reg_params.d:
        raise DataError(
            f"feature depth {depth} does not match checkpoint depth "
            f"{reg_params.d} (different backbones?)"
        )
    report = evaluation.transfer_eval(reg_params, features, manifest, split=args.split)
    out_dir = cfg.resolved_output_dir()
    _write_report(report, out_dir, args.prefix)
    print(report.to_text_table(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="psol",
        description="pseudo-box generation, box regression, and localization metrics",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="run config JSON")
        p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("generate-boxes", help="emit pseudo bounding boxes per image")
    common(p)
    p.add_argument("--method", choices=["ddt", "cam"], default=None)
    p.add_argument("--split", choices=[TRAIN, TEST], default=TRAIN)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_generate_boxes)

    p = sub.add_parser("train-reg", help="train the box regression head")
    common(p)
    _add_train_flags(p)
    p.add_argument("--annotations", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train_reg)

    p = sub.add_parser("train-cls", help="train the classification head")
    common(p)
    _add_train_flags(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train_cls)

    p = sub.add_parser("train-joint", help="train both heads on a shared loss")
    common(p)
    _add_train_flags(p)
    p.add_argument("--joint-lambda", type=float, dest="joint_lambda", default=None)
    p.add_argument("--annotations", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train_joint)

    p = sub.add_parser("predict", help="predict boxes and/or scores from a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=[TRAIN, TEST], default=TEST)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    common(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--scores", default=None)
    p.add_argument("--split", choices=[TRAIN, TEST], default=TEST)
    p.add_argument("--prefix", default="eval")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser(
        "transfer-eval",
        help="GT-Known of a head trained on another dataset, no updates",
    )
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=[TRAIN, TEST], default=TEST)
    p.add_argument("--prefix", default="transfer")
    p.set_defaults(func=cmd_transfer_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - the CLI boundary
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
