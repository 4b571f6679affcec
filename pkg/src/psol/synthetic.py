"""Seeded synthetic datasets exercising the whole pipeline without images
or a backbone.

Feature maps: isotropic Gaussian noise everywhere, plus a per-class unit
direction added (scaled by ``shift``) at every position inside a planted
rectangle. The rectangle is the ground truth; per-class PCA recovers the
direction, the positive projections recover the rectangle.

Pooled vectors: a fixed global affine embedding of the planted box's
logit-space normalized coordinates, plus a per-class offset constructed
orthogonal to the embedding's column space, plus noise. The box stays
exactly linearly recoverable (projection onto the embedding subspace kills
the offsets), while the class is linearly separable, standing in for what
a real backbone's pooled features carry implicitly.

One generator drives everything in a fixed order, so a fixed seed
reproduces every output file byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .geometry import BoxXYWH
from .tensor_io import (
    TEST,
    TRAIN,
    FeatureMap,
    ImageRecord,
    class_file_name,
    write_manifest,
    write_pooled_features,
    write_scores,
    write_tensor_file,
)

_LOGIT_CLIP = 0.02  # normalized coords are clipped into [0.02, 0.98] before logit


@dataclass(frozen=True)
class PlantedBoxParams:
    """Rectangle geometry and signal strength for the synthetic maps.

    The default rectangle range keeps the object the spatial minority
    (mean area fraction ~0.27) while staying large enough that the
    inherent half-cell dilation of zero-threshold extraction costs little
    IoU."""

    min_cells: int = 11
    max_cells: int = 18
    shift: float = 10.0
    noise_sigma: float = 1.0
    pooled_noise_sigma: float = 0.05

    def __post_init__(self):
        if not 1 <= self.min_cells <= self.max_cells:
            raise ValidationError(
                f"bad rectangle size range [{self.min_cells}, {self.max_cells}]"
            )
        if self.shift <= 0 or self.noise_sigma <= 0:
            raise ValidationError("shift and noise_sigma must be positive")


@dataclass(frozen=True)
class FixturePaths:
    root: Path
    manifest: Path
    features_train_dir: Path
    features_test_dir: Path
    pooled_train: Path
    pooled_test: Path
    scores_test: Path
    meta: Path
    config: Path


def _logit(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, _LOGIT_CLIP, 1.0 - _LOGIT_CLIP)
    return np.log(t / (1.0 - t))


def make_synthetic_fixture(
    out_dir: str | Path,
    *,
    seed: int = 0,
    n_classes: int = 5,
    images_per_class: int = 200,
    depth: int = 64,
    grid: int = 28,
    net_input_size: int = 448,
    test_fraction: float = 0.2,
    box_params: PlantedBoxParams = PlantedBoxParams(),
    scores_top1_accuracy: float = 0.75,
    min_orig: int = 320,
    max_orig: int = 640,
    train_overrides: dict | None = None,
) -> FixturePaths:
    """Generate a full synthetic dataset under ``out_dir``.

    Writes per-class feature files for both splits, pooled vectors, a
    manifest with ground-truth boxes in original-image pixels, a test-split
    scores file with the requested top-1 accuracy, fixture metadata, and a
    ready-to-run pipeline config.
    """
    if box_params.max_cells > grid:
        raise ValidationError(
            f"max_cells {box_params.max_cells} exceeds grid size {grid}"
        )
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n_test = max(1, round(images_per_class * test_fraction))
    n_train = images_per_class - n_test
    if n_train < 1:
        raise ValidationError("every class needs at least one training image")

    root = Path(out_dir)
    train_dir = root / "features" / TRAIN
    test_dir = root / "features" / TEST
    train_dir.mkdir(parents=True, exist_ok=True)
    test_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    encode = rng.normal(size=(depth, 4)) * 0.5
    encode_bias = rng.normal(size=depth) * 0.5
    directions = np.empty((n_classes, depth))
    for c in range(n_classes):
        u = rng.normal(size=depth)
        directions[c] = u / np.linalg.norm(u)
    # class offsets for the pooled vectors, kept out of the box-encoding
    # subspace so they cannot disturb box recovery
    class_offsets = np.zeros((n_classes, depth))
    if depth > 4:
        basis, _ = np.linalg.qr(encode)
        for c in range(n_classes):
            raw = rng.normal(size=depth)
            raw -= basis @ (basis.T @ raw)
            class_offsets[c] = 2.0 * raw / np.linalg.norm(raw)

    records: list[ImageRecord] = []
    pooled: dict[str, dict[str, np.ndarray]] = {TRAIN: {}, TEST: {}}
    for c in range(n_classes):
        maps: dict[str, list[FeatureMap]] = {TRAIN: [], TEST: []}
        for i in range(images_per_class):
            image_id = f"c{c:03d}_i{i:04d}"
            split = TRAIN if i < n_train else TEST
            rw = int(rng.integers(box_params.min_cells, box_params.max_cells + 1))
            rh = int(rng.integers(box_params.min_cells, box_params.max_cells + 1))
            col0 = int(rng.integers(0, grid - rw + 1))
            row0 = int(rng.integers(0, grid - rh + 1))
            orig_w = int(rng.integers(min_orig, max_orig + 1))
            orig_h = int(rng.integers(min_orig, max_orig + 1))

            values = rng.standard_normal((grid, grid, depth)) * box_params.noise_sigma
            values[row0 : row0 + rh, col0 : col0 + rw, :] += (
                box_params.shift * directions[c]
            )
            maps[split].append(
                FeatureMap(image_id=image_id, values=values.astype(np.float32))
            )

            # corners first so x + w lands exactly on the image edge
            x0 = col0 * orig_w / grid
            x1 = (col0 + rw) * orig_w / grid
            y0 = row0 * orig_h / grid
            y1 = (row0 + rh) * orig_h / grid
            gt = BoxXYWH(x=x0, y=y0, w=x1 - x0, h=y1 - y0)
            records.append(
                ImageRecord(
                    image_id=image_id,
                    class_label=c,
                    orig_width=orig_w,
                    orig_height=orig_h,
                    net_input_size=net_input_size,
                    split=split,
                    gt_box=gt,
                )
            )

            t = np.array([col0 / grid, row0 / grid, rw / grid, rh / grid])
            v = encode @ _logit(t) + encode_bias + class_offsets[c]
            v += rng.normal(size=depth) * box_params.pooled_noise_sigma
            pooled[split][image_id] = v.astype(np.float32)

        write_tensor_file(maps[TRAIN], train_dir / class_file_name(c))
        write_tensor_file(maps[TEST], test_dir / class_file_name(c))

    manifest_path = root / "manifest.jsonl"
    write_manifest(records, manifest_path)
    pooled_train_path = root / "pooled_train.tnsr"
    pooled_test_path = root / "pooled_test.tnsr"
    write_pooled_features(pooled[TRAIN], pooled_train_path)
    write_pooled_features(pooled[TEST], pooled_test_path)

    scores: dict[str, np.ndarray] = {}
    for r in records:
        if r.split != TEST:
            continue
        vec = rng.normal(size=n_classes) * 0.1
        correct = bool(rng.random() < scores_top1_accuracy)
        if correct or n_classes == 1:
            vec[r.class_label] += 5.0
        else:
            offset = 1 + int(rng.integers(0, n_classes - 1))
            vec[(r.class_label + offset) % n_classes] += 5.0
        scores[r.image_id] = vec
    scores_path = root / "scores_test.jsonl"
    write_scores(scores, scores_path)

    meta_path = root / "fixture.json"
    with open(meta_path, "w", encoding="utf-8") as f:
        json.dump(
            {
                "seed": seed,
                "n_classes": n_classes,
                "images_per_class": images_per_class,
                "n_train_per_class": n_train,
                "depth": depth,
                "grid": grid,
                "net_input_size": net_input_size,
                "box_params": asdict(box_params),
                "scores_top1_accuracy": scores_top1_accuracy,
                "directions": directions.tolist(),
            },
            f,
            indent=2,
            sort_keys=True,
        )
        f.write("\n")

    # lr_policy is left to the per-command defaults: fixed for regression
    # on noisy boxes, step decay for classification
    train_cfg = {
        "lr": 0.001,
        "momentum": 0.9,
        "weight_decay": 0.0005,
        "batch_size": 64,
        "epochs": 200,
        "seed": 0,
        "hidden_width": 512,
    }
    if train_overrides:
        train_cfg.update(train_overrides)
    config_path = root / "config.json"
    with open(config_path, "w", encoding="utf-8") as f:
        json.dump(
            {
                "manifest": "manifest.jsonl",
                "output_dir": "out",
                "features_train_dir": "features/train",
                "features_test_dir": "features/test",
                "pooled_train": "pooled_train.tnsr",
                "pooled_test": "pooled_test.tnsr",
                "scores": "scores_test.jsonl",
                "method": "ddt",
                "train": train_cfg,
            },
            f,
            indent=2,
            sort_keys=True,
        )
        f.write("\n")

    return FixturePaths(
        root=root,
        manifest=manifest_path,
        features_train_dir=train_dir,
        features_test_dir=test_dir,
        pooled_train=pooled_train_path,
        pooled_test=pooled_test_path,
        scores_test=scores_path,
        meta=meta_path,
        config=config_path,
    )
