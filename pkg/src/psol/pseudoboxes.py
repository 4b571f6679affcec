"""Per-class pseudo bounding-box generation over a dataset split.

For each class the DDT path fits one principal direction on that class's
training feature maps, orients it so the positive side is the spatial
minority, then projects, upsamples, thresholds and boxes every target
image. Images whose heat map has no positive pixel fall back to the full
image: every training image needs a pseudo label and the full image is the
weakest unbiased guess.

Classes are independent units of work; with ``threads > 1`` they are
processed concurrently and the output is still ordered by
(class, image_id).
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import ddt
from .errors import ConfigError, DataError, FormatError, ValidationError
from .geometry import BoxXYWH, full_image_box, map_box_to_image
from .tensor_io import TRAIN, FeatureMap, ImageRecord, read_tensor_file

METHOD_DDT = "ddt"
METHOD_CAM = "cam"
SOURCE_FALLBACK = "fullimage-fallback"
SOURCES = (METHOD_DDT, METHOD_CAM, SOURCE_FALLBACK)


@dataclass(frozen=True)
class PseudoAnnotation:
    """A machine-generated box for one image, in original-image pixels."""

    image_id: str
    box: BoxXYWH
    source: str

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValidationError(
                f"{self.image_id}: unknown annotation source {self.source!r}"
            )


def _load_class_maps(path: str | Path, wanted_ids: set[str]) -> dict[str, FeatureMap]:
    maps = {}
    for fm in read_tensor_file(path, require_uniform_depth=True):
        if fm.image_id in wanted_ids:
            maps[fm.image_id] = fm
    missing = wanted_ids - maps.keys()
    if missing:
        raise DataError(
            f"{path}: missing feature maps for {len(missing)} image(s), "
            f"e.g. {sorted(missing)[:3]}"
        )
    return maps


def _annotate_class(
    class_label: int,
    records: Sequence[ImageRecord],
    feature_file: str | Path,
    method: str,
    classifier_weights: np.ndarray | None,
    stats_records: Sequence[ImageRecord],
    stats_file: str | Path,
) -> list[PseudoAnnotation]:
    target_ids = {r.image_id for r in records}
    maps = _load_class_maps(feature_file, target_ids)

    direction = None
    if method == METHOD_DDT:
        stats_ids = {r.image_id for r in stats_records}
        if Path(stats_file) == Path(feature_file) and stats_ids <= target_ids:
            stats_maps = {i: maps[i] for i in stats_ids}
        else:
            stats_maps = _load_class_maps(stats_file, stats_ids)
        acc = None
        for image_id in sorted(stats_maps):
            fm = stats_maps[image_id]
            if acc is None:
                acc = ddt.CovarianceAccumulator(d=fm.d)
            ddt.accumulate(acc, fm)
        if acc is None:
            raise DataError(f"class {class_label}: no images to fit DDT statistics on")
        direction = ddt.principal_direction(acc)
        direction = ddt.orient_to_minority(
            direction, (stats_maps[i] for i in sorted(stats_maps))
        )

    annotations = []
    for record in sorted(records, key=lambda r: r.image_id):
        fm = maps[record.image_id]
        if method == METHOD_DDT:
            hm = ddt.project_heatmap(fm, direction)
        else:
            hm = ddt.cam_heatmap(fm, classifier_weights, record.class_label)
        upsampled = ddt.upsample_bilinear(
            hm, record.net_input_size, record.net_input_size
        )
        box = ddt.extract_box(upsampled)
        if box is None:
            annotations.append(
                PseudoAnnotation(
                    image_id=record.image_id,
                    box=full_image_box(record.orig_width, record.orig_height),
                    source=SOURCE_FALLBACK,
                )
            )
        else:
            mapped = map_box_to_image(
                box, record.net_input_size, record.orig_width, record.orig_height
            )
            annotations.append(
                PseudoAnnotation(image_id=record.image_id, box=mapped, source=method)
            )
    return annotations


def generate_pseudo_boxes(
    manifest: Sequence[ImageRecord],
    feature_files: Mapping[int, str | Path],
    method: str = METHOD_DDT,
    classifier_weights: np.ndarray | None = None,
    *,
    split: str = TRAIN,
    stats_feature_files: Mapping[int, str | Path] | None = None,
    threads: int = 1,
) -> list[PseudoAnnotation]:
    """Produce exactly one annotation per manifest image of ``split``.

    ``feature_files`` maps class label -> tensor file for the split being
    annotated. For the DDT method the statistics are always fit on the
    train split: when annotating the train split itself the same files
    serve both roles, otherwise pass the train files via
    ``stats_feature_files``.
    """
    if method not in (METHOD_DDT, METHOD_CAM):
        raise ConfigError(f"unknown pseudo-box method {method!r}")
    if method == METHOD_CAM and classifier_weights is None:
        raise ConfigError("method 'cam' requires classifier weights")

    targets = [r for r in manifest if r.split == split]
    if not targets:
        raise DataError(f"manifest has no images in split {split!r}")
    by_class: dict[int, list[ImageRecord]] = {}
    for r in targets:
        by_class.setdefault(r.class_label, []).append(r)

    stats_by_class: dict[int, list[ImageRecord]] = {}
    if method == METHOD_DDT:
        if stats_feature_files is None:
            if split != TRAIN:
                raise ConfigError(
                    "DDT statistics are fit on the train split: pass "
                    "stats_feature_files when annotating another split"
                )
            stats_feature_files = feature_files
        for r in manifest:
            if r.split == TRAIN:
                stats_by_class.setdefault(r.class_label, []).append(r)

    jobs = []
    for class_label in sorted(by_class):
        if class_label not in feature_files:
            raise DataError(f"no feature file for class {class_label}")
        if method == METHOD_DDT:
            if not stats_by_class.get(class_label):
                raise DataError(
                    f"class {class_label}: no train images to fit DDT statistics on"
                )
            if class_label not in stats_feature_files:
                raise DataError(f"no train feature file for class {class_label}")
            stats_records = stats_by_class[class_label]
            stats_file = stats_feature_files[class_label]
        else:
            stats_records = []
            stats_file = feature_files[class_label]
        jobs.append(
            (
                class_label,
                by_class[class_label],
                feature_files[class_label],
                method,
                classifier_weights,
                stats_records,
                stats_file,
            )
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_class = list(pool.map(lambda args: _annotate_class(*args), jobs))
    else:
        per_class = [_annotate_class(*args) for args in jobs]

    annotations = [ann for chunk in per_class for ann in chunk]
    assert len(annotations) == len(targets)
    return annotations


def write_pseudo_annotations(
    annotations: Sequence[PseudoAnnotation], path: str | Path
) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for ann in annotations:
            f.write(
                json.dumps(
                    {
                        "image_id": ann.image_id,
                        "box": ann.box.as_dict(),
                        "source": ann.source,
                    }
                )
                + "\n"
            )


def read_pseudo_annotations(
    path: str | Path, manifest: Sequence[ImageRecord] | None = None
) -> list[PseudoAnnotation]:
    """Load annotations; with a manifest, cross-check ids and image bounds."""
    records = {r.image_id: r for r in manifest} if manifest is not None else None
    annotations = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
            try:
                box = obj["box"]
                ann = PseudoAnnotation(
                    image_id=str(obj["image_id"]),
                    box=BoxXYWH(
                        x=float(box["x"]),
                        y=float(box["y"]),
                        w=float(box["w"]),
                        h=float(box["h"]),
                    ),
                    source=str(obj["source"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ValidationError(f"{path}: line {lineno}: {exc}") from exc
            if ann.image_id in seen:
                raise ValidationError(
                    f"{path}: line {lineno}: duplicate image_id {ann.image_id!r}"
                )
            seen.add(ann.image_id)
            if records is not None:
                record = records.get(ann.image_id)
                if record is None:
                    raise DataError(
                        f"{path}: line {lineno}: image_id {ann.image_id!r} "
                        f"not present in the manifest"
                    )
                if (
                    ann.box.x + ann.box.w > record.orig_width
                    or ann.box.y + ann.box.h > record.orig_height
                ):
                    raise ValidationError(
                        f"{path}: line {lineno}: box exceeds image bounds "
                        f"{record.orig_width}x{record.orig_height}"
                    )
            annotations.append(ann)
    return annotations
