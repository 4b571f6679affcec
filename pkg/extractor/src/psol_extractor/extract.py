"""Run a backbone over a listed image set and write the pipeline's files.

Per split: one tensor file of last-conv feature maps per class (DDT
resolution, square resize), pooled vectors and classifier scores at the
classification resolution (resize shorter side, center crop), plus the
manifest with measured original dimensions. Undecodable images are
skipped and logged; everything else is deterministic given fixed weights.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from psol.errors import DataError
from psol.tensor_io import (
    SPLITS,
    TEST,
    TRAIN,
    FeatureMap,
    ImageRecord,
    class_file_name,
    write_classifier_weights,
    write_manifest,
    write_pooled_features,
    write_scores,
    write_tensor_file,
)

from .backbones import IMAGENET_MEAN, IMAGENET_STD, build_backbone
from .jobs import ExtractJob, ListedImage, load_listing

log = logging.getLogger(__name__)


@dataclass
class ExtractResult:
    output_dir: Path
    manifest: Path
    config: Path
    grid_size: int
    stride: int
    n_exported: int
    skipped: list[str]


def _to_tensor(image: Image.Image) -> torch.Tensor:
    arr = np.asarray(image, dtype=np.float32) / 255.0
    t = torch.from_numpy(arr).permute(2, 0, 1)
    mean = torch.tensor(IMAGENET_MEAN).view(3, 1, 1)
    std = torch.tensor(IMAGENET_STD).view(3, 1, 1)
    return (t - mean) / std


def _ddt_input(image: Image.Image, size: int) -> torch.Tensor:
    return _to_tensor(image.resize((size, size), Image.BILINEAR))


def _cls_input(image: Image.Image, resize: int, crop: int) -> torch.Tensor:
    w, h = image.size
    if w <= h:
        scaled = image.resize((resize, max(1, round(h * resize / w))), Image.BILINEAR)
    else:
        scaled = image.resize((max(1, round(w * resize / h)), resize), Image.BILINEAR)
    sw, sh = scaled.size
    left = (sw - crop) // 2
    top = (sh - crop) // 2
    return _to_tensor(scaled.crop((left, top, left + crop, top + crop)))


def extract_features(job: ExtractJob) -> ExtractResult:
    device = torch.device(job.device)
    backbone = build_backbone(job.backbone, job.pretrained)
    backbone.spatial.to(device)
    listing = load_listing(job.listing)

    out_root = Path(job.output_dir)
    feature_dirs = {s: out_root / "features" / s for s in SPLITS}
    for directory in feature_dirs.values():
        directory.mkdir(parents=True, exist_ok=True)

    # decode everything up front so skips are known before any file is cut;
    # a listed file that does not exist is a listing/dataset mismatch and
    # aborts, corrupt image bytes merely skip that image
    decoded: list[tuple[ListedImage, Image.Image]] = []
    skipped: list[str] = []
    for item in listing:
        path = Path(job.image_root) / item.path
        if not path.is_file():
            raise DataError(
                f"listing id {item.image_id!r} has no matching file at {path}"
            )
        try:
            with Image.open(path) as img:
                decoded.append((item, img.convert("RGB")))
        except (OSError, ValueError) as exc:
            log.warning("skipping undecodable image %s (%s): %s", item.image_id, path, exc)
            skipped.append(item.image_id)
    if not decoded:
        raise DataError("no decodable images in the listing")

    records: list[ImageRecord] = []
    pooled: dict[str, dict[str, np.ndarray]] = {s: {} for s in SPLITS}
    scores: dict[str, dict[str, np.ndarray]] = {s: {} for s in SPLITS}
    grid_size: int | None = None

    by_group: dict[tuple[str, int], list[tuple[ListedImage, Image.Image]]] = {}
    for item, img in decoded:
        by_group.setdefault((item.split, item.class_label), []).append((item, img))

    with torch.no_grad():
        for (split, label), members in sorted(by_group.items()):
            members.sort(key=lambda pair: pair[0].image_id)
            maps: list[FeatureMap] = []
            for start in range(0, len(members), job.batch_size):
                chunk = members[start : start + job.batch_size]
                ddt_batch = torch.stack(
                    [_ddt_input(img, job.ddt_input_size) for _, img in chunk]
                ).to(device)
                feats = backbone.spatial(ddt_batch)
                if feats.shape[2] != feats.shape[3]:
                    raise DataError(
                        f"backbone produced a non-square grid {tuple(feats.shape)}"
                    )
                if grid_size is None:
                    grid_size = int(feats.shape[2])
                elif int(feats.shape[2]) != grid_size:
                    raise DataError("grid size changed between batches")
                values = feats.permute(0, 2, 3, 1).cpu().numpy().astype(np.float32)

                cls_batch = torch.stack(
                    [
                        _cls_input(img, job.cls_resize, job.cls_input_size)
                        for _, img in chunk
                    ]
                ).to(device)
                cls_feats = backbone.spatial(cls_batch)
                pooled_batch, logits = backbone.head(cls_feats)
                pooled_np = pooled_batch.cpu().numpy().astype(np.float32)
                logits_np = logits.cpu().numpy().astype(np.float64)

                for i, (item, img) in enumerate(chunk):
                    maps.append(FeatureMap(item.image_id, values[i]))
                    pooled[split][item.image_id] = pooled_np[i]
                    scores[split][item.image_id] = logits_np[i]
                    records.append(
                        ImageRecord(
                            image_id=item.image_id,
                            class_label=item.class_label,
                            orig_width=img.size[0],
                            orig_height=img.size[1],
                            net_input_size=job.ddt_input_size,
                            split=split,
                            gt_box=item.gt_box,
                        )
                    )
            write_tensor_file(maps, feature_dirs[split] / class_file_name(label))

    records.sort(key=lambda r: r.image_id)
    manifest_path = out_root / "manifest.jsonl"
    write_manifest(records, manifest_path)
    for split in SPLITS:
        if pooled[split]:
            write_pooled_features(pooled[split], out_root / f"pooled_{split}.tnsr")
            write_scores(scores[split], out_root / f"scores_{split}.jsonl")

    weights_path = None
    if backbone.classifier_weights is not None:
        weights_path = out_root / "classifier_weights.tnsr"
        write_classifier_weights(backbone.classifier_weights, weights_path)

    stride = job.ddt_input_size // grid_size
    meta = {
        "backbone": backbone.name,
        "pretrained": job.pretrained,
        "ddt_input_size": job.ddt_input_size,
        "cls_resize": job.cls_resize,
        "cls_input_size": job.cls_input_size,
        "grid_size": grid_size,
        "stride": stride,
        "n_exported": len(records),
        "skipped": skipped,
    }
    with open(out_root / "export_meta.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")

    config_path = out_root / "config.json"
    config = {
        "manifest": "manifest.jsonl",
        "features_train_dir": f"features/{TRAIN}",
        "features_test_dir": f"features/{TEST}",
        "output_dir": "out",
        "method": "ddt",
    }
    if pooled[TRAIN]:
        config["pooled_train"] = f"pooled_{TRAIN}.tnsr"
    if pooled[TEST]:
        config["pooled_test"] = f"pooled_{TEST}.tnsr"
        config["scores"] = f"scores_{TEST}.jsonl"
    if weights_path is not None:
        config["classifier_weights"] = weights_path.name
    with open(config_path, "w", encoding="utf-8") as f:
        json.dump(config, f, indent=2, sort_keys=True)
        f.write("\n")

    return ExtractResult(
        output_dir=out_root,
        manifest=manifest_path,
        config=config_path,
        grid_size=grid_size,
        stride=stride,
        n_exported=len(records),
        skipped=skipped,
    )
