"""Extraction job description and the input listing format.

The listing is JSON-lines, one image per line:

    {"image_id": "...", "class_label": 3, "split": "train",
     "path": "birds/img_0001.jpg",          # optional, default image_id
     "gt_box": {"x":..,"y":..,"w":..,"h":..}}  # optional, original pixels

Paths are relative to the job's image root. The exporter measures each
image's original dimensions itself and emits the pipeline manifest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

from psol.errors import ConfigError, FormatError, ValidationError
from psol.geometry import BoxXYWH
from psol.tensor_io import SPLITS


@dataclass(frozen=True)
class ListedImage:
    image_id: str
    class_label: int
    split: str
    path: str
    gt_box: BoxXYWH | None = None


@dataclass
class ExtractJob:
    image_root: Path
    listing: Path
    output_dir: Path
    backbone: str = "vgg16"
    pretrained: bool = True
    ddt_input_size: int = 448
    cls_resize: int = 256
    cls_input_size: int = 224
    batch_size: int = 16
    device: str = "cpu"

    def __post_init__(self):
        for name in ("ddt_input_size", "cls_resize", "cls_input_size", "batch_size"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be positive")
        if self.cls_resize < self.cls_input_size:
            raise ValidationError(
                f"cls_resize {self.cls_resize} smaller than crop {self.cls_input_size}"
            )


def load_job(path: str | Path) -> ExtractJob:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such job file: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    known = {f.name for f in fields(ExtractJob)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{path}: unknown job key(s): {sorted(unknown)}")
    for required in ("image_root", "listing", "output_dir"):
        if required not in raw:
            raise ConfigError(f"{path}: missing job key {required!r}")
    base = path.parent
    for name in ("image_root", "listing", "output_dir"):
        raw[name] = (base / raw[name]).resolve()
    try:
        return ExtractJob(**raw)
    except (TypeError, ValidationError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_listing(path: str | Path) -> list[ListedImage]:
    images: list[ListedImage] = []
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
                gt_box = None
                if obj.get("gt_box") is not None:
                    b = obj["gt_box"]
                    gt_box = BoxXYWH(
                        x=float(b["x"]), y=float(b["y"]),
                        w=float(b["w"]), h=float(b["h"]),
                    )
                image = ListedImage(
                    image_id=str(obj["image_id"]),
                    class_label=int(obj["class_label"]),
                    split=str(obj["split"]),
                    path=str(obj.get("path", obj["image_id"])),
                    gt_box=gt_box,
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ValidationError(f"{path}: line {lineno}: {exc}") from exc
            if image.split not in SPLITS:
                raise ValidationError(
                    f"{path}: line {lineno}: split must be one of {SPLITS}"
                )
            if image.class_label < 0:
                raise ValidationError(f"{path}: line {lineno}: negative class label")
            if image.image_id in seen:
                raise ValidationError(
                    f"{path}: line {lineno}: duplicate image_id {image.image_id!r}"
                )
            seen.add(image.image_id)
            images.append(image)
    if not images:
        raise ValidationError(f"{path}: empty listing")
    return images
