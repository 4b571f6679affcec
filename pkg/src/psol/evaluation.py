"""IoU and the localization metrics, plus run-level evaluation.

GT-Known counts a prediction correct when IoU with the ground truth box is
50% or more (>=, not >). Top-1 additionally requires the ground-truth
class to be the top classification result, Top-5 requires it within the
top five; with one predicted box per image Top-5 reduces to exactly that.
Score ties rank the lowest class index first, so on every report

    top1_loc <= top5_loc <= gt_known_loc.

IoU uses continuous box geometry (boxes carry float coordinates after
rescaling), which coincides with pixel counting on integer boxes.

Images without a ground-truth box are excluded from every denominator and
reported as skipped: validation-side annotation gaps must not silently
skew the metrics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .boxreg import RegressorParams, predict_boxes
from .errors import DataError, FormatError, ValidationError
from .geometry import BoxXYWH
from .tensor_io import TEST, ImageRecord

IOU_THRESHOLD = 0.5
TOP_K = 5


@dataclass(frozen=True)
class PredictionRecord:
    """One predicted box, in original-image pixels."""

    image_id: str
    box: BoxXYWH


@dataclass(frozen=True)
class ImageVerdict:
    image_id: str
    iou: float
    cls_rank_of_gt: int | None  # 1-based; None when no scores were given
    gt_known: bool
    top1: bool | None
    top5: bool | None


@dataclass(frozen=True)
class EvalReport:
    n_evaluated: int
    n_skipped_no_gt: int
    gt_known_loc: float
    top1_loc: float | None
    top5_loc: float | None
    top1_cls: float | None
    top5_cls: float | None
    verdicts: tuple[ImageVerdict, ...]

    def __post_init__(self):
        if self.top1_loc is not None:
            if not (0.0 <= self.top1_loc <= self.top5_loc <= self.gt_known_loc <= 1.0):
                raise ValidationError(
                    f"metric chain violated: top1={self.top1_loc} "
                    f"top5={self.top5_loc} gt_known={self.gt_known_loc}"
                )

    def to_dict(self) -> dict:
        return {
            "n_evaluated": self.n_evaluated,
            "n_skipped_no_gt": self.n_skipped_no_gt,
            "gt_known_loc": self.gt_known_loc,
            "top1_loc": self.top1_loc,
            "top5_loc": self.top5_loc,
            "top1_cls": self.top1_cls,
            "top5_cls": self.top5_cls,
        }

    def to_text_table(self) -> str:
        def fmt(v):
            return "-" if v is None else f"{v:.4f}"

        rows = [
            ("images evaluated", str(self.n_evaluated)),
            ("skipped (no gt box)", str(self.n_skipped_no_gt)),
            ("GT-Known Loc", fmt(self.gt_known_loc)),
            ("Top-1 Loc", fmt(self.top1_loc)),
            ("Top-5 Loc", fmt(self.top5_loc)),
            ("Top-1 Cls", fmt(self.top1_cls)),
            ("Top-5 Cls", fmt(self.top5_cls)),
        ]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows) + "\n"

    def verdicts_csv(self) -> str:
        def flag(v):
            return "" if v is None else str(int(v))

        lines = ["image_id,iou,cls_rank_of_gt,gt_known,top1,top5"]
        for v in self.verdicts:
            rank = "" if v.cls_rank_of_gt is None else str(v.cls_rank_of_gt)
            lines.append(
                f"{v.image_id},{v.iou!r},{rank},{int(v.gt_known)},"
                f"{flag(v.top1)},{flag(v.top5)}"
            )
        return "\n".join(lines) + "\n"


def iou(a: BoxXYWH, b: BoxXYWH) -> float:
    """Intersection over union of two boxes, continuous geometry."""
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union


def gt_known(pred_box: BoxXYWH, gt_box: BoxXYWH) -> bool:
    """IoU of 50% or more counts as a correct localization."""
    return iou(pred_box, gt_box) >= IOU_THRESHOLD


def rank_of_label(scores: np.ndarray, label: int) -> int:
    """1-based rank of ``label`` in the score ordering; ties rank the
    lowest class index first."""
    scores = np.asarray(scores, dtype=np.float64)
    if not 0 <= label < scores.size:
        raise ValidationError(f"label {label} out of range for {scores.size} classes")
    s = scores[label]
    better = int(np.count_nonzero(scores > s))
    tied_before = int(np.count_nonzero(scores[:label] == s))
    return 1 + better + tied_before


def top1_correct(
    scores: np.ndarray, gt_label: int, pred_box: BoxXYWH, gt_box: BoxXYWH
) -> bool:
    return rank_of_label(scores, gt_label) == 1 and gt_known(pred_box, gt_box)


def top5_correct(
    scores: np.ndarray, gt_label: int, pred_box: BoxXYWH, gt_box: BoxXYWH
) -> bool:
    return rank_of_label(scores, gt_label) <= TOP_K and gt_known(pred_box, gt_box)


def evaluate_run(
    predictions: Sequence[PredictionRecord] | Mapping[str, BoxXYWH],
    scores: Mapping[str, np.ndarray] | None,
    manifest: Sequence[ImageRecord],
    split: str = TEST,
) -> EvalReport:
    """Score predictions against the manifest's ground truth boxes.

    Every ``split`` image that has a gt box must have a prediction; images
    without a gt box are skipped and counted. ``scores`` may be None for a
    GT-Known-only report.
    """
    if not isinstance(predictions, Mapping):
        pred_map: dict[str, BoxXYWH] = {}
        for p in predictions:
            if p.image_id in pred_map:
                raise DataError(f"duplicate prediction for {p.image_id!r}")
            pred_map[p.image_id] = p.box
    else:
        pred_map = dict(predictions)

    verdicts: list[ImageVerdict] = []
    n_skipped = 0
    for record in manifest:
        if record.split != split:
            continue
        if record.gt_box is None:
            n_skipped += 1
            continue
        box = pred_map.get(record.image_id)
        if box is None:
            raise DataError(f"missing prediction for {record.image_id!r}")
        value = iou(box, record.gt_box)
        loc_ok = value >= IOU_THRESHOLD
        rank = top1 = top5 = None
        if scores is not None:
            vec = scores.get(record.image_id)
            if vec is None:
                raise DataError(f"missing classifier scores for {record.image_id!r}")
            rank = rank_of_label(vec, record.class_label)
            top1 = rank == 1 and loc_ok
            top5 = rank <= TOP_K and loc_ok
        verdicts.append(
            ImageVerdict(
                image_id=record.image_id,
                iou=value,
                cls_rank_of_gt=rank,
                gt_known=loc_ok,
                top1=top1,
                top5=top5,
            )
        )
    if not verdicts:
        raise DataError(f"no evaluable images in split {split!r} (all missing gt boxes?)")

    n = len(verdicts)
    gt_known_loc = sum(v.gt_known for v in verdicts) / n
    top1_loc = top5_loc = top1_cls = top5_cls = None
    if scores is not None:
        top1_loc = sum(v.top1 for v in verdicts) / n
        top5_loc = sum(v.top5 for v in verdicts) / n
        top1_cls = sum(v.cls_rank_of_gt == 1 for v in verdicts) / n
        top5_cls = sum(v.cls_rank_of_gt <= TOP_K for v in verdicts) / n
    return EvalReport(
        n_evaluated=n,
        n_skipped_no_gt=n_skipped,
        gt_known_loc=gt_known_loc,
        top1_loc=top1_loc,
        top5_loc=top5_loc,
        top1_cls=top1_cls,
        top5_cls=top5_cls,
        verdicts=tuple(verdicts),
    )


def transfer_eval(
    params: RegressorParams,
    features: Mapping[str, np.ndarray],
    manifest: Sequence[ImageRecord],
    split: str = TEST,
) -> EvalReport:
    """GT-Known evaluation of a head trained elsewhere, with no parameter
    updates: the head is checksummed before and after prediction."""
    before = params.checksum()
    predicted = predict_boxes(params, features, manifest, split=split)
    report = evaluate_run(
        [PredictionRecord(image_id=i, box=b) for i, b in predicted],
        None,
        manifest,
        split=split,
    )
    after = params.checksum()
    if before != after:
        raise RuntimeError("transfer_eval must not modify the parameters")
    return report


# ---------------------------------------------------------------------------
# prediction files: JSON-lines {image_id, box:{x,y,w,h}}; extra fields
# (e.g. a pseudo-annotation's "source") are ignored so pseudo-box files can
# be evaluated directly.


def write_predictions(
    predictions: Sequence[tuple[str, BoxXYWH]], path: str | Path
) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for image_id, box in predictions:
            f.write(json.dumps({"image_id": image_id, "box": box.as_dict()}) + "\n")


def read_predictions(path: str | Path) -> list[PredictionRecord]:
    out: list[PredictionRecord] = []
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
                record = PredictionRecord(
                    image_id=str(obj["image_id"]),
                    box=BoxXYWH(
                        x=float(box["x"]),
                        y=float(box["y"]),
                        w=float(box["w"]),
                        h=float(box["h"]),
                    ),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ValidationError(f"{path}: line {lineno}: {exc}") from exc
            if record.image_id in seen:
                raise ValidationError(
                    f"{path}: line {lineno}: duplicate image_id {record.image_id!r}"
                )
            seen.add(record.image_id)
            out.append(record)
    return out
