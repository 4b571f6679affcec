"""On-disk formats shared by the numerics core and the feature exporter.

Binary tensor file ("PSOLTNSR", version 1), all integers little-endian:

    offset  size  field
    0       8     magic b"PSOLTNSR"
    8       4     u32 version (= 1)
    12      4     u32 record count
    then per record:
            2     u16 id length (bytes)
            var   UTF-8 id
            4     u32 h
            4     u32 w
            4     u32 d
            4*h*w*d   float32 values, little-endian, row-major with the
                      channel axis fastest (C order of an (h, w, d) array)

Text formats (one JSON object per line, UTF-8):

* manifest: ``{"image_id", "class_label", "orig_width", "orig_height",
  "net_input_size", "split", "gt_box"?}`` with ``gt_box`` an
  ``{"x","y","w","h"}`` object in original-image pixels;
* classifier scores: ``{"image_id", "scores": [...]}``.

Classifier weights ride in a tensor file as a single 1 x C x d record;
pooled feature vectors as one 1 x 1 x d record per image.

Readers keep no shared mutable state: distinct file handles may be used
from multiple threads, a single decode stream is single-threaded.
"""

from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import FormatError, TruncationError, ValidationError
from .geometry import BoxXYWH

MAGIC = b"PSOLTNSR"
VERSION = 1
HEADER_SIZE = 16

TRAIN = "train"
TEST = "test"
SPLITS = (TRAIN, TEST)


@dataclass
class FeatureMap:
    """One image's h x w x d backbone activation grid."""

    image_id: str
    values: np.ndarray  # (h, w, d) float32, all finite

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 3:
            raise ValidationError(
                f"feature map {self.image_id!r} must be 3-d (h, w, d), "
                f"got shape {self.values.shape}"
            )
        if min(self.values.shape) < 1:
            raise ValidationError(
                f"feature map {self.image_id!r} has an empty axis: {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValidationError(
                f"feature map {self.image_id!r} contains non-finite values"
            )

    @property
    def h(self) -> int:
        return self.values.shape[0]

    @property
    def w(self) -> int:
        return self.values.shape[1]

    @property
    def d(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class ImageRecord:
    """One manifest line: image geometry, label, split, optional gt box."""

    image_id: str
    class_label: int
    orig_width: int
    orig_height: int
    net_input_size: int
    split: str
    gt_box: BoxXYWH | None = None

    def __post_init__(self):
        if not self.image_id:
            raise ValidationError("image_id must be non-empty")
        if self.class_label < 0:
            raise ValidationError(
                f"{self.image_id}: class_label must be >= 0, got {self.class_label}"
            )
        for name, v in (
            ("orig_width", self.orig_width),
            ("orig_height", self.orig_height),
            ("net_input_size", self.net_input_size),
        ):
            if not isinstance(v, int) or v <= 0:
                raise ValidationError(
                    f"{self.image_id}: {name} must be a positive integer, got {v!r}"
                )
        if self.split not in SPLITS:
            raise ValidationError(
                f"{self.image_id}: split must be one of {SPLITS}, got {self.split!r}"
            )
        if self.gt_box is not None:
            b = self.gt_box
            if b.x + b.w > self.orig_width or b.y + b.h > self.orig_height:
                raise ValidationError(
                    f"{self.image_id}: gt_box {b} exceeds image "
                    f"{self.orig_width}x{self.orig_height}"
                )


@dataclass(frozen=True)
class ClassifierOutputs:
    """Per-image classification scores; higher means more likely.

    Ties in the induced ranking are broken toward the lowest class index.
    """

    image_id: str
    scores: np.ndarray  # (C,) float64, finite

    def __post_init__(self):
        object.__setattr__(
            self, "scores", np.asarray(self.scores, dtype=np.float64)
        )
        if self.scores.ndim != 1 or self.scores.size == 0:
            raise ValidationError(
                f"{self.image_id}: scores must be a non-empty vector"
            )
        if not np.all(np.isfinite(self.scores)):
            raise ValidationError(f"{self.image_id}: scores contain non-finite values")

    @property
    def n_classes(self) -> int:
        return self.scores.size


# ---------------------------------------------------------------------------
# binary tensor files


def write_tensor_file(
    records: Sequence[FeatureMap] | Iterable[FeatureMap],
    path: str | Path,
    *,
    require_uniform_depth: bool = True,
) -> None:
    """Write feature maps to ``path`` in the PSOLTNSR layout.

    Feature-map sets for one class share a single channel depth, enforced by
    default; checkpoint files reuse the container with mixed shapes and pass
    ``require_uniform_depth=False``.
    """
    records = list(records)
    if require_uniform_depth and records:
        d0 = records[0].d
        for fm in records:
            if fm.d != d0:
                raise FormatError(
                    f"mixed channel depth in one tensor file: {fm.image_id!r} "
                    f"has d={fm.d}, expected {d0}"
                )
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(records)))
        for fm in records:
            id_bytes = fm.image_id.encode("utf-8")
            if len(id_bytes) > 0xFFFF:
                raise FormatError(f"record id too long ({len(id_bytes)} bytes)")
            f.write(struct.pack("<H", len(id_bytes)))
            f.write(id_bytes)
            f.write(struct.pack("<III", fm.h, fm.w, fm.d))
            f.write(np.ascontiguousarray(fm.values, dtype="<f4").tobytes())


def iter_tensor_file(
    path: str | Path, *, require_uniform_depth: bool = False
) -> Iterator[FeatureMap]:
    """Stream records from a PSOLTNSR file, validating as it decodes."""
    with open(path, "rb") as f:
        header = f.read(HEADER_SIZE)
        if len(header) < HEADER_SIZE:
            raise TruncationError(f"{path}: file shorter than the 16-byte header")
        if header[:8] != MAGIC:
            raise FormatError(f"{path}: bad magic {header[:8]!r}")
        version, count = struct.unpack("<II", header[8:16])
        if version != VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        depth: int | None = None
        for i in range(count):
            fm = _read_record(f, path, i)
            if require_uniform_depth:
                if depth is None:
                    depth = fm.d
                elif fm.d != depth:
                    raise FormatError(
                        f"{path}: record {i} ({fm.image_id!r}) has d={fm.d}, "
                        f"expected {depth}"
                    )
            yield fm
        if f.read(1):
            raise FormatError(f"{path}: trailing bytes after {count} records")


def read_tensor_file(
    path: str | Path, *, require_uniform_depth: bool = False
) -> list[FeatureMap]:
    return list(iter_tensor_file(path, require_uniform_depth=require_uniform_depth))


def _read_record(f, path, index: int) -> FeatureMap:
    def take(n: int, what: str) -> bytes:
        buf = f.read(n)
        if len(buf) < n:
            raise TruncationError(
                f"{path}: truncated in record {index} while reading {what}",
                record_index=index,
            )
        return buf

    (id_len,) = struct.unpack("<H", take(2, "id length"))
    try:
        image_id = take(id_len, "id").decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: record {index} id is not valid UTF-8") from exc
    h, w, d = struct.unpack("<III", take(12, "dims"))
    if min(h, w, d) < 1:
        raise FormatError(
            f"{path}: record {index} ({image_id!r}) has a zero dimension "
            f"h={h} w={w} d={d}"
        )
    raw = take(4 * h * w * d, "values")
    values = np.frombuffer(raw, dtype="<f4").reshape(h, w, d).copy()
    if not np.all(np.isfinite(values)):
        raise ValidationError(
            f"{path}: record {index} ({image_id!r}) contains non-finite floats"
        )
    return FeatureMap(image_id=image_id, values=values)


# ---------------------------------------------------------------------------
# manifests


def _parse_box(obj: dict, context: str) -> BoxXYWH:
    try:
        return BoxXYWH(
            x=float(obj["x"]), y=float(obj["y"]), w=float(obj["w"]), h=float(obj["h"])
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{context}: malformed box object {obj!r}") from exc


def load_manifest(path: str | Path) -> list[ImageRecord]:
    """Parse a JSON-lines manifest, in file order, rejecting duplicates."""
    records: list[ImageRecord] = []
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
                    gt_box = _parse_box(obj["gt_box"], f"line {lineno}")
                record = ImageRecord(
                    image_id=str(obj["image_id"]),
                    class_label=int(obj["class_label"]),
                    orig_width=int(obj["orig_width"]),
                    orig_height=int(obj["orig_height"]),
                    net_input_size=int(obj["net_input_size"]),
                    split=str(obj["split"]),
                    gt_box=gt_box,
                )
            except KeyError as exc:
                raise ValidationError(
                    f"{path}: line {lineno}: missing field {exc}"
                ) from exc
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"{path}: line {lineno}: {exc}") from exc
            except ValidationError as exc:
                raise ValidationError(f"{path}: line {lineno}: {exc}") from exc
            if record.image_id in seen:
                raise ValidationError(
                    f"{path}: line {lineno}: duplicate image_id {record.image_id!r}"
                )
            seen.add(record.image_id)
            records.append(record)
    return records


def write_manifest(records: Iterable[ImageRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            obj = {
                "image_id": r.image_id,
                "class_label": r.class_label,
                "orig_width": r.orig_width,
                "orig_height": r.orig_height,
                "net_input_size": r.net_input_size,
                "split": r.split,
            }
            if r.gt_box is not None:
                obj["gt_box"] = r.gt_box.as_dict()
            f.write(json.dumps(obj) + "\n")


# ---------------------------------------------------------------------------
# classifier scores


def load_scores(path: str | Path) -> dict[str, np.ndarray]:
    """Read a scores JSON-lines file into an id -> score vector mapping.

    All vectors must share one length (the class count).
    """
    scores: dict[str, np.ndarray] = {}
    n_classes: int | None = None
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
                out = ClassifierOutputs(
                    image_id=str(obj["image_id"]),
                    scores=np.asarray(obj["scores"], dtype=np.float64),
                )
            except KeyError as exc:
                raise ValidationError(
                    f"{path}: line {lineno}: missing field {exc}"
                ) from exc
            except (TypeError, ValueError, ValidationError) as exc:
                raise ValidationError(f"{path}: line {lineno}: {exc}") from exc
            if out.image_id in scores:
                raise ValidationError(
                    f"{path}: line {lineno}: duplicate image_id {out.image_id!r}"
                )
            if n_classes is None:
                n_classes = out.n_classes
            elif out.n_classes != n_classes:
                raise ValidationError(
                    f"{path}: line {lineno}: score vector length {out.n_classes} "
                    f"!= {n_classes}"
                )
            scores[out.image_id] = out.scores
    return scores


def write_scores(scores: dict[str, np.ndarray], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for image_id, vec in scores.items():
            vec = np.asarray(vec, dtype=np.float64)
            if not np.all(np.isfinite(vec)):
                raise ValidationError(f"{image_id}: scores contain non-finite values")
            f.write(json.dumps({"image_id": image_id, "scores": vec.tolist()}) + "\n")


# ---------------------------------------------------------------------------
# classifier weights and pooled features (tensor-file payloads)

CLASSIFIER_WEIGHTS_ID = "classifier_weights"


def write_classifier_weights(matrix: np.ndarray, path: str | Path) -> None:
    """Store a C x d weight matrix as a single 1 x C x d record."""
    matrix = np.asarray(matrix, dtype=np.float32)
    if matrix.ndim != 2:
        raise ValidationError(f"classifier weights must be 2-d, got {matrix.shape}")
    fm = FeatureMap(image_id=CLASSIFIER_WEIGHTS_ID, values=matrix[np.newaxis, :, :])
    write_tensor_file([fm], path)


def read_classifier_weights(path: str | Path) -> np.ndarray:
    records = read_tensor_file(path)
    if len(records) != 1 or records[0].h != 1:
        raise FormatError(
            f"{path}: expected a single 1 x C x d record, "
            f"got {len(records)} record(s)"
        )
    return records[0].values[0]


def write_pooled_features(features: dict[str, np.ndarray], path: str | Path) -> None:
    """Store per-image pooled vectors, one 1 x 1 x d record each."""
    records = [
        FeatureMap(image_id=image_id, values=np.asarray(v, dtype=np.float32)[None, None, :])
        for image_id, v in features.items()
    ]
    write_tensor_file(records, path)


def read_pooled_features(path: str | Path) -> dict[str, np.ndarray]:
    features: dict[str, np.ndarray] = {}
    for fm in iter_tensor_file(path, require_uniform_depth=True):
        if fm.h != 1 or fm.w != 1:
            raise FormatError(
                f"{path}: pooled record {fm.image_id!r} has shape "
                f"{fm.values.shape}, expected (1, 1, d)"
            )
        if fm.image_id in features:
            raise ValidationError(f"{path}: duplicate pooled id {fm.image_id!r}")
        features[fm.image_id] = fm.values[0, 0]
    return features


# ---------------------------------------------------------------------------
# per-class file layout: one tensor file per class per split, so DDT can
# stream one class at a time

_CLASS_FILE_RE = re.compile(r"^class_(\d{5})\.tnsr$")


def class_file_name(label: int) -> str:
    return f"class_{label:05d}.tnsr"


def discover_class_files(directory: str | Path) -> dict[int, Path]:
    """Map class label -> tensor file for every class_NNNNN.tnsr in a dir."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FormatError(f"{directory}: not a directory")
    files: dict[int, Path] = {}
    for entry in sorted(directory.iterdir()):
        m = _CLASS_FILE_RE.match(entry.name)
        if m:
            files[int(m.group(1))] = entry
    if not files:
        raise FormatError(f"{directory}: no class_NNNNN.tnsr files found")
    return files
