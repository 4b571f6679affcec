"""Class-agnostic box regression and linear classification heads.

The regression head is a two-layer fully connected network with a ReLU in
between and sigmoid outputs, trained with mean squared error against
normalized box coordinates; the classifier is a linear softmax head.
Both run on frozen pooled backbone features, so training whole models
reduces to training heads, and the joint setup shares nothing but the
input features (the heads are parameter-disjoint).

All parameters and arithmetic are float64; SGD uses momentum buffers with
weight decay folded into the gradient (decay applies to biases too).
Training is single-threaded and bit-deterministic for a fixed seed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, FormatError, ValidationError
from .geometry import BoxXYWH, NormalizedBox, denormalize_box, normalize_box
from .pseudoboxes import PseudoAnnotation
from .tensor_io import (
    TEST,
    FeatureMap,
    ImageRecord,
    read_tensor_file,
    write_tensor_file,
)

LR_FIXED = "fixed"
LR_STEP = "step"

# rng stream tags, so separate and joint trainers draw identical values
_STREAM_REG_INIT = 0
_STREAM_CLS_INIT = 1
_STREAM_SHUFFLE = 2


@dataclass(frozen=True)
class TrainConfig:
    """SGD hyperparameters. Defaults follow the pipeline's standard recipe:
    lr 0.001, momentum 0.9, weight decay 0.0005, batch size 256 (64 for
    small datasets), fixed lr for regression on noisy boxes, step decay
    (divide by 10) for classification."""

    lr: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.0005
    batch_size: int = 256
    epochs: int = 30
    lr_policy: str = LR_FIXED
    lr_step_every: int = 10
    lr_decay_factor: float = 0.1
    seed: int = 0
    hidden_width: int = 512
    lr_multiplier: float = 1.0  # per-group scale for newly added heads

    def __post_init__(self):
        if self.lr <= 0:
            raise ValidationError(f"lr must be > 0, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValidationError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValidationError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValidationError(f"epochs must be >= 0, got {self.epochs}")
        if self.lr_policy not in (LR_FIXED, LR_STEP):
            raise ValidationError(f"unknown lr_policy {self.lr_policy!r}")
        if self.lr_step_every < 1:
            raise ValidationError(f"lr_step_every must be >= 1, got {self.lr_step_every}")
        if self.hidden_width < 1:
            raise ValidationError(f"hidden_width must be >= 1, got {self.hidden_width}")
        if self.lr_multiplier <= 0:
            raise ValidationError(f"lr_multiplier must be > 0, got {self.lr_multiplier}")

    def lr_at(self, epoch: int) -> float:
        lr = self.lr * self.lr_multiplier
        if self.lr_policy == LR_STEP:
            lr *= self.lr_decay_factor ** (epoch // self.lr_step_every)
        return lr


def _uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class RegressorParams:
    """Two-layer regression head plus SGD momentum state."""

    w1: np.ndarray  # (m, d)
    b1: np.ndarray  # (m,)
    w2: np.ndarray  # (4, m)
    b2: np.ndarray  # (4,)
    v_w1: np.ndarray | None = None
    v_b1: np.ndarray | None = None
    v_w2: np.ndarray | None = None
    v_b2: np.ndarray | None = None

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"regressor parameter {name} is not finite")
            setattr(self, name, arr)
            vname = f"v_{name}"
            if getattr(self, vname) is None:
                setattr(self, vname, np.zeros_like(arr))
        m, d = self.w1.shape
        if self.b1.shape != (m,) or self.w2.shape != (4, m) or self.b2.shape != (4,):
            raise ValidationError(
                f"inconsistent regressor shapes: w1 {self.w1.shape}, "
                f"b1 {self.b1.shape}, w2 {self.w2.shape}, b2 {self.b2.shape}"
            )

    @property
    def d(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_width(self) -> int:
        return self.w1.shape[0]

    @classmethod
    def init(cls, d: int, hidden_width: int, rng: np.random.Generator):
        return cls(
            w1=_uniform_init(rng, (hidden_width, d), d),
            b1=_uniform_init(rng, (hidden_width,), d),
            w2=_uniform_init(rng, (4, hidden_width), hidden_width),
            b2=_uniform_init(rng, (4,), hidden_width),
        )

    def copy(self) -> "RegressorParams":
        return RegressorParams(
            **{f.name: np.copy(getattr(self, f.name)) for f in fields(self)}
        )

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for name in ("w1", "b1", "w2", "b2"):
            digest.update(np.ascontiguousarray(getattr(self, name)).tobytes())
        return digest.hexdigest()


@dataclass
class ClassifierParams:
    """Linear softmax head plus SGD momentum state."""

    wc: np.ndarray  # (C, d)
    bc: np.ndarray  # (C,)
    v_wc: np.ndarray | None = None
    v_bc: np.ndarray | None = None

    def __post_init__(self):
        for name in ("wc", "bc"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"classifier parameter {name} is not finite")
            setattr(self, name, arr)
            vname = f"v_{name}"
            if getattr(self, vname) is None:
                setattr(self, vname, np.zeros_like(arr))
        if self.bc.shape != (self.wc.shape[0],):
            raise ValidationError(
                f"inconsistent classifier shapes: wc {self.wc.shape}, bc {self.bc.shape}"
            )

    @property
    def d(self) -> int:
        return self.wc.shape[1]

    @property
    def n_classes(self) -> int:
        return self.wc.shape[0]

    @classmethod
    def init(cls, d: int, n_classes: int, rng: np.random.Generator):
        return cls(
            wc=_uniform_init(rng, (n_classes, d), d),
            bc=_uniform_init(rng, (n_classes,), d),
        )

    def copy(self) -> "ClassifierParams":
        return ClassifierParams(
            **{f.name: np.copy(getattr(self, f.name)) for f in fields(self)}
        )


@dataclass
class RegressorGrads:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass
class ClassifierGrads:
    wc: np.ndarray
    bc: np.ndarray


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _as_batch(v: np.ndarray, d: int, what: str) -> tuple[np.ndarray, bool]:
    v = np.asarray(v, dtype=np.float64)
    single = v.ndim == 1
    if single:
        v = v[None, :]
    if v.ndim != 2 or v.shape[1] != d:
        raise ValidationError(f"{what}: expected vectors of depth {d}, got {v.shape}")
    return v, single


def reg_forward(params: RegressorParams, v: np.ndarray) -> np.ndarray:
    """sigmoid(W2 relu(W1 v + b1) + b2); accepts a (d,) vector or (n, d) batch.

    Outputs are strictly inside (0, 1)."""
    x, single = _as_batch(v, params.d, "reg_forward")
    z1 = x @ params.w1.T + params.b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ params.w2.T + params.b2
    out = _sigmoid(z2)
    return out[0] if single else out


def reg_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over the 4 components (and any batch) of squared differences."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValidationError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def _reg_step(params: RegressorParams, x: np.ndarray, t: np.ndarray):
    """Forward + analytic gradients of reg_loss(reg_forward(x), t)."""
    n = x.shape[0]
    z1 = x @ params.w1.T + params.b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ params.w2.T + params.b2
    pred = _sigmoid(z2)
    loss = float(np.mean((pred - t) ** 2))
    # d loss / d z2; the mean runs over 4 components and n samples
    g2 = (2.0 / (4.0 * n)) * (pred - t) * pred * (1.0 - pred)
    grads = RegressorGrads(
        w2=g2.T @ a1,
        b2=g2.sum(axis=0),
        w1=np.zeros_like(params.w1),
        b1=np.zeros_like(params.b1),
    )
    g1 = (g2 @ params.w2) * (z1 > 0.0)  # ReLU subgradient at 0 is 0
    grads.w1 = g1.T @ x
    grads.b1 = g1.sum(axis=0)
    return pred, loss, grads


def reg_backward(
    params: RegressorParams, v: np.ndarray, target: np.ndarray
) -> RegressorGrads:
    """Exact gradients of reg_loss(reg_forward(v), target) in the parameter
    shapes; batched inputs average the loss over the batch."""
    x, single = _as_batch(v, params.d, "reg_backward")
    t = np.asarray(target, dtype=np.float64)
    if single:
        t = t[None, :]
    if t.shape != (x.shape[0], 4):
        raise ValidationError(f"targets must be (n, 4), got {t.shape}")
    _, _, grads = _reg_step(params, x, t)
    return grads


def cls_forward(params: ClassifierParams, v: np.ndarray) -> np.ndarray:
    """Linear logits Wc v + bc; accepts a vector or a batch."""
    x, single = _as_batch(v, params.d, "cls_forward")
    logits = x @ params.wc.T + params.bc
    return logits[0] if single else logits


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cls_loss(logits: np.ndarray, labels: np.ndarray) -> float:
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.intp))
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    return float(np.mean(log_z - shifted[np.arange(len(labels)), labels]))


def _cls_step(params: ClassifierParams, x: np.ndarray, labels: np.ndarray):
    n = x.shape[0]
    logits = x @ params.wc.T + params.bc
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    loss = float(
        np.mean(np.log(e.sum(axis=1)) - shifted[np.arange(n), labels])
    )
    g = probs.copy()
    g[np.arange(n), labels] -= 1.0
    g /= n
    grads = ClassifierGrads(wc=g.T @ x, bc=g.sum(axis=0))
    return probs, loss, grads


def cls_backward(
    params: ClassifierParams, v: np.ndarray, labels: np.ndarray
) -> ClassifierGrads:
    x, single = _as_batch(v, params.d, "cls_backward")
    labels = np.atleast_1d(np.asarray(labels, dtype=np.intp))
    if labels.shape != (x.shape[0],):
        raise ValidationError(f"labels must be (n,), got {labels.shape}")
    if labels.min() < 0 or labels.max() >= params.n_classes:
        raise ValidationError("label out of range")
    _, _, grads = _cls_step(params, x, labels)
    return grads


def sgd_step(params, grads, cfg: TrainConfig, lr: float | None = None):
    """One SGD update with momentum and weight decay, in place:

        buf <- momentum * buf + grad + weight_decay * param
        param <- param - lr * buf

    Decay applies to weights and biases alike. ``lr`` defaults to the
    config's (multiplier-scaled) base rate; trainers pass the scheduled
    value.
    """
    if lr is None:
        lr = cfg.lr * cfg.lr_multiplier
    for f in fields(grads):
        p = getattr(params, f.name)
        g = getattr(grads, f.name)
        buf = getattr(params, f"v_{f.name}")
        buf *= cfg.momentum
        buf += g + cfg.weight_decay * p
        p -= lr * buf
    return params


# ---------------------------------------------------------------------------
# training loops


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


def _gather_features(
    features: Mapping[str, np.ndarray], ids: Sequence[str], what: str
) -> np.ndarray:
    missing = [i for i in ids if i not in features]
    if missing:
        raise DataError(
            f"{what}: missing pooled features for {len(missing)} image(s), "
            f"e.g. {missing[:3]}"
        )
    return np.stack([np.asarray(features[i], dtype=np.float64) for i in ids])


def _check_finite_loss(loss: float, epoch: int, what: str, cfg: TrainConfig):
    if not np.isfinite(loss):
        raise DataError(
            f"{what}: non-finite loss {loss!r} at epoch {epoch} "
            f"(lr={cfg.lr}, batch_size={cfg.batch_size}); aborting"
        )


def _batches(n: int, batch_size: int, perm: np.ndarray):
    for start in range(0, n, batch_size):
        yield perm[start : start + batch_size]


def regression_targets(
    annotations: Sequence[PseudoAnnotation], manifest: Sequence[ImageRecord]
) -> tuple[list[str], np.ndarray]:
    """Sorted image ids and their normalized target boxes."""
    records = {r.image_id: r for r in manifest}
    anns = sorted(annotations, key=lambda a: a.image_id)
    ids = []
    targets = np.empty((len(anns), 4), dtype=np.float64)
    for row, ann in enumerate(anns):
        record = records.get(ann.image_id)
        if record is None:
            raise DataError(f"annotation {ann.image_id!r} not present in manifest")
        nb = normalize_box(ann.box, record.orig_width, record.orig_height)
        targets[row] = (nb.x, nb.y, nb.w, nb.h)
        ids.append(ann.image_id)
    return ids, targets


def train_regressor(
    features: Mapping[str, np.ndarray],
    annotations: Sequence[PseudoAnnotation],
    manifest: Sequence[ImageRecord],
    cfg: TrainConfig,
) -> tuple[RegressorParams, list[float]]:
    """Mini-batch SGD on the regression head; samples are ordered by
    image_id and shuffled per epoch from the seeded stream. Returns the
    trained parameters and the per-epoch mean training loss."""
    ids, targets = regression_targets(annotations, manifest)
    x = _gather_features(features, ids, "train_regressor")
    params = RegressorParams.init(x.shape[1], cfg.hidden_width, _rng(cfg.seed, _STREAM_REG_INIT))
    shuffle = _rng(cfg.seed, _STREAM_SHUFFLE)
    losses: list[float] = []
    n = len(ids)
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        perm = shuffle.permutation(n)
        total = 0.0
        for idx in _batches(n, cfg.batch_size, perm):
            _, loss, grads = _reg_step(params, x[idx], targets[idx])
            _check_finite_loss(loss, epoch, "train_regressor", cfg)
            sgd_step(params, grads, cfg, lr=lr)
            total += loss * len(idx)
        losses.append(total / n)
    return params, losses


def train_classifier(
    features: Mapping[str, np.ndarray],
    labels: Mapping[str, int],
    cfg: TrainConfig,
    n_classes: int | None = None,
) -> tuple[ClassifierParams, list[float]]:
    """Softmax cross-entropy on the linear head, same SGD machinery."""
    ids = sorted(labels)
    if not ids:
        raise DataError("train_classifier: no labelled images")
    x = _gather_features(features, ids, "train_classifier")
    y = np.asarray([labels[i] for i in ids], dtype=np.intp)
    if n_classes is None:
        n_classes = int(y.max()) + 1
    if y.min() < 0 or y.max() >= n_classes:
        raise ValidationError("class label out of range")
    params = ClassifierParams.init(x.shape[1], n_classes, _rng(cfg.seed, _STREAM_CLS_INIT))
    shuffle = _rng(cfg.seed, _STREAM_SHUFFLE)
    losses: list[float] = []
    n = len(ids)
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        perm = shuffle.permutation(n)
        total = 0.0
        for idx in _batches(n, cfg.batch_size, perm):
            _, loss, grads = _cls_step(params, x[idx], y[idx])
            _check_finite_loss(loss, epoch, "train_classifier", cfg)
            sgd_step(params, grads, cfg, lr=lr)
            total += loss * len(idx)
        losses.append(total / n)
    return params, losses


def train_joint(
    features: Mapping[str, np.ndarray],
    labels: Mapping[str, int],
    annotations: Sequence[PseudoAnnotation],
    manifest: Sequence[ImageRecord],
    cfg: TrainConfig,
    joint_lambda: float = 1.0,
    n_classes: int | None = None,
) -> tuple[RegressorParams, ClassifierParams, list[dict[str, float]]]:
    """Both heads on shared features, loss = cross-entropy + lambda * l2.

    The heads share no parameters, so with identical seeds and the same
    sample set each head's trajectory matches its separate counterpart
    batch for batch. With lambda = 0 the regression head receives no loss
    term at all and is left at its initialization.
    """
    if joint_lambda < 0:
        raise ValidationError(f"joint_lambda must be >= 0, got {joint_lambda}")
    ids, targets = regression_targets(annotations, manifest)
    missing_labels = [i for i in ids if i not in labels]
    if missing_labels:
        raise DataError(
            f"train_joint: missing class labels for {len(missing_labels)} "
            f"image(s), e.g. {missing_labels[:3]}"
        )
    x = _gather_features(features, ids, "train_joint")
    y = np.asarray([labels[i] for i in ids], dtype=np.intp)
    if n_classes is None:
        n_classes = int(y.max()) + 1
    if y.min() < 0 or y.max() >= n_classes:
        raise ValidationError("class label out of range")
    d = x.shape[1]
    reg_params = RegressorParams.init(d, cfg.hidden_width, _rng(cfg.seed, _STREAM_REG_INIT))
    cls_params = ClassifierParams.init(d, n_classes, _rng(cfg.seed, _STREAM_CLS_INIT))
    shuffle = _rng(cfg.seed, _STREAM_SHUFFLE)
    log: list[dict[str, float]] = []
    n = len(ids)
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        perm = shuffle.permutation(n)
        total = total_cls = total_reg = 0.0
        for idx in _batches(n, cfg.batch_size, perm):
            _, closs, cgrads = _cls_step(cls_params, x[idx], y[idx])
            _check_finite_loss(closs, epoch, "train_joint (cls)", cfg)
            sgd_step(cls_params, cgrads, cfg, lr=lr)
            rloss = 0.0
            if joint_lambda != 0.0:
                _, rloss, rgrads = _reg_step(reg_params, x[idx], targets[idx])
                _check_finite_loss(rloss, epoch, "train_joint (reg)", cfg)
                if joint_lambda != 1.0:
                    for f in fields(rgrads):
                        setattr(rgrads, f.name, getattr(rgrads, f.name) * joint_lambda)
                sgd_step(reg_params, rgrads, cfg, lr=lr)
            batch_total = closs + joint_lambda * rloss
            total += batch_total * len(idx)
            total_cls += closs * len(idx)
            total_reg += rloss * len(idx)
        log.append(
            {"total": total / n, "cls": total_cls / n, "reg": total_reg / n}
        )
    return reg_params, cls_params, log


def predict_boxes(
    params: RegressorParams,
    features: Mapping[str, np.ndarray],
    manifest: Sequence[ImageRecord],
    split: str = TEST,
) -> list[tuple[str, BoxXYWH]]:
    """One box per image of ``split``, denormalized by each image's
    original dimensions (manifest order)."""
    out = []
    for record in manifest:
        if record.split != split:
            continue
        v = features.get(record.image_id)
        if v is None:
            raise DataError(f"missing pooled feature for {record.image_id!r}")
        raw = reg_forward(params, v)
        nb = NormalizedBox(x=float(raw[0]), y=float(raw[1]), w=float(raw[2]), h=float(raw[3]))
        out.append(
            (record.image_id, denormalize_box(nb, record.orig_width, record.orig_height))
        )
    return out


def predict_scores(
    params: ClassifierParams,
    features: Mapping[str, np.ndarray],
    manifest: Sequence[ImageRecord],
    split: str = TEST,
) -> dict[str, np.ndarray]:
    """Classifier logits per image of ``split`` (manifest order)."""
    out: dict[str, np.ndarray] = {}
    for record in manifest:
        if record.split != split:
            continue
        v = features.get(record.image_id)
        if v is None:
            raise DataError(f"missing pooled feature for {record.image_id!r}")
        out[record.image_id] = cls_forward(params, v)
    return out


# ---------------------------------------------------------------------------
# checkpoints: tensor-file records named after the parameters, plus a JSON
# sidecar with dims and training provenance

KIND_REGRESSOR = "regressor"
KIND_CLASSIFIER = "classifier"
KIND_JOINT = "joint"

_REG_RECORDS = ("W1", "b1", "W2", "b2")
_CLS_RECORDS = ("Wc", "bc")


def _param_record(name: str, arr: np.ndarray) -> FeatureMap:
    if arr.ndim == 1:
        values = arr[None, None, :]
    else:
        values = arr[None, :, :]
    return FeatureMap(image_id=name, values=values.astype(np.float32))


def sidecar_path(path: str | Path) -> Path:
    return Path(str(path) + ".json")


def save_checkpoint(
    path: str | Path,
    *,
    reg: RegressorParams | None = None,
    cls: ClassifierParams | None = None,
    cfg: TrainConfig | None = None,
    extra: dict | None = None,
) -> None:
    if reg is None and cls is None:
        raise ValidationError("checkpoint needs at least one head")
    records = []
    meta: dict = {"format": "psol-checkpoint", "version": 1}
    if reg is not None and cls is not None:
        meta["kind"] = KIND_JOINT
    elif reg is not None:
        meta["kind"] = KIND_REGRESSOR
    else:
        meta["kind"] = KIND_CLASSIFIER
    if reg is not None:
        for rec, name in zip(_REG_RECORDS, ("w1", "b1", "w2", "b2")):
            records.append(_param_record(rec, getattr(reg, name)))
        meta["d"] = reg.d
        meta["hidden_width"] = reg.hidden_width
    if cls is not None:
        for rec, name in zip(_CLS_RECORDS, ("wc", "bc")):
            records.append(_param_record(rec, getattr(cls, name)))
        meta["d"] = cls.d
        meta["n_classes"] = cls.n_classes
    if cfg is not None:
        meta["config"] = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
        meta["seed"] = cfg.seed
        meta["epochs"] = cfg.epochs
    if extra:
        meta.update(extra)
    write_tensor_file(records, path, require_uniform_depth=False)
    with open(sidecar_path(path), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def load_checkpoint(
    path: str | Path,
) -> tuple[str, RegressorParams | None, ClassifierParams | None, dict]:
    """Returns (kind, regressor, classifier, sidecar metadata)."""
    by_name = {}
    for fm in read_tensor_file(path):
        if fm.image_id in by_name:
            raise FormatError(f"{path}: duplicate checkpoint record {fm.image_id!r}")
        by_name[fm.image_id] = fm.values.astype(np.float64)
    names = set(by_name)
    has_reg = set(_REG_RECORDS) <= names
    has_cls = set(_CLS_RECORDS) <= names
    if not has_reg and not has_cls:
        raise FormatError(
            f"{path}: not a checkpoint (records: {sorted(names) or 'none'})"
        )
    unknown = names - set(_REG_RECORDS) - set(_CLS_RECORDS)
    if unknown:
        raise FormatError(f"{path}: unexpected checkpoint records {sorted(unknown)}")
    reg = cls = None
    try:
        if has_reg:
            reg = RegressorParams(
                w1=by_name["W1"][0],
                b1=by_name["b1"][0, 0],
                w2=by_name["W2"][0],
                b2=by_name["b2"][0, 0],
            )
        if has_cls:
            cls = ClassifierParams(wc=by_name["Wc"][0], bc=by_name["bc"][0, 0])
    except (ValidationError, IndexError) as exc:
        raise FormatError(f"{path}: malformed checkpoint records: {exc}") from exc
    meta = {}
    sidecar = sidecar_path(path)
    if sidecar.exists():
        with open(sidecar, "r", encoding="utf-8") as f:
            meta = json.load(f)
    kind = KIND_JOINT if (has_reg and has_cls) else (
        KIND_REGRESSOR if has_reg else KIND_CLASSIFIER
    )
    return kind, reg, cls, meta


def write_loss_csv(path: str | Path, rows: Sequence[tuple[int, str, float]]) -> None:
    """Loss log rows (epoch, split, loss) as CSV."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("epoch,split,loss\n")
        for epoch, split, loss in rows:
            f.write(f"{epoch},{split},{loss!r}\n")
