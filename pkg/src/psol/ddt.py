"""Deep descriptor transformation over convolutional feature maps.

Per class: every spatial position of every feature map contributes one
d-dimensional descriptor; the descriptors' leading principal direction is
fit from streamed second-moment sums, each map is projected onto it (after
mean centering), the projection is upsampled to the network input size,
thresholded at zero, and the largest connected positive component yields
the box.

Accumulators support parallel partial accumulation: ``merge`` is
field-wise addition, associative and commutative. Everything else here is
a pure function.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy import ndimage

from .errors import DataError, ValidationError
from .geometry import BoxXYWH
from .tensor_io import FeatureMap

# Relative asymmetry beyond which a finalized covariance is rejected as
# numerically corrupt rather than silently symmetrized.
_SYMMETRY_RTOL = 1e-8

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass
class CovarianceAccumulator:
    """Streaming sums for per-class PCA over spatial descriptors.

    Sums are kept in float64: a class can contribute well over 1e7
    positions at full scale and float32 accumulation drifts.
    """

    d: int
    n_pos: int = 0
    sum_x: np.ndarray = field(default=None)  # (d,)
    sum_xxT: np.ndarray = field(default=None)  # (d, d)

    def __post_init__(self):
        if self.d < 1:
            raise ValidationError(f"descriptor depth must be positive, got {self.d}")
        if self.sum_x is None:
            self.sum_x = np.zeros(self.d, dtype=np.float64)
        if self.sum_xxT is None:
            self.sum_xxT = np.zeros((self.d, self.d), dtype=np.float64)


@dataclass(frozen=True)
class PrincipalDirection:
    """Per-class mean, unit leading eigenvector, and its eigenvalue."""

    mean: np.ndarray  # (d,)
    p: np.ndarray  # (d,), unit norm
    eigenvalue: float

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=np.float64))
        if self.mean.shape != self.p.shape or self.p.ndim != 1:
            raise ValidationError(
                f"mean/p shape mismatch: {self.mean.shape} vs {self.p.shape}"
            )
        norm = float(np.linalg.norm(self.p))
        if abs(norm - 1.0) > 1e-9:
            raise ValidationError(f"p must be unit norm, got ||p|| = {norm!r}")
        if not self.eigenvalue >= 0.0:
            raise ValidationError(f"eigenvalue must be >= 0, got {self.eigenvalue!r}")

    @property
    def d(self) -> int:
        return self.p.size

    def flipped(self) -> "PrincipalDirection":
        return PrincipalDirection(mean=self.mean, p=-self.p, eigenvalue=self.eigenvalue)


def accumulate(acc: CovarianceAccumulator, fm: FeatureMap) -> CovarianceAccumulator:
    """Fold one feature map's h*w descriptors into the accumulator (in place)."""
    if fm.d != acc.d:
        raise ValidationError(
            f"feature map {fm.image_id!r} has depth {fm.d}, accumulator expects {acc.d}"
        )
    x = fm.values.reshape(-1, acc.d).astype(np.float64)
    acc.n_pos += x.shape[0]
    acc.sum_x += x.sum(axis=0)
    acc.sum_xxT += x.T @ x
    return acc


def merge(a: CovarianceAccumulator, b: CovarianceAccumulator) -> CovarianceAccumulator:
    """Combine two partial accumulations; field-wise addition, so the order
    of merges does not matter beyond float rounding."""
    if a.d != b.d:
        raise ValidationError(f"cannot merge accumulators of depth {a.d} and {b.d}")
    return CovarianceAccumulator(
        d=a.d,
        n_pos=a.n_pos + b.n_pos,
        sum_x=a.sum_x + b.sum_x,
        sum_xxT=a.sum_xxT + b.sum_xxT,
    )


def jacobi_eigh(a: np.ndarray, *, tol: float = 1e-15, max_sweeps: int = 100):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Pivots sweep the strict upper triangle in fixed row-major order, which
    makes the result (including degenerate subspaces) deterministic.
    Returns (eigenvalues, eigenvectors) with eigenvectors in columns,
    unsorted.
    """
    a = np.array(a, dtype=np.float64, copy=True)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValidationError(f"matrix must be square, got {a.shape}")
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v
    scale = float(np.linalg.norm(a))
    if scale == 0.0:
        return np.zeros(n), v
    for _ in range(max_sweeps):
        off = float(np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-30 * scale:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                app, aqq = a[p, p], a[q, q]
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                # exact values on the pivot entries, immune to cancellation
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vcol_p = v[:, p].copy()
                vcol_q = v[:, q].copy()
                v[:, p] = c * vcol_p - s * vcol_q
                v[:, q] = s * vcol_p + c * vcol_q
    return a.diagonal().copy(), v


def _canonical_sign(p: np.ndarray) -> np.ndarray:
    """Flip so the largest-magnitude component (lowest index on ties) is > 0."""
    k = int(np.argmax(np.abs(p)))
    return -p if p[k] < 0 else p


def principal_direction(acc: CovarianceAccumulator) -> PrincipalDirection:
    """Finalize the accumulator into mean + leading eigenvector.

    The returned vector carries a canonical data-independent sign (largest
    component positive); the pipeline re-orients it against the fit data
    with :func:`orient_to_minority` so that zero thresholding selects the
    minority (object) side.
    """
    if acc.n_pos < 2:
        raise ValidationError(
            f"principal direction needs at least 2 positions, got {acc.n_pos}"
        )
    mean = acc.sum_x / acc.n_pos
    cov = acc.sum_xxT / acc.n_pos - np.outer(mean, mean)
    asym = float(np.max(np.abs(cov - cov.T)))
    scale = max(1.0, float(np.max(np.abs(cov))))
    if asym > _SYMMETRY_RTOL * scale:
        raise DataError(
            f"covariance numerically non-symmetric (asymmetry {asym:.3e} "
            f"at scale {scale:.3e})"
        )
    cov = 0.5 * (cov + cov.T)
    eigenvalues, eigenvectors = jacobi_eigh(cov)
    k = int(np.argmax(eigenvalues))  # first maximum on exact ties
    p = _canonical_sign(eigenvectors[:, k])
    p = p / np.linalg.norm(p)
    return PrincipalDirection(
        mean=mean, p=p, eigenvalue=max(float(eigenvalues[k]), 0.0)
    )


def orient_to_minority(
    pd: PrincipalDirection, feature_maps: Iterable[FeatureMap]
) -> PrincipalDirection:
    """Fix the eigenvector sign so at most half of the fit positions
    project positively.

    The common object is assumed to occupy the minority of spatial
    positions; with this orientation the zero threshold selects it rather
    than the background. Requires a second pass over the fit data, which a
    moment accumulator alone cannot provide.
    """
    n_pos = 0
    n_positive = 0
    for fm in feature_maps:
        hm = project_heatmap(fm, pd)
        n_pos += hm.size
        n_positive += int(np.count_nonzero(hm > 0.0))
    if n_pos == 0:
        raise ValidationError("orient_to_minority needs at least one feature map")
    if 2 * n_positive > n_pos:
        return pd.flipped()
    return pd


def project_heatmap(fm: FeatureMap, pd: PrincipalDirection) -> np.ndarray:
    """Heat map H[i,j] = sum_k (G[i,j,k] - mean[k]) * p[k], shape (h, w)."""
    if fm.d != pd.d:
        raise ValidationError(
            f"feature map {fm.image_id!r} depth {fm.d} != direction depth {pd.d}"
        )
    centered = fm.values.astype(np.float64) - pd.mean
    return centered @ pd.p


def cam_heatmap(
    fm: FeatureMap, classifier_weights: np.ndarray, class_idx: int
) -> np.ndarray:
    """Class activation map: H[i,j] = sum_k G[i,j,k] * W[class_idx, k].

    No centering; the weights come straight from a classifier's final
    fully connected layer.
    """
    w = np.asarray(classifier_weights, dtype=np.float64)
    if w.ndim != 2:
        raise ValidationError(f"classifier weights must be 2-d, got {w.shape}")
    if not 0 <= class_idx < w.shape[0]:
        raise ValidationError(
            f"class index {class_idx} out of range for {w.shape[0]} classes"
        )
    if fm.d != w.shape[1]:
        raise ValidationError(
            f"feature map {fm.image_id!r} depth {fm.d} != weight depth {w.shape[1]}"
        )
    return fm.values.astype(np.float64) @ w[class_idx]


def _source_coords(n_out: int, n_in: int) -> np.ndarray:
    # corner-aligned: output corners sample input corners exactly
    if n_out == 1 or n_in == 1:
        return np.zeros(n_out, dtype=np.float64)
    return np.arange(n_out, dtype=np.float64) * ((n_in - 1) / (n_out - 1))


def upsample_bilinear(hm: np.ndarray, out_rows: int, out_cols: int) -> np.ndarray:
    """Corner-aligned bilinear resampling of a 2-d map.

    Constant maps stay constant, resampling to the same size is the
    identity, and outputs stay inside [min(hm), max(hm)].
    """
    hm = np.asarray(hm, dtype=np.float64)
    if hm.ndim != 2:
        raise ValidationError(f"heat map must be 2-d, got shape {hm.shape}")
    if out_rows < 1 or out_cols < 1:
        raise ValidationError(f"output dims must be >= 1, got {out_rows}x{out_cols}")
    if not np.all(np.isfinite(hm)):
        raise ValidationError("heat map contains non-finite values")
    in_r, in_c = hm.shape
    r = _source_coords(out_rows, in_r)
    c = _source_coords(out_cols, in_c)
    r0 = np.floor(r).astype(np.intp)
    c0 = np.floor(c).astype(np.intp)
    r1 = np.minimum(r0 + 1, in_r - 1)
    c1 = np.minimum(c0 + 1, in_c - 1)
    fr = (r - r0)[:, None]
    fc = (c - c0)[None, :]
    g00 = hm[np.ix_(r0, c0)]
    g01 = hm[np.ix_(r0, c1)]
    g10 = hm[np.ix_(r1, c0)]
    g11 = hm[np.ix_(r1, c1)]
    top = g00 + fc * (g01 - g00)
    bottom = g10 + fc * (g11 - g10)
    return top + fr * (bottom - top)


def _largest_positive_component(mask: np.ndarray):
    """Pick the largest 8-connected True component.

    Ties go to the component with the smallest top row, then smallest left
    column. Returns (rows, cols) index arrays, or None for an empty mask.
    """
    if not mask.any():
        return None
    labels, n = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0  # background
    best = None
    best_key = None
    for comp in np.flatnonzero(sizes == sizes.max()):
        rows, cols = np.nonzero(labels == comp)
        key = (sizes[comp] * -1, int(rows.min()), int(cols.min()))
        if best_key is None or key < best_key:
            best_key = key
            best = (rows, cols)
    return best


def extract_box(hm: np.ndarray) -> BoxXYWH | None:
    """Zero-threshold the map and box the largest positive component.

    The mask keeps strictly positive values; the returned box is the tight
    bound in heat-map pixel coordinates (w, h count pixels). Returns None
    when nothing is positive.
    """
    hm = np.asarray(hm, dtype=np.float64)
    if hm.ndim != 2:
        raise ValidationError(f"heat map must be 2-d, got shape {hm.shape}")
    component = _largest_positive_component(hm > 0.0)
    if component is None:
        return None
    rows, cols = component
    x = int(cols.min())
    y = int(rows.min())
    return BoxXYWH(
        x=float(x),
        y=float(y),
        w=float(int(cols.max()) - x + 1),
        h=float(int(rows.max()) - y + 1),
    )
