"""Independent brute-force oracles for the numerics under test.

Everything here is deliberately naive (scalar loops, exhaustive search,
rasterized counting) and shares no code with the implementations it
checks.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np


def rasterized_iou(a: tuple[int, int, int, int], b: tuple[int, int, int, int]) -> float:
    """IoU of two integer boxes by literally counting pixels on a grid."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    width = max(ax + aw, bx + bw) + 1
    height = max(ay + ah, by + bh) + 1
    ga = np.zeros((height, width), dtype=bool)
    gb = np.zeros((height, width), dtype=bool)
    ga[ay : ay + ah, ax : ax + aw] = True
    gb[by : by + bh, bx : bx + bw] = True
    inter = int(np.count_nonzero(ga & gb))
    union = int(np.count_nonzero(ga | gb))
    return inter / union


def flood_fill_box(mask: np.ndarray):
    """Largest 8-connected component of a boolean mask by exhaustive BFS.

    Ties go to the component with the smallest top row, then smallest left
    column. Returns (sorted pixel list, (x, y, w, h)) or None if the mask
    is empty.
    """
    mask = np.asarray(mask, dtype=bool)
    rows, cols = mask.shape
    seen = np.zeros_like(mask)
    components = []
    for r in range(rows):
        for c in range(cols):
            if not mask[r, c] or seen[r, c]:
                continue
            pixels = []
            queue = deque([(r, c)])
            seen[r, c] = True
            while queue:
                pr, pc = queue.popleft()
                pixels.append((pr, pc))
                for dr in (-1, 0, 1):
                    for dc in (-1, 0, 1):
                        if dr == 0 and dc == 0:
                            continue
                        nr, nc = pr + dr, pc + dc
                        if 0 <= nr < rows and 0 <= nc < cols:
                            if mask[nr, nc] and not seen[nr, nc]:
                                seen[nr, nc] = True
                                queue.append((nr, nc))
            components.append(pixels)
    if not components:
        return None
    best = None
    best_key = None
    for pixels in components:
        top = min(p[0] for p in pixels)
        left = min(p[1] for p in pixels)
        key = (-len(pixels), top, left)
        if best_key is None or key < best_key:
            best_key = key
            best = pixels
    ys = [p[0] for p in best]
    xs = [p[1] for p in best]
    box = (min(xs), min(ys), max(xs) - min(xs) + 1, max(ys) - min(ys) + 1)
    return sorted(best), box


def naive_project(values: np.ndarray, mean: np.ndarray, p: np.ndarray) -> np.ndarray:
    h, w, d = values.shape
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for k in range(d):
                acc += (float(values[i, j, k]) - float(mean[k])) * float(p[k])
            out[i, j] = acc
    return out


def naive_cam(values: np.ndarray, weights_row: np.ndarray) -> np.ndarray:
    h, w, d = values.shape
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for k in range(d):
                acc += float(values[i, j, k]) * float(weights_row[k])
            out[i, j] = acc
    return out


def naive_bilinear(hm: np.ndarray, out_rows: int, out_cols: int) -> np.ndarray:
    in_r, in_c = hm.shape
    out = np.zeros((out_rows, out_cols))
    for i in range(out_rows):
        if out_rows == 1 or in_r == 1:
            sr = 0.0
        else:
            sr = i * (in_r - 1) / (out_rows - 1)
        r0 = min(int(math.floor(sr)), in_r - 1)
        r1 = min(r0 + 1, in_r - 1)
        fr = sr - r0
        for j in range(out_cols):
            if out_cols == 1 or in_c == 1:
                sc = 0.0
            else:
                sc = j * (in_c - 1) / (out_cols - 1)
            c0 = min(int(math.floor(sc)), in_c - 1)
            c1 = min(c0 + 1, in_c - 1)
            fc = sc - c0
            top = float(hm[r0, c0]) * (1 - fc) + float(hm[r0, c1]) * fc
            bot = float(hm[r1, c0]) * (1 - fc) + float(hm[r1, c1]) * fc
            out[i, j] = top * (1 - fr) + bot * fr
    return out


def naive_reg_forward(w1, b1, w2, b2, v) -> np.ndarray:
    m, d = w1.shape
    hidden = []
    for i in range(m):
        z = float(b1[i])
        for k in range(d):
            z += float(w1[i, k]) * float(v[k])
        hidden.append(max(z, 0.0))
    out = []
    for o in range(4):
        z = float(b2[o])
        for i in range(m):
            z += float(w2[o, i]) * hidden[i]
        out.append(1.0 / (1.0 + math.exp(-z)))
    return np.array(out)


def dense_pca(samples: np.ndarray):
    """Leading eigenpair of the population covariance of raw descriptors,
    computed the textbook way: center, form the Gram matrix, eigh."""
    x = np.asarray(samples, dtype=np.float64)
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / x.shape[0]
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    return mean, eigenvectors[:, -1], float(eigenvalues[-1])


def central_difference(loss_fn, arrays: list[np.ndarray], eps: float = 1e-5):
    """Central-difference gradients of a scalar function of several arrays."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr, dtype=np.float64)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_fn()
            flat[i] = orig - eps
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * eps)
        grads.append(g)
    return grads
