"""Numpy fallback implementations of the hot kernels.

Semantics must match masktext._kernels._speed; keep the two in sync.
"""

from __future__ import annotations

import math

import numpy as np


def majority_downsample(mask: np.ndarray, row_edges: np.ndarray,
                        col_edges: np.ndarray, n_labels: int) -> np.ndarray:
    """Per-cell most-frequent label id, ties broken by smallest id.

    Cell (r, c) covers pixels [row_edges[r], row_edges[r+1]) x
    [col_edges[c], col_edges[c+1]).
    """
    h, w = mask.shape
    rows = len(row_edges) - 1
    cols = len(col_edges) - 1
    cell_r = np.searchsorted(row_edges, np.arange(h), side="right") - 1
    cell_c = np.searchsorted(col_edges, np.arange(w), side="right") - 1
    cell_idx = cell_r[:, None] * cols + cell_c[None, :]
    flat = cell_idx.ravel() * n_labels + mask.ravel()
    counts = np.bincount(flat, minlength=rows * cols * n_labels)
    counts = counts.reshape(rows * cols, n_labels)
    # argmax returns the first maximum, i.e. the smallest label id on ties
    return counts.argmax(axis=1).astype(np.int32).reshape(rows, cols)


def _gaussian_taps(stddev: float) -> np.ndarray:
    radius = max(1, int(math.ceil(3.0 * stddev)))
    offs = np.arange(-radius, radius + 1, dtype=np.float64)
    return np.exp(-(offs**2) / (2.0 * stddev * stddev)).astype(np.float32)


def _sep_conv2d(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Zero-padded separable convolution with a symmetric tap vector."""
    radius = len(taps) // 2
    h, w = img.shape
    out = np.zeros_like(img)
    tmp = np.zeros_like(img)
    for k, t in enumerate(taps):
        d = k - radius
        if d < 0:
            tmp[:, : w + d] += t * img[:, -d:]
        elif d > 0:
            tmp[:, d:] += t * img[:, : w - d]
        else:
            tmp += t * img
    for k, t in enumerate(taps):
        d = k - radius
        if d < 0:
            out[: h + d, :] += t * tmp[-d:, :]
        elif d > 0:
            out[d:, :] += t * tmp[: h - d, :]
        else:
            out += t * tmp
    return out


def crf_mean_field(unary: np.ndarray, rgb: np.ndarray,
                   bilateral_weight: float, bilateral_stddev: float,
                   color_stddev: float, gaussian_weight: float,
                   gaussian_stddev: float, iterations: int) -> np.ndarray:
    """Two-label dense-CRF mean field with truncated-neighborhood kernels.

    unary: (2, H, W) float32 negative log-probabilities.
    rgb:   (H, W, 3) float32.
    Returns the (2, H, W) label distribution after `iterations` updates.
    Pairwise terms use a Potts model with an appearance (bilateral) kernel
    and a smoothness (Gaussian) kernel, each truncated at radius
    ceil(3 * stddev); the self term (j == i) is excluded.
    """
    _, h, w = unary.shape
    q = np.empty_like(unary)
    _softmax2(-unary, q)

    use_bilateral = bilateral_weight != 0.0
    use_gaussian = gaussian_weight != 0.0

    offsets: list[tuple[int, int, float]] = []
    if use_bilateral:
        radius = max(1, int(math.ceil(3.0 * bilateral_stddev)))
        radius = min(radius, max(h, w) - 1)
        inv_sp = 1.0 / (2.0 * bilateral_stddev * bilateral_stddev)
        for dy in range(-radius, radius + 1):
            for dx in range(-radius, radius + 1):
                if dx == 0 and dy == 0:
                    continue
                d2 = dx * dx + dy * dy
                if d2 > radius * radius:
                    continue
                offsets.append((dy, dx, math.exp(-d2 * inv_sp)))
        inv_col = 1.0 / (2.0 * color_stddev * color_stddev)
    taps = _gaussian_taps(gaussian_stddev) if use_gaussian else None

    for _ in range(iterations):
        msg = np.zeros_like(q)
        if use_gaussian:
            for lbl in range(2):
                blur = _sep_conv2d(q[lbl], taps) - q[lbl]  # drop self term
                msg[lbl] += np.float32(gaussian_weight) * blur
        if use_bilateral:
            for dy, dx, w_sp in offsets:
                ys0, ys1 = max(0, dy), min(h, h + dy)
                xs0, xs1 = max(0, dx), min(w, w + dx)
                if ys0 >= ys1 or xs0 >= xs1:
                    continue
                dst = (slice(ys0, ys1), slice(xs0, xs1))
                src = (slice(ys0 - dy, ys1 - dy), slice(xs0 - dx, xs1 - dx))
                diff = rgb[dst] - rgb[src]
                k = np.exp(-(diff * diff).sum(axis=-1) * inv_col) * np.float32(w_sp)
                k *= np.float32(bilateral_weight)
                msg[0][dst] += k * q[0][src]
                msg[1][dst] += k * q[1][src]
        # Potts compatibility: each label is penalized by the other's mass
        energy = np.empty_like(q)
        energy[0] = unary[0] + msg[1]
        energy[1] = unary[1] + msg[0]
        _softmax2(-energy, q)
    return q


def _softmax2(logits: np.ndarray, out: np.ndarray) -> None:
    m = np.maximum(logits[0], logits[1])
    e0 = np.exp(logits[0] - m)
    e1 = np.exp(logits[1] - m)
    z = e0 + e1
    out[0] = e0 / z
    out[1] = e1 / z
