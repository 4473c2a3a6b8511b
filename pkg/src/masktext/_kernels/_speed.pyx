# Compiled twins of masktext._kernels._pure; keep semantics in sync.

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, exp

cnp.import_array()


def majority_downsample(cnp.int32_t[:, :] mask, cnp.int64_t[:] row_edges,
                        cnp.int64_t[:] col_edges, int n_labels):
    cdef int rows = row_edges.shape[0] - 1
    cdef int cols = col_edges.shape[0] - 1
    cdef cnp.ndarray[cnp.int32_t, ndim=2] out = np.empty((rows, cols), dtype=np.int32)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] counts = np.zeros(n_labels, dtype=np.int64)
    cdef cnp.int64_t[:] cview = counts
    cdef int r, c, lbl, best
    cdef cnp.int64_t y, x, best_count
    for r in range(rows):
        for c in range(cols):
            for lbl in range(n_labels):
                cview[lbl] = 0
            for y in range(row_edges[r], row_edges[r + 1]):
                for x in range(col_edges[c], col_edges[c + 1]):
                    cview[mask[y, x]] += 1
            best = 0
            best_count = cview[0]
            for lbl in range(1, n_labels):
                if cview[lbl] > best_count:
                    best = lbl
                    best_count = cview[lbl]
            out[r, c] = best
    return out


cdef void _softmax2(cnp.float32_t[:, :, :] energy, cnp.float32_t[:, :, :] q,
                    int h, int w) noexcept nogil:
    cdef int y, x
    cdef double e0, e1, m, p0, p1
    for y in range(h):
        for x in range(w):
            e0 = -energy[0, y, x]
            e1 = -energy[1, y, x]
            m = e0 if e0 > e1 else e1
            p0 = exp(e0 - m)
            p1 = exp(e1 - m)
            q[0, y, x] = <cnp.float32_t>(p0 / (p0 + p1))
            q[1, y, x] = <cnp.float32_t>(p1 / (p0 + p1))


def crf_mean_field(cnp.float32_t[:, :, :] unary, cnp.float32_t[:, :, :] rgb,
                   double bilateral_weight, double bilateral_stddev,
                   double color_stddev, double gaussian_weight,
                   double gaussian_stddev, int iterations):
    cdef int h = unary.shape[1]
    cdef int w = unary.shape[2]
    cdef cnp.ndarray[cnp.float32_t, ndim=3] q_arr = np.empty((2, h, w), dtype=np.float32)
    cdef cnp.ndarray[cnp.float32_t, ndim=3] energy_arr = np.empty((2, h, w), dtype=np.float32)
    cdef cnp.ndarray[cnp.float32_t, ndim=3] msg_arr = np.empty((2, h, w), dtype=np.float32)
    cdef cnp.ndarray[cnp.float32_t, ndim=3] tmp_arr = np.empty((2, h, w), dtype=np.float32)
    cdef cnp.float32_t[:, :, :] q = q_arr
    cdef cnp.float32_t[:, :, :] energy = energy_arr
    cdef cnp.float32_t[:, :, :] msg = msg_arr
    cdef cnp.float32_t[:, :, :] tmp = tmp_arr

    cdef bint use_bilateral = bilateral_weight != 0.0
    cdef bint use_gaussian = gaussian_weight != 0.0

    # Bilateral offsets within a disc of radius ceil(3*stddev), self excluded.
    cdef int radius = 0
    cdef list off_list = []
    cdef double inv_sp = 0.0, inv_col = 0.0
    cdef int dy, dx
    if use_bilateral:
        radius = max(1, <int>ceil(3.0 * bilateral_stddev))
        if radius > max(h, w) - 1:
            radius = max(h, w) - 1
        inv_sp = 1.0 / (2.0 * bilateral_stddev * bilateral_stddev)
        inv_col = 1.0 / (2.0 * color_stddev * color_stddev)
        for dy in range(-radius, radius + 1):
            for dx in range(-radius, radius + 1):
                if dx == 0 and dy == 0:
                    continue
                if dx * dx + dy * dy > radius * radius:
                    continue
                off_list.append((dy, dx, exp(-(dx * dx + dy * dy) * inv_sp)))
    cdef cnp.ndarray[cnp.int32_t, ndim=2] offs_arr = np.array(
        [(o[0], o[1]) for o in off_list], dtype=np.int32).reshape(len(off_list), 2)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] offw_arr = np.array(
        [o[2] for o in off_list], dtype=np.float64)
    cdef cnp.int32_t[:, :] offs = offs_arr
    cdef cnp.float64_t[:] offw = offw_arr
    cdef int n_off = offs_arr.shape[0]

    # Gaussian taps at radius ceil(3*stddev).
    cdef int gr = 0
    cdef cnp.ndarray[cnp.float32_t, ndim=1] taps_arr
    if use_gaussian:
        gr = max(1, <int>ceil(3.0 * gaussian_stddev))
        taps_arr = np.exp(
            -(np.arange(-gr, gr + 1, dtype=np.float64) ** 2)
            / (2.0 * gaussian_stddev * gaussian_stddev)).astype(np.float32)
    else:
        taps_arr = np.zeros(1, dtype=np.float32)
    cdef cnp.float32_t[:] taps = taps_arr

    cdef int it, lbl, y, x, k, ny, nx
    cdef double acc, dist, dr, dg, db, kv

    for y in range(h):
        for x in range(w):
            energy[0, y, x] = unary[0, y, x]
            energy[1, y, x] = unary[1, y, x]
    _softmax2(energy, q, h, w)

    for it in range(iterations):
        with nogil:
            for lbl in range(2):
                for y in range(h):
                    for x in range(w):
                        msg[lbl, y, x] = 0.0
            if use_gaussian:
                # separable blur minus the self term
                for lbl in range(2):
                    for y in range(h):
                        for x in range(w):
                            acc = 0.0
                            for k in range(-gr, gr + 1):
                                nx = x + k
                                if 0 <= nx < w:
                                    acc += taps[k + gr] * q[lbl, y, nx]
                            tmp[lbl, y, x] = <cnp.float32_t>acc
                    for y in range(h):
                        for x in range(w):
                            acc = 0.0
                            for k in range(-gr, gr + 1):
                                ny = y + k
                                if 0 <= ny < h:
                                    acc += taps[k + gr] * tmp[lbl, ny, x]
                            msg[lbl, y, x] += <cnp.float32_t>(
                                gaussian_weight * (acc - q[lbl, y, x]))
            if use_bilateral:
                for y in range(h):
                    for x in range(w):
                        for k in range(n_off):
                            ny = y + offs[k, 0]
                            nx = x + offs[k, 1]
                            if ny < 0 or ny >= h or nx < 0 or nx >= w:
                                continue
                            dr = rgb[y, x, 0] - rgb[ny, nx, 0]
                            dg = rgb[y, x, 1] - rgb[ny, nx, 1]
                            db = rgb[y, x, 2] - rgb[ny, nx, 2]
                            dist = dr * dr + dg * dg + db * db
                            kv = bilateral_weight * offw[k] * exp(-dist * inv_col)
                            msg[0, y, x] += <cnp.float32_t>(kv * q[0, ny, nx])
                            msg[1, y, x] += <cnp.float32_t>(kv * q[1, ny, nx])
            for y in range(h):
                for x in range(w):
                    energy[0, y, x] = unary[0, y, x] + msg[1, y, x]
                    energy[1, y, x] = unary[1, y, x] + msg[0, y, x]
            _softmax2(energy, q, h, w)
    return q_arr
