"""Hot numeric kernels: numba-jitted loops with pure-numpy fallbacks.

The jitted path is the default. Set ``ACTIVEST_NO_NUMBA=1`` before import to
select the numpy fallbacks (same arithmetic, slower on large clouds).
``scripts/bench_kernels.py`` times both paths side by side.
"""

from __future__ import annotations

import math
import os

import numpy as np


def _env_flag(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() in ("1", "true", "yes", "on")


NUMBA_DISABLED = _env_flag("ACTIVEST_NO_NUMBA")

try:
    if NUMBA_DISABLED:
        raise ImportError("numba disabled via ACTIVEST_NO_NUMBA")
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False
    _njit = None


# ---------------------------------------------------------------------------
# Loop implementations (numba-compilable; also the fallback for region_grow)
# ---------------------------------------------------------------------------


def _eigvals_sym3(a00, a01, a02, a11, a12, a22):
    """Ascending eigenvalues of a symmetric 3x3 matrix, trigonometric form."""
    p1 = a01 * a01 + a02 * a02 + a12 * a12
    q = (a00 + a11 + a22) / 3.0
    b00 = a00 - q
    b11 = a11 - q
    b22 = a22 - q
    p2 = b00 * b00 + b11 * b11 + b22 * b22 + 2.0 * p1
    if p2 <= 0.0:
        return q, q, q
    p = math.sqrt(p2 / 6.0)
    # r = det((A - qI)/p) / 2, clamped against round-off
    c00 = b00 / p
    c01 = a01 / p
    c02 = a02 / p
    c11 = b11 / p
    c12 = a12 / p
    c22 = b22 / p
    r = (
        c00 * (c11 * c22 - c12 * c12)
        - c01 * (c01 * c22 - c12 * c02)
        + c02 * (c01 * c12 - c11 * c02)
    ) / 2.0
    if r > 1.0:
        r = 1.0
    elif r < -1.0:
        r = -1.0
    phi = math.acos(r) / 3.0
    e_hi = q + 2.0 * p * math.cos(phi)
    e_lo = q + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0)
    e_mid = 3.0 * q - e_hi - e_lo
    return e_lo, e_mid, e_hi


def _local_covariances_loop(positions, neighbors):
    n, k = neighbors.shape
    cov = np.zeros((n, 3, 3))
    for i in range(n):
        m0 = 0.0
        m1 = 0.0
        m2 = 0.0
        cnt = 0
        for jj in range(k):
            j = neighbors[i, jj]
            if j < 0:
                continue
            m0 += positions[j, 0]
            m1 += positions[j, 1]
            m2 += positions[j, 2]
            cnt += 1
        if cnt == 0:
            continue
        m0 /= cnt
        m1 /= cnt
        m2 /= cnt
        c00 = 0.0
        c01 = 0.0
        c02 = 0.0
        c11 = 0.0
        c12 = 0.0
        c22 = 0.0
        for jj in range(k):
            j = neighbors[i, jj]
            if j < 0:
                continue
            d0 = positions[j, 0] - m0
            d1 = positions[j, 1] - m1
            d2 = positions[j, 2] - m2
            c00 += d0 * d0
            c01 += d0 * d1
            c02 += d0 * d2
            c11 += d1 * d1
            c12 += d1 * d2
            c22 += d2 * d2
        inv = 1.0 / cnt
        cov[i, 0, 0] = c00 * inv
        cov[i, 0, 1] = c01 * inv
        cov[i, 0, 2] = c02 * inv
        cov[i, 1, 0] = c01 * inv
        cov[i, 1, 1] = c11 * inv
        cov[i, 1, 2] = c12 * inv
        cov[i, 2, 0] = c02 * inv
        cov[i, 2, 1] = c12 * inv
        cov[i, 2, 2] = c22 * inv
    return cov


def _shape_descriptors_loop(positions, neighbors):
    """Per-point (linearity, planarity, scattering) from k-NN covariance."""
    n, k = neighbors.shape
    out = np.zeros((n, 3))
    for i in range(n):
        m0 = 0.0
        m1 = 0.0
        m2 = 0.0
        cnt = 0
        for jj in range(k):
            j = neighbors[i, jj]
            if j < 0:
                continue
            m0 += positions[j, 0]
            m1 += positions[j, 1]
            m2 += positions[j, 2]
            cnt += 1
        if cnt == 0:
            continue
        m0 /= cnt
        m1 /= cnt
        m2 /= cnt
        c00 = 0.0
        c01 = 0.0
        c02 = 0.0
        c11 = 0.0
        c12 = 0.0
        c22 = 0.0
        for jj in range(k):
            j = neighbors[i, jj]
            if j < 0:
                continue
            d0 = positions[j, 0] - m0
            d1 = positions[j, 1] - m1
            d2 = positions[j, 2] - m2
            c00 += d0 * d0
            c01 += d0 * d1
            c02 += d0 * d2
            c11 += d1 * d1
            c12 += d1 * d2
            c22 += d2 * d2
        inv = 1.0 / cnt
        lo, mid, hi = _eigvals_sym3(
            c00 * inv, c01 * inv, c02 * inv, c11 * inv, c12 * inv, c22 * inv
        )
        if lo < 0.0:
            lo = 0.0
        if mid < 0.0:
            mid = 0.0
        if hi <= 1e-12:
            continue
        out[i, 0] = (hi - mid) / hi
        out[i, 1] = (mid - lo) / hi
        out[i, 2] = lo / hi
    return out


def _region_grow_loop(neighbors, distances, normals, colors, cos_min, color_max_sq, dist_max):
    """Seeded region growing over the k-NN graph.

    Seeds in ascending point order; a neighbor joins iff its normal is within
    the angle threshold of the region *seed* normal, its color is within the
    threshold of the running region mean, and the connecting edge is no longer
    than dist_max. Returns one region id per point.
    """
    n, k = neighbors.shape
    labels = np.full(n, -1, np.int64)
    queue = np.empty(n, np.int64)
    n_regions = 0
    for seed in range(n):
        if labels[seed] >= 0:
            continue
        rid = n_regions
        n_regions += 1
        labels[seed] = rid
        queue[0] = seed
        head = 0
        tail = 1
        sn0 = normals[seed, 0]
        sn1 = normals[seed, 1]
        sn2 = normals[seed, 2]
        csum0 = colors[seed, 0]
        csum1 = colors[seed, 1]
        csum2 = colors[seed, 2]
        cnt = 1.0
        while head < tail:
            i = queue[head]
            head += 1
            for jj in range(k):
                j = neighbors[i, jj]
                if j < 0 or labels[j] >= 0:
                    continue
                if distances[i, jj] > dist_max:
                    continue
                dot = normals[j, 0] * sn0 + normals[j, 1] * sn1 + normals[j, 2] * sn2
                if dot < cos_min:
                    continue
                d0 = colors[j, 0] - csum0 / cnt
                d1 = colors[j, 1] - csum1 / cnt
                d2 = colors[j, 2] - csum2 / cnt
                if d0 * d0 + d1 * d1 + d2 * d2 > color_max_sq:
                    continue
                labels[j] = rid
                queue[tail] = j
                tail += 1
                csum0 += colors[j, 0]
                csum1 += colors[j, 1]
                csum2 += colors[j, 2]
                cnt += 1.0
    return labels


def _segment_sums_loop(values, segment_ids, n_segments):
    n, c = values.shape
    out = np.zeros((n_segments, c))
    for i in range(n):
        s = segment_ids[i]
        for j in range(c):
            out[s, j] += values[i, j]
    return out


def _eigvals_sym3_batch_loop(cov):
    n = cov.shape[0]
    out = np.empty((n, 3))
    for i in range(n):
        lo, mid, hi = _eigvals_sym3(
            cov[i, 0, 0], cov[i, 0, 1], cov[i, 0, 2], cov[i, 1, 1], cov[i, 1, 2], cov[i, 2, 2]
        )
        out[i, 0] = lo
        out[i, 1] = mid
        out[i, 2] = hi
    return out


# ---------------------------------------------------------------------------
# Vectorized numpy fallbacks
# ---------------------------------------------------------------------------


def _gathered_cov_terms(positions, neighbors):
    valid = neighbors >= 0
    idx = np.where(valid, neighbors, 0)
    pts = positions[idx]  # (n, k, 3)
    pts = np.where(valid[:, :, None], pts, 0.0)
    cnt = valid.sum(axis=1).astype(np.float64)
    cnt_safe = np.maximum(cnt, 1.0)
    mean = pts.sum(axis=1) / cnt_safe[:, None]
    d = np.where(valid[:, :, None], pts - mean[:, None, :], 0.0)
    inv = 1.0 / cnt_safe
    c00 = (d[:, :, 0] * d[:, :, 0]).sum(axis=1) * inv
    c01 = (d[:, :, 0] * d[:, :, 1]).sum(axis=1) * inv
    c02 = (d[:, :, 0] * d[:, :, 2]).sum(axis=1) * inv
    c11 = (d[:, :, 1] * d[:, :, 1]).sum(axis=1) * inv
    c12 = (d[:, :, 1] * d[:, :, 2]).sum(axis=1) * inv
    c22 = (d[:, :, 2] * d[:, :, 2]).sum(axis=1) * inv
    empty = cnt == 0
    if np.any(empty):
        for arr in (c00, c01, c02, c11, c12, c22):
            arr[empty] = 0.0
    return c00, c01, c02, c11, c12, c22


def _eigvals_sym3_terms_numpy(c00, c01, c02, c11, c12, c22):
    p1 = c01 * c01 + c02 * c02 + c12 * c12
    q = (c00 + c11 + c22) / 3.0
    b00 = c00 - q
    b11 = c11 - q
    b22 = c22 - q
    p2 = b00 * b00 + b11 * b11 + b22 * b22 + 2.0 * p1
    p = np.sqrt(np.maximum(p2, 0.0) / 6.0)
    p_safe = np.where(p > 0.0, p, 1.0)
    d00 = b00 / p_safe
    d01 = c01 / p_safe
    d02 = c02 / p_safe
    d11 = b11 / p_safe
    d12 = c12 / p_safe
    d22 = b22 / p_safe
    r = (
        d00 * (d11 * d22 - d12 * d12)
        - d01 * (d01 * d22 - d12 * d02)
        + d02 * (d01 * d12 - d11 * d02)
    ) / 2.0
    phi = np.arccos(np.clip(r, -1.0, 1.0)) / 3.0
    e_hi = q + 2.0 * p * np.cos(phi)
    e_lo = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    e_mid = 3.0 * q - e_hi - e_lo
    degenerate = p2 <= 0.0
    e_lo = np.where(degenerate, q, e_lo)
    e_mid = np.where(degenerate, q, e_mid)
    e_hi = np.where(degenerate, q, e_hi)
    return e_lo, e_mid, e_hi


def _local_covariances_numpy(positions, neighbors):
    c00, c01, c02, c11, c12, c22 = _gathered_cov_terms(positions, neighbors)
    n = neighbors.shape[0]
    cov = np.empty((n, 3, 3))
    cov[:, 0, 0] = c00
    cov[:, 0, 1] = c01
    cov[:, 0, 2] = c02
    cov[:, 1, 0] = c01
    cov[:, 1, 1] = c11
    cov[:, 1, 2] = c12
    cov[:, 2, 0] = c02
    cov[:, 2, 1] = c12
    cov[:, 2, 2] = c22
    return cov


def _shape_descriptors_numpy(positions, neighbors):
    terms = _gathered_cov_terms(positions, neighbors)
    e_lo, e_mid, e_hi = _eigvals_sym3_terms_numpy(*terms)
    e_lo = np.maximum(e_lo, 0.0)
    e_mid = np.maximum(e_mid, 0.0)
    out = np.zeros((neighbors.shape[0], 3))
    ok = e_hi > 1e-12
    hi = np.where(ok, e_hi, 1.0)
    out[:, 0] = np.where(ok, (e_hi - e_mid) / hi, 0.0)
    out[:, 1] = np.where(ok, (e_mid - e_lo) / hi, 0.0)
    out[:, 2] = np.where(ok, e_lo / hi, 0.0)
    return out


def _segment_sums_numpy(values, segment_ids, n_segments):
    out = np.zeros((n_segments, values.shape[1]))
    np.add.at(out, segment_ids, values)
    return out


def _eigvals_sym3_batch_numpy(cov):
    e_lo, e_mid, e_hi = _eigvals_sym3_terms_numpy(
        cov[:, 0, 0], cov[:, 0, 1], cov[:, 0, 2], cov[:, 1, 1], cov[:, 1, 2], cov[:, 2, 2]
    )
    return np.stack([e_lo, e_mid, e_hi], axis=1)


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

if HAVE_NUMBA:
    _eigvals_sym3 = _njit(cache=True, inline="always")(_eigvals_sym3)
    local_covariances = _njit(cache=True)(_local_covariances_loop)
    shape_descriptors = _njit(cache=True)(_shape_descriptors_loop)
    region_grow = _njit(cache=True)(_region_grow_loop)
    segment_sums = _njit(cache=True)(_segment_sums_loop)
    eigvals_sym3_batch = _njit(cache=True)(_eigvals_sym3_batch_loop)
else:
    local_covariances = _local_covariances_numpy
    shape_descriptors = _shape_descriptors_numpy
    region_grow = _region_grow_loop
    segment_sums = _segment_sums_numpy
    eigvals_sym3_batch = _eigvals_sym3_batch_numpy
