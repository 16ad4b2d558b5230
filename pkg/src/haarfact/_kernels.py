"""Compiled kernels for expectations over independent random signs."""

from __future__ import annotations

import os

import numpy as np
from numba import config, njit, prange

if "NUMBA_THREADING_LAYER" not in os.environ:
    config.THREADING_LAYER = "workqueue"


@njit(cache=True)
def _subset_sums(values, start, stop, first):
    count = stop - start
    size = 1 << count
    out = np.empty(size)
    out[0] = first
    filled = 1
    for j in range(start, stop):
        w = values[j]
        for i in range(filled):
            base = out[i]
            out[i] = base + w
            out[filled + i] = base - w
        filled *= 2
    return out


@njit(cache=True)
def _expected_abs_row(row, k):
    if k == 0:
        return 0.0
    if k == 1:
        return abs(row[0])
    # the first sign can be fixed by symmetry of the distribution
    rest = k - 1
    half = rest // 2
    left = _subset_sums(row, 1, 1 + half, row[0])
    right = np.sort(_subset_sums(row, 1 + half, k, 0.0))
    prefix = np.empty(right.shape[0] + 1)
    prefix[0] = 0.0
    for i in range(right.shape[0]):
        prefix[i + 1] = prefix[i] + right[i]
    total_right = prefix[right.shape[0]]
    n_right = right.shape[0]
    acc = 0.0
    for i in range(left.shape[0]):
        a = left[i]
        idx = np.searchsorted(right, -a)
        low = prefix[idx]
        acc += (total_right - low) + a * (n_right - idx) - low - a * idx
    return acc / (left.shape[0] * n_right)


@njit(cache=True, parallel=True)
def expected_abs_exact(rows, counts):
    """``E|sum_j eps_j rows[r, j]|`` over the first ``counts[r]`` entries of each row."""
    out = np.empty(rows.shape[0])
    for r in prange(rows.shape[0]):
        out[r] = _expected_abs_row(rows[r], counts[r])
    return out


@njit(cache=True)
def expected_abs_sampled(row, k, signs):
    """Mean and standard deviation of ``|sum eps_j row[j]|`` over sampled sign rows."""
    samples = signs.shape[0]
    total = 0.0
    total_sq = 0.0
    for s in range(samples):
        acc = 0.0
        for j in range(k):
            acc += signs[s, j] * row[j]
        v = abs(acc)
        total += v
        total_sq += v * v
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0)
    return mean, np.sqrt(var)
