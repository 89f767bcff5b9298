"""Sliding-window extrema with a monotonic deque (O(n) per sweep)."""

from __future__ import annotations

from collections import deque

import numpy as np


def _sliding(values, width, better):
    vals = np.asarray(values, dtype=float).tolist()
    n = len(vals)
    if width < 1:
        raise ValueError(f"window width must be positive, got {width}")
    if width > n:
        raise ValueError(f"window width {width} exceeds sequence length {n}")
    out = np.empty(n - width + 1)
    arg = np.empty(n - width + 1, dtype=np.int64)
    dq = deque()
    for j, v in enumerate(vals):
        # indices in dq have strictly "better" values from front to back
        while dq and not better(vals[dq[-1]], v):
            dq.pop()
        dq.append(j)
        start = j - width + 1
        if dq[0] < start:
            dq.popleft()
        if start >= 0:
            out[start] = vals[dq[0]]
            arg[start] = dq[0]
    return out, arg


def sliding_max(values, width):
    """``out[s] = max(values[s:s+width])`` and the index attaining it."""
    return _sliding(values, width, lambda old, new: old > new)


def sliding_min(values, width):
    """``out[s] = min(values[s:s+width])`` and the index attaining it."""
    return _sliding(values, width, lambda old, new: old < new)


def running_min(values, reverse=False):
    """Prefix minima (or suffix minima with ``reverse``) with attaining indices."""
    vals = np.asarray(values, dtype=float)
    n = len(vals)
    out = np.empty(n)
    arg = np.empty(n, dtype=np.int64)
    order = range(n - 1, -1, -1) if reverse else range(n)
    best, best_j = np.inf, -1
    for j in order:
        if vals[j] < best:
            best, best_j = vals[j], j
        out[j] = best
        arg[j] = best_j
    return out, arg
