"""Bilinear resampling as small dense matrices.

A 2-D bilinear resize separates into two 1-D linear maps, one per axis
(half-pixel-centre convention, edges clamped). Representing each map as
a dense (n_out, n_in) matrix keeps resizes as BLAS matmuls and makes the
exact adjoint (for backprop through upsampling) a transpose.
"""

from __future__ import annotations

import numpy as np

_cache: dict[tuple[int, int], np.ndarray] = {}


def resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) float64 matrix; rows sum to 1."""
    key = (n_in, n_out)
    hit = _cache.get(key)
    if hit is not None:
        return hit
    m = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for o in range(n_out):
        x = (o + 0.5) * scale - 0.5
        if x < 0.0:
            x = 0.0
        i0 = int(np.floor(x))
        if i0 > n_in - 1:
            i0 = n_in - 1
        i1 = min(i0 + 1, n_in - 1)
        t = x - i0
        m[o, i0] += 1.0 - t
        m[o, i1] += t
    _cache[key] = m
    return m


def resize_plane(plane: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Bilinearly resize one (H, W) float array."""
    my = resize_matrix(plane.shape[0], new_h)
    mx = resize_matrix(plane.shape[1], new_w)
    return my @ plane @ mx.T


def resize_stack(stack: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Resize the two trailing axes of (..., H, W)."""
    my = resize_matrix(stack.shape[-2], new_h).astype(stack.dtype)
    mx = resize_matrix(stack.shape[-1], new_w).astype(stack.dtype)
    return np.matmul(np.matmul(my, stack), mx.T)
