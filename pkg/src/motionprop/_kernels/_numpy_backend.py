"""Pure-NumPy implementations of the hot kernels.

Fallback used when the compiled extension is unavailable (or forced via
MOTIONPROP_PURE=1). Signatures and results match `_native` exactly; the
accumulation order of col2im/splat is kept identical so the two backends
agree bitwise.
"""

from __future__ import annotations

import numpy as np


def im2col(x, kh, kw, sh, sw, ph, pw, dh, dw):
    """Unfold (N, C, H, W) into (N, C*kh*kw, Ho*Wo) patch columns."""
    n, c, h, w = x.shape
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    hp, wp = x.shape[2], x.shape[3]
    ho = (hp - (dh * (kh - 1) + 1)) // sh + 1
    wo = (wp - (dw * (kw - 1) + 1)) // sw + 1
    sn, sc, sy, sx = x.strides
    win = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, c, kh, kw, ho, wo),
        strides=(sn, sc, sy * dh, sx * dw, sy * sh, sx * sw),
    )
    return win.reshape(n, c * kh * kw, ho * wo)


def col2im(cols, n, c, h, w, kh, kw, sh, sw, ph, pw, dh, dw):
    """Adjoint of im2col: scatter-add columns back into (N, C, H, W)."""
    hp, wp = h + 2 * ph, w + 2 * pw
    ho = (hp - (dh * (kh - 1) + 1)) // sh + 1
    wo = (wp - (dw * (kw - 1) + 1)) // sw + 1
    cols = cols.reshape(n, c, kh, kw, ho, wo)
    xpad = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            xpad[:, :, i * dh : i * dh + sh * ho : sh, j * dw : j * dw + sw * wo : sw] += cols[:, :, i, j]
    if ph or pw:
        return np.ascontiguousarray(xpad[:, :, ph : ph + h, pw : pw + w])
    return xpad


def edt_sqdist(edges):
    """Exact squared Euclidean distance to the nearest True pixel.

    Two-pass transform: per-column scan, then per-row lower envelope of
    parabolas. All arithmetic is on integers, so the result is exact.
    Requires at least one True pixel.
    """
    edges = np.asarray(edges, dtype=bool)
    h, w = edges.shape
    big = h * h + w * w + 1

    # per-column nearest-edge distance along y
    g = np.full((h, w), big, dtype=np.int64)
    g[edges] = 0
    for y in range(1, h):
        np.minimum(g[y], g[y - 1] + 1, out=g[y])
    for y in range(h - 2, -1, -1):
        np.minimum(g[y], g[y + 1] + 1, out=g[y])
    f = g * g  # int64; fits easily even at the no-edge sentinel

    out = np.empty((h, w), dtype=np.int64)
    v = np.empty(w, dtype=np.int64)  # abscissas of envelope parabolas
    z = np.empty(w + 1, dtype=np.float64)  # boundaries between them
    for y in range(h):
        fy = f[y]
        k = 0
        v[0] = 0
        z[0] = -np.inf
        z[1] = np.inf
        for q in range(1, w):
            s = float(fy[q] + q * q - fy[v[k]] - v[k] * v[k]) / (2 * q - 2 * v[k])
            while s <= z[k]:
                k -= 1
                s = float(fy[q] + q * q - fy[v[k]] - v[k] * v[k]) / (2 * q - 2 * v[k])
            k += 1
            v[k] = q
            z[k] = s
            z[k + 1] = np.inf
        k = 0
        for q in range(w):
            while z[k + 1] < q:
                k += 1
            p = v[k]
            out[y, q] = (q - p) * (q - p) + fy[p]
    return out


def splat_add(values, u, v, acc, wsum):
    """Forward bilinear splat: values[y, x, :] lands at (x + u, y + v).

    Accumulates into acc (H, W, K) and wsum (H, W), corner-major so the
    float addition order matches the compiled kernel.
    """
    h, w, _ = values.shape
    xs = np.arange(w, dtype=np.float64)[None, :] + u
    ys = np.arange(h, dtype=np.float64)[:, None] + v
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0
    flat_acc = acc.reshape(-1, acc.shape[2])
    flat_w = wsum.reshape(-1)
    flat_vals = values.reshape(-1, values.shape[2])
    for cy, cx, wt in (
        (y0, x0, (1 - fy) * (1 - fx)),
        (y0, x0 + 1, (1 - fy) * fx),
        (y0 + 1, x0, fy * (1 - fx)),
        (y0 + 1, x0 + 1, fy * fx),
    ):
        ok = (cy >= 0) & (cy < h) & (cx >= 0) & (cx < w)
        idx = (cy[ok] * w + cx[ok]).ravel()
        wt_ok = wt[ok].ravel()
        np.add.at(flat_acc, idx, flat_vals[ok.ravel()] * wt_ok[:, None])
        np.add.at(flat_w, idx, wt_ok)
