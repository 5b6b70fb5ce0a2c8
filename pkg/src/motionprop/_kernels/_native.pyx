# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: patch unfolding for convolutions, the exact
Euclidean distance transform behind guidance sampling, and forward
bilinear splatting. Results match the NumPy fallback bitwise."""

import numpy as np

cimport cython
cimport numpy as cnp

cnp.import_array()

ctypedef fused real:
    float
    double


def im2col(real[:, :, :, ::1] x, int kh, int kw, int sh, int sw,
           int ph, int pw, int dh, int dw):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t hp = h + 2 * ph, wp = w + 2 * pw
    cdef Py_ssize_t ho = (hp - (dh * (kh - 1) + 1)) // sh + 1
    cdef Py_ssize_t wo = (wp - (dw * (kw - 1) + 1)) // sw + 1
    if real is float:
        dt = np.float32
    else:
        dt = np.float64
    out_arr = np.zeros((n, c * kh * kw, ho * wo), dtype=dt)
    cdef real[:, :, ::1] out = out_arr
    cdef Py_ssize_t b, ch, i, j, oy, ox, iy, ix, row
    for b in range(n):
        for ch in range(c):
            for i in range(kh):
                for j in range(kw):
                    row = (ch * kh + i) * kw + j
                    for oy in range(ho):
                        iy = oy * sh + i * dh - ph
                        if iy < 0 or iy >= h:
                            continue
                        for ox in range(wo):
                            ix = ox * sw + j * dw - pw
                            if 0 <= ix < w:
                                out[b, row, oy * wo + ox] = x[b, ch, iy, ix]
    return out_arr


def col2im(real[:, :, ::1] cols, Py_ssize_t n, Py_ssize_t c, Py_ssize_t h, Py_ssize_t w,
           int kh, int kw, int sh, int sw, int ph, int pw, int dh, int dw):
    cdef Py_ssize_t hp = h + 2 * ph, wp = w + 2 * pw
    cdef Py_ssize_t ho = (hp - (dh * (kh - 1) + 1)) // sh + 1
    cdef Py_ssize_t wo = (wp - (dw * (kw - 1) + 1)) // sw + 1
    if real is float:
        dt = np.float32
    else:
        dt = np.float64
    out_arr = np.zeros((n, c, h, w), dtype=dt)
    cdef real[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, ch, i, j, oy, ox, iy, ix, row
    # kernel-position outer loops keep the accumulation order identical
    # to the slice-add fallback
    for i in range(kh):
        for j in range(kw):
            for b in range(n):
                for ch in range(c):
                    row = (ch * kh + i) * kw + j
                    for oy in range(ho):
                        iy = oy * sh + i * dh - ph
                        if iy < 0 or iy >= h:
                            continue
                        for ox in range(wo):
                            ix = ox * sw + j * dw - pw
                            if 0 <= ix < w:
                                out[b, ch, iy, ix] += cols[b, row, oy * wo + ox]
    return out_arr


def edt_sqdist(cnp.uint8_t[:, ::1] edges):
    cdef Py_ssize_t h = edges.shape[0], w = edges.shape[1]
    cdef cnp.int64_t big = h * h + w * w + 1
    g_arr = np.empty((h, w), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] g = g_arr
    cdef Py_ssize_t x, y, q, k
    for y in range(h):
        for x in range(w):
            g[y, x] = 0 if edges[y, x] else big
    for y in range(1, h):
        for x in range(w):
            if g[y - 1, x] + 1 < g[y, x]:
                g[y, x] = g[y - 1, x] + 1
    for y in range(h - 2, -1, -1):
        for x in range(w):
            if g[y + 1, x] + 1 < g[y, x]:
                g[y, x] = g[y + 1, x] + 1

    out_arr = np.empty((h, w), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] out = out_arr
    f_arr = np.empty(w, dtype=np.int64)
    v_arr = np.empty(w, dtype=np.int64)
    z_arr = np.empty(w + 1, dtype=np.float64)
    cdef cnp.int64_t[::1] f = f_arr
    cdef cnp.int64_t[::1] v = v_arr
    cdef double[::1] z = z_arr
    cdef double s
    cdef cnp.int64_t p
    for y in range(h):
        for q in range(w):
            f[q] = g[y, q] * g[y, q]
        k = 0
        v[0] = 0
        z[0] = -np.inf
        z[1] = np.inf
        for q in range(1, w):
            s = <double>(f[q] + q * q - f[v[k]] - v[k] * v[k]) / <double>(2 * q - 2 * v[k])
            while s <= z[k]:
                k -= 1
                s = <double>(f[q] + q * q - f[v[k]] - v[k] * v[k]) / <double>(2 * q - 2 * v[k])
            k += 1
            v[k] = q
            z[k] = s
            z[k + 1] = np.inf
        k = 0
        for q in range(w):
            while z[k + 1] < q:
                k += 1
            p = v[k]
            out[y, q] = (q - p) * (q - p) + f[p]
    return out_arr


def splat_add(double[:, :, ::1] values, double[:, ::1] u, double[:, ::1] v,
              double[:, :, ::1] acc, double[:, ::1] wsum):
    cdef Py_ssize_t h = values.shape[0], w = values.shape[1], k = values.shape[2]
    cdef Py_ssize_t y, x, ci, cy, cx, ch
    cdef double xs, ys, fx, fy, wt
    cdef long x0, y0
    # corner-major to match the fallback's np.add.at call order
    for ci in range(4):
        for y in range(h):
            for x in range(w):
                xs = x + u[y, x]
                ys = y + v[y, x]
                x0 = <long>xs
                if xs < x0:
                    x0 -= 1
                y0 = <long>ys
                if ys < y0:
                    y0 -= 1
                fx = xs - x0
                fy = ys - y0
                if ci == 0:
                    cy = y0
                    cx = x0
                    wt = (1.0 - fy) * (1.0 - fx)
                elif ci == 1:
                    cy = y0
                    cx = x0 + 1
                    wt = (1.0 - fy) * fx
                elif ci == 2:
                    cy = y0 + 1
                    cx = x0
                    wt = fy * (1.0 - fx)
                else:
                    cy = y0 + 1
                    cx = x0 + 1
                    wt = fy * fx
                if 0 <= cy < h and 0 <= cx < w:
                    for ch in range(k):
                        acc[cy, cx, ch] += values[y, x, ch] * wt
                    wsum[cy, cx] += wt
