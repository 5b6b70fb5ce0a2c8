"""Hot-kernel backend selection.

The compiled Cython extension is preferred; the pure-NumPy fallback is
used when it is missing or when MOTIONPROP_PURE=1 is set. Both expose
the same four primitives with bitwise-identical results.
"""

from __future__ import annotations

import os

import numpy as np

from . import _numpy_backend

if os.environ.get("MOTIONPROP_PURE", "") not in ("", "0"):
    _impl = _numpy_backend
    BACKEND = "python"
else:
    try:
        from . import _native as _impl  # type: ignore[no-redef]

        BACKEND = "native"
    except ImportError:
        _impl = _numpy_backend
        BACKEND = "python"


def get_backend(name: str):
    """Return a backend module by name ('native' or 'python')."""
    if name == "python":
        return _numpy_backend
    from . import _native

    return _native


def im2col(x, kh, kw, sh=1, sw=1, ph=0, pw=0, dh=1, dw=1):
    return _impl.im2col(np.ascontiguousarray(x), kh, kw, sh, sw, ph, pw, dh, dw)


def col2im(cols, n, c, h, w, kh, kw, sh=1, sw=1, ph=0, pw=0, dh=1, dw=1):
    return _impl.col2im(np.ascontiguousarray(cols), n, c, h, w, kh, kw, sh, sw, ph, pw, dh, dw)


def edt_sqdist(edges):
    """Exact squared distance to the nearest True pixel (needs >= 1)."""
    return _impl.edt_sqdist(np.ascontiguousarray(edges, dtype=np.uint8))


def splat_add(values, u, v, acc, wsum):
    _impl.splat_add(
        np.ascontiguousarray(values, dtype=np.float64),
        np.ascontiguousarray(u, dtype=np.float64),
        np.ascontiguousarray(v, dtype=np.float64),
        acc,
        wsum,
    )
