"""Dense optical flow: .flo interchange I/O, quantization, color wheel
rendering, forward warping, and resizing."""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image

from . import _kernels, bilinear

FLO_MAGIC = b"PIEH"


class FloDecodeError(ValueError):
    """A .flo byte stream could not be decoded."""


class FloMagicError(FloDecodeError):
    pass


class FloDimensionError(FloDecodeError):
    pass


class FloTruncatedError(FloDecodeError):
    pass


class FloNonFiniteError(FloDecodeError):
    pass


@dataclass(frozen=True, eq=False)
class FlowField:
    """Per-pixel (u, v) displacement in pixels/frame, (H, W, 2) float32."""

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float32)
        if v.ndim != 3 or v.shape[2] != 2:
            raise ValueError(f"flow must be (H, W, 2), got {v.shape}")
        if v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError("flow must have positive dimensions")
        if not np.isfinite(v).all():
            raise ValueError("flow contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def u(self) -> np.ndarray:
        return self.values[:, :, 0]

    @property
    def v(self) -> np.ndarray:
        return self.values[:, :, 1]

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u.astype(np.float64), self.v.astype(np.float64))


@dataclass(frozen=True, eq=False)
class QuantizedFlow:
    """Per-pixel (x, y) bin labels after clipping to [-bound, bound] and
    linear binning into num_bins intervals per axis."""

    xbins: np.ndarray
    ybins: np.ndarray
    num_bins: int
    bound: float

    def __post_init__(self):
        if self.num_bins < 2:
            raise ValueError("num_bins must be >= 2")
        if not self.bound > 0:
            raise ValueError("bound must be positive")
        for name in ("xbins", "ybins"):
            a = np.ascontiguousarray(getattr(self, name), dtype=np.int32)
            if a.ndim != 2:
                raise ValueError(f"{name} must be 2-D")
            if a.min(initial=0) < 0 or a.max(initial=0) >= self.num_bins:
                raise ValueError(f"{name} labels out of [0, {self.num_bins})")
            object.__setattr__(self, name, a)
        if self.xbins.shape != self.ybins.shape:
            raise ValueError("xbins and ybins shapes differ")

    @property
    def height(self) -> int:
        return self.xbins.shape[0]

    @property
    def width(self) -> int:
        return self.xbins.shape[1]

    @property
    def bin_width(self) -> float:
        return 2.0 * self.bound / self.num_bins


@dataclass(frozen=True, eq=False)
class FlowImage:
    """8-bit RGB raster, (H, W, 3) uint8."""

    rgb: np.ndarray

    def __post_init__(self):
        a = np.ascontiguousarray(self.rgb, dtype=np.uint8)
        if a.ndim != 3 or a.shape[2] != 3:
            raise ValueError(f"image must be (H, W, 3), got {a.shape}")
        object.__setattr__(self, "rgb", a)

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    def to_png_bytes(self) -> bytes:
        buf = io.BytesIO()
        Image.fromarray(self.rgb).save(buf, format="PNG")
        return buf.getvalue()

    @classmethod
    def from_png_bytes(cls, data: bytes) -> "FlowImage":
        img = Image.open(io.BytesIO(data)).convert("RGB")
        return cls(np.asarray(img))

    def save(self, path) -> None:
        Image.fromarray(self.rgb).save(path)

    @classmethod
    def load(cls, path) -> "FlowImage":
        return cls(np.asarray(Image.open(path).convert("RGB")))


def read_flo(data: bytes) -> FlowField:
    """Decode the Middlebury .flo format: b"PIEH", int32 width, int32
    height, then interleaved (u, v) float32 pairs, all little-endian."""
    if len(data) < 4 or data[:4] != FLO_MAGIC:
        raise FloMagicError("bad magic tag (expected PIEH)")
    if len(data) < 12:
        raise FloTruncatedError("header truncated")
    w, h = struct.unpack_from("<ii", data, 4)
    if w <= 0 or h <= 0:
        raise FloDimensionError(f"non-positive dimensions {w}x{h}")
    expect = 12 + w * h * 8
    if len(data) < expect:
        raise FloTruncatedError(f"payload truncated: {len(data)} bytes, expected {expect}")
    if len(data) > expect:
        raise FloTruncatedError(f"trailing bytes: {len(data)} bytes, expected {expect}")
    values = np.frombuffer(data, dtype="<f4", offset=12).reshape(h, w, 2)
    if not np.isfinite(values).all():
        raise FloNonFiniteError("flow contains non-finite values")
    return FlowField(values)


def write_flo(flow: FlowField) -> bytes:
    """Encode to .flo; read_flo(write_flo(f)) is an exact roundtrip."""
    header = FLO_MAGIC + struct.pack("<ii", flow.width, flow.height)
    return header + flow.values.astype("<f4").tobytes()


def quantize_flow(flow: FlowField, num_bins: int, bound: float) -> QuantizedFlow:
    """Clip each component to [-bound, bound] and bin linearly; the
    boundary value +bound maps into the top bin."""
    if num_bins < 2:
        raise ValueError("num_bins must be >= 2")
    if not bound > 0:
        raise ValueError("bound must be positive")
    v = flow.values.astype(np.float64)
    clipped = np.clip(v, -bound, bound)
    labels = np.floor((clipped + bound) * (num_bins / (2.0 * bound)))
    labels = np.clip(labels, 0, num_bins - 1).astype(np.int32)
    return QuantizedFlow(labels[:, :, 0], labels[:, :, 1], num_bins, float(bound))


def dequantize_flow(q: QuantizedFlow) -> FlowField:
    """Map each label to its bin centre."""
    width = q.bin_width
    u = -q.bound + (q.xbins.astype(np.float64) + 0.5) * width
    v = -q.bound + (q.ybins.astype(np.float64) + 0.5) * width
    return FlowField(np.stack([u, v], axis=-1).astype(np.float32))


def _color_wheel() -> np.ndarray:
    """The 55-entry piecewise-linear color wheel (RY/YG/GC/CB/BM/MR
    segments of lengths 15/6/4/11/13/6)."""
    segs = (15, 6, 4, 11, 13, 6)
    wheel = np.zeros((sum(segs), 3))
    col = 0
    ry, yg, gc, cb, bm, mr = segs
    wheel[col : col + ry, 0] = 255
    wheel[col : col + ry, 1] = np.floor(255 * np.arange(ry) / ry)
    col += ry
    wheel[col : col + yg, 0] = 255 - np.floor(255 * np.arange(yg) / yg)
    wheel[col : col + yg, 1] = 255
    col += yg
    wheel[col : col + gc, 1] = 255
    wheel[col : col + gc, 2] = np.floor(255 * np.arange(gc) / gc)
    col += gc
    wheel[col : col + cb, 1] = 255 - np.floor(255 * np.arange(cb) / cb)
    wheel[col : col + cb, 2] = 255
    col += cb
    wheel[col : col + bm, 2] = 255
    wheel[col : col + bm, 0] = np.floor(255 * np.arange(bm) / bm)
    col += bm
    wheel[col : col + mr, 2] = 255 - np.floor(255 * np.arange(mr) / mr)
    wheel[col : col + mr, 0] = 255
    return wheel


WHEEL = _color_wheel()


def flow_to_color(flow: FlowField, max_magnitude: float | None = None) -> FlowImage:
    """Render direction as hue on the color wheel and magnitude as
    saturation; zero flow is white. max_magnitude=None normalizes by the
    field's own maximum (floored at 1e-6)."""
    u = flow.u.astype(np.float64)
    v = flow.v.astype(np.float64)
    rad = np.hypot(u, v)
    if max_magnitude is None:
        max_magnitude = max(rad.max(), 1e-6)
    u = u / max_magnitude
    v = v / max_magnitude
    rad = rad / max_magnitude

    ncols = WHEEL.shape[0]
    angle = np.arctan2(-v, -u) / np.pi
    fk = (angle + 1.0) / 2.0 * (ncols - 1)
    k0 = np.floor(fk).astype(np.int64)
    k1 = (k0 + 1) % ncols
    f = fk - k0
    col = (1 - f)[:, :, None] * WHEEL[k0] / 255.0 + f[:, :, None] * WHEEL[k1] / 255.0
    inside = rad <= 1.0
    col = np.where(inside[:, :, None], 1.0 - rad[:, :, None] * (1.0 - col), col * 0.75)
    return FlowImage(np.floor(255.0 * col).astype(np.uint8))


def warp_image(image: FlowImage, flow: FlowField) -> FlowImage:
    """Forward-warp with bilinear splatting: source pixel (x, y) lands at
    (x+u, y+v); overlaps are weight-averaged and uncovered destinations
    keep the source pixel."""
    if (image.height, image.width) != (flow.height, flow.width):
        raise ValueError(
            f"image {image.width}x{image.height} and flow {flow.width}x{flow.height} dimensions differ"
        )
    h, w = image.height, image.width
    vals = image.rgb.astype(np.float64)
    acc = np.zeros((h, w, 3))
    wsum = np.zeros((h, w))
    _kernels.splat_add(vals, flow.u, flow.v, acc, wsum)
    covered = wsum > 1e-8
    out = vals.copy()
    out[covered] = acc[covered] / wsum[covered][:, None]
    return FlowImage(np.clip(np.rint(out), 0, 255).astype(np.uint8))


def resize_flow(flow: FlowField, new_w: int, new_h: int) -> FlowField:
    """Bilinear spatial resample with displacement rescaling (u by
    new_w/width, v by new_h/height)."""
    if new_w < 1 or new_h < 1:
        raise ValueError("target dimensions must be positive")
    u = bilinear.resize_plane(flow.u.astype(np.float64), new_h, new_w) * (new_w / flow.width)
    v = bilinear.resize_plane(flow.v.astype(np.float64), new_h, new_w) * (new_h / flow.height)
    return FlowField(np.stack([u, v], axis=-1).astype(np.float32))


def end_point_error(pred: FlowField, truth: FlowField) -> float:
    """Mean Euclidean distance between predicted and true vectors."""
    d = pred.values.astype(np.float64) - truth.values.astype(np.float64)
    return float(np.hypot(d[:, :, 0], d[:, :, 1]).mean())
