"""Sparse guidance sampling from a target flow: motion edges, the
watershed distance map, NMS keypoints, grid points, and rasterization
into the 3-channel (u, v, mask) conditioning input."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .flow import FlowField

KINDS = ("watershed", "grid", "user", "negative")


@dataclass(frozen=True)
class SamplingConfig:
    """Knobs of the guidance sampler. Defaults are the 384px-scale
    operating point; desk-scale presets shrink them proportionally."""

    nms_kernel: int = 81  # K, odd
    grid_stride: int = 200  # G
    edge_threshold: float = 1.0  # Sobel magnitude, px/frame
    border_margin: int = 16

    def __post_init__(self):
        if self.nms_kernel < 3 or self.nms_kernel % 2 == 0:
            raise ValueError("nms_kernel must be odd and >= 3")
        if self.grid_stride < 1:
            raise ValueError("grid_stride must be >= 1")
        if not self.edge_threshold > 0:
            raise ValueError("edge_threshold must be positive")
        if self.border_margin < 0:
            raise ValueError("border_margin must be >= 0")


@dataclass(frozen=True)
class GuidancePoint:
    x: int
    y: int
    u: float
    v: float
    kind: str = "user"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown guidance kind {self.kind!r}")


@dataclass(frozen=True)
class GuidanceSet:
    """Sparse velocity hints; at most one point per pixel."""

    points: tuple[GuidancePoint, ...] = field(default_factory=tuple)

    def __post_init__(self):
        pts = tuple(self.points)
        seen = set()
        for p in pts:
            if (p.x, p.y) in seen:
                raise ValueError(f"duplicate guidance point at ({p.x}, {p.y})")
            seen.add((p.x, p.y))
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def count(self, kind: str) -> int:
        return sum(1 for p in self.points if p.kind == kind)

    def to_json(self) -> str:
        return json.dumps(
            [{"x": p.x, "y": p.y, "u": p.u, "v": p.v, "kind": p.kind} for p in self.points]
        )

    @classmethod
    def from_json(cls, text: str) -> "GuidanceSet":
        return cls(
            tuple(
                GuidancePoint(int(r["x"]), int(r["y"]), float(r["u"]), float(r["v"]), r["kind"])
                for r in json.loads(text)
            )
        )


@dataclass(frozen=True, eq=False)
class SparseGuidanceMap:
    """(H, W, 3) float32 raster of (u, v, mask); mask flags sampled
    pixels so a sampled zero velocity differs from an unsampled pixel."""

    channels: np.ndarray

    def __post_init__(self):
        a = np.ascontiguousarray(self.channels, dtype=np.float32)
        if a.ndim != 3 or a.shape[2] != 3:
            raise ValueError("guidance map must be (H, W, 3)")
        mask = a[:, :, 2]
        if not np.isin(mask, (0.0, 1.0)).all():
            raise ValueError("mask channel must be binary")
        if np.any(a[:, :, :2][mask == 0.0] != 0.0):
            raise ValueError("unsampled pixels must carry zero velocity")
        object.__setattr__(self, "channels", a)

    @property
    def height(self) -> int:
        return self.channels.shape[0]

    @property
    def width(self) -> int:
        return self.channels.shape[1]

    @property
    def mask(self) -> np.ndarray:
        return self.channels[:, :, 2]


@dataclass(frozen=True, eq=False)
class WatershedMap:
    """Per-pixel Euclidean distance to the nearest motion edge."""

    distance: np.ndarray

    def __post_init__(self):
        a = np.ascontiguousarray(self.distance, dtype=np.float64)
        if a.ndim != 2:
            raise ValueError("distance map must be 2-D")
        object.__setattr__(self, "distance", a)


def sobel_magnitude(flow: FlowField) -> np.ndarray:
    """Combined 3x3 Sobel response over both flow components, replicate
    padding: sqrt(gx_u^2 + gy_u^2 + gx_v^2 + gy_v^2)."""
    total = np.zeros((flow.height, flow.width))
    for plane in (flow.u, flow.v):
        p = np.pad(plane.astype(np.float64), 1, mode="edge")
        gx = (p[:-2, 2:] + 2 * p[1:-1, 2:] + p[2:, 2:]) - (
            p[:-2, :-2] + 2 * p[1:-1, :-2] + p[2:, :-2]
        )
        gy = (p[2:, :-2] + 2 * p[2:, 1:-1] + p[2:, 2:]) - (
            p[:-2, :-2] + 2 * p[:-2, 1:-1] + p[:-2, 2:]
        )
        total += gx * gx + gy * gy
    return np.sqrt(total)


def motion_edges(flow: FlowField, edge_threshold: float) -> np.ndarray:
    """Boolean mask of pixels whose Sobel response exceeds the threshold."""
    return sobel_magnitude(flow) > edge_threshold


def watershed_distance_map(edges: np.ndarray) -> WatershedMap:
    """Exact Euclidean distance transform of the edge mask. With no edge
    pixels every distance is the image-diagonal sentinel."""
    edges = np.asarray(edges, dtype=bool)
    h, w = edges.shape
    if not edges.any():
        return WatershedMap(np.full((h, w), float(np.hypot(w, h))))
    sq = _kernels.edt_sqdist(edges)
    return WatershedMap(np.sqrt(sq.astype(np.float64)))


def _window_max(d: np.ndarray, radius: int) -> np.ndarray:
    """Max over the (2r+1)^2 neighborhood, clipped at borders."""
    row = d.copy()
    for s in range(1, radius + 1):
        np.maximum(row[:, s:], d[:, :-s], out=row[:, s:])
        np.maximum(row[:, :-s], d[:, s:], out=row[:, :-s])
    win = row.copy()
    for s in range(1, radius + 1):
        np.maximum(win[s:, :], row[:-s, :], out=win[s:, :])
        np.maximum(win[:-s, :], row[s:, :], out=win[:-s, :])
    return win


def nms_keypoints(wmap: WatershedMap, nms_kernel: int, border_margin: int = 0) -> list[tuple[int, int]]:
    """Pixels that dominate their KxK window with positive distance.
    Ties on a plateau go to the first pixel in row-major order; points
    within border_margin of an image edge are dropped."""
    if nms_kernel % 2 == 0 or nms_kernel < 1:
        raise ValueError("nms kernel must be odd and positive")
    d = wmap.distance
    h, w = d.shape
    r = nms_kernel // 2
    win = _window_max(d, r)
    ys, xs = np.nonzero((d >= win) & (d > 0))
    out: list[tuple[int, int]] = []
    for y, x in zip(ys.tolist(), xs.tolist()):
        val = d[y, x]
        y0, y1 = max(0, y - r), min(h, y + r + 1)
        x0, x1 = max(0, x - r), min(w, x + r + 1)
        if (d[y0:y, x0:x1] == val).any() or (d[y, x0:x] == val).any():
            continue  # an equal-valued window pixel precedes this one
        if border_margin <= x < w - border_margin and border_margin <= y < h - border_margin:
            out.append((x, y))
    return out


def grid_points(width: int, height: int, grid_stride: int) -> list[tuple[int, int]]:
    """Regular grid at (G/2 + i*G, G/2 + j*G) for every point inside the
    image (offset floored to a whole pixel for odd G)."""
    if grid_stride < 1:
        raise ValueError("grid_stride must be >= 1")
    half = grid_stride // 2
    return [(x, y) for y in range(half, height, grid_stride) for x in range(half, width, grid_stride)]


def sample_guidance(flow: FlowField, cfg: SamplingConfig) -> GuidanceSet:
    """Watershed keypoints plus grid points, each carrying the flow value
    at its pixel; watershed wins coordinate collisions."""
    points: list[GuidancePoint] = []
    edges = motion_edges(flow, cfg.edge_threshold)
    if edges.any():  # no motion edges -> no watershed structure to sample
        wmap = watershed_distance_map(edges)
        for x, y in nms_keypoints(wmap, cfg.nms_kernel, cfg.border_margin):
            points.append(
                GuidancePoint(x, y, float(flow.values[y, x, 0]), float(flow.values[y, x, 1]), "watershed")
            )
    taken = {(p.x, p.y) for p in points}
    for x, y in grid_points(flow.width, flow.height, cfg.grid_stride):
        if (x, y) not in taken:
            points.append(
                GuidancePoint(x, y, float(flow.values[y, x, 0]), float(flow.values[y, x, 1]), "grid")
            )
    return GuidanceSet(tuple(points))


def rasterize_guidance(gset: GuidanceSet, width: int, height: int) -> SparseGuidanceMap:
    """Write (u, v) at guidance pixels and set mask=1 there; everything
    else stays zero. Negative (zero-motion) points still set the mask."""
    arr = np.zeros((height, width, 3), dtype=np.float32)
    for p in gset.points:
        if not (0 <= p.x < width and 0 <= p.y < height):
            raise ValueError(f"guidance point ({p.x}, {p.y}) outside {width}x{height}")
        arr[p.y, p.x, 0] = p.u
        arr[p.y, p.x, 1] = p.v
        arr[p.y, p.x, 2] = 1.0
    return SparseGuidanceMap(arr)
