"""Training data: frame pairing, resize/random-crop preprocessing, the
procedural rigid-motion corpus with exact ground-truth flow, and corpus
manifests on disk."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import bilinear
from .flow import FlowField, FlowImage, read_flo, resize_flow, write_flo


@dataclass(frozen=True)
class FramePairingRule:
    max_interval: int = 10

    def __post_init__(self):
        if self.max_interval < 1:
            raise ValueError("max_interval must be >= 1")


def pair_frames(frame_ids, rule: FramePairingRule) -> list[tuple[int, int]]:
    """Consecutive ids (a, b) form a pair iff b - a < max_interval; a
    frame may appear in two pairs (as second then first)."""
    ids = list(frame_ids)
    for a, b in zip(ids, ids[1:]):
        if b <= a:
            raise ValueError("frame ids must be strictly increasing")
    return [(a, b) for a, b in zip(ids, ids[1:]) if b - a < rule.max_interval]


@dataclass(frozen=True, eq=False)
class ImageFlowPair:
    image: FlowImage
    flow: FlowField
    source_id: str = ""

    def __post_init__(self):
        if (self.image.height, self.image.width) != (self.flow.height, self.flow.width):
            raise ValueError("image and flow dimensions differ")


def _resize_image(rgb: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    planes = bilinear.resize_stack(rgb.astype(np.float64).transpose(2, 0, 1), new_h, new_w)
    return np.clip(np.rint(planes), 0, 255).astype(np.uint8).transpose(1, 2, 0)


def crop_offsets(new_w: int, new_h: int, crop: int, seed) -> tuple[int, int]:
    rng = np.random.default_rng(seed)
    ox = int(rng.integers(0, new_w - crop + 1))
    oy = int(rng.integers(0, new_h - crop + 1))
    return ox, oy


def preprocess(pair: ImageFlowPair, short_side: int, crop: int, seed) -> ImageFlowPair:
    """Resize so the shorter side equals short_side (flow values rescale
    with the geometry), then cut an identical random crop from image and
    flow at a seed-determined uniform offset."""
    if crop > short_side:
        raise ValueError("crop must not exceed short_side")
    w, h = pair.image.width, pair.image.height
    if w <= h:
        new_w, new_h = short_side, int(round(h * short_side / w))
    else:
        new_w, new_h = int(round(w * short_side / h)), short_side
    img = _resize_image(pair.image.rgb, new_h, new_w)
    flow = resize_flow(pair.flow, new_w, new_h)
    ox, oy = crop_offsets(new_w, new_h, crop, seed)
    return ImageFlowPair(
        FlowImage(img[oy : oy + crop, ox : ox + crop]),
        FlowField(flow.values[oy : oy + crop, ox : ox + crop]),
        pair.source_id,
    )


# --- synthetic rigid-motion scenes ---


@dataclass(frozen=True)
class ShapeMotion:
    kind: str  # "translate" | "rotate"
    u: float = 0.0
    v: float = 0.0
    pivot_x: float = 0.0
    pivot_y: float = 0.0
    angle: float = 0.0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "u": self.u,
            "v": self.v,
            "pivot_x": self.pivot_x,
            "pivot_y": self.pivot_y,
            "angle": self.angle,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ShapeMotion":
        return cls(d["kind"], d["u"], d["v"], d["pivot_x"], d["pivot_y"], d["angle"])


@dataclass(frozen=True, eq=False)
class SyntheticSample:
    pair: ImageFlowPair
    masks: tuple[np.ndarray, ...]  # one boolean (H, W) per shape
    motions: tuple[ShapeMotion, ...]
    pan: tuple[float, float]


def _disk_mask(xx, yy, cx, cy, r):
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r


def _star_mask(xx, yy, cx, cy, r, rng):
    """Star polygon: radial containment against a jittered radius per
    angular sector."""
    nv = int(rng.integers(8, 14))
    radii = rng.uniform(0.55, 1.0, nv) * r
    phase = rng.uniform(0, 2 * np.pi)
    ang = np.arctan2(yy - cy, xx - cx) - phase
    sector = np.floor((ang % (2 * np.pi)) / (2 * np.pi) * nv).astype(np.int64) % nv
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= radii[sector] ** 2


def _cluster_mask(xx, yy, s, rng):
    """A rigid blob of 5-8 overlapping disks laid out on a random walk.
    Each thick lobe contributes its own watershed maximum, which keeps
    keypoint counts at 384px near the in-the-wild operating point."""
    r0 = s * rng.uniform(0.09, 0.14)
    m = int(rng.integers(5, 9))
    lobes = []
    for _attempt in range(60):
        cx = rng.uniform(0.2 * s, 0.8 * s)
        cy = rng.uniform(0.2 * s, 0.8 * s)
        walk_ang = rng.uniform(0, 2 * np.pi)
        cs = [(cx, cy, r0 * rng.uniform(0.75, 1.15))]
        ok = True
        for _ in range(m - 1):
            rj = r0 * rng.uniform(0.75, 1.15)
            px, py, pr = cs[-1]
            placed_lobe = False
            for _spin in range(8):
                walk_ang += rng.normal(0, 0.9)
                d = (pr + rj) * rng.uniform(0.88, 1.0)
                nx, ny = px + d * np.cos(walk_ang), py + d * np.sin(walk_ang)
                in_image = rj + 2 <= nx <= s - rj - 2 and rj + 2 <= ny <= s - rj - 2
                if in_image and np.hypot(nx - cx, ny - cy) <= 0.32 * s:  # bounded sprawl
                    cs.append((nx, ny, rj))
                    placed_lobe = True
                    break
            if not placed_lobe:
                ok = False
                break
        lobes = cs
        if ok:
            break
    mask = np.zeros(xx.shape, dtype=bool)
    for x, y, r in lobes:
        mask |= _disk_mask(xx, yy, x, y, r)
    return mask


def _texture(rng, size, base):
    coarse_n = size // 8 + 2
    coarse = rng.normal(0, 28.0, (coarse_n, coarse_n, 3))
    coarse = bilinear.resize_stack(coarse.transpose(2, 0, 1), size, size).transpose(1, 2, 0)
    fine = rng.normal(0, 5.0, (size, size, 3))
    return np.clip(base[None, None, :] + coarse + fine, 0, 255)


def generate_scene(seed_pair, image_size: int, max_speed: float, max_pan: float, source_id: str) -> SyntheticSample:
    rng = np.random.default_rng(seed_pair)
    s = image_size
    yy, xx = np.mgrid[0:s, 0:s].astype(np.float64)

    bg_base = rng.uniform(40, 216, 3)
    img = _texture(rng, s, bg_base)

    pan_mag = rng.uniform(0, max_pan)
    pan_ang = rng.uniform(0, 2 * np.pi)
    pan = (pan_mag * np.cos(pan_ang), pan_mag * np.sin(pan_ang))
    flow = np.empty((s, s, 2), dtype=np.float64)
    flow[:, :, 0] = pan[0]
    flow[:, :, 1] = pan[1]

    n_shapes = int(rng.choice((1, 2, 3), p=(0.08, 0.22, 0.70)))
    occupied = np.zeros((s, s), dtype=bool)
    masks: list[np.ndarray] = []
    motions: list[ShapeMotion] = []
    for _ in range(n_shapes):
        mask = None
        for _attempt in range(30):
            kind = rng.choice(("disk", "star", "cluster"), p=(0.12, 0.18, 0.70))
            if kind == "cluster":
                cand = _cluster_mask(xx, yy, s, rng)
            else:
                r = s * rng.uniform(0.10, 0.20)
                cx = rng.uniform(r + 2, s - r - 2)
                cy = rng.uniform(r + 2, s - r - 2)
                if kind == "disk":
                    cand = _disk_mask(xx, yy, cx, cy, r)
                else:
                    cand = _star_mask(xx, yy, cx, cy, r, rng)
            if cand.any() and not (cand & occupied).any():
                mask = cand
                break
        if mask is None:
            continue
        occupied |= mask

        base = rng.uniform(30, 226, 3)
        while np.abs(base - bg_base).max() < 50:
            base = rng.uniform(30, 226, 3)
        tex = _texture(rng, s, base)
        img[mask] = tex[mask]

        if rng.random() < 0.6:
            ang = rng.uniform(0, 2 * np.pi)
            speed = rng.uniform(1.0, max_speed)
            u, v = speed * np.cos(ang), speed * np.sin(ang)
            flow[mask, 0] = u
            flow[mask, 1] = v
            motions.append(ShapeMotion("translate", u=float(u), v=float(v)))
        else:
            mys, mxs = np.nonzero(mask)
            k = int(rng.integers(len(mxs)))
            px, py = float(mxs[k]), float(mys[k])
            dmax = float(np.hypot(mxs - px, mys - py).max())
            edge_speed = rng.uniform(1.0, max_speed)
            theta = float(rng.choice((-1.0, 1.0))) * edge_speed / max(dmax, 1.0)
            dx = xx[mask] - px
            dy = yy[mask] - py
            cos_t, sin_t = np.cos(theta), np.sin(theta)
            flow[mask, 0] = cos_t * dx - sin_t * dy - dx
            flow[mask, 1] = sin_t * dx + cos_t * dy - dy
            motions.append(ShapeMotion("rotate", pivot_x=px, pivot_y=py, angle=theta))
        masks.append(mask)

    pair = ImageFlowPair(
        FlowImage(np.clip(np.rint(img), 0, 255).astype(np.uint8)),
        FlowField(flow.astype(np.float32)),
        source_id,
    )
    return SyntheticSample(pair, tuple(masks), tuple(motions), (float(pan[0]), float(pan[1])))


def generate_synthetic(
    corpus_size: int, image_size: int, seed: int, max_speed: float = 6.0, max_pan: float = 2.0
) -> list[SyntheticSample]:
    """Procedural scenes: 1-3 non-overlapping textured rigid shapes over
    a panning textured background. 60% of shapes translate with speed in
    [1, max_speed], 40% rotate about one of their own pixels with edge
    speed capped the same way. Flow is exact by construction and the
    whole corpus is a pure function of (corpus_size, image_size, seed)."""
    if image_size < 32:
        raise ValueError("image_size must be >= 32")
    return [
        generate_scene((seed, i), image_size, max_speed, max_pan, f"syn{seed}-{i:05d}")
        for i in range(corpus_size)
    ]


# --- corpus on disk ---


@dataclass(frozen=True, eq=False)
class CorpusItem:
    item_id: str
    pair: ImageFlowPair
    masks: tuple[np.ndarray, ...] = field(default_factory=tuple)
    meta: dict = field(default_factory=dict)


def write_corpus(samples, out_dir) -> Path:
    """Write PNG + .flo (+ label-mask PNG and motion metadata) triples
    and a manifest listing them. Returns the manifest path."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "flows").mkdir(exist_ok=True)
    (out / "masks").mkdir(exist_ok=True)
    records = []
    for i, sample in enumerate(samples):
        sid = sample.pair.source_id or f"item-{i:05d}"
        image_path = f"images/{i:05d}.png"
        flo_path = f"flows/{i:05d}.flo"
        mask_path = f"masks/{i:05d}.png"
        sample.pair.image.save(out / image_path)
        (out / flo_path).write_bytes(write_flo(sample.pair.flow))
        labels = np.zeros((sample.pair.image.height, sample.pair.image.width), dtype=np.uint8)
        for k, m in enumerate(sample.masks):
            labels[m] = k + 1
        Image.fromarray(labels).save(out / mask_path)
        records.append(
            {
                "id": sid,
                "image_path": image_path,
                "flo_path": flo_path,
                "mask_path": mask_path,
                "meta": {
                    "pan": list(sample.pan),
                    "motions": [m.to_dict() for m in sample.motions],
                },
            }
        )
    manifest = out / "manifest.json"
    manifest.write_text(json.dumps(records, indent=2))
    return manifest


def load_corpus(manifest_path) -> list[CorpusItem]:
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    items = []
    for rec in json.loads(manifest_path.read_text()):
        try:
            image = FlowImage.load(root / rec["image_path"])
            flow = read_flo((root / rec["flo_path"]).read_bytes())
        except (OSError, ValueError) as exc:
            raise RuntimeError(f"corpus item {rec.get('id', '?')!r} failed to load: {exc}") from exc
        masks: tuple[np.ndarray, ...] = ()
        if rec.get("mask_path") and (root / rec["mask_path"]).exists():
            labels = np.asarray(Image.open(root / rec["mask_path"]))
            masks = tuple((labels == k) for k in range(1, int(labels.max()) + 1))
        items.append(
            CorpusItem(rec["id"], ImageFlowPair(image, flow, rec["id"]), masks, rec.get("meta", {}))
        )
    return items


def corrupt_flow_blocky(flow: FlowField, seed, cell: int = 48, amplitude: float = 4.0) -> FlowField:
    """Overlay patchy constant-per-block flow errors, the failure mode of
    weak estimators on texture-poor regions: crisp disordered motion
    edges fragmenting the watershed map."""
    rng = np.random.default_rng(seed)
    ny = -(-flow.height // cell)
    nx = -(-flow.width // cell)
    blocks = rng.uniform(-amplitude, amplitude, (ny, nx, 2))
    noise = np.repeat(np.repeat(blocks, cell, 0), cell, 1)[: flow.height, : flow.width]
    return FlowField(flow.values + noise.astype(np.float32))


def sample_to_item(sample: SyntheticSample) -> CorpusItem:
    return CorpusItem(
        sample.pair.source_id,
        sample.pair,
        sample.masks,
        {"pan": list(sample.pan), "motions": [m.to_dict() for m in sample.motions]},
    )
