"""The guided motion network: image encoder, sparse motion encoder, and
a dense decoder made of per-stride propagation branches, a single-conv
fusion layer, and twin per-axis bin classifiers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine.checkpoint import load_checkpoint, save_checkpoint
from .engine.layers import Conv2d, ConvBNReLU, MaxPool2d, UpsampleBilinear, softmax_ce_map
from .flow import FlowField, FlowImage, QuantizedFlow, dequantize_flow
from .guidance import GuidanceSet, SparseGuidanceMap, rasterize_guidance

IMAGE_MEAN = 0.5
IMAGE_STD = 0.25


@dataclass(frozen=True)
class ArchConfig:
    """Shape of the network. Defaults are the desk-scale operating point;
    paper-scale presets widen channels and deepen the encoder."""

    encoder_channels: tuple[int, ...] = (16, 32, 64)
    encoder_stride: int = 4
    encoder_out_channels: int = 64
    motion_channels: int = 16
    propagation_strides: tuple[int, ...] = (1, 2, 4)
    num_bins: int = 19
    bound: float = 8.0
    fusion_channels: int = 64

    def __post_init__(self):
        object.__setattr__(self, "encoder_channels", tuple(self.encoder_channels))
        object.__setattr__(self, "propagation_strides", tuple(self.propagation_strides))
        s = self.encoder_stride
        if s < 1 or (s & (s - 1)):
            raise ValueError("encoder_stride must be a power of 2")
        if int(np.log2(s)) > len(self.encoder_channels):
            raise ValueError("not enough encoder stages to reach encoder_stride")
        ps = self.propagation_strides
        if not ps or list(ps) != sorted(set(ps)):
            raise ValueError("propagation_strides must be non-empty and strictly increasing")
        if any(p not in (1, 2, 4, 8) for p in ps):
            raise ValueError("propagation strides must come from {1, 2, 4, 8}")
        if self.num_bins < 2:
            raise ValueError("num_bins must be >= 2")
        if not self.bound > 0:
            raise ValueError("bound must be positive")

    @property
    def pad_multiple(self) -> int:
        return self.encoder_stride * max(self.propagation_strides)

    def to_dict(self) -> dict:
        return {
            "encoder_channels": list(self.encoder_channels),
            "encoder_stride": self.encoder_stride,
            "encoder_out_channels": self.encoder_out_channels,
            "motion_channels": self.motion_channels,
            "propagation_strides": list(self.propagation_strides),
            "num_bins": self.num_bins,
            "bound": self.bound,
            "fusion_channels": self.fusion_channels,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        return cls(
            encoder_channels=tuple(d["encoder_channels"]),
            encoder_stride=int(d["encoder_stride"]),
            encoder_out_channels=int(d["encoder_out_channels"]),
            motion_channels=int(d["motion_channels"]),
            propagation_strides=tuple(d["propagation_strides"]),
            num_bins=int(d["num_bins"]),
            bound=float(d["bound"]),
            fusion_channels=int(d["fusion_channels"]),
        )


@dataclass(frozen=True, eq=False)
class Prediction:
    """Per-axis bin logits at full input resolution, (N, C, H, W)."""

    logits_x: np.ndarray
    logits_y: np.ndarray


def normalize_image(rgb: np.ndarray, dtype=np.float32) -> np.ndarray:
    """uint8 (H, W, 3) -> normalized (3, H, W)."""
    x = rgb.astype(dtype) / dtype(255.0)
    return ((x - dtype(IMAGE_MEAN)) / dtype(IMAGE_STD)).transpose(2, 0, 1)


def _pool_pair(total: int) -> tuple[int, int]:
    """Split a power-of-2 stride across the two motion-encoder pools."""
    k = int(np.log2(total))
    return 2 ** (k // 2), 2 ** (k - k // 2)


class MotionPropNet:
    """Owns the layer graph; one instance per training job. A frozen
    instance serves concurrent eval-mode forwards."""

    def __init__(self, arch: ArchConfig, seed: int = 0, dtype=np.float32):
        self.arch = arch
        self.dtype = dtype
        self.iteration = 0
        rng = np.random.default_rng(seed)

        n_stages = len(arch.encoder_channels)
        n_halvings = int(np.log2(arch.encoder_stride))
        stage_strides = [1] * (n_stages - n_halvings) + [2] * n_halvings
        self.encoder_stages = []
        prev = 3
        for ch, st in zip(arch.encoder_channels, stage_strides):
            self.encoder_stages.append(ConvBNReLU(prev, ch, stride=st, rng=rng, dtype=dtype))
            prev = ch
        self.encoder_top = Conv2d(prev, arch.encoder_out_channels, 3, padding=1, rng=rng, dtype=dtype)

        p1, p2 = _pool_pair(arch.encoder_stride)
        mid = max(arch.motion_channels // 2, 4)
        self.motion_block1 = ConvBNReLU(3, mid, rng=rng, dtype=dtype)
        self.motion_pool1 = MaxPool2d(p1)
        self.motion_block2 = ConvBNReLU(mid, arch.motion_channels, rng=rng, dtype=dtype)
        self.motion_pool2 = MaxPool2d(p2)

        feat = arch.encoder_out_channels + arch.motion_channels
        self.branches = []
        for s in arch.propagation_strides:
            self.branches.append(
                {
                    "stride": s,
                    "pool": MaxPool2d(s),
                    "conv1": ConvBNReLU(feat, feat, rng=rng, dtype=dtype),
                    "conv2": ConvBNReLU(feat, feat, rng=rng, dtype=dtype),
                    "up": UpsampleBilinear(s),
                }
            )
        # the fusion conv carries the same BN-ReLU as every other conv in
        # the net, and the linear heads start at zero: with bare linear
        # layers stacked here the pinned lr of 0.1 diverges within steps
        self.fusion = ConvBNReLU(feat * len(self.branches), arch.fusion_channels, rng=rng, dtype=dtype)
        self.clf_x = Conv2d(arch.fusion_channels, arch.num_bins, 1, rng=rng, dtype=dtype, init="zero")
        self.clf_y = Conv2d(arch.fusion_channels, arch.num_bins, 1, rng=rng, dtype=dtype, init="zero")
        self.up_x = UpsampleBilinear(arch.encoder_stride)
        self.up_y = UpsampleBilinear(arch.encoder_stride)
        self._fwd = None

    # --- registry ---

    def _modules(self):
        for i, st in enumerate(self.encoder_stages):
            yield f"encoder.{i}", st
        yield "encoder.top", self.encoder_top
        yield "motion.0", self.motion_block1
        yield "motion.1", self.motion_block2
        for br in self.branches:
            base = f"branch.s{br['stride']}"
            yield f"{base}.0", br["conv1"]
            yield f"{base}.1", br["conv2"]
        yield "fusion", self.fusion
        yield "clf_x", self.clf_x
        yield "clf_y", self.clf_y

    def parameters(self) -> dict:
        out = {}
        for name, mod in self._modules():
            out.update(mod.params(name))
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for name, mod in self._modules():
            out.update(mod.buffers(name))
        return out

    def parameter_count(self) -> int:
        return sum(p.value.size for p in self.parameters().values())

    # --- forward / backward ---

    def forward(self, images: np.ndarray, guidance: np.ndarray, train: bool = False) -> Prediction:
        """images: normalized (N, 3, H, W); guidance: raw (N, 3, H, W)
        (u, v, mask) as rasterized. Velocities are scaled by 1/bound
        here so their magnitude is O(1) whatever the clip boundary."""
        if images.shape != guidance.shape:
            raise ValueError(f"image {images.shape} and guidance {guidance.shape} shapes differ")
        n, _, h, w = images.shape
        m = self.arch.pad_multiple
        hp = -(-h // m) * m
        wp = -(-w // m) * m
        x = images.astype(self.dtype, copy=False)
        g = guidance.astype(self.dtype, copy=True)
        g[:, :2] /= self.dtype(self.arch.bound)
        if (hp, wp) != (h, w):
            x = np.pad(x, ((0, 0), (0, 0), (0, hp - h), (0, wp - w)))
            g = np.pad(g, ((0, 0), (0, 0), (0, hp - h), (0, wp - w)))

        for st in self.encoder_stages:
            x = st.forward(x, train)
        f_img = self.encoder_top.forward(x, train)

        gm = self.motion_pool1.forward(self.motion_block1.forward(g, train), train)
        f_mot = self.motion_pool2.forward(self.motion_block2.forward(gm, train), train)

        feat = np.concatenate([f_img, f_mot], axis=1)
        outs = []
        for br in self.branches:
            b = br["pool"].forward(feat, train)
            b = br["conv1"].forward(b, train)
            b = br["conv2"].forward(b, train)
            outs.append(br["up"].forward(b, train))
        cat = np.concatenate(outs, axis=1)
        fused = self.fusion.forward(cat, train)
        lx = self.up_x.forward(self.clf_x.forward(fused, train), train)
        ly = self.up_y.forward(self.clf_y.forward(fused, train), train)
        self._fwd = {"size": (h, w), "padded": (hp, wp), "img_ch": f_img.shape[1]}
        return Prediction(logits_x=lx[:, :, :h, :w], logits_y=ly[:, :, :h, :w])

    def backward(self, dlx: np.ndarray, dly: np.ndarray) -> None:
        """Accumulate parameter gradients from full-resolution logit
        gradients; pairs with the most recent forward."""
        ctx = self._fwd
        if ctx is None:
            raise RuntimeError("backward called before forward")
        h, w = ctx["size"]
        hp, wp = ctx["padded"]
        if (hp, wp) != (h, w):
            dlx = np.pad(dlx, ((0, 0), (0, 0), (0, hp - h), (0, wp - w)))
            dly = np.pad(dly, ((0, 0), (0, 0), (0, hp - h), (0, wp - w)))
        dfused = self.clf_x.backward(self.up_x.backward(dlx))
        dfused += self.clf_y.backward(self.up_y.backward(dly))
        dcat = self.fusion.backward(dfused)

        feat_ch = dcat.shape[1] // len(self.branches)
        dfeat = None
        for i, br in enumerate(self.branches):
            d = dcat[:, i * feat_ch : (i + 1) * feat_ch]
            d = br["up"].backward(d)
            d = br["conv2"].backward(d)
            d = br["conv1"].backward(d)
            d = br["pool"].backward(d)
            dfeat = d if dfeat is None else dfeat + d

        img_ch = ctx["img_ch"]
        d_img = dfeat[:, :img_ch]
        d_mot = np.ascontiguousarray(dfeat[:, img_ch:])

        d = self.encoder_top.backward(d_img)
        for i, st in enumerate(reversed(self.encoder_stages)):
            last = i == len(self.encoder_stages) - 1
            d = st.backward(d, need_dx=not last)

        d = self.motion_pool2.backward(d_mot)
        d = self.motion_block2.backward(d)
        d = self.motion_pool1.backward(d)
        self.motion_block1.backward(d, need_dx=False)

    # --- losses / inference ---

    def loss(self, pred: Prediction, xlabels: np.ndarray, ylabels: np.ndarray):
        """Summed per-axis cross entropies. Returns (L, Lx, Ly, dlx, dly)."""
        if pred.logits_x.shape[1] != self.arch.num_bins:
            raise ValueError("prediction bin count does not match architecture")
        lx, gx = softmax_ce_map(pred.logits_x, xlabels)
        ly, gy = softmax_ce_map(pred.logits_y, ylabels)
        return lx + ly, lx, ly, gx, gy

    def loss_from_quantized(self, pred: Prediction, target: QuantizedFlow):
        if target.num_bins != self.arch.num_bins:
            raise ValueError(
                f"target has {target.num_bins} bins, model predicts {self.arch.num_bins}"
            )
        return self.loss(pred, target.xbins[None], target.ybins[None])

    def predict_flow(self, image: FlowImage, gset: GuidanceSet) -> FlowField:
        """Rasterize guidance, run eval-mode forward, take per-axis
        argmax bins (ties to the lowest bin), and dequantize."""
        gm = rasterize_guidance(gset, image.width, image.height)
        return self.predict_flow_from_map(image, gm)

    def predict_flow_from_map(self, image: FlowImage, gm: SparseGuidanceMap) -> FlowField:
        x = normalize_image(image.rgb, self.dtype)[None]
        g = gm.channels.transpose(2, 0, 1)[None]
        pred = self.forward(x, g, train=False)
        xb = pred.logits_x[0].argmax(axis=0).astype(np.int32)
        yb = pred.logits_y[0].argmax(axis=0).astype(np.int32)
        q = QuantizedFlow(xb, yb, self.arch.num_bins, self.arch.bound)
        return dequantize_flow(q)

    # --- persistence ---

    def state_tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for name, p in self.parameters().items():
            out[name] = p.value
            out[name + ".momentum"] = p.momentum
        out.update(self.buffers())
        return out

    def save(self, path) -> None:
        meta = {"arch": self.arch.to_dict(), "iteration": self.iteration}
        save_checkpoint(path, self.state_tensors(), meta)

    def load_state(self, tensors: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        for name, p in params.items():
            p.value[...] = tensors[name].astype(self.dtype)
            p.momentum[...] = tensors[name + ".momentum"].astype(self.dtype)
        for name, mod in self._modules():
            for bname in mod.buffers(name):
                mod.set_buffer(bname, tensors[bname])

    @classmethod
    def load(cls, path, dtype=np.float32) -> "MotionPropNet":
        tensors, meta = load_checkpoint(path)
        model = cls(ArchConfig.from_dict(meta["arch"]), seed=0, dtype=dtype)
        model.load_state(tensors)
        model.iteration = int(meta["iteration"])
        return model
