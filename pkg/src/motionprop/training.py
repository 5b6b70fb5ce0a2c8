"""Training orchestration: config, the SGD loop with JSONL metrics and
checkpoints, held-out evaluation, the guidance-count sweep, and the
propagation-stride ablation harness."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import CorpusItem, generate_synthetic, load_corpus, preprocess, sample_to_item
from .engine.optim import OptimizerConfig, sgd_step, zero_grads
from .flow import quantize_flow
from .guidance import GuidanceSet, SamplingConfig, rasterize_guidance, sample_guidance
from .model import ArchConfig, MotionPropNet, normalize_image


@dataclass(frozen=True)
class SyntheticSpec:
    corpus_size: int = 2000
    image_size: int = 72
    seed: int = 7
    max_speed: float = 6.0
    max_pan: float = 2.0

    def to_dict(self) -> dict:
        return {
            "corpus_size": self.corpus_size,
            "image_size": self.image_size,
            "seed": self.seed,
            "max_speed": self.max_speed,
            "max_pan": self.max_pan,
        }


@dataclass(frozen=True)
class DataConfig:
    """Either a corpus manifest on disk or a synthetic generation spec."""

    manifest: str | None = None
    synthetic: SyntheticSpec | None = None

    def __post_init__(self):
        if (self.manifest is None) == (self.synthetic is None):
            raise ValueError("exactly one of manifest/synthetic must be set")


@dataclass(frozen=True)
class TrainConfig:
    arch: ArchConfig = field(default_factory=ArchConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    sampling: SamplingConfig = field(default_factory=lambda: SamplingConfig(13, 32, border_margin=3))
    data: DataConfig = field(default_factory=lambda: DataConfig(synthetic=SyntheticSpec()))
    batch_size: int = 8
    short_side: int = 72
    crop: int = 64
    checkpoint_every: int = 1000
    log_every: int = 20
    holdout_percent: int = 10
    seed: int = 0
    out_dir: str = "runs/desk"
    # per-example K/G jitter: spreads training over the guidance-density
    # spectrum down to one-or-two points, which single-arrow probing and
    # click annotation rely on at test time
    sampling_jitter: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.crop > self.short_side:
            raise ValueError("crop must not exceed short_side")

    def to_dict(self) -> dict:
        d: dict = {
            "arch": self.arch.to_dict(),
            "optimizer": {
                "base_lr": self.optimizer.base_lr,
                "momentum": self.optimizer.momentum,
                "weight_decay": self.optimizer.weight_decay,
                "total_iterations": self.optimizer.total_iterations,
            },
            "sampling": {
                "nms_kernel": self.sampling.nms_kernel,
                "grid_stride": self.sampling.grid_stride,
                "edge_threshold": self.sampling.edge_threshold,
                "border_margin": self.sampling.border_margin,
            },
            "batch_size": self.batch_size,
            "short_side": self.short_side,
            "crop": self.crop,
            "checkpoint_every": self.checkpoint_every,
            "log_every": self.log_every,
            "holdout_percent": self.holdout_percent,
            "seed": self.seed,
            "out_dir": self.out_dir,
            "sampling_jitter": self.sampling_jitter,
        }
        if self.data.manifest is not None:
            d["data"] = {"manifest": self.data.manifest}
        else:
            d["data"] = {"synthetic": self.data.synthetic.to_dict()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        data = d.get("data", {})
        if "manifest" in data:
            dc = DataConfig(manifest=data["manifest"])
        else:
            dc = DataConfig(synthetic=SyntheticSpec(**data.get("synthetic", {})))
        return cls(
            arch=ArchConfig.from_dict(d["arch"]) if "arch" in d else ArchConfig(),
            optimizer=OptimizerConfig(**d.get("optimizer", {})),
            sampling=SamplingConfig(**d.get("sampling", {})),
            data=dc,
            batch_size=d.get("batch_size", 8),
            short_side=d.get("short_side", 72),
            crop=d.get("crop", 64),
            checkpoint_every=d.get("checkpoint_every", 1000),
            log_every=d.get("log_every", 20),
            holdout_percent=d.get("holdout_percent", 10),
            seed=d.get("seed", 0),
            out_dir=d.get("out_dir", "runs/desk"),
            sampling_jitter=d.get("sampling_jitter", True),
        )

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def desk_preset(out_dir: str = "runs/desk", **overrides) -> TrainConfig:
    """The default desk-scale run: 2000 synthetic 72px scenes cropped to
    64, 19 bins over [-8, 8], strides {1,2,4}, batch 8, 6000 iterations."""
    cfg = TrainConfig(out_dir=out_dir)
    return replace(cfg, **overrides) if overrides else cfg


# --- data plumbing ---


def load_items(cfg: TrainConfig) -> list[CorpusItem]:
    if cfg.data.manifest is not None:
        return load_corpus(cfg.data.manifest)
    spec = cfg.data.synthetic
    samples = generate_synthetic(
        spec.corpus_size, spec.image_size, spec.seed, spec.max_speed, spec.max_pan
    )
    return [sample_to_item(s) for s in samples]


def _stable_hash(text: str) -> int:
    return int.from_bytes(hashlib.sha1(text.encode("utf-8")).digest()[:8], "little")


def split_items(items, seed: int, holdout_percent: int):
    """Seed-stable held-out split by item-id hash."""
    train, held = [], []
    for it in items:
        (held if _stable_hash(f"{seed}:{it.item_id}") % 100 < holdout_percent else train).append(it)
    return train, held


def prepare_example(item: CorpusItem, cfg: TrainConfig, crop_seed, sampling: SamplingConfig | None):
    """preprocess -> sample guidance -> rasterize -> quantize targets."""
    pair = preprocess(item.pair, cfg.short_side, cfg.crop, crop_seed)
    if sampling is None:
        gset = GuidanceSet()
    else:
        gset = sample_guidance(pair.flow, sampling)
    gmap = rasterize_guidance(gset, pair.image.width, pair.image.height)
    q = quantize_flow(pair.flow, cfg.arch.num_bins, cfg.arch.bound)
    return pair, gset, gmap, q


KERNEL_JITTER = (0.75, 1.0, 1.5, 2.5, 5.0)
GRID_JITTER = (0.5, 1.0, 2.0, 4.0)


def jittered_sampling(base: SamplingConfig, rng) -> SamplingConfig:
    kmul = float(rng.choice(KERNEL_JITTER))
    gmul = float(rng.choice(GRID_JITTER))
    k = max(3, int(round(base.nms_kernel * kmul)) | 1)
    g = max(1, int(round(base.grid_stride * gmul)))
    return SamplingConfig(k, g, base.edge_threshold, base.border_margin)


def thinned_guidance(gset: GuidanceSet, rng) -> GuidanceSet:
    """Randomly thin a sampled guidance set; a slice of examples keeps a
    single point so test-time probing with one arrow stays in-domain.
    Single-point mode prefers watershed (object-interior) points, the
    placement user probes use."""
    pts = list(gset.points)
    if not pts:
        return gset
    mode = rng.random()
    if mode < 0.20:
        shape_pts = [q for q in pts if q.kind == "watershed"]
        pool = shape_pts if shape_pts else pts
        pts = [pool[int(rng.integers(len(pool)))]]
    elif mode < 0.50:
        keep = rng.random(len(pts)) < rng.uniform(0.35, 0.9)
        pts = [q for q, k in zip(pts, keep) if k]
    return GuidanceSet(tuple(pts))


def build_batch(items, cfg: TrainConfig, iteration: int):
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, iteration)))
    idx = rng.integers(0, len(items), cfg.batch_size)
    images, guides, xbins, ybins, flows = [], [], [], [], []
    n_points = 0
    for slot, i in enumerate(idx):
        sampling = jittered_sampling(cfg.sampling, rng) if cfg.sampling_jitter else cfg.sampling
        pair, gset, gmap, q = prepare_example(
            items[int(i)], cfg, (cfg.seed, iteration, slot), sampling
        )
        if cfg.sampling_jitter:
            gset = thinned_guidance(gset, rng)
            gmap = rasterize_guidance(gset, pair.image.width, pair.image.height)
        images.append(normalize_image(pair.image.rgb))
        guides.append(gmap.channels.transpose(2, 0, 1))
        xbins.append(q.xbins)
        ybins.append(q.ybins)
        flows.append(pair.flow.values)
        n_points += len(gset)
    return (
        np.stack(images),
        np.stack(guides).astype(np.float32),
        np.stack(xbins),
        np.stack(ybins),
        np.stack(flows),
        n_points / cfg.batch_size,
    )


def _batch_metrics(pred, xb, yb, flows, arch: ArchConfig):
    px = pred.logits_x.argmax(axis=1)
    py = pred.logits_y.argmax(axis=1)
    acc_x = float((px == xb).mean())
    acc_y = float((py == yb).mean())
    width = 2.0 * arch.bound / arch.num_bins
    du = (-arch.bound + (px + 0.5) * width) - flows[:, :, :, 0]
    dv = (-arch.bound + (py + 0.5) * width) - flows[:, :, :, 1]
    epe = float(np.hypot(du, dv).mean())
    return acc_x, acc_y, epe


# --- training loop ---


@dataclass
class TrainResult:
    model: MotionPropNet
    metrics: list[dict]
    checkpoint: str


def train(cfg: TrainConfig, resume=None, log_fn=None) -> TrainResult:
    """Run the loop to total_iterations. Deterministic for a fixed seed
    and thread count: every random draw is keyed on (seed, iteration)."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save_json(out / "config.json")

    items = load_items(cfg)
    train_items, _ = split_items(items, cfg.seed, cfg.holdout_percent)
    if not train_items:
        raise ValueError("training split is empty")

    if resume is not None:
        model = MotionPropNet.load(resume)
        if model.arch != cfg.arch:
            raise ValueError("checkpoint architecture differs from config")
    else:
        model = MotionPropNet(cfg.arch, seed=cfg.seed)
    params = list(model.parameters().values())

    metrics_path = out / "metrics.jsonl"
    if resume is None and metrics_path.exists():
        metrics_path.unlink()
    metrics: list[dict] = []
    total = cfg.optimizer.total_iterations
    with metrics_path.open("a") as mf:
        for t in range(model.iteration, total):
            images, guides, xb, yb, flows, mean_points = build_batch(train_items, cfg, t)
            zero_grads(params)
            pred = model.forward(images, guides, train=True)
            loss, lx, ly, gx, gy = model.loss(pred, xb, yb)
            model.backward(gx, gy)
            lr = sgd_step(params, cfg.optimizer, t)
            model.iteration = t + 1
            if t % cfg.log_every == 0 or t == total - 1:
                acc_x, acc_y, epe = _batch_metrics(pred, xb, yb, flows, cfg.arch)
                rec = {
                    "iteration": t,
                    "lr": lr,
                    "loss": loss,
                    "loss_x": lx,
                    "loss_y": ly,
                    "acc_x": acc_x,
                    "acc_y": acc_y,
                    "epe": epe,
                    "guidance_points": mean_points,
                }
                metrics.append(rec)
                mf.write(json.dumps(rec) + "\n")
                mf.flush()
                if log_fn:
                    log_fn(rec)
            if cfg.checkpoint_every and (t + 1) % cfg.checkpoint_every == 0 and t + 1 < total:
                model.save(out / f"ckpt_{t + 1:06d}.ckpt")
    final = out / "ckpt_final.ckpt"
    model.save(final)
    return TrainResult(model, metrics, str(final))


# --- evaluation ---


@dataclass(frozen=True)
class EvalReport:
    n: int
    acc_x: float
    acc_y: float
    epe: float
    mean_guidance: float

    @property
    def acc(self) -> float:
        return 0.5 * (self.acc_x + self.acc_y)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "acc_x": self.acc_x,
            "acc_y": self.acc_y,
            "acc": self.acc,
            "epe": self.epe,
            "mean_guidance": self.mean_guidance,
        }


def eval_crop_seed(item_id: str) -> tuple[int, int]:
    return (_stable_hash("eval:" + item_id) % (2**31), 0)


def evaluate(
    model: MotionPropNet,
    items,
    sampling: SamplingConfig | None,
    short_side: int,
    crop: int,
    batch: int = 16,
) -> EvalReport:
    """Eval-mode metrics over a corpus with deterministic crops. Pass
    sampling=None for the zero-guidance degenerate case."""
    cfg = TrainConfig(
        arch=model.arch,
        data=DataConfig(synthetic=SyntheticSpec()),
        short_side=short_side,
        crop=crop,
    )
    accs_x, accs_y, epes, counts = [], [], [], []
    for lo in range(0, len(items), batch):
        chunk = items[lo : lo + batch]
        images, guides, xbs, ybs, flows = [], [], [], [], []
        for it in chunk:
            pair, gset, gmap, q = prepare_example(it, cfg, eval_crop_seed(it.item_id), sampling)
            images.append(normalize_image(pair.image.rgb))
            guides.append(gmap.channels.transpose(2, 0, 1))
            xbs.append(q.xbins)
            ybs.append(q.ybins)
            flows.append(pair.flow.values)
            counts.append(len(gset))
        pred = model.forward(np.stack(images), np.stack(guides).astype(np.float32), train=False)
        acc_x, acc_y, epe = _batch_metrics(pred, np.stack(xbs), np.stack(ybs), np.stack(flows), model.arch)
        accs_x.append(acc_x * len(chunk))
        accs_y.append(acc_y * len(chunk))
        epes.append(epe * len(chunk))
    n = len(items)
    return EvalReport(
        n,
        sum(accs_x) / n,
        sum(accs_y) / n,
        sum(epes) / n,
        float(np.mean(counts)) if counts else 0.0,
    )


DESK_SWEEP_LADDER: tuple[tuple[str, SamplingConfig | None], ...] = (
    ("zero", None),
    ("sparse (K=31, G=64)", SamplingConfig(31, 64, border_margin=3)),
    ("default (K=13, G=32)", SamplingConfig(13, 32, border_margin=3)),
    ("dense (K=9, G=16)", SamplingConfig(9, 16, border_margin=3)),
    ("dense+ (K=5, G=8)", SamplingConfig(5, 8, border_margin=3)),
)


def guidance_sweep(model, items, short_side, crop, ladder=DESK_SWEEP_LADDER) -> list[dict]:
    """EPE/accuracy as a function of guidance density, from none upward."""
    rows = []
    for label, sampling in ladder:
        rep = evaluate(model, items, sampling, short_side, crop)
        rows.append({"label": label, **rep.to_dict()})
    return rows


# --- stride ablation ---

STRIDE_COMBOS: tuple[tuple[int, ...], ...] = ((1,), (1, 2), (1, 2, 4), (1, 2, 4, 8))


def run_stride_ablation(cfg: TrainConfig, budget_scale: float = 0.25, log_fn=None) -> dict:
    """Train one model per propagation-stride combination at a reduced
    iteration budget and tabulate held-out metrics."""
    iters = max(1, int(cfg.optimizer.total_iterations * budget_scale))
    rows = []
    for combo in STRIDE_COMBOS:
        sub = replace(
            cfg,
            arch=replace(cfg.arch, propagation_strides=combo),
            optimizer=replace(cfg.optimizer, total_iterations=iters),
            out_dir=str(Path(cfg.out_dir) / ("ablate_s" + "".join(map(str, combo)))),
        )
        t0 = time.time()
        result = train(sub, log_fn=log_fn)
        elapsed = time.time() - t0
        items = load_items(sub)
        _, held = split_items(items, sub.seed, sub.holdout_percent)
        rep = evaluate(result.model, held, sub.sampling, sub.short_side, sub.crop)
        rows.append(
            {
                "strides": list(combo),
                "iterations": iters,
                "train_seconds": round(elapsed, 1),
                "final_loss": result.metrics[-1]["loss"] if result.metrics else None,
                **rep.to_dict(),
            }
        )
    return {"budget_scale": budget_scale, "rows": rows, "table": format_ablation_table(rows)}


def format_ablation_table(rows) -> str:
    lines = [
        f"{'strides':<12} {'iters':>6} {'acc_x':>7} {'acc_y':>7} {'epe':>7} {'loss':>8} {'secs':>7}",
    ]
    for r in rows:
        strides = "{" + ",".join(map(str, r["strides"])) + "}"
        loss = "-" if r["final_loss"] is None else f"{r['final_loss']:.4f}"
        lines.append(
            f"{strides:<12} {r['iterations']:>6} {r['acc_x']:>7.3f} {r['acc_y']:>7.3f} "
            f"{r['epe']:>7.3f} {loss:>8} {r['train_seconds']:>7.1f}"
        )
    return "\n".join(lines)
