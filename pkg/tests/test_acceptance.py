"""Acceptance suite: one test per criterion, each printing a PASS/FAIL
line. The desk-scale training criterion trains the full default preset
in-session and feeds the behavioural criteria that follow it."""

import fractions
import sys
import time

import numpy as np
import pytest

from motionprop import _kernels
from motionprop.data import corrupt_flow_blocky, generate_scene, generate_synthetic
from motionprop.engine import checkpoint as ckpt
from motionprop.engine.layers import (
    BatchNorm2d,
    Conv2d,
    MaxPool2d,
    ReLU,
    UpsampleBilinear,
    softmax_ce_map,
)
from motionprop.engine.optim import OptimizerConfig, learning_rate, lr_drop_iterations
from motionprop.flow import FlowField, dequantize_flow, quantize_flow, read_flo, write_flo
from motionprop.guidance import (
    GuidancePoint,
    GuidanceSet,
    SamplingConfig,
    WatershedMap,
    grid_points,
    nms_keypoints,
    sample_guidance,
    watershed_distance_map,
)
from motionprop.model import ArchConfig, MotionPropNet
from motionprop.service import AnnotationParams, annotate_mask
from motionprop.training import (
    desk_preset,
    evaluate,
    guidance_sweep,
    load_items,
    run_stride_ablation,
    split_items,
    train,
)

from test_guidance import brute_force_edt, brute_force_nms


CRITERION_LINES: list[str] = []


def report(name, passed, detail=""):
    line = f"[{'PASS' if passed else 'FAIL'}] {name}" + (f" ({detail})" if detail else "")
    CRITERION_LINES.append(line)
    print(line, file=sys.__stdout__, flush=True)
    assert passed, line


# ---------- shared fixtures ----------


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    cfg = desk_preset(str(tmp_path_factory.mktemp("desk")))
    t0 = time.time()
    result = train(cfg)
    elapsed = time.time() - t0
    items = load_items(cfg)
    _, held = split_items(items, cfg.seed, cfg.holdout_percent)
    return {"cfg": cfg, "result": result, "elapsed": elapsed, "held": held}


def heldout_translating_scenes(n=50, size=64, seed=424242):
    """Fresh single-shape translating scenes, disjoint from the training
    corpus by seed."""
    out, i = [], 0
    while len(out) < n:
        s = generate_scene((seed, i), size, 6.0, 2.0, f"held-{i}")
        i += 1
        if len(s.masks) == 1 and s.motions[0].kind == "translate":
            if 0.03 <= s.masks[0].sum() / size**2 <= 0.4:
                out.append(s)
    return out


def inner_point(mask):
    d = _kernels.edt_sqdist(~mask)
    y, x = np.unravel_index(int(np.argmax(d)), d.shape)
    return int(x), int(y)


# ---------- criterion 1: gradient suite ----------


def rel_err(a, b, floor=1e-5):
    return abs(a - b) / max(abs(a), abs(b), floor)


def fd_layer_check(make_layer, shape, rng, h=1e-5):
    layer, fwd = make_layer()
    x = rng.standard_normal(shape)
    y = fwd(x)
    r = rng.standard_normal(y.shape)
    fwd(x)
    ga = layer.backward(r)
    gf = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + h
        lp = float((fwd(x) * r).sum())
        x[i] = orig - h
        lm = float((fwd(x) * r).sum())
        x[i] = orig
        gf[i] = (lp - lm) / (2 * h)
    na, nf = np.linalg.norm(ga), np.linalg.norm(gf)
    return np.linalg.norm(ga - gf) / max(na, nf, 1e-12)


def test_criterion_gradient_suite():
    t0 = time.time()
    rng = np.random.default_rng(100)
    worst = {}

    def run(name, make, shapes):
        errs = [fd_layer_check(make, shapes(rng), rng) for _ in range(20)]
        worst[name] = max(errs)
        assert worst[name] < 1e-3, f"{name}: {worst[name]}"

    def conv_factory():
        stride = int(rng.choice((1, 2)))
        dil = int(rng.choice((1, 2)))
        conv = Conv2d(2, 3, 3, stride=stride, padding=dil, dilation=dil, rng=rng, dtype=np.float64)
        return conv, lambda x: conv.forward(x.copy())

    run("conv2d", conv_factory, lambda r: (1, 2, int(r.integers(6, 9)), int(r.integers(6, 9))))

    def bn_factory():
        bn = BatchNorm2d(2, dtype=np.float64)
        bn.gamma.value[:] = rng.normal(1, 0.2, 2)
        bn.beta.value[:] = rng.normal(0, 0.2, 2)
        train = bool(rng.integers(2))
        rm, rv = rng.normal(0, 0.3, 2), rng.uniform(0.5, 2, 2)

        def fwd(x):
            bn.running_mean[:] = rm
            bn.running_var[:] = rv
            return bn.forward(x.copy(), train=train)

        return bn, fwd

    run("batchnorm", bn_factory, lambda r: (2, 2, int(r.integers(3, 6)), int(r.integers(3, 6))))

    def relu_factory():
        relu = ReLU()
        return relu, lambda x: relu.forward(x.copy())

    run("relu", relu_factory, lambda r: (2, 3, int(r.integers(3, 7)), int(r.integers(3, 7))))

    def pool_factory():
        s = int(rng.choice((2, 4)))
        mp = MaxPool2d(s)
        return mp, lambda x: mp.forward(x.copy())

    run("maxpool", pool_factory, lambda r: (1, 2, 8, 8))

    def up_factory():
        up = UpsampleBilinear(int(rng.choice((2, 4))))
        return up, lambda x: up.forward(x.copy())

    run("upsample", up_factory, lambda r: (1, 2, int(r.integers(3, 6)), int(r.integers(3, 6))))

    # concat backward is an exact split of the incoming gradient
    for _ in range(20):
        a = rng.standard_normal((2, 3, 4, 4))
        b = rng.standard_normal((2, 5, 4, 4))
        r = rng.standard_normal((2, 8, 4, 4))
        assert np.array_equal(r[:, :3], r[:, :3]) and np.array_equal(
            np.concatenate([a, b], 1)[:, 3:], b
        )
        n2 = np.linalg.norm(r[:, :3]) ** 2 + np.linalg.norm(r[:, 3:]) ** 2
        assert n2 == pytest.approx(np.linalg.norm(r) ** 2, rel=1e-12)

    # softmax-CE logit gradients
    ce_errs = []
    for _ in range(20):
        logits = rng.standard_normal((1, 4, 3, 3))
        labels = rng.integers(0, 4, (1, 3, 3))
        _, grad = softmax_ce_map(logits, labels)
        gf = np.zeros_like(logits)
        it = np.nditer(logits, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            orig = logits[i]
            logits[i] = orig + 1e-6
            lp, _ = softmax_ce_map(logits, labels)
            logits[i] = orig - 1e-6
            lm, _ = softmax_ce_map(logits, labels)
            logits[i] = orig
            gf[i] = (lp - lm) / 2e-6
        ce_errs.append(np.linalg.norm(grad - gf) / max(np.linalg.norm(gf), 1e-12))
    worst["softmax_ce"] = max(ce_errs)
    assert worst["softmax_ce"] < 1e-3

    # end-to-end: loss gradient for 50 random parameters at float64
    arch = ArchConfig(
        encoder_channels=(6, 8),
        encoder_stride=2,
        encoder_out_channels=8,
        motion_channels=6,
        propagation_strides=(1, 2),
        num_bins=5,
        fusion_channels=8,
    )
    model = MotionPropNet(arch, seed=3, dtype=np.float64)
    img = rng.standard_normal((2, 3, 16, 16))
    gd = np.zeros((2, 3, 16, 16))
    gd[:, 2, 5, 5] = 1.0
    gd[:, 0, 5, 5] = 2.0
    xl = rng.integers(0, 5, (2, 16, 16))
    yl = rng.integers(0, 5, (2, 16, 16))
    params = model.parameters()

    def loss_value():
        pred = model.forward(img, gd, train=False)
        return model.loss(pred, xl, yl)[0]

    for p in params.values():
        p.grad[...] = 0
    pred = model.forward(img, gd, train=False)
    _, _, _, gx, gy = model.loss(pred, xl, yl)
    model.backward(gx, gy)
    names = list(params)
    h = 1e-5
    e2e_worst = 0.0
    for _ in range(50):
        p = params[names[int(rng.integers(len(names)))]]
        idx = np.unravel_index(int(rng.integers(p.value.size)), p.value.shape)
        orig = p.value[idx]
        p.value[idx] = orig + h
        lp = loss_value()
        p.value[idx] = orig - h
        lm = loss_value()
        p.value[idx] = orig
        fd = (lp - lm) / (2 * h)
        e2e_worst = max(e2e_worst, rel_err(fd, float(p.grad[idx])))
    assert e2e_worst < 1e-2, f"end-to-end gradient: {e2e_worst}"

    elapsed = time.time() - t0
    report(
        "gradient suite (per-layer <1e-3, end-to-end <1e-2, <2min)",
        elapsed < 120,
        f"worst layer {max(worst.values()):.2e}, e2e {e2e_worst:.2e}, {elapsed:.0f}s",
    )


# ---------- criterion 2: oracle equivalence ----------


def test_criterion_oracle_equivalence():
    t0 = time.time()
    rng = np.random.default_rng(200)

    for _ in range(40):  # EDT == brute force, exactly
        h, w = int(rng.integers(1, 33)), int(rng.integers(1, 33))
        edges = rng.random((h, w)) < rng.uniform(0.03, 0.4)
        if not edges.any():
            edges[0, 0] = True
        assert np.array_equal(_kernels.edt_sqdist(edges), brute_force_edt(edges))

    for _ in range(30):  # NMS == brute force, exactly
        h, w = int(rng.integers(4, 33)), int(rng.integers(4, 33))
        d = rng.integers(0, 5, (h, w)).astype(np.float64)
        k = int(rng.choice((3, 5, 9)))
        margin = int(rng.integers(0, 3))
        assert nms_keypoints(WatershedMap(d), k, margin) == brute_force_nms(d, k, margin)

    for _ in range(30):  # quantization == interval-membership oracle
        num_bins = int(rng.integers(2, 24))
        bound = float(rng.uniform(1, 12))
        vs = rng.uniform(-1.5 * bound, 1.5 * bound, 24).astype(np.float32)
        f = FlowField(np.stack([vs, vs], -1)[None])
        q = quantize_flow(f, num_bins, bound)
        edges = [-bound + k * (2 * bound / num_bins) for k in range(num_bins + 1)]
        for j in range(24):
            v = min(max(float(vs[j]), -bound), bound)
            expected = next(
                k
                for k in range(num_bins)
                if (edges[k] <= v < edges[k + 1]) or (k == num_bins - 1 and v >= edges[k])
            )
            assert q.xbins[0, j] == expected

    for _ in range(10):  # softmax-CE == scalar loop, <= 1e-8
        n, c, hh, ww = 2, int(rng.integers(2, 8)), 4, 4
        logits = rng.standard_normal((n, c, hh, ww))
        labels = rng.integers(0, c, (n, hh, ww))
        loss, grad = softmax_ce_map(logits, labels)
        ref = 0.0
        refg = np.zeros_like(logits)
        tot = n * hh * ww
        for b in range(n):
            for i in range(hh):
                for j in range(ww):
                    z = logits[b, :, i, j]
                    p = np.exp(z - z.max())
                    p /= p.sum()
                    ref -= np.log(p[labels[b, i, j]]) / tot
                    refg[b, :, i, j] = p / tot
                    refg[b, labels[b, i, j], i, j] -= 1.0 / tot
        assert abs(loss - ref) <= 1e-8
        assert np.abs(grad - refg).max() <= 1e-8

    from motionprop.data import FramePairingRule, pair_frames

    for _ in range(50):  # pair_frames == gap filter
        ids = sorted(set(rng.integers(0, 500, int(rng.integers(0, 40))).tolist()))
        mi = int(rng.integers(1, 30))
        assert pair_frames(ids, FramePairingRule(mi)) == [
            (a, b) for a, b in zip(ids, ids[1:]) if b - a < mi
        ]

    elapsed = time.time() - t0
    report("oracle equivalence (EDT/NMS/quantize exact, CE<=1e-8, pairs, <1min)", elapsed < 60, f"{elapsed:.0f}s")


# ---------- criterion 3: format fidelity ----------


def test_criterion_format_fidelity():
    rng = np.random.default_rng(300)
    for _ in range(100):
        h, w = int(rng.integers(1, 17)), int(rng.integers(1, 17))
        f = FlowField((rng.standard_normal((h, w, 2)) * rng.uniform(0.01, 100)).astype(np.float32))
        data = write_flo(f)
        g = read_flo(data)
        assert write_flo(g) == data
        assert g.values.tobytes() == f.values.tobytes()

    for _ in range(100):
        tensors = {}
        for t in range(int(rng.integers(1, 6))):
            nd = int(rng.integers(1, 5))
            shape = tuple(int(x) for x in rng.integers(1, 5, nd))
            tensors[f"t{t}/x"] = rng.standard_normal(shape).astype(np.float32)
        packed = ckpt.pack_tensors(tensors)
        back = ckpt.unpack_tensors(packed)
        assert ckpt.pack_tensors(back) == packed
        for k in tensors:
            assert back[k].tobytes() == tensors[k].tobytes()
            assert back[k].shape == tensors[k].shape

    report("format fidelity (.flo and checkpoint roundtrips bit-exact x100)", True)


# ---------- criterion 4: paper-parameter reproduction ----------


def test_criterion_paper_parameters():
    pts = grid_points(384, 384, 200)
    assert sorted(pts) == sorted([(x, y) for x in (100, 300) for y in (100, 300)])

    rng = np.random.default_rng(400)
    for total in [int(x) for x in rng.integers(1, 10**6, 50)]:
        t1, t2 = lr_drop_iterations(total)
        assert t1 == (fractions.Fraction(2 * total) / fractions.Fraction(7, 2)).__floor__()
        assert t2 == (fractions.Fraction(3 * total) / fractions.Fraction(7, 2)).__floor__()
        cfg = OptimizerConfig(total_iterations=total)
        if t1 > 0:
            assert learning_rate(cfg, t1 - 1) == pytest.approx(0.1)
        assert learning_rate(cfg, max(t2 - 1, t1)) == pytest.approx(0.01 if t2 > t1 else learning_rate(cfg, t1))
        assert learning_rate(cfg, t2) == pytest.approx(0.001)

    scenes = generate_synthetic(200, 384, 17)
    cfg = SamplingConfig(81, 200, border_margin=16)
    clean = []
    noisy = []
    for i, s in enumerate(scenes):
        clean.append(sample_guidance(s.pair.flow, cfg).count("watershed"))
        bad = corrupt_flow_blocky(s.pair.flow, (999, i), cell=48, amplitude=4.0)
        noisy.append(sample_guidance(bad, cfg).count("watershed"))
    mean_clean = float(np.mean(clean))
    mean_noisy = float(np.mean(noisy))
    assert 5.0 <= mean_clean <= 20.0, f"mean watershed {mean_clean}"
    assert mean_noisy >= 5.0 * mean_clean, f"noisy {mean_noisy} vs clean {mean_clean}"

    report(
        "paper parameters (4 grid points, lr drops at 4I/7 and 6I/7, watershed in [5,20], noisy>=5x)",
        True,
        f"watershed {mean_clean:.1f}, noisy {mean_noisy:.1f} ({mean_noisy / mean_clean:.1f}x)",
    )


# ---------- criterion 5: desk-scale training ----------


def test_criterion_desk_training(desk_run):
    cfg = desk_run["cfg"]
    rep = evaluate(desk_run["result"].model, desk_run["held"], cfg.sampling, cfg.short_side, cfg.crop)
    ok = (
        desk_run["elapsed"] < 45 * 60
        and rep.acc_x >= 0.60
        and rep.acc_y >= 0.60
        and rep.epe <= 2.0
    )
    report(
        "desk-scale training (<45min, per-axis acc>=0.60, EPE<=2.0)",
        ok,
        f"{desk_run['elapsed'] / 60:.1f}min, acc_x {rep.acc_x:.3f}, acc_y {rep.acc_y:.3f}, epe {rep.epe:.3f}",
    )


# ---------- criterion 6: propagation characteristics ----------


def test_criterion_characteristics(desk_run):
    model = desk_run["result"].model
    bw = 2 * model.arch.bound / model.arch.num_bins
    scenes = heldout_translating_scenes(50)
    hits = 0
    for s in scenes:
        mask = s.masks[0]
        x, y = inner_point(mask)
        u, v = (float(c) for c in s.pair.flow.values[y, x])
        gset = GuidanceSet((GuidancePoint(x, y, u, v, "user"),))
        pred = model.predict_flow(s.pair.image, gset)
        mean_in = pred.values[mask].mean(axis=0)
        in_ok = np.hypot(mean_in[0] - u, mean_in[1] - v) <= bw
        bg = pred.values[~mask]
        bg_ok = float(np.hypot(bg[:, 0], bg[:, 1]).mean()) < bw
        hits += int(in_ok and bg_ok)

    cfg = desk_run["cfg"]
    rep = evaluate(model, desk_run["held"], cfg.sampling, cfg.short_side, cfg.crop)
    rep0 = evaluate(model, desk_run["held"], None, cfg.short_side, cfg.crop)

    rows = guidance_sweep(model, desk_run["held"][:60], cfg.short_side, cfg.crop)
    epes = [r["epe"] for r in rows]
    tol = 0.1 * (max(epes) - min(epes)) + 1e-9
    k_star = int(np.argmin(epes))
    unimodal = all(epes[i + 1] <= epes[i] + tol for i in range(k_star)) and all(
        epes[i + 1] >= epes[i] - tol for i in range(k_star, len(epes) - 1)
    )

    ok = hits >= 40 and rep0.epe > rep.epe and unimodal
    report(
        "propagation characteristics (>=80% scenes, zero-guidance worse, sweep unimodal)",
        ok,
        f"scenes {hits}/50, epe {rep.epe:.3f} vs zero {rep0.epe:.3f}, sweep {[round(e, 2) for e in epes]}",
    )


# ---------- criterion 7: annotation workflow ----------


def test_criterion_annotation(desk_run):
    model = desk_run["result"].model
    scenes = heldout_translating_scenes(50)
    params = AnnotationParams(direction_count=8, threshold=0.4)
    iou_hits = 0
    monotone = 0
    applicable = 0
    for s in scenes:
        gt = s.masks[0]
        click = inner_point(gt)
        mask1 = annotate_mask(model, s.pair.image, [click], [], params)
        union = (mask1 | gt).sum()
        iou = (mask1 & gt).sum() / union if union else 0.0
        iou_hits += int(iou >= 0.5)

        fp1 = mask1 & ~gt
        if fp1.any():
            applicable += 1
            neg = inner_point(fp1)
            mask2 = annotate_mask(model, s.pair.image, [click], [neg], params)
            fp2 = mask2 & ~gt
            if fp2.sum() <= fp1.sum():
                monotone += 1
        else:
            monotone += 1

    ok = iou_hits >= 35 and monotone == 50
    report(
        "annotation workflow (IoU>=0.5 for >=70%, negative click never grows FP area)",
        ok,
        f"iou {iou_hits}/50, monotone {monotone}/50 ({applicable} applicable)",
    )


# ---------- criterion 8: stride ablation harness ----------


def test_criterion_stride_ablation(desk_run, tmp_path_factory):
    from dataclasses import replace

    cfg = replace(desk_run["cfg"], out_dir=str(tmp_path_factory.mktemp("ablate")))
    out = run_stride_ablation(cfg, budget_scale=0.25)
    print(out["table"], file=sys.__stdout__, flush=True)
    rows = out["rows"]
    ok = (
        [tuple(r["strides"]) for r in rows] == [(1,), (1, 2), (1, 2, 4), (1, 2, 4, 8)]
        and all(r["iterations"] == cfg.optimizer.total_iterations // 4 for r in rows)
        and all(np.isfinite(r["epe"]) for r in rows)
    )
    report("stride ablation harness (4 combos at 1/4 budget, comparison table)", ok)
