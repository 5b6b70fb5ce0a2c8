import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motionprop import data as D
from motionprop.flow import FlowField, FlowImage


class TestPairFrames:
    def test_paper_example(self):
        rule = D.FramePairingRule(max_interval=10)
        assert D.pair_frames([1, 4, 10, 21, 28], rule) == [(1, 4), (4, 10), (21, 28)]

    def test_interval_is_strict(self):
        rule = D.FramePairingRule(max_interval=10)
        assert D.pair_frames([0, 10], rule) == []
        assert D.pair_frames([0, 9], rule) == [(0, 9)]

    def test_no_pairs(self):
        assert D.pair_frames([1, 50], D.FramePairingRule(10)) == []

    def test_unsorted_rejected(self):
        with pytest.raises(ValueError):
            D.pair_frames([3, 1], D.FramePairingRule(10))
        with pytest.raises(ValueError):
            D.pair_frames([1, 1], D.FramePairingRule(10))

    @given(st.lists(st.integers(0, 400), min_size=0, max_size=40, unique=True), st.integers(1, 30))
    @settings(max_examples=150, deadline=None)
    def test_matches_gap_filter_oracle(self, ids, max_interval):
        ids = sorted(ids)
        rule = D.FramePairingRule(max_interval)
        got = D.pair_frames(ids, rule)
        expect = [(a, b) for a, b in zip(ids, ids[1:]) if b - a < max_interval]
        assert got == expect

    def test_invalid_rule(self):
        with pytest.raises(ValueError):
            D.FramePairingRule(0)


def ramp_pair(w=100, h=50, flow_u=2.0):
    rgb = np.zeros((h, w, 3), np.uint8)
    rgb[:, :, 0] = (np.arange(w)[None, :] * 255 // max(w - 1, 1)).astype(np.uint8)
    vals = np.zeros((h, w, 2), np.float32)
    vals[:, :, 0] = flow_u
    return D.ImageFlowPair(FlowImage(rgb), FlowField(vals), "ramp")


class TestPreprocess:
    def test_output_size_and_offsets(self):
        rng = np.random.default_rng(0)
        pair = D.ImageFlowPair(
            FlowImage(rng.integers(0, 256, (104, 104, 3), dtype=np.uint8)),
            FlowField(np.zeros((104, 104, 2), np.float32)),
            "x",
        )
        seen = set()
        for seed in range(60):
            out = D.preprocess(pair, 104, 96, seed)
            assert out.image.width == out.image.height == 96
            seen.add(D.crop_offsets(104, 104, 96, seed))
        oxs = {o[0] for o in seen}
        assert min(oxs) == 0 and max(oxs) == 8  # uniform over [0, 104-96]
        assert all(0 <= ox <= 8 and 0 <= oy <= 8 for ox, oy in seen)

    def test_desk_geometry(self):
        pair = ramp_pair(w=72, h=90)
        out = D.preprocess(pair, 72, 64, 3)
        assert out.image.width == 64 and out.flow.height == 64

    def test_flow_value_scaling(self):
        pair = ramp_pair(w=100, h=50, flow_u=2.0)
        out = D.preprocess(pair, 100, 80, 0)
        # shorter side 50 -> 100 doubles the horizontal geometry: u scales by 2
        assert np.allclose(out.flow.values[:, :, 0], 4.0, atol=1e-5)
        assert np.allclose(out.flow.values[:, :, 1], 0.0, atol=1e-7)

    def test_image_flow_crop_alignment(self):
        # encode column index in both image and flow; crops must agree
        w = h = 40
        rgb = np.zeros((h, w, 3), np.uint8)
        rgb[:, :, 1] = np.arange(w, dtype=np.uint8)[None, :] * 5
        vals = np.zeros((h, w, 2), np.float32)
        vals[:, :, 0] = np.arange(w, dtype=np.float32)[None, :]
        pair = D.ImageFlowPair(FlowImage(rgb), FlowField(vals), "coord")
        out = D.preprocess(pair, 40, 24, seed=9)  # no resize, pure crop
        ox, _ = D.crop_offsets(40, 40, 24, 9)
        assert np.array_equal(out.image.rgb[:, :, 1], rgb[:24, ox : ox + 24, 1][:24])
        assert np.allclose(out.flow.values[0, :, 0], np.arange(ox, ox + 24))

    def test_deterministic_per_seed(self):
        pair = ramp_pair()
        a = D.preprocess(pair, 60, 48, seed=(1, 2))
        b = D.preprocess(pair, 60, 48, seed=(1, 2))
        assert np.array_equal(a.image.rgb, b.image.rgb)
        assert np.array_equal(a.flow.values, b.flow.values)

    def test_crop_larger_than_short_side_rejected(self):
        with pytest.raises(ValueError):
            D.preprocess(ramp_pair(), 50, 64, 0)


class TestSynthetic:
    def test_deterministic_regeneration(self):
        a = D.generate_synthetic(6, 48, 17)
        b = D.generate_synthetic(6, 48, 17)
        for s, t in zip(a, b):
            assert np.array_equal(s.pair.image.rgb, t.pair.image.rgb)
            assert np.array_equal(s.pair.flow.values, t.pair.flow.values)
            assert len(s.masks) == len(t.masks)
            for m, n in zip(s.masks, t.masks):
                assert np.array_equal(m, n)

    def test_shapes_and_motions(self):
        scenes = D.generate_synthetic(30, 64, 5)
        kinds = set()
        for s in scenes:
            assert 0 < len(s.masks) <= 3
            assert len(s.masks) == len(s.motions)
            assert np.hypot(*s.pan) <= 2.0 + 1e-9
            for m in s.motions:
                kinds.add(m.kind)
                if m.kind == "translate":
                    assert 1.0 - 1e-9 <= np.hypot(m.u, m.v) <= 6.0 + 1e-9
        assert kinds == {"translate", "rotate"}

    def test_masks_disjoint(self):
        for s in D.generate_synthetic(15, 64, 6):
            total = np.zeros((64, 64), int)
            for m in s.masks:
                total += m.astype(int)
            assert total.max() <= 1

    def test_translating_shape_constant_flow(self):
        for s in D.generate_synthetic(20, 64, 8):
            for mask, motion in zip(s.masks, s.motions):
                if motion.kind != "translate":
                    continue
                vals = s.pair.flow.values[mask]
                assert np.all(vals[:, 0] == vals[0, 0])
                assert np.all(vals[:, 1] == vals[0, 1])
                assert vals[0, 0] == np.float32(motion.u)

    def test_rotating_shape_matches_analytic_formula(self):
        checked = 0
        for s in D.generate_synthetic(30, 64, 9):
            for mask, motion in zip(s.masks, s.motions):
                if motion.kind != "rotate":
                    continue
                yy, xx = np.nonzero(mask)
                dx = xx - motion.pivot_x
                dy = yy - motion.pivot_y
                c, si = np.cos(motion.angle), np.sin(motion.angle)
                eu = c * dx - si * dy - dx
                ev = si * dx + c * dy - dy
                got = s.pair.flow.values[mask]
                assert np.allclose(got[:, 0], eu, atol=1e-4)
                assert np.allclose(got[:, 1], ev, atol=1e-4)
                # edge speed stays within the generator cap
                assert np.hypot(got[:, 0], got[:, 1]).max() <= 6.0 + 1e-4
                checked += 1
        assert checked >= 3

    def test_rotation_discrete_curl(self):
        found = 0
        for s in D.generate_synthetic(40, 96, 10):
            for mask, motion in zip(s.masks, s.motions):
                if motion.kind != "rotate" or mask.sum() < 400:
                    continue
                u = s.pair.flow.values[:, :, 0].astype(np.float64)
                v = s.pair.flow.values[:, :, 1].astype(np.float64)
                # central differences strictly inside the mask
                interior = mask.copy()
                interior[1:] &= mask[:-1]
                interior[:-1] &= mask[1:]
                interior[:, 1:] &= mask[:, :-1]
                interior[:, :-1] &= mask[:, 1:]
                interior[[0, -1], :] = False
                interior[:, [0, -1]] = False
                if interior.sum() < 50:
                    continue
                dvdx = (np.roll(v, -1, axis=1) - np.roll(v, 1, axis=1)) / 2
                dudy = (np.roll(u, -1, axis=0) - np.roll(u, 1, axis=0)) / 2
                curl = (dvdx - dudy)[interior].mean()
                analytic = 2 * np.sin(motion.angle)
                assert abs(curl - analytic) <= 0.1 * abs(analytic) + 1e-6
                found += 1
        assert found >= 2

    def test_min_size_rejected(self):
        with pytest.raises(ValueError):
            D.generate_synthetic(1, 16, 0)


class TestCorpusIO:
    def test_write_load_roundtrip(self, tmp_path):
        samples = D.generate_synthetic(4, 48, 21)
        manifest = D.write_corpus(samples, tmp_path / "corpus")
        items = D.load_corpus(manifest)
        assert len(items) == 4
        for s, it in zip(samples, items):
            assert it.item_id == s.pair.source_id
            assert np.array_equal(it.pair.image.rgb, s.pair.image.rgb)
            assert np.array_equal(it.pair.flow.values, s.pair.flow.values)
            assert len(it.masks) == len(s.masks)
            for m, n in zip(it.masks, s.masks):
                assert np.array_equal(m, n)
            assert it.meta["motions"][0]["kind"] == s.motions[0].kind

    def test_manifest_schema(self, tmp_path):
        import json

        samples = D.generate_synthetic(2, 48, 22)
        manifest = D.write_corpus(samples, tmp_path / "c")
        records = json.loads(manifest.read_text())
        for rec in records:
            assert {"id", "image_path", "flo_path"} <= set(rec)

    def test_load_failure_reports_item(self, tmp_path):
        samples = D.generate_synthetic(2, 48, 23)
        manifest = D.write_corpus(samples, tmp_path / "c")
        (tmp_path / "c" / "flows" / "00001.flo").write_bytes(b"XXXX garbage")
        with pytest.raises(RuntimeError, match="syn23-00001"):
            D.load_corpus(manifest)


def test_blocky_corruption_deterministic_and_bounded():
    scenes = D.generate_synthetic(2, 64, 30)
    f = scenes[0].pair.flow
    a = D.corrupt_flow_blocky(f, (1, 2), cell=16, amplitude=3.0)
    b = D.corrupt_flow_blocky(f, (1, 2), cell=16, amplitude=3.0)
    assert np.array_equal(a.values, b.values)
    assert np.abs(a.values - f.values).max() <= 3.0
