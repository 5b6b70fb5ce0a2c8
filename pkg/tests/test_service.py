import base64

import numpy as np
import pytest
from fastapi.testclient import TestClient

from conftest import TINY_ARCH
from motionprop.flow import FlowImage, read_flo
from motionprop.model import MotionPropNet
from motionprop.service import AnnotationParams, annotate_mask, create_app, mask_to_png_b64


@pytest.fixture(scope="module")
def model():
    return MotionPropNet(TINY_ARCH, seed=2)


@pytest.fixture(scope="module")
def client(model):
    return TestClient(create_app(model=model, max_image_side=128))


@pytest.fixture(scope="module")
def image_b64():
    rng = np.random.default_rng(0)
    img = FlowImage(rng.integers(0, 256, (32, 32, 3), dtype=np.uint8))
    return base64.b64encode(img.to_png_bytes()).decode()


def decode_mask(b64):
    from PIL import Image
    import io

    img = Image.open(io.BytesIO(base64.b64decode(b64)))
    assert img.mode == "L"
    return np.asarray(img) > 0


class TestHealth:
    def test_healthz(self, client):
        r = client.get("/v1/healthz")
        assert r.status_code == 200
        assert r.json() == {"status": "ok", "model_loaded": True}

    def test_model_not_loaded_503(self, image_b64):
        bare = TestClient(create_app(model=None))
        assert bare.get("/v1/healthz").json()["model_loaded"] is False
        r = bare.post("/v1/propagate", json={"image": image_b64, "arrows": []})
        assert r.status_code == 503


class TestPropagate:
    def test_zero_arrows_valid_flow(self, client, image_b64):
        r = client.post("/v1/propagate", json={"image": image_b64, "arrows": []})
        assert r.status_code == 200
        body = r.json()
        assert body["width"] == 32 and body["height"] == 32
        flow = read_flo(base64.b64decode(body["flow_flo"]))
        assert flow.width == 32 and flow.height == 32
        png = base64.b64decode(body["flow_png"])
        assert png[:8] == b"\x89PNG\r\n\x1a\n"

    def test_byte_identical_responses(self, client, image_b64):
        req = {"image": image_b64, "arrows": [{"x": 4, "y": 5, "u": 3.0, "v": 0.0}]}
        a = client.post("/v1/propagate", json=req)
        b = client.post("/v1/propagate", json=req)
        assert a.content == b.content

    def test_out_of_bounds_arrow_400(self, client, image_b64):
        r = client.post(
            "/v1/propagate", json={"image": image_b64, "arrows": [{"x": 99, "y": 0, "u": 1, "v": 0}]}
        )
        assert r.status_code == 400
        assert r.json()["detail"]["field"] == "arrows[0]"

    def test_duplicate_arrow_400(self, client, image_b64):
        arrows = [{"x": 3, "y": 3, "u": 1, "v": 0}, {"x": 3, "y": 3, "u": 0, "v": 1}]
        r = client.post("/v1/propagate", json={"image": image_b64, "arrows": arrows})
        assert r.status_code == 400
        assert r.json()["detail"]["field"] == "arrows[1]"

    def test_bad_image_400(self, client):
        r = client.post("/v1/propagate", json={"image": "bm90IGEgcG5n", "arrows": []})
        assert r.status_code == 400
        assert r.json()["detail"]["field"] == "image"

    def test_oversized_image_400(self, client):
        big = FlowImage(np.zeros((200, 200, 3), np.uint8))
        b64 = base64.b64encode(big.to_png_bytes()).decode()
        r = client.post("/v1/propagate", json={"image": b64, "arrows": []})
        assert r.status_code == 400

    def test_schema_violation_is_4xx(self, client):
        r = client.post("/v1/propagate", json={"arrows": []})
        assert r.status_code == 422


class TestGenerateFrame:
    def test_returns_png_image(self, client, image_b64):
        r = client.post("/v1/generate-frame", json={"image": image_b64, "arrows": []})
        assert r.status_code == 200
        png = base64.b64decode(r.json()["image"])
        img = FlowImage.from_png_bytes(png)
        assert img.width == 32 and img.height == 32


class TestSession:
    def state(self, image_b64, pos, neg, **kw):
        return {"image": image_b64, "positives": pos, "negatives": neg, **kw}

    def test_put_then_get_idempotent(self, client, image_b64):
        st = self.state(image_b64, [[16, 16]], [])
        a = client.put("/v1/session/s1", json=st)
        assert a.status_code == 200
        b = client.put("/v1/session/s1", json=st)
        assert a.content == b.content
        g = client.get("/v1/session/s1")
        assert g.status_code == 200
        assert g.json() == a.json()

    def test_unknown_session_404(self, client):
        assert client.get("/v1/session/nope").status_code == 404

    def test_replay_smaller_state_equals_earlier_response(self, client, image_b64):
        st1 = self.state(image_b64, [[16, 16]], [])
        st2 = self.state(image_b64, [[16, 16]], [[4, 4]])
        r1 = client.put("/v1/session/u", json=st1)
        client.put("/v1/session/u", json=st2)
        r3 = client.put("/v1/session/u", json=st1)  # undo by replaying old state
        assert r1.content == r3.content

    def test_no_positives_400(self, client, image_b64):
        r = client.put("/v1/session/e", json=self.state(image_b64, [], []))
        assert r.status_code == 400

    def test_out_of_bounds_point_400(self, client, image_b64):
        r = client.put("/v1/session/e2", json=self.state(image_b64, [[64, 2]], []))
        assert r.status_code == 400

    def test_threshold_one_empty_mask(self, client, image_b64):
        r = client.put("/v1/session/t1", json=self.state(image_b64, [[16, 16]], [], threshold=1.0))
        assert r.status_code == 200
        assert not decode_mask(r.json()["mask_png"]).any()

    def test_mask_dims_match_image(self, client, image_b64):
        r = client.put("/v1/session/d", json=self.state(image_b64, [[8, 9]], [[2, 2]]))
        mask = decode_mask(r.json()["mask_png"])
        assert mask.shape == (32, 32)


class TestAnnotateMask:
    def test_requires_positive(self, model):
        img = FlowImage(np.zeros((16, 16, 3), np.uint8))
        with pytest.raises(ValueError):
            annotate_mask(model, img, [], [])

    def test_negative_neighborhood_excluded(self, model):
        rng = np.random.default_rng(1)
        img = FlowImage(rng.integers(0, 256, (16, 16, 3), dtype=np.uint8))
        mask = annotate_mask(model, img, [(8, 8)], [(10, 8)], AnnotationParams(threshold=0.05))
        assert not mask[7:10, 9:12].any()

    def test_components_require_positive(self, model):
        # threshold so low everything fires; only the component holding
        # the positive survives, and it must contain the click
        rng = np.random.default_rng(2)
        img = FlowImage(rng.integers(0, 256, (16, 16, 3), dtype=np.uint8))
        mask = annotate_mask(model, img, [(3, 3)], [], AnnotationParams(threshold=0.05))
        if mask.any():
            assert mask[3, 3]

    def test_param_validation(self):
        with pytest.raises(ValueError):
            AnnotationParams(direction_count=3)
        with pytest.raises(ValueError):
            AnnotationParams(threshold=0.0)
        with pytest.raises(ValueError):
            AnnotationParams(threshold=1.2)
        with pytest.raises(ValueError):
            AnnotationParams(dummy_magnitude=-1.0)
        AnnotationParams(threshold=1.0)  # the endpoint case stays legal

    def test_mask_png_roundtrip(self):
        m = np.zeros((5, 7), bool)
        m[1, 2] = True
        assert np.array_equal(decode_mask(mask_to_png_b64(m)), m)


def test_ui_mount(tmp_path, model):
    (tmp_path / "index.html").write_text("<html><body>ui</body></html>")
    client = TestClient(create_app(model=model, ui_dir=tmp_path))
    r = client.get("/ui/")
    assert r.status_code == 200
    assert "ui" in r.text
