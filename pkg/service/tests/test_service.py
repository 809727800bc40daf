"""Secondary-component tests: config, app behavior, and the conformance
suite run against both the reference service (stub models) and the
orchestrator's mock server."""

import threading

import pytest
from fastapi.testclient import TestClient

from modelserve import (
    ConfigError,
    ModelLoadError,
    ServiceConfig,
    SpyOVD,
    StubOVD,
    conformance,
    create_app,
    resolve_model,
)
from modelserve.errors import TargetUnreachable
from vqaground.datasets import synth_generate
from vqaground.mock_server import MockBackendServer

STUB_MODELS = {"vqa": "stub:vqa", "llm": "stub:llm", "ovd": "stub:ovd"}


def _config(**overrides):
    return ServiceConfig(models=dict(STUB_MODELS), **overrides)


@pytest.fixture
def client():
    return TestClient(create_app(_config()))


class TestServiceConfig:
    def test_unknown_role_rejected(self):
        with pytest.raises(ConfigError):
            ServiceConfig(models={**STUB_MODELS, "asr": "stub:asr"})

    def test_missing_role_rejected(self):
        with pytest.raises(ConfigError) as err:
            ServiceConfig(models={"vqa": "stub:vqa"})
        assert "llm" in str(err.value)

    def test_load_roundtrip(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(
            '{"models": {"vqa": "stub:vqa", "llm": "stub:llm", "ovd": "stub:ovd"},'
            ' "max_concurrent": 2, "port": 9000}'
        )
        cfg = ServiceConfig.load(path)
        assert cfg.max_concurrent == 2
        assert cfg.port == 9000

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            ServiceConfig.from_dict({"models": STUB_MODELS, "gpu": True})

    def test_unknown_model_identifier_fails_at_startup(self):
        cfg = _config()
        cfg.models["vqa"] = "bogus:model"
        with pytest.raises(ModelLoadError):
            create_app(cfg)

    def test_resolve_stubs(self):
        assert isinstance(resolve_model("ovd", "stub:ovd"), StubOVD)


class TestRoutes:
    def test_healthz(self, client):
        resp = client.get("/healthz")
        assert resp.status_code == 200
        assert resp.json() == {"status": "ok"}

    def test_vqa(self, client):
        resp = client.post("/v1/vqa", json={"image": {"path": "x.png"}, "question": "q?"})
        assert resp.status_code == 200
        assert isinstance(resp.json()["answer"], str)

    def test_missing_field_is_400_with_field_name(self, client):
        resp = client.post("/v1/vqa", json={"question": "q?"})
        assert resp.status_code == 400
        assert "image" in resp.json()["error"]

    def test_bad_image_object_is_400(self, client):
        resp = client.post("/v1/vqa", json={"image": "x.png", "question": "q?"})
        assert resp.status_code == 400

    def test_llm(self, client):
        resp = client.post("/v1/llm", json={"prompt": "anything"})
        assert resp.status_code == 200
        assert isinstance(resp.json()["text"], str)

    def test_llm_bad_max_tokens(self, client):
        resp = client.post("/v1/llm", json={"prompt": "x", "max_tokens": -1})
        assert resp.status_code == 400

    def test_ovd_schema(self, client):
        resp = client.post("/v1/ovd", json={
            "image": {"path": "x.png"}, "caption": "the red cube",
            "box_threshold": 0.25, "text_threshold": 0.25,
        })
        assert resp.status_code == 200
        body = resp.json()
        assert body["coords"] == "pixel"
        assert body["width"] > 0 and body["height"] > 0
        for det in body["detections"]:
            assert set(det) == {"bbox", "phrase", "score"}
            assert det["score"] >= 0.25

    def test_ovd_threshold_filters(self, client):
        def scores(threshold):
            resp = client.post("/v1/ovd", json={
                "image": {"path": "x.png"}, "caption": "x",
                "box_threshold": threshold, "text_threshold": 0.25,
            })
            return [d["score"] for d in resp.json()["detections"]]

        assert scores(0.05) == [0.9, 0.5, 0.3, 0.1]
        assert scores(0.4) == [0.9, 0.5]

    def test_ovd_out_of_range_threshold_400(self, client):
        resp = client.post("/v1/ovd", json={
            "image": {"path": "x.png"}, "caption": "x",
            "box_threshold": 1.5, "text_threshold": 0.25,
        })
        assert resp.status_code == 400

    def test_unknown_route_404(self, client):
        assert client.post("/v1/nope", json={}).status_code == 404

    def test_malformed_body_400(self, client):
        resp = client.post("/v1/vqa", content=b"{oops",
                           headers={"Content-Type": "application/json"})
        assert resp.status_code == 400


class TestThresholdPassThrough:
    def test_spy_sees_exact_request_thresholds(self):
        spy = SpyOVD()
        client = TestClient(create_app(_config(), models={"ovd": spy}))
        client.post("/v1/ovd", json={
            "image": {"path": "x.png"}, "caption": "the red cube",
            "box_threshold": 0.37, "text_threshold": 0.61,
        })
        assert spy.calls == [{
            "caption": "the red cube",
            "box_threshold": 0.37,
            "text_threshold": 0.61,
        }]


class TestConcurrency:
    def test_healthz_answers_while_inference_is_saturated(self):
        release = threading.Event()

        class BlockingOVD(StubOVD):
            def detect(self, *args, **kwargs):
                release.wait(timeout=10)
                return super().detect(*args, **kwargs)

        app = create_app(_config(max_concurrent=1), models={"ovd": BlockingOVD()})
        with TestClient(app) as client:
            body = {"image": {"path": "x.png"}, "caption": "x",
                    "box_threshold": 0.25, "text_threshold": 0.25}
            worker = threading.Thread(target=client.post,
                                      args=("/v1/ovd",), kwargs={"json": body})
            worker.start()
            try:
                assert client.get("/healthz").status_code == 200
            finally:
                release.set()
                worker.join()


class TestConformance:
    def test_reference_service_with_stubs_conforms(self):
        client = TestClient(create_app(_config()))
        report = conformance("testclient://reference", client=client)
        assert report.ok, report.render()

    def test_mock_server_conforms(self, tmp_path):
        scenes_path, _, vqa_path = synth_generate(7, 5, 64, tmp_path)
        server = MockBackendServer(scenes_path, vqa_path)
        server.start()
        try:
            report = conformance(server.base_url)
        finally:
            server.stop()
        assert report.ok, report.render()

    def test_wrong_threshold_behavior_is_a_named_failure(self):
        class IgnoresThresholdOVD(StubOVD):
            def detect(self, image, caption, box_threshold, text_threshold):
                return super().detect(image, caption, 0.0, 0.0)

        client = TestClient(create_app(_config(), models={"ovd": IgnoresThresholdOVD()}))
        report = conformance("testclient://bad", client=client)
        failed = [c.name for c in report.checks if not c.ok]
        assert failed == ["ovd applies the request's box_threshold"]

    def test_missing_coords_is_a_named_failure(self):
        from modelserve.models import OvdOutput

        class NoCoordsOVD(StubOVD):
            def detect(self, image, caption, box_threshold, text_threshold):
                out = super().detect(image, caption, box_threshold, text_threshold)
                return OvdOutput(out.detections, coords="", width=out.width,
                                 height=out.height)

        client = TestClient(create_app(_config(), models={"ovd": NoCoordsOVD()}))
        report = conformance("testclient://bad", client=client)
        failed = [c.name for c in report.checks if not c.ok]
        assert "ovd declares coords" in failed

    def test_unreachable_target(self):
        with pytest.raises(TargetUnreachable):
            conformance("http://127.0.0.1:9")

    def test_report_render_lines(self):
        client = TestClient(create_app(_config()))
        text = conformance("testclient://reference", client=client).render()
        assert text.splitlines()[0].startswith("PASS")
        assert "CONFORMANT" in text.splitlines()[-1]
