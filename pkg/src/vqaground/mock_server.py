"""HTTP server exposing the mock backends over the real wire protocol.

Serves /v1/vqa, /v1/llm, /v1/ovd and /healthz on one port so remote clients
(and the protocol conformance suite) can be exercised without any model.
The VQA role answers from an optional lookup table, the LLM role uses the
rule-based converter, and the OVD role detects from a scene file.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .backends import HeuristicLLM, LookupVQA, SceneOracle, scene_oracle_detect
from .errors import PromptParseError, UnknownImage


class MockBackendServer:
    """Threaded HTTP server over the shared protocol, backed by mocks."""

    def __init__(
        self,
        scenes_path: str | Path | None = None,
        vqa_table_path: str | Path | None = None,
        host: str = "127.0.0.1",
        port: int = 0,
    ):
        self.oracle = SceneOracle.load(scenes_path) if scenes_path else SceneOracle({})
        self.vqa = LookupVQA.load(vqa_table_path) if vqa_table_path else LookupVQA({})
        self.llm = HeuristicLLM()
        handler = _make_handler(self)
        self._httpd = ThreadingHTTPServer((host, port), handler)
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> None:
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join()

    def serve_forever(self) -> None:
        self._httpd.serve_forever()


def _image_key(image) -> str:
    if not isinstance(image, dict):
        raise _BadRequest("'image' must be an object with 'path' or 'b64'")
    if "path" in image:
        return str(image["path"])
    if "b64" in image:
        return "b64:" + str(image["b64"])[:32]
    raise _BadRequest("'image' must carry 'path' or 'b64'")


class _BadRequest(Exception):
    pass


def _make_handler(server: MockBackendServer):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):  # keep test output quiet
            pass

        def _send(self, status: int, body: dict) -> None:
            data = json.dumps(body).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            if self.path == "/healthz":
                self._send(200, {"status": "ok"})
            else:
                self._send(404, {"error": f"no route {self.path}"})

        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            raw = self.rfile.read(length)
            try:
                body = json.loads(raw or b"null")
                if not isinstance(body, dict):
                    raise _BadRequest("request body must be a JSON object")
                if self.path == "/v1/vqa":
                    self._send(200, self._vqa(body))
                elif self.path == "/v1/llm":
                    self._send(200, self._llm(body))
                elif self.path == "/v1/ovd":
                    self._send(200, self._ovd(body))
                else:
                    self._send(404, {"error": f"no route {self.path}"})
            except json.JSONDecodeError:
                self._send(400, {"error": "request body is not valid JSON"})
            except _BadRequest as e:
                self._send(400, {"error": str(e)})
            except (PromptParseError, UnknownImage) as e:
                self._send(422, {"error": str(e)})
            except Exception as e:  # defensive: surface as a 5xx, not a hang
                self._send(500, {"error": f"{type(e).__name__}: {e}"})

        def _vqa(self, body: dict) -> dict:
            if "question" not in body or "image" not in body:
                raise _BadRequest("vqa request needs 'image' and 'question'")
            key = _image_key(body["image"])
            return {"answer": server.vqa.answer(key, str(body["question"]))}

        def _llm(self, body: dict) -> dict:
            if "prompt" not in body:
                raise _BadRequest("llm request needs 'prompt'")
            return {"text": server.llm.generate(str(body["prompt"]))}

        def _ovd(self, body: dict) -> dict:
            for field in ("image", "caption", "box_threshold", "text_threshold"):
                if field not in body:
                    raise _BadRequest(f"ovd request needs {field!r}")
            try:
                box_thr = float(body["box_threshold"])
                float(body["text_threshold"])
            except (TypeError, ValueError):
                raise _BadRequest("thresholds must be numbers")
            if not 0 < box_thr < 1:
                raise _BadRequest("box_threshold must be in (0, 1)")
            key = _image_key(body["image"])
            scene = server.oracle.lookup(key)
            detections = scene_oracle_detect(server.oracle, key, str(body["caption"]))
            return {
                "detections": [
                    d.to_dict() for d in detections if d.score >= box_thr
                ],
                "coords": "pixel",
                "width": scene.width,
                "height": scene.height,
            }

    return Handler
