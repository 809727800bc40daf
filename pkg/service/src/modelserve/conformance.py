"""Wire-protocol conformance suite.

Runs the same battery of checks against any server claiming the backend
protocol — the orchestrator's mock server and this package's reference
service alike — and reports one pass/fail result per check.  The `client`
parameter accepts anything with requests-style ``get``/``post`` returning
objects with ``status_code`` and ``json()``, so an in-process ASGI test
client works as well as a live HTTP target.
"""

from __future__ import annotations

from dataclasses import dataclass

import requests

from .errors import TargetUnreachable

_PROMPT = (
    'questions: "What color is the cube?" answer: "red" '
    "convert to a declarative sentence:"
)
_DEFAULT_IMAGE = {"path": "scene_0000.png"}


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


@dataclass
class ConformanceReport:
    target: str
    checks: list[CheckResult]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def render(self) -> str:
        lines = [
            f"{'PASS' if c.ok else 'FAIL'}  {c.name}" + (f"  ({c.detail})" if c.detail else "")
            for c in self.checks
        ]
        verdict = "CONFORMANT" if self.ok else "NOT CONFORMANT"
        lines.append(f"{verdict}: {sum(c.ok for c in self.checks)}/{len(self.checks)} "
                     f"checks passed against {self.target}")
        return "\n".join(lines)


class _HttpClient:
    """requests-backed client for live targets."""

    def __init__(self, base_url: str, timeout: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def get(self, path: str):
        return requests.get(self.base_url + path, timeout=self.timeout)

    def post(self, path: str, json: dict):
        return requests.post(self.base_url + path, json=json, timeout=self.timeout)


def _check_detection_schema(det) -> str | None:
    if not isinstance(det, dict):
        return "detection is not an object"
    bbox = det.get("bbox")
    if (not isinstance(bbox, list) or len(bbox) != 4
            or not all(isinstance(v, (int, float)) for v in bbox)):
        return f"bad bbox: {bbox!r}"
    if bbox[0] >= bbox[2] or bbox[1] >= bbox[3]:
        return f"degenerate bbox: {bbox!r}"
    if not isinstance(det.get("phrase"), str):
        return "missing/invalid phrase"
    score = det.get("score")
    if not isinstance(score, (int, float)) or not 0 <= score <= 1:
        return f"score out of [0, 1]: {score!r}"
    return None


def _ovd_request(image: dict, **overrides) -> dict:
    body = {
        "image": image,
        "caption": "the red cube",
        "box_threshold": 0.25,
        "text_threshold": 0.25,
    }
    body.update(overrides)
    return body


def conformance(base_url: str, client=None, image: dict | None = None) -> ConformanceReport:
    """Run every protocol check against the target and collect the results.

    `image` is an image reference the target is expected to know (defaults
    to the first file of the seeded synthetic fixture).  Raises
    TargetUnreachable when the health endpoint cannot be reached at all;
    individual check failures are reported, not raised.
    """
    if image is None:
        image = _DEFAULT_IMAGE
    if client is None:
        client = _HttpClient(base_url)
    try:
        health = client.get("/healthz")
    except requests.RequestException as e:
        raise TargetUnreachable(f"cannot reach {base_url}: {e}") from e

    checks: list[CheckResult] = []

    def add(name: str, ok: bool, detail: str = ""):
        checks.append(CheckResult(name, bool(ok), detail))

    add("healthz returns 200", health.status_code == 200,
        f"status={health.status_code}")

    resp = client.post("/v1/vqa", json={"image": image, "question": "what color is the cube?"})
    body = resp.json() if resp.status_code == 200 else {}
    add("vqa answers with a string",
        resp.status_code == 200 and isinstance(body.get("answer"), str),
        f"status={resp.status_code}")

    resp = client.post("/v1/vqa", json={"question": "q?"})
    add("vqa without image is a 4xx", 400 <= resp.status_code < 500,
        f"status={resp.status_code}")

    resp = client.post("/v1/llm", json={"prompt": _PROMPT})
    body = resp.json() if resp.status_code == 200 else {}
    add("llm generates a string",
        resp.status_code == 200 and isinstance(body.get("text"), str),
        f"status={resp.status_code}")

    resp = client.post("/v1/llm", json={})
    add("llm without prompt is a 4xx", 400 <= resp.status_code < 500,
        f"status={resp.status_code}")

    resp = client.post("/v1/ovd", json=_ovd_request(image))
    if resp.status_code != 200:
        add("ovd returns 200 for a valid request", False, f"status={resp.status_code}")
    else:
        body = resp.json()
        add("ovd returns 200 for a valid request", True)
        add("ovd declares coords", body.get("coords") in ("pixel", "normalized"),
            f"coords={body.get('coords')!r}")
        add("ovd declares image dimensions",
            isinstance(body.get("width"), int) and isinstance(body.get("height"), int)
            and body.get("width", 0) > 0 and body.get("height", 0) > 0,
            f"width={body.get('width')!r} height={body.get('height')!r}")
        detections = body.get("detections")
        schema_problem = None
        if not isinstance(detections, list):
            schema_problem = "detections is not a list"
        else:
            for det in detections:
                schema_problem = _check_detection_schema(det)
                if schema_problem:
                    break
        add("ovd detections match the schema", schema_problem is None,
            schema_problem or f"{len(detections)} detections")

    high = client.post("/v1/ovd", json=_ovd_request(image, box_threshold=0.6))
    if high.status_code == 200:
        scores = [d.get("score", 0) for d in high.json().get("detections", [])]
        add("ovd applies the request's box_threshold",
            all(s >= 0.6 for s in scores), f"scores={scores}")
    else:
        add("ovd applies the request's box_threshold", False,
            f"status={high.status_code}")

    resp = client.post("/v1/ovd", json=_ovd_request(image, box_threshold=1.5))
    add("ovd rejects an out-of-range threshold", 400 <= resp.status_code < 500,
        f"status={resp.status_code}")

    malformed = _ovd_request(image)
    malformed["image"] = "not-an-object"
    resp = client.post("/v1/ovd", json=malformed)
    add("ovd rejects a malformed image field", 400 <= resp.status_code < 500,
        f"status={resp.status_code}")

    resp = client.post("/v1/does-not-exist", json={})
    add("unknown route is a 404", resp.status_code == 404,
        f"status={resp.status_code}")

    return ConformanceReport(target=base_url, checks=checks)
