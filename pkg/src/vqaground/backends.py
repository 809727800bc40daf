"""Clients for the three pluggable model roles (VQA, LLM, OVD).

Real backends speak JSON over HTTP:

    POST {base}/v1/vqa  {"image": ..., "question": ...}        -> {"answer": ...}
    POST {base}/v1/llm  {"prompt": ..., "max_tokens"?: ...}    -> {"text": ...}
    POST {base}/v1/ovd  {"image": ..., "caption": ...,
                         "box_threshold": ..., "text_threshold": ...}
        -> {"detections": [{"bbox": [x0, y0, x1, y1], "phrase": ..., "score": ...}],
            "coords": "pixel" | "normalized", "width": ..., "height": ...}

where "image" is {"path": ...} or {"b64": ...}.  Endpoints with a
"mock:<name>" base_url resolve to deterministic in-process doubles instead,
so configs can swap real and mock backends without code changes.
"""

from __future__ import annotations

import base64
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .errors import (
    BackendProtocolError,
    BackendTimeout,
    BackendUnavailable,
    InvalidThreshold,
    PromptParseError,
    UnknownImage,
)
from .geometry import BBox
from .prompting import heuristic_declarative, parse_default_prompt


@dataclass(frozen=True)
class Detection:
    bbox: BBox
    phrase: str
    score: float

    def __post_init__(self):
        if not 0 <= self.score <= 1:
            raise ValueError(f"detection score must be in [0, 1], got {self.score}")

    def to_dict(self) -> dict:
        return {"bbox": self.bbox.to_list(), "phrase": self.phrase, "score": self.score}

    @classmethod
    def from_dict(cls, d: dict) -> "Detection":
        return cls(BBox.from_list(d["bbox"]), str(d["phrase"]), float(d["score"]))


@dataclass(frozen=True)
class BackendEndpoint:
    role: str  # "vqa" | "llm" | "ovd"
    base_url: str
    timeout: float = 30.0
    max_retries: int = 2
    backoff: float = 0.5
    headers: dict = field(default_factory=dict, hash=False)

    def __post_init__(self):
        if self.role not in ("vqa", "llm", "ovd"):
            raise ValueError(f"unknown backend role {self.role!r}")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    @property
    def is_mock(self) -> bool:
        return self.base_url.startswith("mock:")


@dataclass(frozen=True)
class ImageRef:
    """Image handed to a backend: a filesystem path or raw bytes."""

    path: str | None = None
    data: bytes | None = None

    def __post_init__(self):
        if (self.path is None) == (self.data is None):
            raise ValueError("image reference needs exactly one of path/data")

    def wire(self) -> dict:
        if self.path is not None:
            return {"path": self.path}
        return {"b64": base64.b64encode(self.data).decode("ascii")}

    @property
    def key(self) -> str:
        """Identifier used by mock backends to look the image up."""
        if self.path is not None:
            return self.path
        return "b64:" + base64.b64encode(self.data).decode("ascii")[:32]


# ---------------------------------------------------------------------------
# scene oracle


@dataclass
class SceneObject:
    attributes: list[str]
    bbox: BBox

    def __post_init__(self):
        if not self.attributes:
            raise ValueError("scene object needs at least one attribute word")


@dataclass
class SceneImage:
    width: int
    height: int
    objects: list[SceneObject]


@dataclass
class SceneOracle:
    """Perfect detector over a known synthetic world: an object matches a
    caption iff all its attribute words appear in the caption."""

    scenes: dict[str, SceneImage]

    @classmethod
    def load(cls, path: str | Path) -> "SceneOracle":
        raw = json.loads(Path(path).read_text())
        scenes = {}
        for image, scene in raw["scenes"].items():
            objects = [
                SceneObject(list(o["attributes"]), BBox.from_list(o["bbox"]))
                for o in scene["objects"]
            ]
            scenes[image] = SceneImage(int(scene["width"]), int(scene["height"]), objects)
        return cls(scenes)

    def lookup(self, image_id: str) -> SceneImage:
        scene = self.scenes.get(image_id)
        if scene is None:
            # tolerate resolved absolute paths for path-keyed scenes
            scene = self.scenes.get(Path(image_id).name)
        if scene is None:
            raise UnknownImage(f"no scene for image {image_id!r}")
        return scene


def scene_oracle_detect(oracle: SceneOracle, image_id: str, caption: str) -> list[Detection]:
    """Detections for every object whose attribute words are all in the caption."""
    scene = oracle.lookup(image_id)
    words = set(caption.lower().split())
    out = []
    for obj in scene.objects:
        if all(a.lower() in words for a in obj.attributes):
            out.append(Detection(obj.bbox, " ".join(obj.attributes), 1.0))
    return out


# ---------------------------------------------------------------------------
# mock backends


class LookupVQA:
    """Table-driven VQA double: {image: {question: answer}}, else "unknown"."""

    def __init__(self, table: dict[str, dict[str, str]], fallback: str = "unknown"):
        self.table = table
        self.fallback = fallback

    @classmethod
    def load(cls, path: str | Path) -> "LookupVQA":
        return cls(json.loads(Path(path).read_text()))

    def answer(self, image_key: str, question: str) -> str:
        per_image = self.table.get(image_key) or self.table.get(Path(image_key).name)
        if per_image is None:
            return self.fallback
        return per_image.get(question, self.fallback)


class HeuristicLLM:
    """Parses a default-template prompt and applies the rule-based converter."""

    def generate(self, prompt: str) -> str:
        try:
            question, answer = parse_default_prompt(prompt)
        except ValueError as e:
            raise PromptParseError(str(e)) from e
        return heuristic_declarative(question, answer)


class LookupLLM:
    """Table-driven LLM double keyed by the full prompt text."""

    def __init__(self, table: dict[str, str]):
        self.table = table

    @classmethod
    def load(cls, path: str | Path) -> "LookupLLM":
        return cls(json.loads(Path(path).read_text()))

    def generate(self, prompt: str) -> str:
        try:
            return self.table[prompt]
        except KeyError:
            raise PromptParseError(f"no fixture caption for prompt {prompt!r}")


class SceneOVD:
    """Scene-oracle detector behind the OVD client interface."""

    def __init__(self, oracle: SceneOracle):
        self.oracle = oracle

    @classmethod
    def load(cls, path: str | Path) -> "SceneOVD":
        return cls(SceneOracle.load(path))

    def detect(self, image_key: str, caption: str) -> list[Detection]:
        return scene_oracle_detect(self.oracle, image_key, caption)


_REGISTRY: dict[str, object] = {}


def register_mock(name: str, backend: object) -> None:
    """Register an in-process mock addressable as base_url "mock:<name>"."""
    _REGISTRY[name] = backend


def clear_mocks() -> None:
    _REGISTRY.clear()


def resolve_mock(base_url: str):
    """Resolve a mock: URL to a backend object.

    Built-in forms: mock:heuristic (LLM), mock:scene:<path> (OVD),
    mock:lookup:<path> (VQA), mock:llm-lookup:<path> (LLM); anything else is
    looked up in the in-process registry.
    """
    name = base_url.removeprefix("mock:")
    if name in _REGISTRY:
        return _REGISTRY[name]
    if name == "heuristic":
        return HeuristicLLM()
    if name.startswith("scene:"):
        return SceneOVD.load(name.removeprefix("scene:"))
    if name.startswith("lookup:"):
        return LookupVQA.load(name.removeprefix("lookup:"))
    if name.startswith("llm-lookup:"):
        return LookupLLM.load(name.removeprefix("llm-lookup:"))
    raise BackendUnavailable(f"no mock backend registered as {name!r}")


# ---------------------------------------------------------------------------
# HTTP transport


def _post_with_retry(endpoint: BackendEndpoint, route: str, payload: dict) -> dict:
    url = endpoint.base_url.rstrip("/") + route
    attempts = endpoint.max_retries + 1
    last_error: Exception | None = None
    timed_out = False
    for attempt in range(attempts):
        if attempt:
            time.sleep(endpoint.backoff * (2 ** (attempt - 1)))
        try:
            resp = requests.post(
                url, json=payload, timeout=endpoint.timeout, headers=endpoint.headers
            )
        except requests.Timeout as e:
            last_error, timed_out = e, True
            continue
        except requests.RequestException as e:
            last_error, timed_out = e, False
            continue
        if resp.status_code >= 500:
            last_error = BackendUnavailable(f"{url} returned {resp.status_code}")
            timed_out = False
            continue
        if resp.status_code >= 400:
            raise BackendProtocolError(f"{url} returned {resp.status_code}: {resp.text[:200]}")
        try:
            body = resp.json()
        except ValueError as e:
            raise BackendProtocolError(f"{url} returned non-JSON body") from e
        if not isinstance(body, dict):
            raise BackendProtocolError(f"{url} returned a non-object body")
        return body
    if timed_out:
        raise BackendTimeout(f"{url} timed out after {attempts} attempts") from last_error
    raise BackendUnavailable(
        f"{url} unavailable after {attempts} attempts: {last_error}"
    ) from last_error


def _require(body: dict, key: str, url_hint: str):
    if key not in body:
        raise BackendProtocolError(f"{url_hint} response missing {key!r}")
    return body[key]


# ---------------------------------------------------------------------------
# role clients


def vqa_query(endpoint: BackendEndpoint, image: ImageRef, question: str) -> str:
    """Ask the VQA backend a question about an image."""
    if endpoint.role != "vqa":
        raise ValueError(f"endpoint role is {endpoint.role!r}, expected 'vqa'")
    if endpoint.is_mock:
        return str(resolve_mock(endpoint.base_url).answer(image.key, question))
    body = _post_with_retry(endpoint, "/v1/vqa", {"image": image.wire(), "question": question})
    answer = _require(body, "answer", "vqa")
    if not isinstance(answer, str):
        raise BackendProtocolError("vqa 'answer' must be a string")
    return answer


def llm_query(endpoint: BackendEndpoint, prompt: str, max_tokens: int | None = None) -> str:
    """Generate text from a prompt."""
    if endpoint.role != "llm":
        raise ValueError(f"endpoint role is {endpoint.role!r}, expected 'llm'")
    if endpoint.is_mock:
        return str(resolve_mock(endpoint.base_url).generate(prompt)).strip()
    payload: dict = {"prompt": prompt}
    if max_tokens is not None:
        payload["max_tokens"] = max_tokens
    body = _post_with_retry(endpoint, "/v1/llm", payload)
    text = _require(body, "text", "llm")
    if not isinstance(text, str):
        raise BackendProtocolError("llm 'text' must be a string")
    return text.strip()


def ovd_query(
    endpoint: BackendEndpoint,
    image: ImageRef,
    caption: str,
    box_threshold: float = 0.25,
    text_threshold: float = 0.25,
) -> list[Detection]:
    """Detect regions matching a caption; results sorted by descending score.

    Thresholds are passed through to the backend verbatim; normalized
    coordinates are converted to pixels centrally using the response's
    declared width/height.
    """
    if endpoint.role != "ovd":
        raise ValueError(f"endpoint role is {endpoint.role!r}, expected 'ovd'")
    for name, value in (("box_threshold", box_threshold), ("text_threshold", text_threshold)):
        if not 0 < value < 1:
            raise InvalidThreshold(f"{name} must be in (0, 1), got {value}")

    if endpoint.is_mock:
        detections = resolve_mock(endpoint.base_url).detect(image.key, caption)
    else:
        body = _post_with_retry(
            endpoint,
            "/v1/ovd",
            {
                "image": image.wire(),
                "caption": caption,
                "box_threshold": box_threshold,
                "text_threshold": text_threshold,
            },
        )
        raw = _require(body, "detections", "ovd")
        coords = _require(body, "coords", "ovd")
        if coords not in ("pixel", "normalized"):
            raise BackendProtocolError(f"ovd 'coords' must be pixel|normalized, got {coords!r}")
        width = _require(body, "width", "ovd")
        height = _require(body, "height", "ovd")
        detections = []
        for d in raw:
            try:
                x0, y0, x1, y1 = (float(v) for v in d["bbox"])
                phrase = str(d.get("phrase", ""))
                score = float(d["score"])
            except (KeyError, TypeError, ValueError) as e:
                raise BackendProtocolError(f"malformed detection: {d!r}") from e
            if coords == "normalized":
                x0, x1 = x0 * width, x1 * width
                y0, y1 = y0 * height, y1 * height
            try:
                box = BBox(x0, y0, x1, y1).clip(width, height)
            except ValueError as e:
                raise BackendProtocolError(f"invalid detection box: {d!r}") from e
            if box is None:
                continue
            detections.append(Detection(box, phrase, score))

    kept = [d for d in detections if d.score >= box_threshold]
    kept.sort(key=lambda d: -d.score)  # sort() is stable: ties keep input order
    return kept
