"""Model registry: maps config identifiers to role implementations.

Each role has a tiny duck-typed interface:

- vqa:  ``answer(image, question) -> str``
- llm:  ``generate(prompt, max_tokens) -> str``
- ovd:  ``detect(image, caption, box_threshold, text_threshold) -> OvdOutput``

``image`` is the raw wire object ({"path": ...} or {"b64": ...}); decoding is
each model's concern because stubs never need the bytes.  Real checkpoint
adapters (``hf:`` identifiers) import their ML dependencies lazily so the
service, its tests, and the stubs work on a machine without them.
"""

from __future__ import annotations

import base64
import io
from dataclasses import dataclass, field

from .errors import InferenceError, ModelLoadError


@dataclass
class OvdOutput:
    """What an ovd model returns: detections plus the frame they live in."""

    detections: list[dict]
    coords: str  # "pixel" | "normalized"
    width: int
    height: int


class StubVQA:
    """Deterministic canned answerer for tests and conformance runs."""

    def answer(self, image: dict, question: str) -> str:
        return "red"


class StubLLM:
    def generate(self, prompt: str, max_tokens: int | None = None) -> str:
        return "the red cube"


class StubOVD:
    """Fixed detection set with spread-out scores so threshold filtering
    is observable from the outside."""

    _DETECTIONS = [
        {"bbox": [4.0, 4.0, 20.0, 20.0], "phrase": "red cube", "score": 0.9},
        {"bbox": [24.0, 8.0, 40.0, 24.0], "phrase": "blue ball", "score": 0.5},
        {"bbox": [44.0, 40.0, 60.0, 56.0], "phrase": "green cone", "score": 0.3},
        {"bbox": [8.0, 44.0, 24.0, 60.0], "phrase": "gray cylinder", "score": 0.1},
    ]

    def detect(self, image: dict, caption: str, box_threshold: float,
               text_threshold: float) -> OvdOutput:
        kept = [d for d in self._DETECTIONS if d["score"] >= box_threshold]
        return OvdOutput(detections=kept, coords="pixel", width=64, height=64)


@dataclass
class SpyOVD:
    """Records every request's thresholds; used to prove pass-through."""

    calls: list[dict] = field(default_factory=list)
    inner: StubOVD = field(default_factory=StubOVD)

    def detect(self, image, caption, box_threshold, text_threshold):
        self.calls.append({
            "caption": caption,
            "box_threshold": box_threshold,
            "text_threshold": text_threshold,
        })
        return self.inner.detect(image, caption, box_threshold, text_threshold)


def _load_image_bytes(image: dict) -> bytes:
    if "path" in image:
        try:
            with open(image["path"], "rb") as fh:
                return fh.read()
        except OSError as e:
            raise InferenceError(f"cannot read image {image['path']!r}: {e}") from e
    try:
        return base64.b64decode(image["b64"])
    except Exception as e:
        raise InferenceError(f"cannot decode base64 image: {e}") from e


def _pil_image(image: dict):
    from PIL import Image

    try:
        return Image.open(io.BytesIO(_load_image_bytes(image))).convert("RGB")
    except OSError as e:
        raise InferenceError(f"undecodable image: {e}") from e


class HfVQA:
    """Adapter for Hugging Face VQA checkpoints (e.g. BLIP-style)."""

    def __init__(self, model_id: str, device: str = "cpu"):
        try:
            from transformers import pipeline
        except ImportError as e:
            raise ModelLoadError(
                f"{model_id!r} needs the 'models' extra (transformers/torch)"
            ) from e
        try:
            self._pipe = pipeline("visual-question-answering", model=model_id,
                                  device=device)
        except Exception as e:
            raise ModelLoadError(f"cannot load VQA model {model_id!r}: {e}") from e

    def answer(self, image: dict, question: str) -> str:
        out = self._pipe(image=_pil_image(image), question=question)
        if not out:
            raise InferenceError("VQA model returned no candidates")
        return str(out[0]["answer"])


class HfLLM:
    """Adapter for instruction-tuned text-generation checkpoints."""

    def __init__(self, model_id: str, device: str = "cpu"):
        try:
            from transformers import pipeline
        except ImportError as e:
            raise ModelLoadError(
                f"{model_id!r} needs the 'models' extra (transformers/torch)"
            ) from e
        try:
            self._pipe = pipeline("text-generation", model=model_id, device=device)
        except Exception as e:
            raise ModelLoadError(f"cannot load LLM {model_id!r}: {e}") from e

    def generate(self, prompt: str, max_tokens: int | None = None) -> str:
        out = self._pipe(prompt, max_new_tokens=max_tokens or 64,
                         return_full_text=False)
        return str(out[0]["generated_text"]).strip()


class HfOVD:
    """Adapter for zero-shot object-detection checkpoints (e.g. OWL-style)."""

    def __init__(self, model_id: str, device: str = "cpu"):
        try:
            from transformers import pipeline
        except ImportError as e:
            raise ModelLoadError(
                f"{model_id!r} needs the 'models' extra (transformers/torch)"
            ) from e
        try:
            self._pipe = pipeline("zero-shot-object-detection", model=model_id,
                                  device=device)
        except Exception as e:
            raise ModelLoadError(f"cannot load detector {model_id!r}: {e}") from e

    def detect(self, image: dict, caption: str, box_threshold: float,
               text_threshold: float) -> OvdOutput:
        pil = _pil_image(image)
        labels = [p.strip() for p in caption.split(".") if p.strip()] or [caption]
        raw = self._pipe(pil, candidate_labels=labels, threshold=box_threshold)
        detections = [
            {
                "bbox": [float(r["box"]["xmin"]), float(r["box"]["ymin"]),
                         float(r["box"]["xmax"]), float(r["box"]["ymax"])],
                "phrase": str(r["label"]),
                "score": float(r["score"]),
            }
            for r in raw
            if float(r["score"]) >= box_threshold
        ]
        detections.sort(key=lambda d: -d["score"])
        return OvdOutput(detections=detections, coords="pixel",
                         width=pil.width, height=pil.height)


_STUBS = {
    ("vqa", "stub:vqa"): StubVQA,
    ("llm", "stub:llm"): StubLLM,
    ("ovd", "stub:ovd"): StubOVD,
}

_HF_ADAPTERS = {"vqa": HfVQA, "llm": HfLLM, "ovd": HfOVD}


def resolve_model(role: str, identifier: str, device: str = "cpu"):
    """Instantiate the model configured for a role.

    stub:* identifiers resolve to in-process doubles; hf:<checkpoint>
    identifiers resolve to lazily-imported Hugging Face adapters.
    """
    stub = _STUBS.get((role, identifier))
    if stub is not None:
        return stub()
    if identifier.startswith("hf:"):
        return _HF_ADAPTERS[role](identifier[len("hf:"):], device=device)
    raise ModelLoadError(f"unknown model identifier {identifier!r} for role {role!r}")
