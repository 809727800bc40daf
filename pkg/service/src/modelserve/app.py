"""FastAPI application implementing the backend wire protocol.

Routes mirror the orchestrator's mock server byte-for-byte at the schema
level: POST /v1/vqa, /v1/llm, /v1/ovd plus GET /healthz.  Schema violations
are 400 with a field-level message, inference failures are 500, and the
health endpoint never waits on the inference admission semaphore.
"""

from __future__ import annotations

import anyio
from fastapi import FastAPI, Request
from fastapi.concurrency import run_in_threadpool
from fastapi.responses import JSONResponse

from .config import ROLES, ServiceConfig
from .errors import InferenceError
from .models import resolve_model


class _BadRequest(Exception):
    pass


def _require(body: dict, field: str):
    if field not in body:
        raise _BadRequest(f"missing required field {field!r}")
    return body[field]


def _image_field(body: dict) -> dict:
    image = _require(body, "image")
    if not isinstance(image, dict) or not ({"path", "b64"} & set(image)):
        raise _BadRequest("'image' must be an object with 'path' or 'b64'")
    return image


def _threshold(body: dict, field: str) -> float:
    raw = _require(body, field)
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise _BadRequest(f"{field!r} must be a number")
    if not 0 < value < 1:
        raise _BadRequest(f"{field!r} must be in (0, 1), got {value}")
    return value


def create_app(config: ServiceConfig, models: dict | None = None) -> FastAPI:
    """Build the service app.

    `models` overrides the registry per role (tests inject stubs and spies
    this way); any role not overridden is resolved from the config, at
    startup, so an unloadable model fails the launch rather than the first
    request.
    """
    models = dict(models or {})
    for role in ROLES:
        if role not in models:
            models[role] = resolve_model(role, config.models[role], config.device)

    app = FastAPI(title="model backend service")
    gate = anyio.Semaphore(config.max_concurrent)

    async def admitted(call, *args):
        # bounded admission: requests beyond the cap queue on the semaphore,
        # and the blocking model call runs off the event loop
        async with gate:
            return await run_in_threadpool(call, *args)

    @app.exception_handler(_BadRequest)
    async def _bad_request(_: Request, exc: _BadRequest):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(InferenceError)
    async def _inference_error(_: Request, exc: InferenceError):
        return JSONResponse(status_code=500, content={"error": str(exc)})

    async def _json_body(request: Request) -> dict:
        try:
            body = await request.json()
        except Exception:
            raise _BadRequest("request body is not valid JSON")
        if not isinstance(body, dict):
            raise _BadRequest("request body must be a JSON object")
        return body

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok"}

    @app.post("/v1/vqa")
    async def vqa(request: Request):
        body = await _json_body(request)
        image = _image_field(body)
        question = str(_require(body, "question"))
        answer = await admitted(models["vqa"].answer, image, question)
        return {"answer": answer}

    @app.post("/v1/llm")
    async def llm(request: Request):
        body = await _json_body(request)
        prompt = str(_require(body, "prompt"))
        max_tokens = body.get("max_tokens")
        if max_tokens is not None and (not isinstance(max_tokens, int) or max_tokens < 1):
            raise _BadRequest("'max_tokens' must be a positive integer")
        text = await admitted(models["llm"].generate, prompt, max_tokens)
        return {"text": text}

    @app.post("/v1/ovd")
    async def ovd(request: Request):
        body = await _json_body(request)
        image = _image_field(body)
        caption = str(_require(body, "caption"))
        box_threshold = _threshold(body, "box_threshold")
        text_threshold = _threshold(body, "text_threshold")
        out = await admitted(
            models["ovd"].detect, image, caption, box_threshold, text_threshold
        )
        return {
            "detections": out.detections,
            "coords": out.coords,
            "width": out.width,
            "height": out.height,
        }

    return app
