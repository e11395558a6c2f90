"""HTTP layer: four POST endpoints speaking the vision tool wire protocol.

Request and response bodies are JSON. Any failure, including a malformed
body, comes back as ``{"error": "<message>"}`` with a non-2xx status.
"""

from __future__ import annotations

import json

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .config import ServerConfig
from .toy import ToyError
from . import toy


def _error(message: str, status: int = 400) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=status)


async def _read_body(request: Request, required: dict) -> dict:
    """Parse the JSON body and check field presence and types.

    ``required`` maps field name to the accepted type (or tuple of types).
    """
    try:
        body = json.loads(await request.body())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ToyError(f"malformed JSON body: {exc}") from exc
    if not isinstance(body, dict):
        raise ToyError("request body must be a JSON object")
    for name, types in required.items():
        if name not in body:
            raise ToyError(f"missing field: {name}")
        if not isinstance(body[name], types):
            raise ToyError(f"field {name} has wrong type")
    return body


def _backend(config: ServerConfig):
    if config.backend == "toy":
        return toy
    from . import real

    return real.RealBackend(config)


def create_app(config: ServerConfig | None = None) -> FastAPI:
    config = config or ServerConfig()
    backend = _backend(config)
    app = FastAPI(title="pekit model servers", docs_url=None, redoc_url=None)

    @app.post("/v1/segment")
    async def segment(request: Request):
        try:
            body = await _read_body(
                request, {"image_b64": str, "text_query": str}
            )
            return backend.segment(body["image_b64"], body["text_query"])
        except ToyError as exc:
            return _error(str(exc))

    @app.post("/v1/propose")
    async def propose(request: Request):
        try:
            body = await _read_body(request, {"image_b64": str})
            return backend.propose(body["image_b64"])
        except ToyError as exc:
            return _error(str(exc))

    @app.post("/v1/embed")
    async def embed(request: Request):
        try:
            body = await _read_body(request, {"image_b64": str})
            return backend.embed(body["image_b64"])
        except ToyError as exc:
            return _error(str(exc))

    @app.post("/v1/generate")
    async def generate(request: Request):
        try:
            body = await _read_body(
                request,
                {"image_b64": str, "prompt": str, "max_tokens": int},
            )
            # bool is a subclass of int; reject it explicitly
            if isinstance(body["max_tokens"], bool):
                return _error("field max_tokens has wrong type")
            return backend.generate(
                body["image_b64"], body["prompt"], body["max_tokens"]
            )
        except ToyError as exc:
            return _error(str(exc))

    return app
