"""Deterministic toy backend: no model weights, pure functions of the request.

Every response is derived from the request bytes alone (image hashes seed the
pseudo feature maps), so identical requests always produce identical
payloads. That makes the toy server usable as a stand-in tool stack for
live-mode integration tests.
"""

from __future__ import annotations

import base64
import hashlib
import io
import re

import numpy as np
from PIL import Image

GRID_H = 16
GRID_W = 16
DIM = 32

_QUOTED = re.compile(r'"([^"]+)"')


class ToyError(ValueError):
    """Raised for requests the toy backend cannot serve."""


def decode_image(image_b64: str) -> tuple[bytes, int, int]:
    """Return the raw bytes plus decoded (height, width) of a base64 image."""
    try:
        raw = base64.b64decode(image_b64, validate=True)
    except (ValueError, TypeError) as exc:
        raise ToyError(f"invalid image_b64: {exc}") from exc
    try:
        with Image.open(io.BytesIO(raw)) as img:
            width, height = img.size
    except OSError as exc:
        raise ToyError(f"undecodable image: {exc}") from exc
    if height < 4 or width < 4:
        raise ToyError(f"image too small: {width}x{height}")
    return raw, height, width


def rle_encode(bits: np.ndarray) -> dict:
    """Column-major run-length counts, first run counting zeros."""
    flat = bits.ravel(order="F").astype(np.int8)
    changes = np.flatnonzero(np.diff(flat))
    edges = np.concatenate(([0], changes + 1, [flat.size]))
    counts = np.diff(edges).tolist()
    if flat[0] == 1:
        counts = [0] + counts
    return {"size": [int(bits.shape[0]), int(bits.shape[1])], "counts": counts}


def center_box(height: int, width: int) -> list[int]:
    """The middle-half rectangle of the image, in pixel coordinates."""
    return [width // 4, height // 4, (3 * width) // 4, (3 * height) // 4]


def segment(image_b64: str, text_query: str) -> dict:
    if not isinstance(text_query, str) or not text_query.strip():
        raise ToyError("text_query must be non-empty")
    _, height, width = decode_image(image_b64)
    x0, y0, x1, y1 = center_box(height, width)
    bits = np.zeros((height, width), dtype=bool)
    bits[y0:y1, x0:x1] = True
    return {"masks": [rle_encode(bits)], "scores": [0.9]}


def propose(image_b64: str) -> dict:
    _, height, width = decode_image(image_b64)
    boxes = [
        center_box(height, width),
        [0, 0, width, height],
        [0, 0, width // 2, height // 2],
    ]
    return {"boxes": boxes, "scores": [0.9, 0.5, 0.4]}


def embed(image_b64: str) -> dict:
    raw, height, width = decode_image(image_b64)
    seed = int.from_bytes(hashlib.sha256(raw).digest()[:8], "big")
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((GRID_H, GRID_W, DIM)).astype("<f4")
    return {
        "grid_h": GRID_H,
        "grid_w": GRID_W,
        "dim": DIM,
        "image_h": height,
        "image_w": width,
        "data_b64": base64.b64encode(data.tobytes()).decode("ascii"),
    }


def generate(image_b64: str, prompt: str, max_tokens: int) -> dict:
    if not isinstance(prompt, str) or not prompt.strip():
        raise ToyError("prompt must be non-empty")
    if not isinstance(max_tokens, int) or max_tokens < 1:
        raise ToyError(f"max_tokens must be a positive integer, got {max_tokens!r}")
    decode_image(image_b64)
    match = _QUOTED.search(prompt)
    if match:
        text = f'The image shows "{match.group(1)}".'
    else:
        text = "The image shows a generic scene."
    words = text.split(" ")
    truncated = len(words) > max_tokens
    if truncated:
        text = " ".join(words[:max_tokens])
    return {"text": text, "truncated": truncated}
