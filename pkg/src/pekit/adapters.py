"""HTTP clients for the external vision tools and the LVLM.

All four tools (segmenter, proposal detector, patch encoder, generator)
share one POST/JSON protocol. Each client supports three modes:

- ``live``:    plain HTTP calls.
- ``record``:  live calls whose responses are written as fixtures.
- ``replay``:  responses served from fixtures only; a missing fixture is an
               error and never falls back to the network.

Fixtures are keyed by the SHA-256 of the canonicalized request body, so any
request change misses stale fixtures.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

from .features import BoundingBox, PatchFeatureMap, PixelMask
from .wire import decode_feature_map, decode_mask_rle, encode_image

MODES = ("live", "record", "replay")


class AdapterError(RuntimeError):
    """Transport, server, or fixture failure; carries the endpoint stage."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class SegmentationNotFoundError(AdapterError):
    """The segmenter returned no mask for a reference image."""


@dataclass
class AdapterEndpoint:
    base_url: str = ""
    timeout_ms: int = 30000
    retries: int = 2
    mode: str = "live"
    fixture_dir: str | Path | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown adapter mode: {self.mode}")
        if self.mode in ("record", "replay") and self.fixture_dir is None:
            raise ValueError(f"{self.mode} mode requires fixture_dir")


@dataclass
class Proposal:
    bbox: BoundingBox
    detector_score: float

    def __post_init__(self):
        if not (0.0 <= self.detector_score <= 1.0):
            raise ValueError("detector score must be in [0, 1]")


@dataclass
class GenerationResult:
    text: str
    truncated: bool


def canonical_request_key(body: dict) -> str:
    blob = json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def write_fixture(
    fixture_dir: str | Path, stage: str, body: dict, response: dict
) -> Path:
    """Store a canned response under the canonical key of ``body``."""
    key = canonical_request_key(body)
    path = Path(fixture_dir) / stage / f"{key}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps({"request_sha256": key, "response": response},
                   indent=2, ensure_ascii=False),
        encoding="utf-8",
    )
    return path


class AdapterClient:
    """One endpoint of the tool protocol, with record/replay fixtures."""

    def __init__(self, stage: str, endpoint: AdapterEndpoint):
        self.stage = stage
        self.endpoint = endpoint

    def _fixture_path(self, key: str) -> Path:
        return Path(self.endpoint.fixture_dir) / self.stage / f"{key}.json"

    def post(self, path: str, body: dict) -> dict:
        key = canonical_request_key(body)
        if self.endpoint.mode == "replay":
            fixture = self._fixture_path(key)
            if not fixture.exists():
                raise AdapterError(
                    self.stage, f"missing replay fixture {fixture} (key {key})"
                )
            return json.loads(fixture.read_text(encoding="utf-8"))["response"]

        response = self._post_live(path, body)
        if self.endpoint.mode == "record":
            fixture = self._fixture_path(key)
            fixture.parent.mkdir(parents=True, exist_ok=True)
            fixture.write_text(
                json.dumps({"request_sha256": key, "response": response},
                           indent=2, ensure_ascii=False),
                encoding="utf-8",
            )
        return response

    def _post_live(self, path: str, body: dict) -> dict:
        import requests

        url = self.endpoint.base_url.rstrip("/") + path
        timeout = self.endpoint.timeout_ms / 1000.0
        last_exc: Exception | None = None
        for attempt in range(self.endpoint.retries + 1):
            try:
                resp = requests.post(url, json=body, timeout=timeout)
            except requests.RequestException as exc:
                last_exc = exc
                if attempt < self.endpoint.retries:
                    time.sleep(min(0.2 * (attempt + 1), 1.0))
                continue
            if resp.status_code // 100 != 2:
                try:
                    message = resp.json().get("error", resp.text)
                except ValueError:
                    message = resp.text
                raise AdapterError(
                    self.stage, f"server error {resp.status_code}: {message}"
                )
            try:
                return resp.json()
            except ValueError as exc:
                raise AdapterError(self.stage, f"non-JSON response: {exc}") from exc
        raise AdapterError(self.stage, f"transport failure: {last_exc}")


class VisionToolbox:
    """Typed facade over the four protocol endpoints."""

    def __init__(
        self,
        segment: AdapterEndpoint,
        propose: AdapterEndpoint,
        embed: AdapterEndpoint,
        generate: AdapterEndpoint,
    ):
        self._segment = AdapterClient("segment", segment)
        self._propose = AdapterClient("propose", propose)
        self._embed = AdapterClient("embed", embed)
        self._generate = AdapterClient("generate", generate)

    def segment(
        self, image_bytes: bytes, category: str, image_id: str | None = None
    ) -> list[tuple[PixelMask, float]]:
        """Open-vocabulary masks for ``category``, sorted by descending score."""
        if not category:
            raise ValueError("category must be non-empty")
        resp = self._segment.post(
            "/v1/segment",
            {"image_b64": encode_image(image_bytes), "text_query": category},
        )
        masks = resp.get("masks", [])
        scores = resp.get("scores", [])
        if len(masks) != len(scores):
            raise AdapterError("segment", "masks/scores length mismatch")
        if not masks:
            where = f" in {image_id}" if image_id else ""
            raise SegmentationNotFoundError(
                "segment", f"object '{category}' not found{where}"
            )
        pairs = [(decode_mask_rle(m), float(s)) for m, s in zip(masks, scores)]
        pairs.sort(key=lambda p: -p[1])
        return pairs

    def propose(self, image_bytes: bytes) -> list[Proposal]:
        resp = self._propose.post(
            "/v1/propose", {"image_b64": encode_image(image_bytes)}
        )
        boxes = resp.get("boxes", [])
        scores = resp.get("scores", [])
        if len(boxes) != len(scores):
            raise AdapterError("propose", "boxes/scores length mismatch")
        return [
            Proposal(
                bbox=BoundingBox(int(x0), int(y0), int(x1), int(y1)),
                detector_score=float(s),
            )
            for (x0, y0, x1, y1), s in zip(boxes, scores)
        ]

    def embed(self, image_bytes: bytes) -> PatchFeatureMap:
        resp = self._embed.post(
            "/v1/embed", {"image_b64": encode_image(image_bytes)}
        )
        return decode_feature_map(resp)

    def generate(
        self, image_bytes: bytes, prompt: str, max_tokens: int = 512
    ) -> GenerationResult:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        resp = self._generate.post(
            "/v1/generate",
            {
                "image_b64": encode_image(image_bytes),
                "prompt": prompt,
                "max_tokens": int(max_tokens),
            },
        )
        return GenerationResult(
            text=str(resp.get("text", "")).rstrip(),
            truncated=bool(resp.get("truncated", False)),
        )
