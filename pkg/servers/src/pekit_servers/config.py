"""Server configuration: port, backend selection, and model identifiers."""

from __future__ import annotations

from dataclasses import dataclass

BACKENDS = ("toy", "real")


@dataclass(frozen=True)
class ServerConfig:
    """Settings for one server process.

    The toy backend loads no weights and answers every request as a pure
    function of the request body. The real backend is configured entirely by
    the three model identifier fields, so swapping the encoder, detector, or
    language model is a config change rather than a code change.
    """

    port: int = 8008
    backend: str = "toy"
    encoder_model: str = "facebook/dinov2-base"
    detector_model: str = "IDEA-Research/grounding-dino-base"
    lvlm_model: str = "llava-hf/llava-1.5-7b-hf"

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(
                f"backend must be one of {BACKENDS}, got {self.backend!r}"
            )
        if not (0 < self.port < 65536):
            raise ValueError(f"port out of range: {self.port}")
