"""Real backend: thin wrappers around configurable vision and language models.

This module is a deployment skeleton. It imports heavy dependencies lazily so
the package installs and the toy backend runs without them. The model choices
come entirely from ServerConfig; none are hard-coded in the endpoint logic.

The proposal endpoint queries the open-vocabulary detector with the generic
text "object" so it returns class-agnostic candidate boxes.
"""

from __future__ import annotations

import base64
import io

from .config import ServerConfig
from .toy import ToyError, decode_image, rle_encode

PROPOSAL_QUERY = "object"


class RealBackend:
    """Serves the four tool endpoints from locally loaded model weights.

    Models load lazily on first use and are cached on the instance. Requests
    are handled synchronously; GPU inference is serialized per process.
    """

    def __init__(self, config: ServerConfig):
        self.config = config
        self._detector = None
        self._encoder = None
        self._lvlm = None

    def _load_detector(self):
        if self._detector is None:
            from transformers import pipeline

            self._detector = pipeline(
                "zero-shot-object-detection", model=self.config.detector_model
            )
        return self._detector

    def _load_encoder(self):
        if self._encoder is None:
            from transformers import AutoImageProcessor, AutoModel

            self._encoder = (
                AutoImageProcessor.from_pretrained(self.config.encoder_model),
                AutoModel.from_pretrained(self.config.encoder_model),
            )
        return self._encoder

    def _load_lvlm(self):
        if self._lvlm is None:
            from transformers import pipeline

            self._lvlm = pipeline(
                "image-text-to-text", model=self.config.lvlm_model
            )
        return self._lvlm

    @staticmethod
    def _pil(image_b64: str):
        from PIL import Image

        raw, _, _ = decode_image(image_b64)
        return Image.open(io.BytesIO(raw)).convert("RGB")

    def segment(self, image_b64: str, text_query: str) -> dict:
        """Detector boxes for the query, rasterized to box-shaped masks.

        A dedicated segmenter can be substituted here; box-shaped masks keep
        the wire contract identical either way.
        """
        import numpy as np

        if not text_query.strip():
            raise ToyError("text_query must be non-empty")
        image = self._pil(image_b64)
        results = self._load_detector()(image, candidate_labels=[text_query])
        results.sort(key=lambda r: -r["score"])
        masks, scores = [], []
        for r in results:
            box = r["box"]
            bits = np.zeros((image.height, image.width), dtype=bool)
            bits[box["ymin"]:box["ymax"], box["xmin"]:box["xmax"]] = True
            masks.append(rle_encode(bits))
            scores.append(float(r["score"]))
        return {"masks": masks, "scores": scores}

    def propose(self, image_b64: str) -> dict:
        image = self._pil(image_b64)
        results = self._load_detector()(image, candidate_labels=[PROPOSAL_QUERY])
        results.sort(key=lambda r: -r["score"])
        boxes = [
            [r["box"]["xmin"], r["box"]["ymin"], r["box"]["xmax"], r["box"]["ymax"]]
            for r in results
        ]
        return {"boxes": boxes, "scores": [float(r["score"]) for r in results]}

    def embed(self, image_b64: str) -> dict:
        import numpy as np
        import torch

        processor, model = self._load_encoder()
        image = self._pil(image_b64)
        inputs = processor(images=image, return_tensors="pt")
        with torch.no_grad():
            out = model(**inputs)
        # drop the CLS token, keep the square patch grid
        patches = out.last_hidden_state[0, 1:].numpy().astype("<f4")
        side = int(round(patches.shape[0] ** 0.5))
        if side * side != patches.shape[0]:
            raise ToyError(f"non-square patch grid: {patches.shape[0]} tokens")
        data = patches.reshape(side, side, -1)
        return {
            "grid_h": side,
            "grid_w": side,
            "dim": int(data.shape[2]),
            "image_h": image.height,
            "image_w": image.width,
            "data_b64": base64.b64encode(data.tobytes()).decode("ascii"),
        }

    def generate(self, image_b64: str, prompt: str, max_tokens: int) -> dict:
        if not prompt.strip():
            raise ToyError("prompt must be non-empty")
        image = self._pil(image_b64)
        result = self._load_lvlm()(
            text=prompt, images=image, max_new_tokens=max_tokens
        )
        text = result[0]["generated_text"]
        return {"text": text, "truncated": len(text.split()) >= max_tokens}
