"""Two-phase orchestration: object introduction and personalized inference."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .adapters import AdapterError, VisionToolbox
from .features import (
    InstanceEmbedding,
    bbox_to_selection,
    downsample_mask,
    pool_over_selection,
)
from .memory import MemoryStore
from .prompting import (
    DEFAULT_TEMPLATE,
    PALETTE,
    ColorAssignment,
    annotate_image,
    assign_colors,
    build_instruction,
)
from .retrieval import DetectedInstance, RetrievalConfig, retrieve_instances


class PipelineError(RuntimeError):
    """A pipeline stage failed; the message names the stage."""


@dataclass
class IntroductionRequest:
    name: str
    category: str
    reference_images: list[bytes]
    context: str = ""

    def __post_init__(self):
        if not self.name:
            raise ValueError("object name must be non-empty")
        if not self.category:
            raise ValueError("object category must be non-empty")
        if not self.reference_images:
            raise ValueError("at least one reference image is required")


@dataclass
class InferenceResult:
    answer: str
    detections: list[DetectedInstance]
    prompt_used: str
    annotated_image: np.ndarray
    truncated: bool = False


def image_to_array(image_bytes: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(image_bytes)) as im:
        return np.asarray(im.convert("RGB"))


def array_to_png(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(image).save(buf, format="PNG")
    return buf.getvalue()


def introduce_object(
    req: IntroductionRequest, store: MemoryStore, tools: VisionToolbox
) -> str:
    """Segment, pool and store each reference view; all-or-nothing.

    A failure on any reference image aborts the whole introduction without
    touching the store.
    """
    embeddings: list[InstanceEmbedding] = []
    for i, image_bytes in enumerate(req.reference_images):
        label = f"reference image {i + 1}/{len(req.reference_images)}"
        try:
            masks = tools.segment(image_bytes, req.category, image_id=label)
            fmap = tools.embed(image_bytes)
        except AdapterError as exc:
            raise PipelineError(f"introduction failed on {label}: {exc}") from exc
        mask = masks[0][0]
        if (mask.height, mask.width) != (fmap.image_h, fmap.image_w):
            raise PipelineError(
                f"introduction failed on {label}: mask size "
                f"{mask.height}x{mask.width} does not match feature map image "
                f"size {fmap.image_h}x{fmap.image_w}"
            )
        try:
            sel = downsample_mask(mask, (fmap.grid_h, fmap.grid_w))
            embeddings.append(pool_over_selection(fmap, sel))
        except ValueError as exc:
            raise PipelineError(f"introduction failed on {label}: {exc}") from exc
    return store.insert_object(
        name=req.name,
        context=req.context,
        category=req.category,
        embeddings=embeddings,
    )


def detect_objects(
    image_bytes: bytes,
    store: MemoryStore,
    cfg: RetrievalConfig,
    tools: VisionToolbox,
) -> list[DetectedInstance]:
    """Propose, pool and retrieve; never mutates the store.

    Proposals that fall outside the feature map's image bounds or pool to a
    degenerate embedding are skipped.
    """
    try:
        proposals = tools.propose(image_bytes)
        if not proposals:
            return []
        fmap = tools.embed(image_bytes)
    except AdapterError as exc:
        raise PipelineError(f"inference failed: {exc}") from exc
    pooled = []
    for prop in proposals:
        box = prop.bbox
        if box.x1 > fmap.image_w or box.y1 > fmap.image_h:
            continue
        try:
            emb = pool_over_selection(fmap, bbox_to_selection(box, fmap))
        except ValueError:
            continue
        pooled.append((box, emb))
    return retrieve_instances(pooled, store, cfg)


def personalized_inference(
    image_bytes: bytes,
    question: str,
    store: MemoryStore,
    cfg: RetrievalConfig,
    tools: VisionToolbox,
    template: str = DEFAULT_TEMPLATE,
    palette: tuple[ColorAssignment, ...] = PALETTE,
    max_tokens: int = 512,
    skip_generate: bool = False,
) -> InferenceResult:
    """Full personalized inference over one query image.

    With no detections the original image and raw question are used; with
    ``skip_generate`` the LVLM call is skipped and the answer left empty.
    """
    if not question:
        raise ValueError("question must be non-empty")
    detections = detect_objects(image_bytes, store, cfg, tools)
    image = image_to_array(image_bytes)
    if detections:
        assign_colors(detections, palette)
        annotated = annotate_image(image, detections, palette)
        prompt = build_instruction(detections, question, template, palette)
        send_bytes = array_to_png(annotated)
    else:
        annotated = image
        prompt = question
        send_bytes = image_bytes
    if skip_generate:
        return InferenceResult(
            answer="", detections=detections, prompt_used=prompt,
            annotated_image=annotated,
        )
    try:
        result = tools.generate(send_bytes, prompt, max_tokens=max_tokens)
    except AdapterError as exc:
        raise PipelineError(f"inference failed: {exc}") from exc
    return InferenceResult(
        answer=result.text,
        detections=detections,
        prompt_used=prompt,
        annotated_image=annotated,
        truncated=result.truncated,
    )
