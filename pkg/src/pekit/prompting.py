"""Visual prompting: colored box overlays plus the identity instruction text."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .retrieval import DetectedInstance


@dataclass(frozen=True)
class ColorAssignment:
    slot: int
    rgb: tuple[int, int, int]
    color_name: str


PALETTE: tuple[ColorAssignment, ...] = (
    ColorAssignment(0, (255, 0, 0), "red"),
    ColorAssignment(1, (0, 200, 0), "green"),
    ColorAssignment(2, (0, 90, 255), "blue"),
    ColorAssignment(3, (255, 140, 0), "orange"),
    ColorAssignment(4, (160, 32, 240), "purple"),
)

DEFAULT_TEMPLATE = 'The object inside the {color_name} bounding box is "{name}".'


def palette_from_pairs(pairs: list) -> tuple[ColorAssignment, ...]:
    """Build a palette from [[name, [r, g, b]], ...] config entries."""
    out = []
    for slot, (name, rgb) in enumerate(pairs):
        r, g, b = (int(v) for v in rgb)
        out.append(ColorAssignment(slot, (r, g, b), str(name)))
    if not out:
        raise ValueError("palette must contain at least one color")
    return tuple(out)


def assign_colors(
    detections: list[DetectedInstance],
    palette: tuple[ColorAssignment, ...] = PALETTE,
) -> list[DetectedInstance]:
    """Assign palette slots in detection order, wrapping past the palette end."""
    for i, det in enumerate(detections):
        det.color_slot = i % len(palette)
    return detections


def stroke_width(image_w: int, image_h: int) -> int:
    return max(3, round(0.006 * min(image_w, image_h)))


def annotate_image(
    image: np.ndarray,
    detections: list[DetectedInstance],
    palette: tuple[ColorAssignment, ...] = PALETTE,
) -> np.ndarray:
    """Draw each detection's box as an inward rectangle outline.

    Pixels outside the stroke bands are left untouched; with no detections
    the input is returned as an identical copy.
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("expected an (H, W, 3) image array")
    out = image.copy()
    h, w = image.shape[:2]
    t = stroke_width(w, h)
    for det in detections:
        box = det.bbox
        if box.x1 > w or box.y1 > h:
            raise ValueError(f"box {box} outside image bounds {w}x{h}")
        if det.color_slot is None:
            raise ValueError("detection has no color slot; call assign_colors first")
        rgb = palette[det.color_slot % len(palette)].rgb
        x0, y0, x1, y1 = box.x0, box.y0, box.x1, box.y1
        out[y0 : min(y0 + t, y1), x0:x1] = rgb
        out[max(y1 - t, y0) : y1, x0:x1] = rgb
        out[y0:y1, x0 : min(x0 + t, x1)] = rgb
        out[y0:y1, max(x1 - t, x0) : x1] = rgb
    return out


def build_instruction(
    detections: list[DetectedInstance],
    user_query: str,
    template: str = DEFAULT_TEMPLATE,
    palette: tuple[ColorAssignment, ...] = PALETTE,
) -> str:
    """Compose the identity clauses followed by the user query.

    With zero detections the query passes through unchanged. A custom
    template may use {color_name}, {name} and {context} placeholders; when
    it omits {context}, a non-empty context is appended as its own clause.
    """
    if not detections:
        return user_query
    clauses = []
    for det in detections:
        color = palette[det.color_slot % len(palette)]
        clause = template.format(
            color_name=color.color_name, name=det.name, context=det.context
        )
        if det.context and "{context}" not in template:
            clause = f"{clause} {det.context}"
        clauses.append(clause)
    return " ".join(clauses + [user_query])
