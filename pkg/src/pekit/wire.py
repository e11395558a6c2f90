"""Wire codecs for the vision-tool protocol.

Masks travel as uncompressed COCO-style run-length counts (column-major,
first count is the leading run of zeros), feature maps as base64 float32
little-endian row-major blobs. Decoding then re-encoding any payload is
byte-identical.
"""

from __future__ import annotations

import base64

import numpy as np

from .features import PatchFeatureMap, PixelMask


class WireError(ValueError):
    """Raised when a payload does not match its declared shape."""


def encode_mask_rle(mask: PixelMask) -> dict:
    flat = mask.bits.ravel(order="F").astype(np.int8)
    # run boundaries; counts alternate zeros/ones starting with zeros
    change = np.flatnonzero(np.diff(flat))
    edges = np.concatenate(([0], change + 1, [flat.size]))
    counts = np.diff(edges).tolist()
    if flat.size and flat[0] == 1:
        counts = [0] + counts
    return {"size": [mask.height, mask.width], "counts": counts}


def decode_mask_rle(obj: dict) -> PixelMask:
    try:
        h, w = (int(v) for v in obj["size"])
        counts = [int(c) for c in obj["counts"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise WireError(f"malformed RLE mask: {exc}") from exc
    if any(c < 0 for c in counts):
        raise WireError("negative run length")
    total = sum(counts)
    if total != h * w:
        raise WireError(f"RLE counts sum {total} != {h}*{w}")
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for c in counts:
        if value:
            flat[pos : pos + c] = True
        pos += c
        value = not value
    return PixelMask(height=h, width=w, bits=flat.reshape((h, w), order="F"))


def encode_feature_map(fmap: PatchFeatureMap) -> dict:
    payload = fmap.data.astype("<f4").tobytes(order="C")
    return {
        "grid_h": fmap.grid_h,
        "grid_w": fmap.grid_w,
        "dim": fmap.dim,
        "image_h": fmap.image_h,
        "image_w": fmap.image_w,
        "data_b64": base64.b64encode(payload).decode("ascii"),
    }


def decode_feature_map(obj: dict) -> PatchFeatureMap:
    try:
        gh, gw, dim = int(obj["grid_h"]), int(obj["grid_w"]), int(obj["dim"])
        ih, iw = int(obj["image_h"]), int(obj["image_w"])
        payload = base64.b64decode(obj["data_b64"])
    except (KeyError, TypeError, ValueError) as exc:
        raise WireError(f"malformed feature map payload: {exc}") from exc
    expected = gh * gw * dim * 4
    if len(payload) != expected:
        raise WireError(
            f"feature payload is {len(payload)} bytes, "
            f"declared {gh}x{gw}x{dim} needs {expected}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(gh, gw, dim).copy()
    return PatchFeatureMap(
        grid_h=gh, grid_w=gw, dim=dim, data=data, image_h=ih, image_w=iw
    )


def encode_image(image_bytes: bytes) -> str:
    return base64.b64encode(image_bytes).decode("ascii")


def decode_image(b64: str) -> bytes:
    return base64.b64decode(b64)
