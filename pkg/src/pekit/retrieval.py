"""Thresholded nearest-neighbor retrieval over the instance memory.

Decides per proposal whether a personalized object is present (strict
``score > tau``) and assembles the per-image detection list, including
multi-object scenes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .features import BoundingBox, InstanceEmbedding
from .memory import MemoryStore

DEFAULT_TAU = 0.75


@dataclass
class RetrievalConfig:
    """Matching thresholds; ``per_object_tau`` overrides the global value."""

    tau: float = DEFAULT_TAU
    per_object_tau: dict[str, float] = field(default_factory=dict)
    dedupe_per_object: bool = True

    def __post_init__(self):
        for value in [self.tau, *self.per_object_tau.values()]:
            if not (-1.0 < value <= 1.0):
                raise ValueError(f"threshold {value} outside (-1, 1]")

    def threshold_for(self, object_id: str) -> float:
        return self.per_object_tau.get(object_id, self.tau)


@dataclass
class DetectedInstance:
    """A proposal matched to a stored object."""

    bbox: BoundingBox
    object_id: str
    name: str
    context: str
    score: float
    color_slot: int | None = None


def match_proposal(
    e: InstanceEmbedding, store: MemoryStore, cfg: RetrievalConfig
) -> tuple[str, float] | None:
    """Match one proposal embedding against the store.

    Returns (object_id, score) for the best-scoring object when its score
    strictly exceeds the applicable threshold, else None (no match).
    """
    hits = store.query_all_objects(e)
    if not hits:
        return None
    top = hits[0]
    if top.score > cfg.threshold_for(top.object_id):
        return top.object_id, top.score
    return None


def retrieve_instances(
    proposals: list[tuple[BoundingBox, InstanceEmbedding]],
    store: MemoryStore,
    cfg: RetrievalConfig,
) -> list[DetectedInstance]:
    """Match every proposal; unmatched proposals are silently dropped.

    With ``dedupe_per_object`` only the highest-scoring proposal per object
    survives (ties: smaller proposal index). Result is sorted by descending
    score, then proposal index.
    """
    matched: list[tuple[int, BoundingBox, str, float]] = []
    for idx, (bbox, emb) in enumerate(proposals):
        result = match_proposal(emb, store, cfg)
        if result is not None:
            object_id, score = result
            matched.append((idx, bbox, object_id, score))

    if cfg.dedupe_per_object:
        best: dict[str, tuple[int, BoundingBox, str, float]] = {}
        for item in matched:
            idx, _, object_id, score = item
            prev = best.get(object_id)
            if prev is None or score > prev[3]:
                best[object_id] = item
        matched = list(best.values())

    matched.sort(key=lambda m: (-m[3], m[0]))
    out = []
    for idx, bbox, object_id, score in matched:
        entry = store.get(object_id)
        out.append(
            DetectedInstance(
                bbox=bbox,
                object_id=object_id,
                name=entry.name,
                context=entry.context,
                score=score,
            )
        )
    return out
