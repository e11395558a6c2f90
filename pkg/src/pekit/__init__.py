"""Training-free personalization toolkit for vision-language assistants."""

from .features import (
    BoundingBox,
    InstanceEmbedding,
    PatchFeatureMap,
    PixelMask,
    bbox_to_selection,
    cosine_similarity,
    downsample_mask,
    pool_over_selection,
)
from .memory import IvfFlatIndex, MemoryStore, ObjectEntry, QueryHit
from .pipeline import (
    InferenceResult,
    IntroductionRequest,
    introduce_object,
    personalized_inference,
)
from .retrieval import (
    DetectedInstance,
    RetrievalConfig,
    match_proposal,
    retrieve_instances,
)

__all__ = [
    "BoundingBox",
    "DetectedInstance",
    "InferenceResult",
    "InstanceEmbedding",
    "IntroductionRequest",
    "IvfFlatIndex",
    "MemoryStore",
    "ObjectEntry",
    "PatchFeatureMap",
    "PixelMask",
    "QueryHit",
    "RetrievalConfig",
    "bbox_to_selection",
    "cosine_similarity",
    "downsample_mask",
    "introduce_object",
    "match_proposal",
    "personalized_inference",
    "pool_over_selection",
    "retrieve_instances",
]

__version__ = "0.1.0"
