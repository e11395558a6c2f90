import numpy as np
import pytest

from pekit.adapters import Proposal
from pekit.features import BoundingBox, PatchFeatureMap, PixelMask
from pekit.memory import MemoryStore
from pekit.pipeline import (
    IntroductionRequest,
    PipelineError,
    array_to_png,
    detect_objects,
    introduce_object,
    personalized_inference,
)
from pekit.retrieval import RetrievalConfig

from fake_tools import FakeTools

GRID, DIM, IMG = 8, 8, 64  # 8x8 patches over a 64x64 image


def basis_fmap(regions, background_axis=7):
    """Feature map with unit-basis vectors per patch region.

    ``regions`` maps axis index -> (r0, c0, r1, c1) patch rectangle.
    """
    data = np.zeros((GRID, GRID, DIM), dtype=np.float32)
    data[..., background_axis] = 1.0
    for axis, (r0, c0, r1, c1) in regions.items():
        data[r0:r1, c0:c1, :] = 0.0
        data[r0:r1, c0:c1, axis] = 1.0
    return PatchFeatureMap(GRID, GRID, DIM, data, IMG, IMG)


def patch_box(r0, c0, r1, c1):
    s = IMG // GRID
    return BoundingBox(c0 * s, r0 * s, c1 * s, r1 * s)


def full_mask(r0, c0, r1, c1):
    s = IMG // GRID
    bits = np.zeros((IMG, IMG), dtype=bool)
    bits[r0 * s : r1 * s, c0 * s : c1 * s] = True
    return PixelMask(IMG, IMG, bits)


def scene_image_bytes(seed=0):
    rng = np.random.default_rng(seed)
    return array_to_png(rng.integers(0, 256, (IMG, IMG, 3), dtype=np.uint8))


@pytest.fixture
def tools():
    return FakeTools()


def introduce_basis_object(tools, store, axis, name, seed, context=""):
    img = scene_image_bytes(seed)
    tools.masks[img] = [(full_mask(1, 1, 3, 3), 0.9)]
    tools.fmaps[img] = basis_fmap({axis: (1, 1, 3, 3)})
    req = IntroductionRequest(
        name=name, category="toy", context=context, reference_images=[img]
    )
    return introduce_object(req, store, tools)


class TestIntroduction:
    def test_five_reference_images(self, tools):
        store = MemoryStore()
        images = []
        for i in range(5):
            img = scene_image_bytes(100 + i)
            tools.masks[img] = [(full_mask(0, 0, 2, 2), 0.8)]
            tools.fmaps[img] = basis_fmap({0: (0, 0, 2, 2)})
            images.append(img)
        req = IntroductionRequest(name="cup", category="mug", reference_images=images)
        oid = introduce_object(req, store, tools)
        assert store.get(oid).num_views == 5

    def test_single_reference_image(self, tools):
        store = MemoryStore()
        oid = introduce_basis_object(tools, store, 0, "cup", seed=1)
        assert store.get(oid).num_views == 1

    def test_atomic_on_mid_sequence_failure(self, tools):
        store = MemoryStore()
        images = []
        for i in range(5):
            img = scene_image_bytes(200 + i)
            if i != 2:  # third image yields no mask
                tools.masks[img] = [(full_mask(0, 0, 2, 2), 0.8)]
            tools.fmaps[img] = basis_fmap({0: (0, 0, 2, 2)})
            images.append(img)
        req = IntroductionRequest(name="cup", category="mug", reference_images=images)
        before = store.row_count
        with pytest.raises(PipelineError, match="reference image 3/5"):
            introduce_object(req, store, tools)
        assert store.row_count == before

    def test_top_scoring_mask_wins(self, tools):
        store = MemoryStore()
        img = scene_image_bytes(7)
        tools.masks[img] = [
            (full_mask(4, 4, 6, 6), 0.4),
            (full_mask(1, 1, 3, 3), 0.9),
        ]
        tools.fmaps[img] = basis_fmap({0: (1, 1, 3, 3), 1: (4, 4, 6, 6)})
        req = IntroductionRequest(name="a", category="toy", reference_images=[img])
        oid = introduce_object(req, store, tools)
        emb = store.get(oid).embeddings[0]
        assert emb[0] == pytest.approx(1.0, abs=1e-6)

    def test_mask_size_mismatch(self, tools):
        store = MemoryStore()
        img = scene_image_bytes(8)
        tools.masks[img] = [(PixelMask(32, 32, np.ones((32, 32), dtype=bool)), 0.9)]
        tools.fmaps[img] = basis_fmap({0: (0, 0, 2, 2)})
        req = IntroductionRequest(name="a", category="toy", reference_images=[img])
        with pytest.raises(PipelineError, match="does not match"):
            introduce_object(req, store, tools)

    def test_request_validation(self):
        with pytest.raises(ValueError):
            IntroductionRequest(name="", category="x", reference_images=[b"i"])
        with pytest.raises(ValueError):
            IntroductionRequest(name="a", category="", reference_images=[b"i"])
        with pytest.raises(ValueError):
            IntroductionRequest(name="a", category="x", reference_images=[])


class TestInference:
    def setup_scene(self, tools, store):
        """Three introduced objects; query image shows all three + a decoy."""
        names = ["gengar toy", "small penguin", "red piggy bank"]
        ids = [
            introduce_basis_object(tools, store, axis, name, seed=10 + axis)
            for axis, name in enumerate(names)
        ]
        query = scene_image_bytes(99)
        regions = {0: (1, 1, 3, 3), 1: (1, 5, 3, 7), 2: (5, 1, 7, 3)}
        fmap_data = basis_fmap(regions).data.copy()
        # decoy region: equal mix, max similarity ~0.577 < 0.75
        mix = np.zeros(DIM, dtype=np.float32)
        mix[[0, 1, 2]] = 1.0 / np.sqrt(3.0)
        fmap_data[5:7, 5:7] = mix
        tools.fmaps[query] = PatchFeatureMap(GRID, GRID, DIM, fmap_data, IMG, IMG)
        tools.proposals[query] = [
            Proposal(patch_box(1, 1, 3, 3), 0.9),
            Proposal(patch_box(1, 5, 3, 7), 0.9),
            Proposal(patch_box(5, 1, 7, 3), 0.9),
            Proposal(patch_box(5, 5, 7, 7), 0.9),
        ]
        return ids, query

    def test_empty_store_passthrough(self, tools):
        img = scene_image_bytes(50)
        tools.fmaps[img] = basis_fmap({})
        result = personalized_inference(
            img, "What is this?", MemoryStore(), RetrievalConfig(), tools
        )
        assert result.prompt_used == "What is this?"
        assert result.detections == []
        # unmodified image bytes went to the generator
        assert tools.generate_calls[0][0] == img

    def test_single_detection_names_object(self, tools):
        store = MemoryStore()
        oid = introduce_basis_object(tools, store, 0, "gengar toy", seed=20)
        query = scene_image_bytes(60)
        tools.fmaps[query] = basis_fmap({0: (2, 2, 4, 4)})
        tools.proposals[query] = [Proposal(patch_box(2, 2, 4, 4), 0.9)]
        result = personalized_inference(
            query, "Describe the image.", store, RetrievalConfig(), tools
        )
        assert [d.object_id for d in result.detections] == [oid]
        assert '"gengar toy"' in result.prompt_used
        assert result.answer == tools.answer

    def test_three_object_scene(self, tools):
        store = MemoryStore()
        ids, query = self.setup_scene(tools, store)
        result = personalized_inference(
            query, "Describe the image.", store, RetrievalConfig(), tools
        )
        assert sorted(d.object_id for d in result.detections) == sorted(ids)
        assert result.prompt_used.count("bounding box is") == 3

    def test_inference_never_mutates_store(self, tools):
        store = MemoryStore()
        _, query = self.setup_scene(tools, store)
        rows = store.row_count
        personalized_inference(query, "Q?", store, RetrievalConfig(), tools)
        assert store.row_count == rows

    def test_removing_object_removes_its_clause(self, tools):
        store = MemoryStore()
        ids, query = self.setup_scene(tools, store)
        first = personalized_inference(query, "Q?", store, RetrievalConfig(), tools)
        removed = ids[1]
        name = store.get(removed).name
        store.remove_object(removed)
        second = personalized_inference(query, "Q?", store, RetrievalConfig(), tools)
        assert name in first.prompt_used
        assert name not in second.prompt_used
        assert second.prompt_used.count("bounding box is") == 2

    def test_skip_generate(self, tools):
        store = MemoryStore()
        _, query = self.setup_scene(tools, store)
        result = personalized_inference(
            query, "Q?", store, RetrievalConfig(), tools, skip_generate=True
        )
        assert result.answer == ""
        assert tools.generate_calls == []
        assert len(result.detections) == 3

    def test_out_of_bounds_proposals_skipped(self, tools):
        store = MemoryStore()
        introduce_basis_object(tools, store, 0, "a", seed=30)
        query = scene_image_bytes(70)
        tools.fmaps[query] = basis_fmap({0: (0, 0, 2, 2)})
        tools.proposals[query] = [Proposal(BoundingBox(0, 0, IMG + 8, IMG), 0.9)]
        assert detect_objects(query, store, RetrievalConfig(), tools) == []

    def test_empty_question_rejected(self, tools):
        with pytest.raises(ValueError):
            personalized_inference(b"x", "", MemoryStore(), RetrievalConfig(), tools)
