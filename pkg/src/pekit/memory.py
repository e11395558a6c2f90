"""Instance memory: per-object embedding matrices with metadata.

Stores one embedding matrix per personalized object (one row per reference
view), answers best-view nearest-neighbor queries over all objects, and
persists to disk bit-exactly (JSON manifest + raw float32 row-major files).
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import InstanceEmbedding

_ID_PATTERN = re.compile(r"^obj-(\d+)$")
_UNIT_NORM_TOL = 1e-5  # float32 rows round-trip through disk


class MemoryError_(ValueError):
    """Raised on store contract violations (dims, ids, corrupt files)."""


@dataclass
class ObjectEntry:
    """One personalized object: metadata plus an (N, dim) view-embedding matrix."""

    object_id: str
    name: str
    context: str
    category: str
    embeddings: np.ndarray

    def __post_init__(self):
        if not self.name:
            raise MemoryError_("object name must be non-empty")
        emb = np.asarray(self.embeddings, dtype=np.float32)
        if emb.ndim != 2 or emb.shape[0] < 1:
            raise MemoryError_("embeddings must be a non-empty (N, dim) matrix")
        norms = np.linalg.norm(emb.astype(np.float64), axis=1)
        if np.any(np.abs(norms - 1.0) > _UNIT_NORM_TOL):
            raise MemoryError_("all view embeddings must be unit-norm")
        self.embeddings = emb

    @property
    def num_views(self) -> int:
        return int(self.embeddings.shape[0])

    @property
    def dim(self) -> int:
        return int(self.embeddings.shape[1])


@dataclass(frozen=True)
class QueryHit:
    """Best-view match for one stored object against a query embedding."""

    object_id: str
    view_index: int
    score: float


class MemoryStore:
    """The set of personalized objects with exact flat similarity search.

    Dimensionality is fixed by the first insert. Reads may run concurrently;
    mutations take the writer lock and are atomic per object.
    """

    def __init__(self, dim: int | None = None):
        self.dim = dim
        self._entries: dict[str, ObjectEntry] = {}
        self._counter = 0
        self._lock = threading.RLock()

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def row_count(self) -> int:
        """Total number of indexed view embeddings across all objects."""
        return sum(e.num_views for e in self._entries.values())

    def _fresh_id(self) -> str:
        self._counter += 1
        return f"obj-{self._counter:04d}"

    def insert_object(
        self,
        name: str,
        context: str,
        category: str,
        embeddings: list[InstanceEmbedding] | np.ndarray,
        object_id: str | None = None,
    ) -> str:
        """Add one object; returns its id. View order follows input order."""
        if isinstance(embeddings, np.ndarray):
            matrix = np.asarray(embeddings, dtype=np.float32)
            if matrix.ndim != 2:
                raise MemoryError_("embedding matrix must be 2-D")
        else:
            if len(embeddings) < 1:
                raise MemoryError_("at least one embedding is required")
            for e in embeddings:
                if not e.normalized:
                    raise MemoryError_("embeddings must be normalized before insert")
            matrix = np.stack([e.values for e in embeddings]).astype(np.float32)
        with self._lock:
            if self.dim is None:
                self.dim = int(matrix.shape[1])
            elif int(matrix.shape[1]) != self.dim:
                raise MemoryError_(
                    f"dimension mismatch: store dim {self.dim}, "
                    f"got {matrix.shape[1]}"
                )
            if object_id is None:
                object_id = self._fresh_id()
            elif object_id in self._entries:
                raise MemoryError_(f"duplicate object id: {object_id}")
            entry = ObjectEntry(
                object_id=object_id,
                name=name,
                context=context,
                category=category,
                embeddings=matrix,
            )
            self._entries[object_id] = entry
            m = _ID_PATTERN.match(object_id)
            if m:
                self._counter = max(self._counter, int(m.group(1)))
            return object_id

    def get(self, object_id: str) -> ObjectEntry:
        try:
            return self._entries[object_id]
        except KeyError:
            raise MemoryError_(f"unknown object id: {object_id}") from None

    def remove_object(self, object_id: str) -> None:
        with self._lock:
            if object_id not in self._entries:
                raise MemoryError_(f"unknown object id: {object_id}")
            del self._entries[object_id]

    def list_objects(self) -> list[dict]:
        """Summaries of all stored objects, in ascending id order."""
        return [
            {
                "id": e.object_id,
                "name": e.name,
                "context": e.context,
                "category": e.category,
                "num_views": e.num_views,
            }
            for e in sorted(self._entries.values(), key=lambda e: e.object_id)
        ]

    def query_all_objects(self, e: InstanceEmbedding) -> list[QueryHit]:
        """Best view similarity per stored object, sorted descending.

        Ties are broken by ascending object id for deterministic output.
        """
        if not e.normalized:
            raise MemoryError_("query embedding must be normalized")
        if not self._entries:
            return []
        if self.dim is not None and e.dim != self.dim:
            raise MemoryError_(
                f"dimension mismatch: store dim {self.dim}, query dim {e.dim}"
            )
        q = e.values.astype(np.float32)
        hits = []
        for entry in self._entries.values():
            scores = entry.embeddings @ q
            best = int(np.argmax(scores))
            hits.append(
                QueryHit(
                    object_id=entry.object_id,
                    view_index=best,
                    score=float(scores[best]),
                )
            )
        hits.sort(key=lambda h: (-h.score, h.object_id))
        return hits

    # --- persistence -----------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Write manifest.json plus one raw float32 file per object."""
        root = Path(path)
        root.mkdir(parents=True, exist_ok=True)
        objects = []
        with self._lock:
            for entry in self._entries.values():
                fname = f"emb_{entry.object_id}.f32"
                payload = entry.embeddings.astype("<f4").tobytes(order="C")
                (root / fname).write_bytes(payload)
                objects.append(
                    {
                        "id": entry.object_id,
                        "name": entry.name,
                        "context": entry.context,
                        "category": entry.category,
                        "num_views": entry.num_views,
                        "file": fname,
                        "sha256": hashlib.sha256(payload).hexdigest(),
                    }
                )
            manifest = {"version": 1, "dim": self.dim, "objects": objects}
        (root / "manifest.json").write_text(
            json.dumps(manifest, indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "MemoryStore":
        root = Path(path)
        manifest_path = root / "manifest.json"
        try:
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise MemoryError_(f"corrupt manifest at {manifest_path}: {exc}") from exc
        if manifest.get("version") != 1:
            raise MemoryError_(f"unsupported manifest version: {manifest.get('version')}")
        dim = manifest.get("dim")
        store = cls(dim=dim)
        for obj in manifest.get("objects", []):
            payload = (root / obj["file"]).read_bytes()
            digest = hashlib.sha256(payload).hexdigest()
            if digest != obj["sha256"]:
                raise MemoryError_(f"checksum mismatch for {obj['file']}")
            expected = obj["num_views"] * dim * 4
            if len(payload) != expected:
                raise MemoryError_(
                    f"shape mismatch for {obj['file']}: manifest claims "
                    f"{obj['num_views']}x{dim} ({expected} bytes), "
                    f"file holds {len(payload)} bytes"
                )
            matrix = np.frombuffer(payload, dtype="<f4").reshape(
                obj["num_views"], dim
            ).copy()
            store.insert_object(
                name=obj["name"],
                context=obj["context"],
                category=obj["category"],
                embeddings=matrix,
                object_id=obj["id"],
            )
        return store


@dataclass
class IvfFlatIndex:
    """Inverted-file top-1 search over k-means cells.

    For unit vectors, max cosine equals min L2 distance, so cells are probed
    in ascending centroid distance. The default (``nprobe=None``) prunes
    with a per-cell radius bound and stops once no remaining cell can beat
    the running best, which keeps top-1 agreement at 100% while scanning
    only a fraction of the rows. A fixed ``nprobe`` caps the scan instead,
    trading agreement for speed.
    """

    centroids: np.ndarray
    cells: list[np.ndarray]            # per-cell row indices
    radii: np.ndarray                  # per-cell max member distance
    vectors: np.ndarray                # (rows, dim)
    labels: list[tuple[str, int]]      # row -> (object_id, view_index)
    nprobe: int | None = field(default=None)

    @classmethod
    def build(
        cls,
        store: MemoryStore,
        nlist: int = 64,
        nprobe: int | None = None,
        seed: int = 0,
    ) -> "IvfFlatIndex":
        from sklearn.cluster import MiniBatchKMeans

        labels: list[tuple[str, int]] = []
        blocks = []
        for entry in store._entries.values():
            blocks.append(entry.embeddings)
            labels.extend(
                (entry.object_id, k) for k in range(entry.num_views)
            )
        if not blocks:
            raise MemoryError_("cannot index an empty store")
        vectors = np.concatenate(blocks, axis=0).astype(np.float32)
        nlist = min(nlist, len(vectors))
        km = MiniBatchKMeans(
            n_clusters=nlist, random_state=seed, n_init=3, batch_size=1024
        ).fit(vectors)
        centroids = km.cluster_centers_.astype(np.float32)
        cells = [
            np.flatnonzero(km.labels_ == c).astype(np.int64) for c in range(nlist)
        ]
        radii = np.zeros(nlist, dtype=np.float32)
        for c, rows in enumerate(cells):
            if rows.size:
                radii[c] = np.sqrt(
                    np.max(np.sum((vectors[rows] - centroids[c]) ** 2, axis=1))
                )
        return cls(
            centroids=centroids,
            cells=cells,
            radii=radii,
            vectors=vectors,
            labels=labels,
            nprobe=None if nprobe is None else min(nprobe, nlist),
        )

    def top1(self, e: InstanceEmbedding) -> QueryHit | None:
        q = e.values.astype(np.float32)
        dist = np.sqrt(np.sum((self.centroids - q) ** 2, axis=1))
        order = np.argsort(dist)
        if self.nprobe is not None:
            order = order[: self.nprobe]
        max_radius = float(self.radii.max(initial=0.0))
        best_row, best_dist2 = -1, np.inf
        for c in order:
            if dist[c] - max_radius > np.sqrt(best_dist2):
                break  # sorted by dist: no later cell can contain a closer row
            if dist[c] - self.radii[c] > np.sqrt(best_dist2):
                continue
            rows = self.cells[c]
            if rows.size == 0:
                continue
            d2 = np.sum((self.vectors[rows] - q) ** 2, axis=1)
            local = int(np.argmin(d2))
            if d2[local] < best_dist2:
                best_dist2 = float(d2[local])
                best_row = int(rows[local])
        if best_row < 0:
            return None
        object_id, view_index = self.labels[best_row]
        return QueryHit(
            object_id=object_id,
            view_index=view_index,
            score=float(self.vectors[best_row] @ q),
        )
