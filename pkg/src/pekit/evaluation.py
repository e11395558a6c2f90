"""Benchmark dataset loading and recognition/VQA metric computation."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
NEGATIVE_SPLITS = ("other", "hard", "fake")
_SPLIT_DIRS = {"other": "other", "hard": "hard_negative", "fake": "fake"}


class DatasetError(ValueError):
    """Raised when a benchmark layout is missing or inconsistent."""


@dataclass
class DatasetObject:
    object_id: str
    name: str
    context: str
    category: str
    train: list[Path]
    val_positive: list[Path]
    val_negatives: dict[str, list[Path]]


@dataclass
class VqaItem:
    image: Path
    object_id: str
    question: str
    option_a: str
    option_b: str
    answer: str


@dataclass
class BenchmarkDataset:
    root: Path
    objects: list[DatasetObject]
    vqa_items: list[VqaItem]


def _list_images(directory: Path) -> list[Path]:
    if not directory.is_dir():
        return []
    return sorted(
        p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )


def load_dataset(root: str | Path) -> BenchmarkDataset:
    """Load and validate a benchmark directory (see README for the layout)."""
    root = Path(root)
    objects_path = root / "objects.json"
    try:
        raw = json.loads(objects_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read {objects_path}: {exc}") from exc
    if not isinstance(raw, list):
        raise DatasetError("objects.json must hold a list of objects")

    objects = []
    for item in raw:
        try:
            object_id = item["id"]
            name = item["name"]
            context = item.get("context", "")
            category = item["category"]
        except (TypeError, KeyError) as exc:
            raise DatasetError(f"malformed objects.json entry: {item!r}") from exc
        obj_root = root / object_id
        train = _list_images(obj_root / "train")
        if not train:
            raise DatasetError(f"object {object_id}: missing or empty train split")
        val_dir = obj_root / "val"
        if not val_dir.is_dir():
            raise DatasetError(f"object {object_id}: missing val split directory")
        positives = _list_images(val_dir / "positive")
        negatives = {
            split: _list_images(val_dir / _SPLIT_DIRS[split])
            for split in NEGATIVE_SPLITS
        }
        objects.append(
            DatasetObject(
                object_id=object_id,
                name=name,
                context=context,
                category=category,
                train=train,
                val_positive=positives,
                val_negatives=negatives,
            )
        )

    known_ids = {o.object_id for o in objects}
    vqa_items = []
    vqa_path = root / "vqa.jsonl"
    if vqa_path.exists():
        for lineno, line in enumerate(
            vqa_path.read_text(encoding="utf-8").splitlines(), start=1
        ):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                item = VqaItem(
                    image=root / row["image"],
                    object_id=row["object_id"],
                    question=row["question"],
                    option_a=row["option_a"],
                    option_b=row["option_b"],
                    answer=row["answer"],
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DatasetError(f"vqa.jsonl line {lineno}: {exc}") from exc
            if item.answer not in ("A", "B"):
                raise DatasetError(
                    f"vqa.jsonl line {lineno}: answer must be 'A' or 'B'"
                )
            if not item.image.exists():
                raise DatasetError(
                    f"vqa.jsonl line {lineno}: image {item.image} does not exist"
                )
            if item.object_id not in known_ids:
                raise DatasetError(
                    f"vqa.jsonl line {lineno}: unknown object {item.object_id}"
                )
            vqa_items.append(item)
    return BenchmarkDataset(root=root, objects=objects, vqa_items=vqa_items)


def sample_validation_frames(frames: list) -> list:
    """Keep frames at zero-based indices 0, 10, 20, ..."""
    return list(frames[::10])


# --- recognition metrics --------------------------------------------------


@dataclass
class ObjectOutcomes:
    """Per-object predicted-present flags for positives and negative splits."""

    positive: list[bool]
    negatives: dict[str, list[bool]] = field(default_factory=dict)

    def all_negatives(self) -> list[bool]:
        out: list[bool] = []
        for split in NEGATIVE_SPLITS:
            out.extend(self.negatives.get(split, []))
        return out


@dataclass
class MetricsReport:
    precision: float
    positive_acc: float
    negative_acc_by_split: dict[str, float | None]
    weighted_acc: float
    avg_visual_recognition: float
    vqa_acc: float | None = None
    personalization_recall: float | None = None
    per_object: dict[str, dict] = field(default_factory=dict)


def weighted_accuracy(positive_acc: float, negative_acc: float) -> float:
    """Mean of recall and pooled specificity, both as percentages."""
    return (positive_acc + negative_acc) / 2.0


def average_recognition(*components: float) -> float:
    """Mean of the recognition summary columns (precision and accuracies)."""
    values = [v for v in components if v is not None]
    if not values:
        raise ValueError("no components to average")
    return sum(values) / len(values)


def _mean(values: list[float]) -> float:
    return sum(values) / len(values)


def recognition_metrics(outcomes: dict[str, ObjectOutcomes]) -> MetricsReport:
    """Macro-averaged precision/recall/specificity over personalized objects.

    Precision with zero positive predictions is defined as 100 (a model that
    never asserts presence makes no false personalization).
    """
    if not outcomes:
        raise ValueError("no outcomes provided")
    per_object: dict[str, dict] = {}
    precisions, recalls, pooled_specs = [], [], []
    split_specs: dict[str, list[float]] = {s: [] for s in NEGATIVE_SPLITS}
    for object_id, oc in outcomes.items():
        if not oc.positive:
            raise ValueError(f"object {object_id} has no positive outcomes")
        negatives = oc.all_negatives()
        if not negatives:
            raise ValueError(f"object {object_id} has no negative outcomes")
        tp = sum(oc.positive)
        fp = sum(negatives)
        precision = 100.0 if tp + fp == 0 else 100.0 * tp / (tp + fp)
        recall = 100.0 * tp / len(oc.positive)
        pooled = 100.0 * (len(negatives) - fp) / len(negatives)
        row = {"precision": precision, "positive_acc": recall, "negative_acc": pooled}
        for split in NEGATIVE_SPLITS:
            preds = oc.negatives.get(split, [])
            if preds:
                spec = 100.0 * (len(preds) - sum(preds)) / len(preds)
                split_specs[split].append(spec)
                row[f"negative_acc_{split}"] = spec
        per_object[object_id] = row
        precisions.append(precision)
        recalls.append(recall)
        pooled_specs.append(pooled)

    by_split: dict[str, float | None] = {
        split: (_mean(vals) if vals else None)
        for split, vals in split_specs.items()
    }
    by_split["pooled"] = _mean(pooled_specs)
    precision = _mean(precisions)
    positive_acc = _mean(recalls)
    return MetricsReport(
        precision=precision,
        positive_acc=positive_acc,
        negative_acc_by_split=by_split,
        weighted_acc=weighted_accuracy(positive_acc, by_split["pooled"]),
        avg_visual_recognition=average_recognition(
            precision,
            positive_acc,
            by_split["other"],
            by_split["hard"],
            by_split["fake"],
        ),
        per_object=per_object,
    )


# --- VQA and captioning metrics -------------------------------------------

_AB_PATTERN = re.compile(r"\b([ab])\b", re.IGNORECASE)


def parse_ab_answer(text: str) -> str | None:
    """First standalone A/B (case-insensitive, word-boundary), else None."""
    m = _AB_PATTERN.search(text)
    return m.group(1).upper() if m else None


def vqa_accuracy(model_answers: list[str], gold: list[str]) -> float:
    """Percentage of answers whose parsed choice matches gold ('A'/'B')."""
    if len(model_answers) != len(gold):
        raise ValueError(
            f"length mismatch: {len(model_answers)} answers, {len(gold)} gold"
        )
    if not gold:
        raise ValueError("no VQA items")
    correct = sum(
        parse_ab_answer(ans) == g.upper() for ans, g in zip(model_answers, gold)
    )
    return 100.0 * correct / len(gold)


_APOSTROPHES = str.maketrans({"’": "'", "‘": "'", "`": "'", "´": "'"})


def normalize_caption_text(text: str) -> str:
    """Lowercase, unify apostrophe variants, collapse whitespace."""
    text = text.translate(_APOSTROPHES).lower()
    return " ".join(text.split())


def name_mentioned(caption: str, name: str) -> bool:
    return normalize_caption_text(name) in normalize_caption_text(caption)


def personalization_recall(captions_by_object: dict[str, tuple[str, list[str]]]) -> float:
    """Macro-averaged fraction of positive-image captions naming the object.

    ``captions_by_object`` maps object id to (object name, captions).
    """
    if not captions_by_object:
        raise ValueError("no captions provided")
    rates = []
    for name, captions in captions_by_object.values():
        if not captions:
            raise ValueError(f"no captions for object named {name!r}")
        hits = sum(name_mentioned(c, name) for c in captions)
        rates.append(100.0 * hits / len(captions))
    return _mean(rates)


# --- reporting -------------------------------------------------------------


def report_to_json(report: MetricsReport) -> dict:
    return {
        "precision": report.precision,
        "positive_acc": report.positive_acc,
        "negative_acc_by_split": report.negative_acc_by_split,
        "weighted_acc": report.weighted_acc,
        "avg_visual_recognition": report.avg_visual_recognition,
        "vqa_acc": report.vqa_acc,
        "personalization_recall": report.personalization_recall,
        "per_object": report.per_object,
    }


def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value:.1f}"


def render_table(report: MetricsReport) -> str:
    """Plain-text summary mirroring the recognition table column order."""
    headers = ["Precision", "Positive", "Other", "Hard", "Fake", "Negative", "Weighted", "Avg."]
    values = [
        report.precision,
        report.positive_acc,
        report.negative_acc_by_split.get("other"),
        report.negative_acc_by_split.get("hard"),
        report.negative_acc_by_split.get("fake"),
        report.negative_acc_by_split.get("pooled"),
        report.weighted_acc,
        report.avg_visual_recognition,
    ]
    widths = [max(len(h), 8) for h in headers]
    head = "  ".join(h.rjust(w) for h, w in zip(headers, widths))
    row = "  ".join(_fmt(v).rjust(w) for v, w in zip(values, widths))
    lines = [head, "-" * len(head), row]
    if report.vqa_acc is not None:
        lines.append(f"VQA accuracy: {report.vqa_acc:.1f}")
    if report.personalization_recall is not None:
        lines.append(f"Personalization recall: {report.personalization_recall:.1f}")
    return "\n".join(lines)
