"""Command-line surface for the two-phase workflow and the benchmark harness.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
from PIL import Image

from . import evaluation, pipeline
from .config import AppConfig, ConfigError
from .memory import MemoryStore
from .retrieval import RetrievalConfig

DEFAULT_CAPTION_QUERY = "Describe the image."


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _load_store(cfg: AppConfig) -> MemoryStore:
    store_dir = Path(cfg.store_path)
    if (store_dir / "manifest.json").exists():
        return MemoryStore.load(store_dir)
    return MemoryStore()


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Config file (falls back to $PEKIT_CONFIG, then defaults).")
@click.option("--tau", type=float, default=None, help="Override the similarity threshold.")
@click.option("--store", "store_path", type=click.Path(), default=None,
              help="Override the store directory.")
@click.pass_context
def main(ctx, config_path, tau, store_path):
    """Training-free personalization toolkit for vision-language assistants."""
    try:
        cfg = AppConfig.resolve(config_path)
    except ConfigError as exc:
        _fail(str(exc))
    if tau is not None:
        cfg.tau = tau
    if store_path is not None:
        cfg.store_path = store_path
    ctx.obj = cfg


@main.command()
@click.option("--name", required=True, help="Personalized object name.")
@click.option("--category", required=True, help="Generic class used for segmentation.")
@click.option("--context", default="", help="Optional context text.")
@click.option("--images", required=True, multiple=True, type=click.Path(exists=True),
              help="Reference image path (repeatable).")
@click.pass_obj
def introduce(cfg: AppConfig, name, category, context, images):
    """Introduce a personalized object from reference images."""
    try:
        store = _load_store(cfg)
        req = pipeline.IntroductionRequest(
            name=name,
            category=category,
            context=context,
            reference_images=[Path(p).read_bytes() for p in images],
        )
        object_id = pipeline.introduce_object(req, store, cfg.toolbox())
        store.save(cfg.store_path)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        _fail(str(exc))
    click.echo(object_id)


@main.command()
@click.option("--image", required=True, type=click.Path(exists=True))
@click.option("--question", required=True)
@click.option("--save-annotated", "save_annotated", type=click.Path(), default=None)
@click.option("--max-tokens", type=int, default=512)
@click.pass_obj
def infer(cfg: AppConfig, image, question, save_annotated, max_tokens):
    """Answer a question about an image with personalized context."""
    try:
        store = _load_store(cfg)
        result = pipeline.personalized_inference(
            Path(image).read_bytes(),
            question,
            store,
            cfg.retrieval_config(),
            cfg.toolbox(),
            template=cfg.template,
            palette=cfg.palette,
            max_tokens=max_tokens,
        )
        if save_annotated:
            Image.fromarray(result.annotated_image).save(save_annotated, format="PNG")
    except Exception as exc:  # noqa: BLE001
        _fail(str(exc))
    click.echo(result.answer)


@main.command(name="eval")
@click.option("--dataset", "dataset_root", required=True, type=click.Path(exists=True))
@click.option("--report", "report_path", required=True, type=click.Path())
@click.option("--recognition-only", is_flag=True,
              help="Skip all LVLM calls; recognition metrics only.")
@click.pass_obj
def eval_command(cfg: AppConfig, dataset_root, report_path, recognition_only):
    """Run the benchmark harness and write a metrics report."""
    try:
        report = run_benchmark(cfg, dataset_root, recognition_only)
        Path(report_path).write_text(
            json.dumps(evaluation.report_to_json(report), indent=2) + "\n",
            encoding="utf-8",
        )
    except Exception as exc:  # noqa: BLE001
        _fail(str(exc))
    click.echo(evaluation.render_table(report))


@main.group()
def memory():
    """Inspect or mutate the persistent object store."""


@memory.command(name="list")
@click.pass_obj
def memory_list(cfg: AppConfig):
    try:
        store = _load_store(cfg)
    except Exception as exc:  # noqa: BLE001
        _fail(str(exc))
    for row in store.list_objects():
        click.echo(
            f"{row['id']}  {row['name']}  category={row['category']}  "
            f"views={row['num_views']}"
        )


@memory.command(name="remove")
@click.argument("object_id")
@click.pass_obj
def memory_remove(cfg: AppConfig, object_id):
    try:
        store = _load_store(cfg)
        store.remove_object(object_id)
        store.save(cfg.store_path)
    except Exception as exc:  # noqa: BLE001
        _fail(str(exc))
    click.echo(f"removed {object_id}")


@memory.command(name="export")
@click.argument("path", type=click.Path())
@click.pass_obj
def memory_export(cfg: AppConfig, path):
    try:
        store = _load_store(cfg)
        store.save(path)
    except Exception as exc:  # noqa: BLE001
        _fail(str(exc))
    click.echo(f"exported {len(store)} objects to {path}")


# --- benchmark harness ------------------------------------------------------


def run_benchmark(
    cfg: AppConfig, dataset_root: str, recognition_only: bool
) -> evaluation.MetricsReport:
    """Introduce every dataset object, then score the validation splits."""
    dataset = evaluation.load_dataset(dataset_root)
    tools = cfg.toolbox()
    rcfg = cfg.retrieval_config()
    store = MemoryStore()
    id_map: dict[str, str] = {}
    for obj in dataset.objects:
        req = pipeline.IntroductionRequest(
            name=obj.name,
            category=obj.category,
            context=obj.context,
            reference_images=[p.read_bytes() for p in obj.train],
        )
        id_map[obj.object_id] = pipeline.introduce_object(req, store, tools)

    detection_cache: dict[Path, set[str]] = {}

    def detected_ids(image_path: Path) -> set[str]:
        if image_path not in detection_cache:
            detections = pipeline.detect_objects(
                image_path.read_bytes(), store, rcfg, tools
            )
            detection_cache[image_path] = {d.object_id for d in detections}
        return detection_cache[image_path]

    outcomes: dict[str, evaluation.ObjectOutcomes] = {}
    for obj in dataset.objects:
        store_id = id_map[obj.object_id]
        positive = [store_id in detected_ids(p) for p in obj.val_positive]
        negatives = {
            split: [store_id in detected_ids(p) for p in paths]
            for split, paths in obj.val_negatives.items()
            if paths
        }
        outcomes[obj.object_id] = evaluation.ObjectOutcomes(
            positive=positive, negatives=negatives
        )
    report = evaluation.recognition_metrics(outcomes)

    if not recognition_only:
        if dataset.vqa_items:
            answers, gold = [], []
            for item in dataset.vqa_items:
                prompt = (
                    f"{item.question}\nA) {item.option_a}\nB) {item.option_b}\n"
                    "Answer with the letter A or B."
                )
                result = pipeline.personalized_inference(
                    item.image.read_bytes(), prompt, store, rcfg, tools,
                    template=cfg.template, palette=cfg.palette,
                )
                answers.append(result.answer)
                gold.append(item.answer)
            report.vqa_acc = evaluation.vqa_accuracy(answers, gold)
        captions_by_object = {}
        for obj in dataset.objects:
            if not obj.val_positive:
                continue
            captions = [
                pipeline.personalized_inference(
                    p.read_bytes(), DEFAULT_CAPTION_QUERY, store, rcfg, tools,
                    template=cfg.template, palette=cfg.palette,
                ).answer
                for p in obj.val_positive
            ]
            captions_by_object[obj.object_id] = (obj.name, captions)
        if captions_by_object:
            report.personalization_recall = evaluation.personalization_recall(
                captions_by_object
            )
    return report


if __name__ == "__main__":
    main()
