# spnet/cli/pipeline.py
"""
Pipeline stages behind the command-line surface.

Each stage reads the artifacts of the previous one from the run directory
(config.out) and writes its own:

    synth     meshes/<class>/<id>.off, manifest.csv
    render    views/<id>/viewNN.spdi, render_errors.jsonl
    train     backbone.spnw, train_log.jsonl
    select    selection.spnw (backbone + view bank), selection_log.jsonl
    ensemble  ensemble.spnw (backbone + view bank + ensemble head), ensemble_log.jsonl
    eval      metrics.json
    retrieve  rankings.csv, retrieval_metrics.json, similarity.spdi, similarity.png
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import yaml
from pydantic import BaseModel, Field

from ..config import SPNET_THREADS
from ..exceptions import ConfigError, ManifestError, SpnetError, StageDependency
from ..geometry.mesh import Rotation, TriangleMesh, normalize
from ..geometry.parsing import load_mesh
from ..geometry.synth import SHAPE_BUILDERS, synth_shape, to_off
from ..multiview.ensemble import EnsembleModel
from ..multiview.selection import train_ensemble, train_view_selection
from ..multiview.views import ViewBank, preset_rotations
from ..nn.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from ..nn.gradcheck import GradCheckReport, grad_check
from ..nn.model import SpnetModel
from ..nn.training import TrainingLog, accuracy, classification_metrics, train_model
from ..projection.codec import write_image
from ..projection.render import render_views
from ..retrieval.metrics import evaluate_retrieval, rankings_frame
from ..retrieval.ranking import descriptor
from ..retrieval.similarity import export_similarity, similarity_matrix
from ..state_management import RUN_SNAPSHOT_FILE, EvalReport, Manifest, ManifestRecord, RetrievalMetrics, RunConfig, Split
from ..utils.dataset import ViewArchive, load_manifest, view_path, write_manifest

logger = logging.getLogger(__name__)

BACKBONE_FILE = "backbone.spnw"
SELECTION_FILE = "selection.spnw"
ENSEMBLE_FILE = "ensemble.spnw"
METRICS_FILE = "metrics.json"
RANKINGS_FILE = "rankings.csv"
RETRIEVAL_METRICS_FILE = "retrieval_metrics.json"
RENDER_ERRORS_FILE = "render_errors.jsonl"
# view used by single-view training and evaluation
CANONICAL_VIEW = 0


class RecordError(BaseModel):
    object_id: str
    error: str


class RenderSummary(BaseModel):
    """Outcome of a render run"""
    rendered: int = 0
    skipped: int = 0
    errors: List[RecordError] = Field(default_factory=list)

    @property
    def failed(self) -> int:
        return len(self.errors)


def write_json(path: Path, model: BaseModel) -> Path:
    """Stable JSON (sorted keys, fixed indentation) so equal runs give equal bytes"""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model.model_dump(mode="json"), sort_keys=True, indent=2) + "\n")
    return path


def _prepare_out(config: RunConfig) -> Path:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / RUN_SNAPSHOT_FILE).write_text(yaml.safe_dump(config.model_dump(mode="json"), sort_keys=True))
    return out


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise StageDependency(f"{path.name} not found in {path.parent}; run '{stage}' first")
    return path


def _labels(manifest: Manifest, records: Sequence[ManifestRecord]) -> np.ndarray:
    return np.array([manifest.class_index(r.class_label) for r in records], dtype=np.int64)


def stage_rotations(config: RunConfig) -> List[Rotation]:
    return preset_rotations(config.views, config.n_views)


def _load_stage(path: Path, stage: str, config: RunConfig) -> Checkpoint:
    return load_checkpoint(_require(path, stage), dropout_rate=config.train.dropout_rate)

# ================================
# SYNTH
# ================================

def cmd_synth(
    out: Path,
    count: int = 30,
    classes: int = 3,
    seed: int = 0,
    test_fraction: float = 0.25,
) -> Path:
    """
    Write a labeled procedural corpus and its manifest.

    Objects are spread evenly over the first `classes` shapes (earlier shapes
    take the remainder); the last round(test_fraction * n) objects of every
    class go to the test split.
    """
    shapes = list(SHAPE_BUILDERS)
    if not 1 <= classes <= len(shapes):
        raise ConfigError(f"classes must lie in [1, {len(shapes)}], got {classes}")
    if count < classes:
        raise ConfigError(f"count ({count}) must be at least the number of classes ({classes})")
    if not 0.0 <= test_fraction < 1.0:
        raise ConfigError(f"test_fraction must lie in [0, 1), got {test_fraction}")

    out = Path(out)
    rng = np.random.default_rng(seed)
    records: List[ManifestRecord] = []
    for c, shape in enumerate(shapes[:classes]):
        n = count // classes + (1 if c < count % classes else 0)
        n_test = int(round(n * test_fraction))
        for k in range(n):
            object_id = f"{shape}_{k:04d}"
            mesh = synth_shape(shape, rng, object_id=object_id)
            mesh_path = out / "meshes" / shape / f"{object_id}.off"
            mesh_path.parent.mkdir(parents=True, exist_ok=True)
            mesh_path.write_text(to_off(mesh))
            split = Split.TEST if k >= n - n_test else Split.TRAIN
            records.append(ManifestRecord(object_id=object_id, mesh_path=mesh_path, class_label=shape, split=split))

    manifest_path = write_manifest(records, out / "manifest.csv")
    logger.info("synthesized %d objects in %d classes under %s", len(records), classes, out)
    return manifest_path

# ================================
# RENDER
# ================================

def prepare_mesh(record: ManifestRecord, config: RunConfig) -> TriangleMesh:
    mesh = load_mesh(record.mesh_path, object_id=record.object_id, label=record.class_label)
    return normalize(mesh, config.centroid)


def _render_record(record: ManifestRecord, rotations: List[Rotation], config: RunConfig, out: Path) -> Tuple[int, int]:
    """Render the missing views of one object; returns (rendered, skipped)"""
    missing = [j for j in range(len(rotations)) if not view_path(out, record.object_id, j).exists()]
    if not missing:
        return 0, len(rotations)
    mesh = prepare_mesh(record, config)
    images = render_views(
        mesh,
        config.projection,
        [rotations[j] for j in missing],
        size=config.image_size,
        hit_policy=config.hit_policy,
        caster_kind=config.caster,
        max_workers=1,
    )
    for j, image in zip(missing, images):
        write_image(image, view_path(out, record.object_id, j))
    return len(missing), len(rotations) - len(missing)


def cmd_render(config: RunConfig, manifest_path: Path) -> RenderSummary:
    """Render every view of every manifest object, skipping files that already exist"""
    out = _prepare_out(config)
    manifest = load_manifest(manifest_path)
    rotations = stage_rotations(config)
    summary = RenderSummary()

    def job(record: ManifestRecord):
        try:
            return record, _render_record(record, rotations, config, out), None
        except (SpnetError, ValueError, OSError) as e:
            return record, (0, 0), e

    workers = max(1, min(SPNET_THREADS, len(manifest.records)))
    logger.info("rendering %d objects x %d views on %d workers", len(manifest.records), len(rotations), workers)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        for record, (rendered, skipped), error in executor.map(job, manifest.records):
            summary.rendered += rendered
            summary.skipped += skipped
            if error is not None:
                logger.warning("failed to render %s: %s", record.object_id, error)
                summary.errors.append(RecordError(object_id=record.object_id, error=str(error)))

    errors_path = out / RENDER_ERRORS_FILE
    errors_path.write_text("".join(e.model_dump_json() + "\n" for e in summary.errors))
    logger.info("render: %d written, %d skipped, %d failed", summary.rendered, summary.skipped, summary.failed)
    return summary

# ================================
# TRAIN / SELECT / ENSEMBLE
# ================================

def _archive(out: Path, records: Sequence[ManifestRecord], indices: List[int], config: RunConfig) -> ViewArchive:
    return ViewArchive(out, [r.object_id for r in records], indices, image_size=config.image_size)


def _require_records(records: Sequence[ManifestRecord], split: Split, stage: str) -> None:
    if not records:
        raise ManifestError(f"'{stage}' needs at least one object in the {split.value} split")


def _single_view_data(out: Path, records: Sequence[ManifestRecord], labels: np.ndarray, indices: List[int], config: RunConfig):
    stack = _archive(out, records, indices, config).stack()
    images = stack.reshape((-1, 1) + stack.shape[2:])
    return images, np.repeat(labels, len(indices))


def cmd_train(config: RunConfig, manifest_path: Path) -> SpnetModel:
    """Train the backbone on the canonical view (or every view) of the training split"""
    out = _prepare_out(config)
    manifest = load_manifest(manifest_path)
    train_records, test_records = manifest.split(Split.TRAIN), manifest.split(Split.TEST)
    indices = list(range(len(stage_rotations(config)))) if config.train_on_all_views else [CANONICAL_VIEW]

    _require_records(train_records, Split.TRAIN, "train")

    images, labels = _single_view_data(out, train_records, _labels(manifest, train_records), indices, config)
    test_images, test_labels = None, None
    if test_records:
        test_images, test_labels = _single_view_data(out, test_records, _labels(manifest, test_records), [CANONICAL_VIEW], config)

    model = SpnetModel.initialize(
        len(manifest.classes),
        seed=config.train.seed,
        hidden_units=config.train.hidden_units,
        dropout_rate=config.train.dropout_rate,
    )
    logger.info("training %d-parameter backbone on %d images", model.parameter_count(), len(labels))
    train_model(model, images, labels, config.train, TrainingLog(out / "train_log.jsonl"), test_images, test_labels)
    save_checkpoint(out / BACKBONE_FILE, model)
    return model


def cmd_select(config: RunConfig, manifest_path: Path) -> ViewBank:
    """Learn view weights with the backbone frozen and keep the top_m views"""
    out = _prepare_out(config)
    manifest = load_manifest(manifest_path)
    checkpoint = _load_stage(out / BACKBONE_FILE, "train", config)

    bank = ViewBank.uniform(stage_rotations(config))
    if config.top_m > bank.num_views:
        raise ConfigError(f"top_m ({config.top_m}) exceeds the {bank.num_views} views of preset '{config.views.value}'")
    records = manifest.split(Split.TRAIN)
    _require_records(records, Split.TRAIN, "select")
    dataset = _archive(out, records, list(range(bank.num_views)), config)
    bank = train_view_selection(
        checkpoint.model,
        dataset,
        _labels(manifest, records),
        bank,
        epochs=config.selection_epochs,
        learning_rate=config.selection_learning_rate,
        batch_size=config.train.batch_size,
        seed=config.seed,
        log=TrainingLog(out / "selection_log.jsonl"),
    ).with_selection(config.top_m)
    save_checkpoint(out / SELECTION_FILE, checkpoint.model, bank)
    logger.info("selected views %s", bank.selected)
    return bank


def cmd_ensemble(config: RunConfig, manifest_path: Path) -> EnsembleModel:
    """Train the view ensemble on the selected views"""
    out = _prepare_out(config)
    manifest = load_manifest(manifest_path)
    checkpoint = _load_stage(out / SELECTION_FILE, "select", config)
    if checkpoint.bank is None or not checkpoint.bank.selected:
        raise StageDependency(f"{SELECTION_FILE} carries no view selection; run 'select' first")
    bank = checkpoint.bank
    indices = bank.selected

    train_records, test_records = manifest.split(Split.TRAIN), manifest.split(Split.TEST)
    _require_records(train_records, Split.TRAIN, "ensemble")
    views = _archive(out, train_records, indices, config).stack()
    test_views = _archive(out, test_records, indices, config).stack() if test_records else None
    ensemble = train_ensemble(
        checkpoint.model,
        views,
        _labels(manifest, train_records),
        indices,
        config.aggregation,
        config.train,
        from_scratch=config.ensemble_from_scratch,
        log=TrainingLog(out / "ensemble_log.jsonl"),
        test_views=test_views,
        test_labels=_labels(manifest, test_records) if test_records else None,
    )
    save_checkpoint(out / ENSEMBLE_FILE, ensemble.backbone, bank, ensemble)
    return ensemble

# ================================
# EVAL / RETRIEVE
# ================================

def cmd_eval(config: RunConfig, manifest_path: Path) -> EvalReport:
    """Single-view and (when trained) ensemble accuracy on the test split"""
    out = _prepare_out(config)
    manifest = load_manifest(manifest_path)
    records = manifest.split(Split.TEST)
    _require_records(records, Split.TEST, "eval")
    labels = _labels(manifest, records)

    backbone = _load_stage(out / BACKBONE_FILE, "train", config).model
    images = _archive(out, records, [CANONICAL_VIEW], config).stack()
    single = classification_metrics(backbone.predict(images.reshape((-1, 1) + images.shape[2:])), labels, manifest.classes)
    report = EvalReport(projection=config.projection, classes=manifest.classes, single_view=single)

    ensemble_path = out / ENSEMBLE_FILE
    if ensemble_path.exists():
        ensemble = load_checkpoint(ensemble_path, dropout_rate=config.train.dropout_rate).ensemble
        if ensemble is not None:
            views = _archive(out, records, ensemble.view_indices, config).stack()
            report.ensemble = classification_metrics(ensemble.predict(views), labels, manifest.classes)
            report.aggregation = ensemble.aggregation
            report.selected_views = ensemble.view_indices

    write_json(out / METRICS_FILE, report)
    logger.info("single-view test accuracy %.4f", single.accuracy)
    return report


def cmd_retrieve(config: RunConfig, manifest_path: Path) -> RetrievalMetrics:
    """Rank the test split against itself with ensemble descriptors"""
    out = _prepare_out(config)
    manifest = load_manifest(manifest_path)
    ensemble = _load_stage(out / ENSEMBLE_FILE, "ensemble", config).ensemble
    if ensemble is None:
        raise StageDependency(f"{ENSEMBLE_FILE} carries no ensemble head; run 'ensemble' first")

    records = manifest.split(Split.TEST)
    _require_records(records, Split.TEST, "retrieve")
    archive = _archive(out, records, ensemble.view_indices, config)
    descriptors = [descriptor(ensemble, archive[i], r.object_id, r.class_label) for i, r in enumerate(records)]
    predicted = np.stack([d.probs for d in descriptors]) if descriptors else np.zeros((0, len(manifest.classes)))
    test_accuracy = accuracy(predicted, _labels(manifest, records))

    rankings, metrics = evaluate_retrieval(descriptors, config.metric, accuracy=test_accuracy)
    rankings_frame(rankings).to_csv(out / RANKINGS_FILE, index=False, lineterminator="\n", float_format="%.10g")
    write_json(out / RETRIEVAL_METRICS_FILE, metrics)
    export_similarity(similarity_matrix(descriptors, config.metric), out)
    return metrics

# ================================
# GRADCHECK
# ================================

def cmd_gradcheck(
    num_classes: int = 10,
    image_size: int = 16,
    seed: int = 0,
    samples_per_layer: int = 200,
    label: Optional[int] = None,
) -> GradCheckReport:
    """Check backpropagation of a freshly initialised model on a random image"""
    rng = np.random.default_rng(seed)
    model = SpnetModel.initialize(num_classes, seed=seed)
    image = rng.uniform(0.0, 1.0, size=(1, image_size, image_size))
    target = int(rng.integers(num_classes)) if label is None else label
    return grad_check(model, image, target, samples_per_layer=samples_per_layer, seed=seed)
