# spnet/cli/main.py
"""spnet command line: synth, render, train, select, ensemble, eval, retrieve, gradcheck."""

import logging
from pathlib import Path
from typing import Any, Callable, Dict, Optional

import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from ..config import SPNET_LOG_LEVEL
from ..exceptions import ConfigError, ManifestError, SpnetError, StageDependency
from ..state_management import Aggregation, DistanceMetric, ProjectionKind, RunConfig, ViewPreset, load_run_config
from . import pipeline

logger = logging.getLogger(__name__)

app = typer.Typer(help="Stereographic projection networks for 3D shape classification and retrieval.", no_args_is_help=True)
console = Console()

# exit status for missing prerequisites and invalid configuration
USAGE_EXIT = 2


def configure_logging(level: str) -> None:
    logging.basicConfig(
        level=level.upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), rich_tracebacks=True, show_path=False)],
        force=True,
    )


@app.callback()
def main(
    log_level: str = typer.Option(SPNET_LOG_LEVEL, "--log-level", help="Python logging level"),
) -> None:
    configure_logging(log_level)


def _run(stage: Callable, *args, **kwargs) -> Any:
    try:
        return stage(*args, **kwargs)
    except (StageDependency, ConfigError, ManifestError) as e:
        logger.error("%s", e)
        raise typer.Exit(code=USAGE_EXIT)
    except SpnetError as e:
        logger.error("%s: %s", type(e).__name__, e)
        raise typer.Exit(code=1)


def _config(
    config: Optional[Path],
    out: Optional[Path],
    seed: Optional[int],
    projection: Optional[ProjectionKind],
    views: Optional[ViewPreset],
    topm: Optional[int],
    agg: Optional[Aggregation],
    metric: Optional[DistanceMetric],
    image_size: Optional[int],
    epochs: Optional[int],
) -> RunConfig:
    overrides: Dict[str, Any] = {
        "out": out,
        "seed": seed,
        "train.seed": seed,
        "projection": projection,
        "views": views,
        "top_m": topm,
        "aggregation": agg,
        "metric": metric,
        "image_size": image_size,
        "train.epochs": epochs,
    }
    return _run(load_run_config, config, overrides)


# shared options of the stage commands
ManifestOption = typer.Option(..., "--manifest", help="Dataset manifest CSV")
ConfigOption = typer.Option(None, "--config", help="YAML or key=value config file")
OutOption = typer.Option(None, "--out", help="Run directory")
SeedOption = typer.Option(None, "--seed", help="Seed for every random draw")
ProjectionOption = typer.Option(None, "--projection")
ViewsOption = typer.Option(None, "--views", help="View preset")
TopMOption = typer.Option(None, "--topm", help="Views kept by selection")
AggOption = typer.Option(None, "--agg", help="Ensemble aggregation")
MetricOption = typer.Option(None, "--metric", help="Retrieval distance")
ImageSizeOption = typer.Option(None, "--image-size", help="Rendered image side, divisible by 8")
EpochsOption = typer.Option(None, "--epochs", help="Training epochs")


@app.command()
def synth(
    out: Path = typer.Option(Path("runs/synth"), "--out", help="Directory for meshes and manifest"),
    count: int = typer.Option(30, "--count", help="Total number of objects"),
    classes: int = typer.Option(3, "--classes", help="Number of shape classes (at most 5)"),
    seed: int = typer.Option(0, "--seed"),
    test_fraction: float = typer.Option(0.25, "--test-fraction", help="Share of each class placed in the test split"),
) -> None:
    """Generate a labeled procedural mesh corpus."""
    manifest_path = _run(pipeline.cmd_synth, out, count=count, classes=classes, seed=seed, test_fraction=test_fraction)
    console.print(f"manifest written to {manifest_path}")


@app.command()
def render(
    manifest: Path = ManifestOption,
    config: Optional[Path] = ConfigOption,
    out: Optional[Path] = OutOption,
    seed: Optional[int] = SeedOption,
    projection: Optional[ProjectionKind] = ProjectionOption,
    views: Optional[ViewPreset] = ViewsOption,
    topm: Optional[int] = TopMOption,
    agg: Optional[Aggregation] = AggOption,
    metric: Optional[DistanceMetric] = MetricOption,
    image_size: Optional[int] = ImageSizeOption,
    epochs: Optional[int] = EpochsOption,
) -> None:
    """Render every view of every object (resumable)."""
    run_config = _config(config, out, seed, projection, views, topm, agg, metric, image_size, epochs)
    summary = _run(pipeline.cmd_render, run_config, manifest)
    console.print(f"rendered {summary.rendered}, skipped {summary.skipped}, failed {summary.failed}")
    if summary.failed:
        raise typer.Exit(code=1)


@app.command()
def train(
    manifest: Path = ManifestOption,
    config: Optional[Path] = ConfigOption,
    out: Optional[Path] = OutOption,
    seed: Optional[int] = SeedOption,
    projection: Optional[ProjectionKind] = ProjectionOption,
    views: Optional[ViewPreset] = ViewsOption,
    topm: Optional[int] = TopMOption,
    agg: Optional[Aggregation] = AggOption,
    metric: Optional[DistanceMetric] = MetricOption,
    image_size: Optional[int] = ImageSizeOption,
    epochs: Optional[int] = EpochsOption,
) -> None:
    """Train the single-view backbone."""
    run_config = _config(config, out, seed, projection, views, topm, agg, metric, image_size, epochs)
    model = _run(pipeline.cmd_train, run_config, manifest)
    console.print(f"backbone with {model.parameter_count():,} parameters saved to {run_config.out / pipeline.BACKBONE_FILE}")


@app.command()
def select(
    manifest: Path = ManifestOption,
    config: Optional[Path] = ConfigOption,
    out: Optional[Path] = OutOption,
    seed: Optional[int] = SeedOption,
    projection: Optional[ProjectionKind] = ProjectionOption,
    views: Optional[ViewPreset] = ViewsOption,
    topm: Optional[int] = TopMOption,
    agg: Optional[Aggregation] = AggOption,
    metric: Optional[DistanceMetric] = MetricOption,
    image_size: Optional[int] = ImageSizeOption,
    epochs: Optional[int] = EpochsOption,
) -> None:
    """Learn per-view weights with the backbone frozen and keep the top views."""
    run_config = _config(config, out, seed, projection, views, topm, agg, metric, image_size, epochs)
    bank = _run(pipeline.cmd_select, run_config, manifest)
    console.print(f"selected views {bank.selected}")


@app.command()
def ensemble(
    manifest: Path = ManifestOption,
    config: Optional[Path] = ConfigOption,
    out: Optional[Path] = OutOption,
    seed: Optional[int] = SeedOption,
    projection: Optional[ProjectionKind] = ProjectionOption,
    views: Optional[ViewPreset] = ViewsOption,
    topm: Optional[int] = TopMOption,
    agg: Optional[Aggregation] = AggOption,
    metric: Optional[DistanceMetric] = MetricOption,
    image_size: Optional[int] = ImageSizeOption,
    epochs: Optional[int] = EpochsOption,
) -> None:
    """Train the view ensemble on the selected views."""
    run_config = _config(config, out, seed, projection, views, topm, agg, metric, image_size, epochs)
    model = _run(pipeline.cmd_ensemble, run_config, manifest)
    console.print(f"{model.aggregation.value} ensemble over views {model.view_indices} saved")


@app.command("eval")
def evaluate(
    manifest: Path = ManifestOption,
    config: Optional[Path] = ConfigOption,
    out: Optional[Path] = OutOption,
    seed: Optional[int] = SeedOption,
    projection: Optional[ProjectionKind] = ProjectionOption,
    views: Optional[ViewPreset] = ViewsOption,
    topm: Optional[int] = TopMOption,
    agg: Optional[Aggregation] = AggOption,
    metric: Optional[DistanceMetric] = MetricOption,
    image_size: Optional[int] = ImageSizeOption,
    epochs: Optional[int] = EpochsOption,
) -> None:
    """Classification accuracy on the test split."""
    run_config = _config(config, out, seed, projection, views, topm, agg, metric, image_size, epochs)
    report = _run(pipeline.cmd_eval, run_config, manifest)

    table = Table(title=f"Test classification ({report.projection.value})")
    table.add_column("Model")
    table.add_column("Accuracy", justify="right")
    table.add_column("Binary accuracy", justify="right")
    table.add_row("single view", f"{report.single_view.accuracy:.4f}", f"{report.single_view.binary_accuracy:.4f}")
    if report.ensemble is not None:
        table.add_row(f"ensemble ({report.aggregation.value})", f"{report.ensemble.accuracy:.4f}", f"{report.ensemble.binary_accuracy:.4f}")
    console.print(table)


@app.command()
def retrieve(
    manifest: Path = ManifestOption,
    config: Optional[Path] = ConfigOption,
    out: Optional[Path] = OutOption,
    seed: Optional[int] = SeedOption,
    projection: Optional[ProjectionKind] = ProjectionOption,
    views: Optional[ViewPreset] = ViewsOption,
    topm: Optional[int] = TopMOption,
    agg: Optional[Aggregation] = AggOption,
    metric: Optional[DistanceMetric] = MetricOption,
    image_size: Optional[int] = ImageSizeOption,
    epochs: Optional[int] = EpochsOption,
) -> None:
    """Rank the test split with ensemble descriptors and score the rankings."""
    run_config = _config(config, out, seed, projection, views, topm, agg, metric, image_size, epochs)
    metrics = _run(pipeline.cmd_retrieve, run_config, manifest)

    table = Table(title=f"Retrieval ({metrics.metric.value})")
    for name in ("mean_ap", "ndcg", "micro_f", "macro_f", "precision_at_10", "recall_at_10"):
        table.add_column(name, justify="right")
    table.add_row(*(f"{getattr(metrics, name):.4f}" for name in ("mean_ap", "ndcg", "micro_f", "macro_f", "precision_at_10", "recall_at_10")))
    console.print(table)


@app.command()
def gradcheck(
    classes: int = typer.Option(10, "--classes"),
    size: int = typer.Option(16, "--size", help="Side of the random input image"),
    seed: int = typer.Option(0, "--seed"),
    samples: int = typer.Option(200, "--samples", help="Parameters probed per tensor"),
) -> None:
    """Compare backpropagated gradients against central differences."""
    report = _run(pipeline.cmd_gradcheck, num_classes=classes, image_size=size, seed=seed, samples_per_layer=samples)

    table = Table(title="Gradient check")
    table.add_column("Parameter")
    table.add_column("Probes", justify="right")
    table.add_column("Max rel. error", justify="right")
    for name, error in report.errors.items():
        table.add_row(name, str(report.checked[name]), f"{error:.2e}")
    console.print(table)
    if not report.passed:
        console.print(f"[red]max relative error {report.max_rel_error:.2e} exceeds {report.tolerance:.0e}[/red]")
        raise typer.Exit(code=1)
    console.print(f"[green]passed[/green] (max relative error {report.max_rel_error:.2e})")


if __name__ == "__main__":
    app()
