"""WattLens command line.

    python -m app.cli --config run.env pipeline
    python -m app.cli ingest --synthetic dlul --rows 2000 --write data/dataset_dlul.csv
    python -m app.cli simulate --stdio < records.jsonl > transcript.jsonl
"""

import functools
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import click

from app.core.config import Settings, load_settings, split_csv
from app.core.errors import ConfigError, WattLensError
from app.core.seeding import derive_seed
from app.models.codec import save_model
from app.schemas.run import RunConfig
from app.services.ingest_service import (
    compute_stats,
    load_dataset,
    split,
    write_dataset,
    write_synthetic,
)
from app.services.lime_service import lime_stability
from app.services.pipeline_service import EXPLAINERS, PipelineService, render_reports
from app.services.report_service import (
    emit_metrics_table,
    render_instance_bars,
    render_summary,
    write_text,
)
from app.services.ric_service import RicSession, ensure_bindable, parse_endpoint

logger = logging.getLogger(__name__)

MODEL_CHOICES = ["rf", "gb", "xgb"]


@dataclass
class CliState:
    settings: Settings
    overrides: Dict[str, Any] = field(default_factory=dict)

    def run_config(self, **extra) -> RunConfig:
        return RunConfig.from_settings(self.settings, **{**self.overrides, **extra})

    @property
    def output_dir(self) -> Path:
        return Path(self.overrides.get("output_dir") or self.settings.OUTPUT_DIR)


def handle_errors(command):
    """Report WattLensError as `error [module]: message` with exit status 1"""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except WattLensError as e:
            click.echo(f"error [{e.module}]: {e}", err=True)
            sys.exit(1)

    return wrapper


def _configure_logging(level: str) -> None:
    logging.basicConfig(
        level=level.upper(),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="KEY=value settings file (dotenv syntax)")
@click.option("--dataset", type=click.Path(), default=None, help="Telemetry CSV")
@click.option("--target", default=None, help="Target column")
@click.option("--drop", default=None,
              help="Comma-separated columns to drop; replaces the default drop list")
@click.option("--train-frac", "train_fraction", type=float, default=None,
              help="Train share of the seeded split")
@click.option("--source-tag", type=click.Choice(["ul", "dlul", "custom"]), default=None,
              help="Dataset variant; selects the default drop list")
@click.option("--out", "output_dir", type=click.Path(), default=None, help="Output directory")
@click.option("--seed", type=int, default=None, help="Global seed")
@click.option("--n-jobs", type=int, default=None, help="Parallel workers")
@click.option("--log-level", default=None, help="Logging level")
@click.pass_context
def cli(ctx, config_path, dataset, target, drop, train_fraction, source_tag, output_dir, seed, n_jobs,
        log_level):
    """Explainable power prediction for virtualized RAN base stations."""
    try:
        settings = load_settings(config_path)
    except ConfigError as e:
        click.echo(f"error [{e.module}]: {e}", err=True)
        sys.exit(1)
    _configure_logging(log_level or settings.LOG_LEVEL)
    ctx.obj = CliState(
        settings=settings,
        overrides={
            "dataset_path": Path(dataset) if dataset else None,
            "target_column": target,
            "drop_columns": split_csv(drop) if drop is not None else None,
            "train_fraction": train_fraction,
            "source_tag": source_tag,
            "output_dir": Path(output_dir) if output_dir else None,
            "seed": seed,
            "n_jobs": n_jobs,
        },
    )


@cli.command(help="Load a telemetry CSV, or generate a synthetic one")
@click.option("--synthetic", type=click.Choice(["ul", "dlul"]), default=None,
              help="Write a synthetic dataset of this variant instead of loading one")
@click.option("--rows", type=int, default=2000, show_default=True, help="Synthetic row count")
@click.option("--write", "write_path", type=click.Path(), default=None,
              help="Destination CSV (synthetic output or cleaned dataset)")
@click.pass_obj
@handle_errors
def ingest(state: CliState, synthetic, rows, write_path):
    if synthetic:
        seed = state.overrides.get("seed")
        seed = state.settings.SEED if seed is None else seed
        path = Path(write_path or state.overrides.get("dataset_path") or state.settings.DATASET_PATH)
        write_synthetic(path, synthetic, rows, derive_seed(seed, "synthetic"))
        click.echo(f"Wrote {rows} synthetic {synthetic} rows to {path}")
        return

    config = state.run_config()
    dataset = load_dataset(
        config.dataset_path, config.target_column, config.effective_drop_columns, config.source_tag
    )
    click.echo(
        f"{dataset.n_rows} rows, {dataset.n_features} features, "
        f"{dataset.dropped_rows} rows dropped, target {dataset.target_name}"
    )
    train, test = split(dataset, config.split_config())
    click.echo(f"Split {train.n_rows} train / {test.n_rows} test rows (train fraction {config.train_fraction})")
    for row in compute_stats(dataset).as_rows():
        click.echo(
            f"  {row['feature']:<24} mean {row['mean']:>12.5g}  std {row['std']:>12.5g}  "
            f"min {row['min']:>12.5g}  max {row['max']:>12.5g}"
        )
    if write_path:
        write_dataset(dataset, write_path)
        click.echo(f"Wrote cleaned dataset to {write_path}")


def _model_tags(model: str):
    return MODEL_CHOICES if model == "all" else [model]


@cli.command(help="Fit models and write model_<tag>.txt files")
@click.option("--model", type=click.Choice(MODEL_CHOICES + ["all"]), default="all", show_default=True)
@click.option("--n-trees", type=int, default=None, help="Forest size")
@click.option("--n-stages", type=int, default=None, help="Boosting stages")
@click.option("--max-depth", type=int, default=None)
@click.option("--min-samples-leaf", type=int, default=None)
@click.option("--features-per-split", default=None, help="Integer, 'all' or 'auto'")
@click.option("--learning-rate", type=float, default=None)
@click.option("--subsample", type=float, default=None, help="Row share per boosting stage")
@click.option("--lambda", "reg_lambda", type=float, default=None, help="Second-order leaf L2 penalty")
@click.option("--min-split-gain", type=float, default=None)
@click.option("--bootstrap/--no-bootstrap", default=None, help="Forest row resampling")
@click.pass_obj
@handle_errors
def train(state: CliState, model, **hyper):
    tags = _model_tags(model)
    overrides = {key: value for key, value in hyper.items() if value is not None}
    config = state.run_config(model_tags=tags, model_overrides={tag: overrides for tag in tags})
    service = PipelineService(config)
    _, train_set, test_set = service.load_split()
    models = service.fit_all(train_set)
    metrics = service.evaluate(models, train_set, test_set)
    report = emit_metrics_table(metrics)
    write_text(config.output_dir / "metrics.csv", report.structured)
    click.echo(report.table, nl=False)


@cli.command(help="Compute train/test MSE of saved models")
@click.option("--model", "models", type=click.Choice(MODEL_CHOICES), multiple=True,
              help="Model tags (default: all saved by the config)")
@click.pass_obj
@handle_errors
def evaluate(state: CliState, models):
    config = state.run_config(model_tags=list(models) or None)
    service = PipelineService(config)
    _, train_set, test_set = service.load_split()
    metrics = service.evaluate(service.load_models(), train_set, test_set)
    report = emit_metrics_table(metrics)
    write_text(config.output_dir / "metrics.csv", report.structured)
    write_text(config.output_dir / "metrics.txt", report.table)
    click.echo(report.table, nl=False)


@cli.command(help="Explain one test row of a saved model")
@click.option("--model", type=click.Choice(MODEL_CHOICES), required=True)
@click.option("--method", type=click.Choice(EXPLAINERS), default="lime", show_default=True)
@click.option("--row", type=int, default=None, help="Test-set row (default: highlighted row)")
@click.option("--stability", type=int, default=0,
              help="LIME only: rerun under this many seeds and report the spread")
@click.pass_obj
@handle_errors
def explain(state: CliState, model, method, row, stability):
    config = state.run_config(model_tags=[model], highlight_row=row)
    service = PipelineService(config)
    dataset, train_set, test_set = service.load_split()
    models = service.load_models()
    index = service.highlight_index(models, dataset, test_set)
    setup = service.explainer(train_set, method)
    attribution = service.explain_instance(model, models[model], setup, test_set.rows[index])

    stem = f"lime_{model}" if method == "lime" else f"shap_instance_{model}"
    write_text(config.output_dir / f"{stem}.json", attribution.model_dump_json(indent=2))
    write_text(
        config.output_dir / f"{stem}.svg",
        render_instance_bars(attribution, config.svg_width, config.svg_height),
    )
    click.echo(
        f"{method} on test row {index}: prediction {attribution.prediction:.4f} W, "
        f"base {attribution.base_value:.4f} W"
    )
    for name, phi, value in attribution.ranked():
        if phi != 0.0:
            click.echo(f"  {name:<24} {phi:+.5f} W   (value {value:.5g})")

    if method == "lime" and stability > 0:
        seeds = [derive_seed(config.seed, "stability", i) for i in range(stability)]
        report = lime_stability(
            models[model], test_set.rows[index], setup.stats,
            config.lime_config(seeds[0]), seeds, config.lime_kernel_factor,
        )
        click.echo(f"LIME stability over {stability} seeds:")
        for name, mean, std, freq in zip(
            report.feature_names, report.mean_phi, report.std_phi, report.top_k_frequency
        ):
            click.echo(f"  {name:<24} mean {mean:+.5f}  std {std:.5f}  top-k {freq:.2f}")


@cli.command(help="Global Shapley summary of a saved model over sampled test rows")
@click.option("--model", type=click.Choice(MODEL_CHOICES), required=True)
@click.option("--instances", type=int, default=None, help="Number of test rows summarized")
@click.pass_obj
@handle_errors
def summary(state: CliState, model, instances):
    config = state.run_config(model_tags=[model], summary_instances=instances)
    service = PipelineService(config)
    _, train_set, test_set = service.load_split()
    fitted = service.load_models()[model]
    result = service.summarize(model, fitted, service.explainer(train_set, "shap"), test_set)
    write_text(config.output_dir / f"shap_{model}.json", result.model_dump_json(indent=2))
    write_text(
        config.output_dir / f"shap_{model}.svg",
        render_summary(result, config.svg_width, config.svg_height),
    )
    click.echo(f"Summary over {result.n_instances} instances ({', '.join(m.value for m in result.methods)}):")
    for feature in result.features:
        click.echo(f"  {feature.name:<24} mean |phi| {feature.mean_abs:.5f} W")


@cli.command(help="Render metrics, ranking and SVGs from the files in the output directory")
@click.option("--model", "models", type=click.Choice(MODEL_CHOICES), multiple=True,
              help="Model tags to include (default: all three)")
@click.option("--top", type=int, default=10, show_default=True, help="Ranking rows printed")
@click.pass_obj
@handle_errors
def report(state: CliState, models, top):
    ranking, table, _ = render_reports(
        state.output_dir,
        list(models) or MODEL_CHOICES,
        state.settings.SVG_WIDTH,
        state.settings.SVG_HEIGHT,
    )
    click.echo(table, nl=False)
    click.echo("Top features: " + ", ".join(ranking.top(top)))


@cli.command(help="Run the RIC loop over stdin/stdout or HTTP")
@click.option("--model", "model_path", type=click.Path(), default=None,
              help="Model file (default: <out>/model_<RIC_MODEL>.txt)")
@click.option("--explainer", type=click.Choice(EXPLAINERS), default=None)
@click.option("--whitelist", default=None, help="Comma-separated tunable parameters")
@click.option("--top-k", type=int, default=None, help="Targets per control message")
@click.option("--listen", default=None, help="host:port for the HTTP loop")
@click.option("--stdio", is_flag=True, help="Serve over standard input/output")
@click.pass_obj
@handle_errors
def simulate(state: CliState, model_path, explainer, whitelist, top_k, listen, stdio):
    if stdio and listen:
        raise ConfigError("Choose either --listen or --stdio")
    whitelist_names = [w.strip() for w in whitelist.split(",") if w.strip()] if whitelist else None
    config = state.run_config(
        ric_explainer=explainer,
        ric_whitelist=whitelist_names,
        ric_top_k=top_k,
        dataset_path=state.overrides.get("dataset_path") or state.settings.RIC_DATA_PATH,
    )

    if stdio:
        session = RicSession.from_config(config, model_path or state.settings.RIC_MODEL_PATH)
        session.serve_stdio(click.get_binary_stream("stdin"), click.get_text_stream("stdout"))
        return

    host, port = parse_endpoint(listen or state.settings.RIC_LISTEN)
    ensure_bindable(host, port)
    session = RicSession.from_config(config, model_path or state.settings.RIC_MODEL_PATH)

    import uvicorn

    from app.api.deps import set_session
    from app.main import app

    set_session(session)
    logger.info(f"Serving the RIC loop on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level=state.settings.LOG_LEVEL.lower())


@cli.command(help="load -> split -> fit -> evaluate -> explain -> report")
@click.pass_obj
@handle_errors
def pipeline(state: CliState):
    result = PipelineService(state.run_config()).run()
    click.echo(result.table, nl=False)
    click.echo(f"Highlighted test row: {result.highlight_row}")
    click.echo("Top features: " + ", ".join(result.ranking.top(6)))


def main(argv: Optional[list] = None):
    cli(args=argv, prog_name="wattlens")


if __name__ == "__main__":
    main()
