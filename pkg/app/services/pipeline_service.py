import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.errors import ConfigError, ReportError
from app.core.seeding import derive_seed
from app.models.codec import read_model, save_model
from app.models.dataset import Dataset
from app.models.ensemble import EnsembleModel
from app.schemas.explain import Attribution, GlobalSummary
from app.schemas.report import Metrics, RankingTable
from app.schemas.run import RunConfig
from app.services.ingest_service import load_dataset, sample_rows, split
from app.services.report_service import (
    emit_metrics_table,
    format_ranking,
    parse_metrics,
    rank_features,
    render_instance_bars,
    render_summary,
    write_text,
)
from app.services.ric_service import ExplainerSetup, RicSession, records_from_dataset, reference_data
from app.services.shapley_service import shap_summary
from app.services.training_service import TrainingService, build_params

logger = logging.getLogger(__name__)

TRANSCRIPT_FILE = "ric_transcript.jsonl"
EXPLAINERS = ("lime", "shap")


@dataclass
class PipelineResult:
    metrics: List[Tuple[str, Metrics]]
    ranking: RankingTable
    highlight_row: int
    table: str
    artifacts: List[Path] = field(default_factory=list)


class PipelineService:
    """load -> split -> fit -> evaluate -> explain -> report, under one RunConfig"""

    def __init__(self, config: RunConfig):
        self.config = config
        self.out = Path(config.output_dir)
        self.trainer = TrainingService(n_jobs=config.n_jobs)

    def load_split(self) -> Tuple[Dataset, Dataset, Dataset]:
        dataset = load_dataset(
            self.config.dataset_path,
            self.config.target_column,
            self.config.effective_drop_columns,
            self.config.source_tag,
        )
        train, test = split(dataset, self.config.split_config())
        return dataset, train, test

    def model_path(self, tag: str) -> Path:
        return self.out / f"model_{tag}.txt"

    def fit(self, tag: str, train: Dataset) -> EnsembleModel:
        params = build_params(
            tag,
            self.config.settings,
            train.n_features,
            seed=self.config.model_seed(tag),
            **self.config.model_overrides.get(tag, {}),
        )
        return self.trainer.fit(tag, train, params)

    def fit_all(self, train: Dataset) -> Dict[str, EnsembleModel]:
        models = {}
        for tag in self.config.model_tags:
            models[tag] = self.fit(tag, train)
            save_model(models[tag], self.model_path(tag))
        return models

    def load_models(self, tags: Optional[Sequence[str]] = None) -> Dict[str, EnsembleModel]:
        return {tag: read_model(self.model_path(tag)) for tag in (tags or self.config.model_tags)}

    def evaluate(
        self, models: Dict[str, EnsembleModel], train: Dataset, test: Dataset
    ) -> List[Tuple[str, Metrics]]:
        return [(tag, self.trainer.evaluate(model, train, test)) for tag, model in models.items()]

    def highlight_index(self, models: Dict[str, EnsembleModel], dataset: Dataset, test: Dataset) -> int:
        """Test row whose mean prediction is nearest the median power, unless overridden"""
        if self.config.highlight_row is not None:
            if self.config.highlight_row >= test.n_rows:
                raise ConfigError(
                    f"highlight row {self.config.highlight_row} outside the {test.n_rows}-row test set"
                )
            return self.config.highlight_row
        predictions = np.mean([model.predict_batch(test.rows) for model in models.values()], axis=0)
        median = float(np.median(dataset.target))
        return int(np.argmin(np.abs(predictions - median)))

    def explainer(self, train: Dataset, method: str) -> ExplainerSetup:
        return replace(reference_data(self.config, train), method=method)

    def explain_instance(
        self, tag: str, model: EnsembleModel, setup: ExplainerSetup, x: np.ndarray
    ) -> Attribution:
        return setup.explain(model, x, derive_seed(self.config.seed, f"{setup.method}:{tag}"))

    def summary_instances(self, test: Dataset) -> Dataset:
        rows = sample_rows(
            test, self.config.summary_instances, derive_seed(self.config.seed, "summary"), "summary"
        )
        return test.take(rows)

    def summarize(self, tag: str, model: EnsembleModel, setup: ExplainerSetup, test: Dataset) -> GlobalSummary:
        return shap_summary(
            model,
            self.summary_instances(test),
            setup.background,
            self.config.shap_permutations,
            derive_seed(self.config.seed, f"summary:{tag}"),
            self.config.exact_limit,
            self.config.n_jobs,
        )

    def replay(self, model: EnsembleModel, train: Dataset, test: Dataset) -> str:
        """Feed the first ric_replay_records test rows through a RIC session"""
        setup = reference_data(self.config, train)
        session = RicSession(
            model,
            setup,
            self.config.ric_whitelist,
            self.config.ric_top_k,
            derive_seed(self.config.seed, "ric"),
        )
        return session.transcript(records_from_dataset(test, self.config.ric_replay_records))

    def run(self) -> PipelineResult:
        dataset, train, test = self.load_split()
        models = self.fit_all(train)
        metrics = self.evaluate(models, train, test)
        artifacts = [self.model_path(tag) for tag in models]
        artifacts.append(write_text(self.out / "metrics.csv", emit_metrics_table(metrics).structured))

        row = self.highlight_index(models, dataset, test)
        logger.info(f"Highlighted test row {row}")
        lime_setup = self.explainer(train, "lime")
        shap_setup = self.explainer(train, "shap")
        for tag, model in models.items():
            lime = self.explain_instance(tag, model, lime_setup, test.rows[row])
            summary = self.summarize(tag, model, shap_setup, test)
            artifacts.append(write_text(self.out / f"lime_{tag}.json", lime.model_dump_json(indent=2)))
            artifacts.append(write_text(self.out / f"shap_{tag}.json", summary.model_dump_json(indent=2)))

        if self.config.ric_replay_records > 0 and self.config.ric_model in models:
            transcript = self.replay(models[self.config.ric_model], train, test)
            artifacts.append(write_text(self.out / TRANSCRIPT_FILE, transcript))

        ranking, table, rendered = render_reports(
            self.out, list(models), self.config.svg_width, self.config.svg_height
        )
        artifacts.extend(rendered)
        return PipelineResult(
            metrics=metrics,
            ranking=ranking,
            highlight_row=row,
            table=table,
            artifacts=artifacts,
        )


def _read_json(path: Path, schema):
    if not path.is_file():
        raise ReportError(f"Missing report input: {path}")
    return schema.model_validate_json(path.read_text(encoding="utf-8"))


def render_reports(
    out: Path, tags: Sequence[str], width_px: int = 900, height_px: int = 560
) -> Tuple[RankingTable, str, List[Path]]:
    """Rebuild metrics.txt, ranking and SVGs from the JSON/CSV files in `out`"""
    out = Path(out)
    metrics_csv = out / "metrics.csv"
    if not metrics_csv.is_file():
        raise ReportError(f"Missing report input: {metrics_csv}")
    metrics = parse_metrics(metrics_csv.read_text(encoding="utf-8"))
    table = emit_metrics_table(metrics).table
    written = [write_text(out / "metrics.txt", table)]

    entries = []
    for tag in tags:
        lime = _read_json(out / f"lime_{tag}.json", Attribution)
        summary = _read_json(out / f"shap_{tag}.json", GlobalSummary)
        written.append(write_text(out / f"lime_{tag}.svg", render_instance_bars(lime, width_px, height_px)))
        written.append(write_text(out / f"shap_{tag}.svg", render_summary(summary, width_px, height_px)))
        entries.extend([(tag, "lime", lime), (tag, "shap", summary)])

    ranking = rank_features(entries)
    written.append(write_text(out / "ranking.txt", format_ranking(ranking)))
    written.append(write_text(out / "ranking.json", ranking.model_dump_json(indent=2)))
    return ranking, table, written
