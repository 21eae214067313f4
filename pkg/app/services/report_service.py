import io
import logging
from pathlib import Path
from typing import Dict, List, NamedTuple, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from app.core.errors import ReportError
from app.schemas.explain import Attribution, GlobalSummary
from app.schemas.params import MODEL_DISPLAY_NAMES
from app.schemas.report import Metrics, RankingRow, RankingTable
from app.services import svg

logger = logging.getLogger(__name__)

POSITIVE_COLOR = "#ff7f0e"
NEGATIVE_COLOR = "#1f77b4"
LOW_VALUE_COLOR = "#1e88e5"
HIGH_VALUE_COLOR = "#ff0d57"
AXIS_COLOR = "#333333"
GRID_COLOR = "#dddddd"

METRICS_HEADER = ("Model", "Train MSE [W]", "Test MSE [W]")
METRICS_FOOTNOTE = "Note: MSE values are in W^2."


def _check_size(width_px: int, height_px: int) -> None:
    if width_px < 200 or height_px < 120:
        raise ReportError(f"Canvas {width_px}x{height_px} px is too small")


def render_instance_bars(attr: Attribution, width_px: int = 900, height_px: int = 560) -> str:
    """Horizontal contribution bars around a zero axis, largest |phi| on top.

    Positive contributions extend right in orange, negative ones left in blue.
    Features whose contribution is exactly zero (outside LIME's top_k) are
    omitted unless every contribution is zero.
    """
    if not attr.feature_names:
        raise ReportError("Attribution has no features")
    _check_size(width_px, height_px)

    ranked = attr.ranked()
    shown = [item for item in ranked if item[1] != 0.0] or ranked
    largest = max(abs(phi) for _, phi, _ in shown)

    doc = svg.Document(width_px, height_px)
    header_h = 64.0
    label_w = 0.22 * width_px
    table_w = 0.26 * width_px
    plot_left = label_w
    plot_w = width_px - label_w - table_w - 20.0
    axis_x = plot_left + plot_w / 2.0
    half = plot_w / 2.0 - 50.0
    row_h = min(32.0, (height_px - header_h - 20.0) / len(shown))
    bar_h = 0.7 * row_h

    doc.add(
        svg.text(16, 28, f"Prediction: {attr.prediction:.2f} W", font_size=20, font_weight="bold",
                 class_="prediction"),
        svg.text(16, 50, f"Method: {attr.method.value}   base value: {attr.base_value:.2f} W",
                 font_size=12, fill=AXIS_COLOR),
        svg.text(width_px - table_w, header_h - 8, "Feature", font_size=12, font_weight="bold"),
        svg.text(width_px - 16, header_h - 8, "Value", font_size=12, font_weight="bold",
                 text_anchor="end"),
        svg.line(axis_x, header_h, axis_x, header_h + row_h * len(shown), stroke=AXIS_COLOR),
    )

    bars = svg.group(class_="bars")
    for i, (name, phi, value) in enumerate(shown):
        y = header_h + i * row_h
        length = abs(phi) / largest * half if largest > 0 else 0.0
        positive = phi > 0
        x = axis_x if positive else axis_x - length
        bar = svg.rect(
            x,
            y + (row_h - bar_h) / 2.0,
            length,
            bar_h,
            fill=POSITIVE_COLOR if positive else NEGATIVE_COLOR,
            class_="bar positive" if positive else "bar negative",
            data_feature=name,
        )
        bar.add(svg.title(f"{name}: {phi:+.6g} W"))
        label_x = axis_x + length + 4 if positive else axis_x - length - 4
        bars.add(
            svg.text(plot_left - 8, y + row_h / 2 + 4, name, font_size=12, text_anchor="end"),
            bar,
            svg.text(label_x, y + row_h / 2 + 4, f"{phi:+.3f}", font_size=11, fill=AXIS_COLOR,
                     text_anchor="start" if positive else "end"),
            svg.text(width_px - table_w, y + row_h / 2 + 4, name, font_size=11),
            svg.text(width_px - 16, y + row_h / 2 + 4, f"{value:.4g}", font_size=11,
                     text_anchor="end", class_="feature-value"),
        )
    doc.add(bars)
    return doc.render()


def _swarm_offsets(positions: np.ndarray, radius: float) -> np.ndarray:
    """Deterministic beeswarm: points sharing an x bin stack 0, +1, -1, +2, ..."""
    bins = np.floor(positions / (2.0 * radius)).astype(np.int64)
    slots = np.zeros(positions.shape[0], dtype=np.int64)
    seen: Dict[int, int] = {}
    for i in np.argsort(positions, kind="stable"):
        count = seen.get(int(bins[i]), 0)
        seen[int(bins[i])] = count + 1
        slots[i] = (count + 1) // 2 * (1 if count % 2 else -1)
    return slots.astype(np.float64)


def render_summary(summary: GlobalSummary, width_px: int = 900, height_px: int = 560) -> str:
    """One strip per feature in summary order; x = attribution, color = feature value.

    Dense regions spread vertically, so the band height shows where points
    concentrate. The layout has no randomness.
    """
    if not summary.features or summary.n_instances < 1:
        raise ReportError("Summary is empty")
    _check_size(width_px, height_px)

    label_w = 0.22 * width_px
    legend_w = 70.0
    top, bottom = 40.0, 56.0
    plot_left = label_w
    plot_right = width_px - legend_w
    row_h = (height_px - top - bottom) / len(summary.features)
    radius = max(1.5, min(4.0, row_h / 8.0))

    all_phi = np.concatenate([np.asarray(f.attributions) for f in summary.features])
    lo, hi = min(float(all_phi.min()), 0.0), max(float(all_phi.max()), 0.0)
    if hi == lo:
        lo, hi = lo - 1.0, hi + 1.0
    span = hi - lo

    def x_of(phi):
        return plot_left + (np.asarray(phi) - lo) / span * (plot_right - plot_left)

    doc = svg.Document(width_px, height_px)
    zero_x = float(x_of(0.0))
    doc.add(
        svg.text(16, 24, f"Attribution summary over {summary.n_instances} instances "
                 f"(base value {summary.base_value:.2f} W)", font_size=14, font_weight="bold"),
        svg.line(zero_x, top, zero_x, height_px - bottom, stroke=AXIS_COLOR),
        svg.line(plot_left, height_px - bottom, plot_right, height_px - bottom, stroke=AXIS_COLOR),
        svg.text((plot_left + plot_right) / 2, height_px - 14,
                 "Attribution (impact on predicted power) [W]", font_size=12, text_anchor="middle"),
    )
    for tick in np.linspace(lo, hi, 5):
        tx = float(x_of(tick))
        doc.add(
            svg.line(tx, height_px - bottom, tx, height_px - bottom + 4, stroke=AXIS_COLOR),
            svg.text(tx, height_px - bottom + 16, f"{tick:.2f}", font_size=10, text_anchor="middle"),
        )

    for i, feature in enumerate(summary.features):
        center = top + (i + 0.5) * row_h
        strip = svg.group(class_="strip", data_feature=feature.name)
        strip.add(
            svg.line(plot_left, center, plot_right, center, stroke=GRID_COLOR, stroke_dasharray="2,3"),
            svg.text(plot_left - 8, center + 4, feature.name, font_size=12, text_anchor="end"),
        )
        xs = x_of(feature.attributions)
        slots = _swarm_offsets(xs - plot_left, radius)
        max_slot = float(np.abs(slots).max()) if slots.size else 0.0
        step = min(2.0 * radius * 0.9, (row_h / 2.0 - radius) / max_slot) if max_slot > 0 else 0.0

        values = np.asarray(feature.feature_values)
        v_lo, v_hi = float(values.min()), float(values.max())
        for x, slot, value, phi in zip(xs, slots, values, feature.attributions):
            t = (value - v_lo) / (v_hi - v_lo) if v_hi > v_lo else 0.5
            point = svg.circle(x, center + slot * step, radius, fill=svg.blend(LOW_VALUE_COLOR, HIGH_VALUE_COLOR, t),
                               fill_opacity=0.8)
            point.add(svg.title(f"{feature.name}={value:.6g}, phi={phi:+.6g} W"))
            strip.add(point)
        doc.add(strip)

    legend_x = plot_right + 24
    legend_h = height_px - top - bottom
    gradient = svg.group(class_="legend")
    n_steps = 20
    for k in range(n_steps):
        gradient.add(
            svg.rect(legend_x, top + legend_h * (n_steps - 1 - k) / n_steps, 10, legend_h / n_steps,
                     fill=svg.blend(LOW_VALUE_COLOR, HIGH_VALUE_COLOR, k / (n_steps - 1)))
        )
    gradient.add(
        svg.text(legend_x + 14, top + 10, "High", font_size=10),
        svg.text(legend_x + 14, height_px - bottom, "Low", font_size=10),
        svg.text(legend_x + 5, top - 8, "Feature value", font_size=10, text_anchor="middle"),
    )
    doc.add(gradient)
    return doc.render()


RankingEntry = Tuple[str, str, Union[Attribution, GlobalSummary]]


def _cell_scores(result: Union[Attribution, GlobalSummary]) -> Dict[str, float]:
    if isinstance(result, Attribution):
        return {name: abs(phi) for name, phi in zip(result.feature_names, result.phi)}
    return {feature.name: feature.mean_abs for feature in result.features}


def rank_features(entries: Sequence[RankingEntry]) -> RankingTable:
    """Aggregate score = unweighted mean of per-cell |phi| (or mean |phi|)"""
    if not entries:
        raise ReportError("Ranking needs at least one entry")

    cells: List[str] = []
    per_cell: List[Dict[str, float]] = []
    names = None
    for model_tag, explainer_tag, result in entries:
        scores = _cell_scores(result)
        if names is None:
            names = sorted(scores)
        elif sorted(scores) != names:
            raise ReportError(
                f"Feature names of {model_tag}/{explainer_tag} differ from the first entry"
            )
        cells.append(f"{model_tag}/{explainer_tag}")
        per_cell.append(scores)

    rows = []
    for name in names:
        cell_scores = {cell: scores[name] for cell, scores in zip(cells, per_cell)}
        total = 0.0
        for scores in per_cell:
            total += scores[name]
        rows.append(RankingRow(feature=name, score=total / len(per_cell), cell_scores=cell_scores))
    rows.sort(key=lambda row: (-row.score, row.feature))
    return RankingTable(cells=cells, rows=rows)


def format_ranking(table: RankingTable, top: int = 0) -> str:
    rows = table.rows[:top] if top > 0 else table.rows
    name_w = max([len("Feature")] + [len(row.feature) for row in rows])
    header = f"{'Rank':<5} {'Feature':<{name_w}} {'Score [W]':>10}  " + "  ".join(
        f"{cell:>12}" for cell in table.cells
    )
    lines = [header.rstrip()]
    for rank, row in enumerate(rows, start=1):
        cells = "  ".join(f"{row.cell_scores[cell]:>12.5f}" for cell in table.cells)
        lines.append(f"{rank:<5} {row.feature:<{name_w}} {row.score:>10.5f}  {cells}".rstrip())
    return "\n".join(lines) + "\n"


class MetricsReport(NamedTuple):
    structured: str
    table: str


def display_name(tag: str) -> str:
    return MODEL_DISPLAY_NAMES.get(tag, tag)


def emit_metrics_table(metrics: Sequence[Tuple[str, Metrics]]) -> MetricsReport:
    """CSV (repr floats, exact round-trip) plus an aligned 5-decimal text table"""
    if not metrics:
        raise ReportError("Metrics table needs at least one model")

    frame = pd.DataFrame(
        [(tag, m.train_mse, m.test_mse) for tag, m in metrics],
        columns=["model", "train_mse", "test_mse"],
    )
    structured = frame.to_csv(index=False, lineterminator="\n")

    rows = [
        (display_name(tag), f"{m.train_mse:.5f}", f"{m.test_mse:.5f}") for tag, m in metrics
    ]
    widths = [max(len(r[i]) for r in rows + [METRICS_HEADER]) for i in range(3)]

    def fmt(row):
        return f"{row[0]:<{widths[0]}}  {row[1]:>{widths[1]}}  {row[2]:>{widths[2]}}"

    lines = [fmt(METRICS_HEADER), "  ".join("-" * w for w in widths)]
    lines.extend(fmt(row) for row in rows)
    lines.append("")
    lines.append(METRICS_FOOTNOTE)
    return MetricsReport(structured=structured, table="\n".join(lines) + "\n")


def parse_metrics(structured: str) -> List[Tuple[str, Metrics]]:
    try:
        frame = pd.read_csv(
            io.StringIO(structured),
            dtype={"model": str},
            float_precision="round_trip",
            keep_default_na=False,
        )
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ReportError(f"Unreadable metrics table: {e}")
    if list(frame.columns) != ["model", "train_mse", "test_mse"]:
        raise ReportError(f"Unexpected metrics columns: {list(frame.columns)}")
    return [
        (row.model, Metrics(train_mse=float(row.train_mse), test_mse=float(row.test_mse)))
        for row in frame.itertuples(index=False)
    ]


def write_text(path: Union[str, Path], content: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(content, encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path
