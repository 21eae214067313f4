import re

import pytest

from app.core.errors import ReportError
from app.schemas.explain import Attribution, ExplainMethod, GlobalSummary, SummaryFeature
from app.schemas.report import Metrics
from app.services.report_service import (
    METRICS_FOOTNOTE,
    NEGATIVE_COLOR,
    POSITIVE_COLOR,
    emit_metrics_table,
    format_ranking,
    parse_metrics,
    rank_features,
    render_instance_bars,
    render_summary,
)
from app.services.svg import blend, demangle, rounder

BAR = re.compile(r'<rect [^>]*class="bar (positive|negative)"[^>]*>')
WIDTH = re.compile(r'width="([0-9.]+)"')
FEATURE = re.compile(r'data-feature="([^"]+)"')
CIRCLE = re.compile(r'<circle cx="([-0-9.]+)" cy="([-0-9.]+)"')

# Reference train/test MSE rows for the DL/UL dataset
DLUL_TABLE = [
    ("gb", Metrics(train_mse=0.05733, test_mse=0.06710)),
    ("rf", Metrics(train_mse=0.00897, test_mse=0.06806)),
    ("xgb", Metrics(train_mse=0.01672, test_mse=0.07021)),
]
UL_TABLE = [
    ("gb", Metrics(train_mse=0.0290, test_mse=0.0307)),
    ("rf", Metrics(train_mse=0.0020, test_mse=0.0143)),
    ("xgb", Metrics(train_mse=0.0085, test_mse=0.0191)),
]


def attribution(phi, names=None, prediction=13.534, values=None):
    names = names or [f"f{j}" for j in range(len(phi))]
    return Attribution(
        feature_names=names,
        phi=phi,
        base_value=12.0,
        prediction=prediction,
        method=ExplainMethod.LIME,
        feature_values=values or [1.0] * len(phi),
    )


def summary_of(columns):
    """columns: {name: (values, attributions)}"""
    features = [
        SummaryFeature(
            name=name,
            feature_values=values,
            attributions=phi,
            mean_abs=sum(abs(p) for p in phi) / len(phi),
        )
        for name, (values, phi) in columns.items()
    ]
    return GlobalSummary(
        features=features, n_instances=len(features[0].attributions), base_value=12.0
    )


class TestSvgPrimitives:
    def test_demangle(self):
        assert demangle("class_") == "class"
        assert demangle("data_feature") == "data-feature"

    def test_rounder(self):
        assert rounder(2.0) == 2
        assert rounder(1.23456) == 1.23
        assert rounder("x") == "x"

    def test_blend_endpoints(self):
        assert blend("#000000", "#ffffff", 0.0) == "#000000"
        assert blend("#000000", "#ffffff", 1.0) == "#ffffff"
        assert blend("#000000", "#ffffff", 7.0) == "#ffffff"


class TestInstanceBars:
    """Test the contribution bar chart"""

    def test_bar_lengths_proportional(self):
        svg = render_instance_bars(attribution([2.0, -1.0]))
        bars = [(m.group(1), float(WIDTH.search(m.group(0)).group(1))) for m in BAR.finditer(svg)]
        assert [kind for kind, _ in bars] == ["positive", "negative"]
        assert bars[0][1] == pytest.approx(2.0 * bars[1][1], rel=1e-3)

    def test_colors_and_header(self):
        svg = render_instance_bars(attribution([2.0, -1.0]))
        assert "Prediction: 13.53 W" in svg
        assert f'fill="{POSITIVE_COLOR}"' in svg
        assert f'fill="{NEGATIVE_COLOR}"' in svg
        assert svg.startswith('<?xml version="1.0" encoding="UTF-8"?>\n<svg xmlns="http://www.w3.org/2000/svg"')

    def test_sorted_by_magnitude(self):
        svg = render_instance_bars(attribution([0.1, -3.0, 1.0], names=["a", "b", "c"]))
        assert FEATURE.findall(svg) == ["b", "c", "a"]

    def test_zero_contributions_omitted(self):
        svg = render_instance_bars(attribution([0.0, 1.0, 0.0]))
        assert FEATURE.findall(svg) == ["f1"]

    def test_all_zero_shows_every_feature(self):
        svg = render_instance_bars(attribution([0.0, 0.0]))
        assert len(BAR.findall(svg)) == 2

    def test_deterministic(self):
        attr = attribution([0.3, -0.2, 0.1])
        assert render_instance_bars(attr) == render_instance_bars(attr)

    def test_feature_values_in_table(self):
        svg = render_instance_bars(attribution([1.0], values=[0.875]))
        assert ">0.875</text>" in svg

    def test_canvas_too_small(self):
        with pytest.raises(ReportError):
            render_instance_bars(attribution([1.0]), width_px=100, height_px=100)


class TestSummaryPlot:
    """Test the beeswarm summary"""

    def test_one_circle_per_point(self):
        summary = summary_of(
            {
                "a": ([1.0, 2.0, 3.0], [0.5, -0.5, 1.0]),
                "b": ([0.0, 0.0, 1.0], [0.1, 0.1, 0.2]),
            }
        )
        svg = render_summary(summary)
        assert len(CIRCLE.findall(svg)) == 6

    def test_strips_follow_summary_order(self):
        summary = summary_of(
            {
                "z_first": ([1.0, 2.0], [2.0, -2.0]),
                "a_second": ([1.0, 2.0], [0.1, -0.1]),
            }
        )
        svg = render_summary(summary)
        assert FEATURE.findall(svg) == ["z_first", "a_second"]

    def test_identical_features_identical_strips(self):
        values, phi = [1.0, 1.5, 2.0, 2.5], [0.3, 0.3, -0.2, 0.31]
        svg = render_summary(summary_of({"a": (values, phi), "b": (values, phi)}))
        points = CIRCLE.findall(svg)
        xs_a = [float(x) for x, _ in points[:4]]
        xs_b = [float(x) for x, _ in points[4:]]
        assert xs_a == xs_b
        dy_a = [float(y) for _, y in points[:4]]
        dy_b = [float(y) for _, y in points[4:]]
        offset = dy_b[0] - dy_a[0]
        assert [b - a for a, b in zip(dy_a, dy_b)] == pytest.approx([offset] * 4, abs=0.02)

    def test_dense_points_spread_vertically(self):
        summary = summary_of({"a": ([1.0, 2.0, 3.0, 4.0], [0.5, 0.5, 0.5, -1.0])})
        svg = render_summary(summary)
        points = CIRCLE.findall(svg)
        assert len({y for _, y in points[:3]}) == 3
        assert render_summary(summary) == svg

    def test_value_colors(self):
        summary = summary_of({"a": ([0.0, 1.0], [1.0, -1.0])})
        svg = render_summary(summary)
        assert 'fill="#1e88e5"' in svg
        assert 'fill="#ff0d57"' in svg


class TestRanking:
    """Test cross-model feature ranking"""

    def test_mean_of_cells(self):
        table = rank_features(
            [
                ("gb", "lime", attribution([1.0, -3.0], names=["a", "b"])),
                ("rf", "lime", attribution([3.0, 1.0], names=["a", "b"])),
            ]
        )
        assert table.cells == ["gb/lime", "rf/lime"]
        assert [(row.feature, row.score) for row in table.rows] == [("a", 2.0), ("b", 2.0)]
        assert table.rows[1].cell_scores == {"gb/lime": 3.0, "rf/lime": 1.0}

    def test_summary_uses_mean_abs(self):
        summary = summary_of({"b": ([1.0, 2.0], [1.0, -3.0]), "a": ([1.0, 2.0], [0.5, 0.5])})
        table = rank_features([("xgb", "shap", summary)])
        assert table.top(2) == ["b", "a"]
        assert table.rows[0].score == 2.0

    def test_name_mismatch(self):
        with pytest.raises(ReportError, match="differ"):
            rank_features(
                [
                    ("gb", "lime", attribution([1.0], names=["a"])),
                    ("rf", "lime", attribution([1.0], names=["b"])),
                ]
            )

    def test_empty(self):
        with pytest.raises(ReportError):
            rank_features([])

    def test_format(self):
        table = rank_features([("gb", "lime", attribution([1.0, -3.0], names=["a", "b"]))])
        lines = format_ranking(table).splitlines()
        assert lines[0].split()[:3] == ["Rank", "Feature", "Score"]
        assert lines[1].split() == ["1", "b", "3.00000", "3.00000"]
        assert len(format_ranking(table, top=1).splitlines()) == 2


class TestMetricsTable:
    """Test the metrics CSV and text table"""

    def test_reference_dlul_rows(self):
        table = emit_metrics_table(DLUL_TABLE).table
        lines = table.splitlines()
        assert re.split(r"\s{2,}", lines[0].strip()) == ["Model", "Train MSE [W]", "Test MSE [W]"]
        assert re.split(r"\s{2,}", lines[2].strip()) == ["Gradient Boosting", "0.05733", "0.06710"]
        assert re.split(r"\s{2,}", lines[3].strip()) == ["Random Forest", "0.00897", "0.06806"]
        assert re.split(r"\s{2,}", lines[4].strip()) == ["XGBoost", "0.01672", "0.07021"]
        assert lines[-1] == METRICS_FOOTNOTE

    def test_reference_ul_rows(self):
        lines = emit_metrics_table(UL_TABLE).table.splitlines()
        assert re.split(r"\s{2,}", lines[3].strip()) == ["Random Forest", "0.00200", "0.01430"]

    def test_csv_round_trip_is_exact(self):
        metrics = [("gb", Metrics(train_mse=0.1 + 0.2, test_mse=1 / 3)), ("rf", Metrics(train_mse=1e-17, test_mse=2.5))]
        report = emit_metrics_table(metrics)
        assert report.structured.splitlines()[0] == "model,train_mse,test_mse"
        assert parse_metrics(report.structured) == metrics

    def test_bad_csv(self):
        with pytest.raises(ReportError, match="columns"):
            parse_metrics("a,b\n1,2\n")

    def test_empty(self):
        with pytest.raises(ReportError):
            emit_metrics_table([])
