import numpy as np
import pytest

from encmap import (
    DistanceMatrix,
    EncoderRecord,
    MapLayout,
    PlotSpec,
    TsneParams,
    ValidationError,
    hierarchical_cluster,
    render_dendrogram,
    render_scatter,
    dendrogram_layout,
    minmax_task_average,
    stable_color,
)
from encmap.report import LEGEND_CAP, PALETTE, UNKNOWN_COLOR, UNKNOWN_VALUE


def _layout(ids, coords=None):
    ids = tuple(ids)
    m = len(ids)
    if coords is None:
        coords = np.column_stack([np.arange(m, dtype=float), np.zeros(m)])
    params = TsneParams(perplexity=2.0, iterations=10, learning_rate=200.0, seed=0)
    return MapLayout(
        ids=ids,
        coords=np.asarray(coords, dtype=float),
        params=params,
        kl_divergence=0.1,
        kl_history=np.array([0.2, 0.1]),
        achieved_perplexity=np.full(m, 2.0),
    )


def _records(pairs):
    return tuple(
        EncoderRecord(encoder_id=eid, encoder_type=etype) for eid, etype in pairs
    )


class TestStableColor:
    def test_same_value_same_color(self):
        assert stable_color("bert") == stable_color("bert")

    def test_colors_come_from_palette(self):
        for value in ("a", "b", "transformer", "bow"):
            assert stable_color(value) in PALETTE

    def test_unknown_value_uses_reserved_gray(self):
        assert stable_color(UNKNOWN_VALUE) == UNKNOWN_COLOR
        assert UNKNOWN_COLOR not in PALETTE


class TestPlotSpec:
    def test_bad_color_field_rejected(self):
        layout = _layout(["a", "b"])
        with pytest.raises(ValidationError):
            PlotSpec(layout=layout, records=(), color_by="nope")

    def test_duplicate_record_ids_rejected(self):
        layout = _layout(["a", "b"])
        recs = _records([("a", "x"), ("a", "y")])
        with pytest.raises(ValidationError):
            PlotSpec(layout=layout, records=recs)

    def test_record_for_missing_layout_id_rejected(self):
        layout = _layout(["a", "b"])
        recs = _records([("a", "x"), ("ghost", "y")])
        with pytest.raises(ValidationError):
            PlotSpec(layout=layout, records=recs)


class TestRenderScatter:
    def test_one_marker_per_id(self, tmp_path):
        layout = _layout(["a", "b", "c"])
        spec = PlotSpec(layout=layout, records=_records([("a", "t1"), ("b", "t1"), ("c", "t2")]))
        path = tmp_path / "map.svg"
        render_scatter(spec, path)
        text = path.read_text()
        assert text.count("<circle") == 3
        for eid in ("a", "b", "c"):
            assert f'data-id="{eid}"' in text

    def test_legend_lists_each_value_with_count(self, tmp_path):
        layout = _layout(["a", "b", "c"])
        spec = PlotSpec(layout=layout, records=_records([("a", "t1"), ("b", "t1"), ("c", "t2")]))
        path = tmp_path / "map.svg"
        render_scatter(spec, path)
        text = path.read_text()
        assert "t1 (2)" in text
        assert "t2 (1)" in text

    def test_missing_record_renders_gray_unknown(self, tmp_path):
        layout = _layout(["a", "b"])
        spec = PlotSpec(layout=layout, records=_records([("a", "t1")]))
        path = tmp_path / "map.svg"
        render_scatter(spec, path)
        text = path.read_text()
        assert UNKNOWN_COLOR in text
        assert "unknown (1)" in text

    def test_rerender_is_byte_identical(self, tmp_path):
        rng = np.random.default_rng(71)
        ids = [f"e{i}" for i in range(12)]
        layout = _layout(ids, coords=rng.normal(size=(12, 2)))
        recs = _records([(eid, f"type{i % 3}") for i, eid in enumerate(ids)])
        spec = PlotSpec(layout=layout, records=recs, highlight=("e3",))
        a = tmp_path / "a.svg"
        b = tmp_path / "b.svg"
        render_scatter(spec, a)
        render_scatter(spec, b)
        assert a.read_bytes() == b.read_bytes()

    def test_highlight_draws_ring(self, tmp_path):
        layout = _layout(["a", "b"])
        spec = PlotSpec(
            layout=layout, records=_records([("a", "t"), ("b", "t")]), highlight=("b",)
        )
        path = tmp_path / "map.svg"
        render_scatter(spec, path)
        text = path.read_text()
        ringed = [ln for ln in text.splitlines() if "stroke-width" in ln and "circle" in ln]
        assert len(ringed) == 1
        assert 'data-id="b"' in ringed[0]

    def test_description_is_embedded(self, tmp_path):
        layout = _layout(["a", "b"])
        spec = PlotSpec(layout=layout, records=_records([("a", "t"), ("b", "t")]))
        path = tmp_path / "map.svg"
        render_scatter(spec, path, description="manifest-abc123")
        assert "<desc>manifest-abc123</desc>" in path.read_text()

    def test_many_values_collapse_into_other_bucket(self, tmp_path):
        m = 25
        ids = [f"e{i:02d}" for i in range(m)]
        layout = _layout(ids)
        recs = _records([(eid, f"type{i:02d}") for i, eid in enumerate(ids)])
        spec = PlotSpec(layout=layout, records=recs)
        path = tmp_path / "map.svg"
        render_scatter(spec, path)
        text = path.read_text()
        assert "other (" in text
        swatches = [ln for ln in text.splitlines() if "<rect" in ln and "width=\"14\"" in ln]
        assert len(swatches) == LEGEND_CAP

    def test_ids_with_quotes_are_escaped(self, tmp_path):
        tricky = 'enc "x" <1>'
        layout = _layout([tricky, "plain"])
        spec = PlotSpec(layout=layout, records=())
        path = tmp_path / "map.svg"
        render_scatter(spec, path)
        text = path.read_text()
        assert "<circle" in text
        assert 'enc "x" <1>' not in text


class TestDendrogramRender:
    def _tree(self):
        ids = ("a", "b", "c")
        values = np.array(
            [
                [0.0, 1.0, 4.0],
                [1.0, 0.0, 4.0],
                [4.0, 4.0, 0.0],
            ]
        )
        return hierarchical_cluster(DistanceMatrix(ids=ids, values=values), "single")

    def test_layout_places_leaves_in_traversal_order(self):
        leaves, segments, top = dendrogram_layout(self._tree(), log_heights=False)
        assert sorted(leaves) == ["a", "b", "c"]
        assert top == 4.0
        # Two merges, three segments each (two risers plus one crossbar).
        assert len(segments) == 6

    def test_log_transform_compresses_heights(self):
        _, _, top_lin = dendrogram_layout(self._tree(), log_heights=False)
        _, _, top_log = dendrogram_layout(self._tree(), log_heights=True)
        assert top_log == pytest.approx(np.log1p(top_lin), abs=1e-12)

    def test_render_contains_leaf_labels(self, tmp_path):
        path = tmp_path / "tree.svg"
        render_dendrogram(self._tree(), log_heights=True, path=path)
        text = path.read_text()
        for eid in ("a", "b", "c"):
            assert f">{eid}</text>" in text

    def test_render_is_byte_identical(self, tmp_path):
        a = tmp_path / "a.svg"
        b = tmp_path / "b.svg"
        render_dendrogram(self._tree(), log_heights=True, path=a)
        render_dendrogram(self._tree(), log_heights=True, path=b)
        assert a.read_bytes() == b.read_bytes()


class TestMinmaxTaskAverage:
    def test_hand_case(self):
        scores = {
            "t1": {"a": 0.0, "b": 1.0, "c": 0.5},
            "t2": {"a": 10.0, "b": 20.0},
        }
        out = minmax_task_average(scores)
        assert out["a"] == pytest.approx(0.0, abs=1e-12)
        assert out["b"] == pytest.approx(1.0, abs=1e-12)
        assert out["c"] == pytest.approx(0.5, abs=1e-12)

    def test_constant_task_contributes_half(self):
        out = minmax_task_average({"t": {"a": 3.0, "b": 3.0}})
        assert out == {"a": 0.5, "b": 0.5}
