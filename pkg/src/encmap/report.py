"""Static vector-graphics artifacts: scatter maps and dendrograms.

SVG documents are assembled as plain strings with fixed float formatting and
no timestamps, so rendering is a pure function of its inputs: the same spec
produces byte-identical files on every run and platform. Colors come from a
fixed 20-color palette addressed by a stable CRC hash of the attribute value;
ids missing from the records table draw in a reserved gray.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape, quoteattr

from .distance import DendrogramNode, leaf_ids
from .errors import ValidationError
from .io import EncoderRecord
from .projection import MapLayout

PALETTE = (
    "#1f77b4", "#aec7e8", "#ff7f0e", "#ffbb78", "#2ca02c",
    "#98df8a", "#d62728", "#ff9896", "#9467bd", "#c5b0d5",
    "#8c564b", "#c49c94", "#e377c2", "#f7b6d2", "#7f7f7f",
    "#c7c7c7", "#bcbd22", "#dbdb8d", "#17becf", "#9edae5",
)
UNKNOWN_COLOR = "#999999"
UNKNOWN_VALUE = "unknown"
OTHER_VALUE = "other"
LEGEND_CAP = 20

_RECORD_FIELDS = ("encoder_type", "param_count", "dimensionality", "languages", "tasks", "datasets")


def stable_color(value: str) -> str:
    """Palette color for an attribute value; same string, same color, always."""
    if value == UNKNOWN_VALUE:
        return UNKNOWN_COLOR
    return PALETTE[zlib.crc32(value.encode("utf-8")) % len(PALETTE)]


def _fmt(v: float) -> str:
    return f"{v:.2f}"


@dataclass(frozen=True)
class PlotSpec:
    """Everything a scatter render needs; validated on construction."""

    layout: MapLayout
    records: tuple[EncoderRecord, ...]
    color_by: str = "encoder_type"
    highlight: tuple[str, ...] = field(default_factory=tuple)
    title: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "highlight", tuple(self.highlight))
        if self.color_by not in _RECORD_FIELDS:
            raise ValidationError(
                f"color_by must be one of {_RECORD_FIELDS}, got {self.color_by!r}"
            )
        layout_ids = set(self.layout.ids)
        if len(layout_ids) != len(self.layout.ids):
            raise ValidationError("layout contains duplicate encoder ids")
        record_ids = [r.encoder_id for r in self.records]
        if len(set(record_ids)) != len(record_ids):
            raise ValidationError("records contain duplicate encoder ids")
        orphans = [rid for rid in record_ids if rid not in layout_ids]
        if orphans:
            raise ValidationError(
                f"records reference ids absent from the layout: {orphans[:5]}"
            )


def _attribute_value(record: EncoderRecord | None, color_by: str) -> str:
    if record is None:
        return UNKNOWN_VALUE
    value = getattr(record, color_by)
    if value is None:
        return UNKNOWN_VALUE
    if isinstance(value, tuple):
        return ",".join(value) if value else UNKNOWN_VALUE
    return str(value)


def render_scatter(
    spec: PlotSpec, path: str | Path, description: str | None = None
) -> Path:
    """Write one marker per layout id, colored by the chosen record attribute.

    The legend lists distinct values by descending frequency; past the cap
    the remaining values collapse into an "other" bucket (markers included).
    """
    by_id = {r.encoder_id: r for r in spec.records}
    values = {
        eid: _attribute_value(by_id.get(eid), spec.color_by) for eid in spec.layout.ids
    }

    counts: dict[str, int] = {}
    for v in values.values():
        counts[v] = counts.get(v, 0) + 1
    ordered = sorted(counts, key=lambda v: (-counts[v], v))
    if len(ordered) > LEGEND_CAP:
        kept = set(ordered[: LEGEND_CAP - 1])
        legend = ordered[: LEGEND_CAP - 1] + [OTHER_VALUE]
        values = {
            eid: (v if v in kept else OTHER_VALUE) for eid, v in values.items()
        }
    else:
        legend = ordered
    display_counts: dict[str, int] = {}
    for v in values.values():
        display_counts[v] = display_counts.get(v, 0) + 1

    width, height = 1000, 600
    px0, px1, py0, py1 = 60.0, 700.0, 60.0, 550.0
    coords = spec.layout.coords
    xmin, xmax = float(coords[:, 0].min()), float(coords[:, 0].max())
    ymin, ymax = float(coords[:, 1].min()), float(coords[:, 1].max())
    xspan = xmax - xmin or 1.0
    yspan = ymax - ymin or 1.0

    def to_px(x: float, y: float) -> tuple[float, float]:
        return (
            px0 + (x - xmin) / xspan * (px1 - px0),
            py1 - (y - ymin) / yspan * (py1 - py0),
        )

    highlight = set(spec.highlight)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
    ]
    if description:
        parts.append(f"<desc>{escape(description)}</desc>")
    parts.append(f'<rect width="{width}" height="{height}" fill="#ffffff"/>')
    if spec.title:
        parts.append(
            f'<text x="{width // 2}" y="30" text-anchor="middle" '
            f'font-family="sans-serif" font-size="18">{escape(spec.title)}</text>'
        )
    for eid, (x, y) in zip(spec.layout.ids, coords):
        cx, cy = to_px(float(x), float(y))
        color = stable_color(values[eid])
        ring = ' stroke="#000000" stroke-width="1.5"' if eid in highlight else ""
        parts.append(
            f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="4" fill="{color}"'
            f"{ring} data-id={quoteattr(eid)}/>"
        )
    lx, ly = 720.0, 60.0
    parts.append(
        f'<text x="{_fmt(lx)}" y="{_fmt(ly - 14)}" font-family="sans-serif" '
        f'font-size="13" font-weight="bold">{escape(spec.color_by)}</text>'
    )
    for i, value in enumerate(legend):
        y = ly + i * 22
        parts.append(
            f'<rect x="{_fmt(lx)}" y="{_fmt(y)}" width="14" height="14" '
            f'fill="{stable_color(value)}"/>'
        )
        parts.append(
            f'<text x="{_fmt(lx + 20)}" y="{_fmt(y + 11)}" font-family="sans-serif" '
            f'font-size="12">{escape(value)} ({display_counts.get(value, 0)})</text>'
        )
    parts.append("</svg>")
    out = Path(path)
    out.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return out


def dendrogram_layout(
    root: DendrogramNode | str, log_heights: bool
) -> tuple[list[str], list[tuple[float, float, float, float]], float]:
    """Pure geometry for a dendrogram: leaf order, line segments, max height.

    Leaves sit at integer x positions in left-to-right traversal order at
    height 0; every merge draws an elbow (two risers and one crossbar) at its
    (optionally log-transformed) merge height. Segments are (x1, y1, x2, y2)
    in data space.
    """
    leaves = leaf_ids(root)
    positions = {eid: float(i) for i, eid in enumerate(leaves)}
    segments: list[tuple[float, float, float, float]] = []

    def transform(h: float) -> float:
        return math.log1p(h) if log_heights else h

    def walk(node: DendrogramNode | str) -> tuple[float, float]:
        if isinstance(node, str):
            return positions[node], 0.0
        xl, yl = walk(node.left)
        xr, yr = walk(node.right)
        y = transform(node.merge_height)
        segments.append((xl, yl, xl, y))
        segments.append((xr, yr, xr, y))
        segments.append((xl, y, xr, y))
        return (xl + xr) / 2.0, y

    _, top = walk(root)
    return leaves, segments, top


def render_dendrogram(
    root: DendrogramNode | str,
    log_heights: bool,
    path: str | Path,
    description: str | None = None,
) -> Path:
    """Render the tree with leaves along the bottom and merges above them."""
    leaves, segments, top = dendrogram_layout(root, log_heights)
    n = len(leaves)
    width = max(480, 40 * n + 160)
    height = 520
    px0, px1 = 60.0, width - 40.0
    py_top, py_bottom = 50.0, 420.0
    xspan = max(n - 1, 1)
    yspan = top or 1.0

    def to_px(x: float, y: float) -> tuple[float, float]:
        return (
            px0 + x / xspan * (px1 - px0),
            py_bottom - y / yspan * (py_bottom - py_top),
        )

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
    ]
    if description:
        parts.append(f"<desc>{escape(description)}</desc>")
    parts.append(f'<rect width="{width}" height="{height}" fill="#ffffff"/>')
    axis_label = "ln(1 + distance)" if log_heights else "distance"
    parts.append(
        f'<text x="20" y="30" font-family="sans-serif" font-size="12">'
        f"{escape(axis_label)}</text>"
    )
    for x1, y1, x2, y2 in segments:
        ax, ay = to_px(x1, y1)
        bx, by = to_px(x2, y2)
        parts.append(
            f'<line x1="{_fmt(ax)}" y1="{_fmt(ay)}" x2="{_fmt(bx)}" y2="{_fmt(by)}" '
            f'stroke="#333333" stroke-width="1"/>'
        )
    for i, eid in enumerate(leaves):
        x, _ = to_px(float(i), 0.0)
        parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(py_bottom + 16)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="10" '
            f'transform="rotate(-45 {_fmt(x)} {_fmt(py_bottom + 16)})" '
            f"data-id={quoteattr(eid)}>{escape(eid)}</text>"
        )
    parts.append("</svg>")
    out = Path(path)
    out.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return out


def minmax_task_average(scores: dict[str, dict[str, float]]) -> dict[str, float]:
    """Average of per-task min-max normalized scores, per encoder.

    Tasks whose scores are constant contribute 0.5 for every encoder (the
    midpoint; there is no ordering information to preserve). Encoders average
    only over tasks that scored them.
    """
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for table in scores.values():
        if not table:
            continue
        lo = min(table.values())
        hi = max(table.values())
        span = hi - lo
        for eid, value in table.items():
            norm = 0.5 if span == 0 else (value - lo) / span
            sums[eid] = sums.get(eid, 0.0) + norm
            counts[eid] = counts.get(eid, 0) + 1
    return {eid: sums[eid] / counts[eid] for eid in sums}
