"""Minimal deterministic SVG line charts.

Charts are emitted as raw SVG primitives so output bytes depend only on
the input data. Each chart embeds a JSON <metadata> block with the axis
ranges and plot box, which lets tests parse a chart back into data
coordinates exactly.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import ShapeError

_W, _H = 840, 420
_BOX = (70.0, 30.0, 740.0, 340.0)  # x0, y0, width, height
_FMT = "{:.8f}"


class _Axes:
    def __init__(self, xmin, xmax, ymin, ymax):
        if xmax <= xmin:
            xmax = xmin + 1.0
        if ymax <= ymin:
            span = abs(ymin) if ymin != 0 else 1.0
            ymin, ymax = ymin - 0.5 * span, ymax + 0.5 * span
        self.xmin, self.xmax, self.ymin, self.ymax = xmin, xmax, ymin, ymax

    def x(self, v):
        x0, _, w, _ = _BOX
        return x0 + w * (v - self.xmin) / (self.xmax - self.xmin)

    def y(self, v):
        _, y0, _, h = _BOX
        return y0 + h * (1.0 - (v - self.ymin) / (self.ymax - self.ymin))

    def metadata(self) -> dict:
        return {
            "xmin": self.xmin, "xmax": self.xmax, "ymin": self.ymin, "ymax": self.ymax,
            "box": list(_BOX),
        }


def _pts(ax, xs, ys):
    return " ".join(f"{_FMT.format(ax.x(x))},{_FMT.format(ax.y(y))}" for x, y in zip(xs, ys))


def line_chart(
    curves,
    *,
    title: str = "",
    x_label: str = "",
    y_label: str = "",
    band=None,
) -> str:
    """Render labelled curves and an optional shaded band.

    curves: list of (label, xs, ys, color). band: (xs, lower, upper,
    color) drawn behind the curves.
    """
    xs_all, ys_all = [], []
    for _, xs, ys, _ in curves:
        if len(xs) != len(ys):
            raise ShapeError(f"chart: {len(xs)} x-values vs {len(ys)} y-values")
        xs_all.extend(float(v) for v in xs)
        ys_all.extend(float(v) for v in ys)
    if band is not None:
        bxs, blo, bhi, _ = band
        if not (len(bxs) == len(blo) == len(bhi)):
            raise ShapeError("chart: band arrays must have equal length")
        xs_all.extend(float(v) for v in bxs)
        ys_all.extend(float(v) for v in blo)
        ys_all.extend(float(v) for v in bhi)
    if not xs_all:
        raise ShapeError("chart: nothing to draw")
    ax = _Axes(min(xs_all), max(xs_all), min(ys_all), max(ys_all))

    x0, y0, w, h = _BOX
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f"<metadata id=\"axes\">{json.dumps(ax.metadata(), sort_keys=True)}</metadata>",
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#333" stroke-width="1"/>',
    ]
    if title:
        parts.append(f'<text x="{_W/2}" y="20" text-anchor="middle" font-size="14">{title}</text>')
    if x_label:
        parts.append(
            f'<text x="{x0 + w/2}" y="{_H - 8}" text-anchor="middle" font-size="12">{x_label}</text>'
        )
    if y_label:
        parts.append(
            f'<text x="16" y="{y0 + h/2}" text-anchor="middle" font-size="12" '
            f'transform="rotate(-90 16 {y0 + h/2})">{y_label}</text>'
        )
    for v, anchor in ((ax.ymin, "end"), (ax.ymax, "end")):
        parts.append(
            f'<text x="{x0 - 6}" y="{_FMT.format(ax.y(v))}" text-anchor="{anchor}" '
            f'font-size="10">{v:.4g}</text>'
        )
    for v in (ax.xmin, ax.xmax):
        parts.append(
            f'<text x="{_FMT.format(ax.x(v))}" y="{y0 + h + 14}" text-anchor="middle" '
            f'font-size="10">{v:.4g}</text>'
        )

    if band is not None:
        bxs, blo, bhi, color = band
        fwd = _pts(ax, bxs, bhi)
        back = _pts(ax, list(reversed(list(bxs))), list(reversed(list(blo))))
        parts.append(f'<polygon id="band" points="{fwd} {back}" fill="{color}" stroke="none"/>')

    for i, (label, xs, ys, color) in enumerate(curves):
        parts.append(
            f'<polyline id="curve-{i}" fill="none" stroke="{color}" stroke-width="1.5" '
            f'points="{_pts(ax, xs, ys)}"/>'
        )
        parts.append(
            f'<text x="{x0 + w - 6}" y="{y0 + 16 + 14*i}" text-anchor="end" font-size="11" '
            f'fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def forecast_chart(name, actual, point, lower=None, upper=None, history=None) -> str:
    """One series: actuals, point forecast, and an optional quantile band.

    history columns (if given) precede the forecast region on the x axis.
    """
    offset = 0 if history is None else len(history)
    hx = list(range(offset))
    fx = list(range(offset, offset + len(point)))
    curves = []
    if history is not None:
        curves.append(("history", hx, list(history), "#777777"))
    curves.append(("actual", fx, list(actual), "#1f3fbf"))
    curves.append(("forecast", fx, list(point), "#d95f02"))
    band = None
    if lower is not None and upper is not None:
        band = (fx, list(lower), list(upper), "#fdd0a2")
    return line_chart(curves, title=str(name), x_label="step", y_label="value", band=band)


def parse_chart(svg_text: str):
    """Invert a chart back to data coordinates: (curves by id, band points).

    Returns ({curve_id: (xs, ys)}, band) with band as (xs_fwd, ys_fwd)
    for the full polygon ring, or None."""
    import re

    m = re.search(r'<metadata id="axes">(.*?)</metadata>', svg_text)
    if m is None:
        raise ShapeError("parse_chart: no axes metadata")
    meta = json.loads(m.group(1))
    x0, y0, w, h = meta["box"]

    def inv(pair):
        px, py = (float(v) for v in pair.split(","))
        x = meta["xmin"] + (px - x0) / w * (meta["xmax"] - meta["xmin"])
        y = meta["ymin"] + (1.0 - (py - y0) / h) * (meta["ymax"] - meta["ymin"])
        return x, y

    curves = {}
    for cid, pts in re.findall(r'<polyline id="([^"]+)"[^>]*points="([^"]+)"', svg_text):
        inverted = [inv(p) for p in pts.split()]
        curves[cid] = ([p[0] for p in inverted], [p[1] for p in inverted])
    band = None
    mb = re.search(r'<polygon id="band" points="([^"]+)"', svg_text)
    if mb:
        inverted = [inv(p) for p in mb.group(1).split()]
        band = ([p[0] for p in inverted], [p[1] for p in inverted])
    return curves, band
