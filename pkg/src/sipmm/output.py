"""Writers for convergence tables, log-log plots and run manifests."""

from __future__ import annotations

import csv
import math
import xml.etree.ElementTree as ET
from pathlib import Path

from .harness import ConvergenceReport
from .schemes import SchemeKind

CSV_HEADER = ("scheme", "level", "h", "rmse", "wall_time_s")


def fmt(x: float) -> str:
    """17 significant digits; exact zero renders as ``0``."""
    return format(x, ".17g")


def emit_csv(report: ConvergenceReport, path, *, include_timing: bool = False) -> Path:
    """Write one row per (scheme, level) then one RATE row per fitted scheme.

    Wall times vary between runs, so the column is left empty unless
    ``include_timing`` is set; this keeps the file reproducible byte for byte.
    """
    path = Path(path)
    with path.open("w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in report.results:
            w.writerow(
                [
                    row.scheme.value,
                    row.level,
                    fmt(row.h),
                    fmt(row.rmse),
                    fmt(row.wall_time) if include_timing else "",
                ]
            )
        for scheme in report.schemes:
            fit = report.rates.get(scheme)
            if fit is not None:
                w.writerow([scheme.value, "RATE", "", fmt(fit.rate), fmt(fit.residual)])
    return path


def read_csv(path) -> list[dict[str, str]]:
    with Path(path).open(newline="", encoding="ascii") as fh:
        return list(csv.DictReader(fh))


_COLOURS = {
    SchemeKind.SIPMM: "#c0392b",
    SchemeKind.SIPEM: "#2471a3",
    SchemeKind.BEM: "#1e8449",
}
_W, _H = 640, 480
_LEFT, _RIGHT, _TOP, _BOTTOM = 70, 170, 30, 60


def _num(v: float) -> str:
    return format(v, ".15g")


def _curves(report: ConvergenceReport):
    out = {}
    for scheme in report.schemes:
        pts = sorted(
            (math.log2(r.h), math.log2(r.rmse)) for r in report.rows(scheme) if r.rmse > 0
        )
        if pts:
            out[scheme] = pts
    return out


def emit_plot(report: ConvergenceReport, path) -> Path:
    """Standalone SVG of log2(rmse) against log2(h).

    One ``polyline.scheme`` per scheme and two dashed ``line.reference``
    elements of slope 1 and 1/2 through the finest-step SIPMM point (or the
    first scheme's finest point when SIPMM is absent).
    """
    curves = _curves(report)
    if not curves or max(len(p) for p in curves.values()) < 2:
        raise ValueError("plot needs at least two positive errors for some scheme")

    anchor_scheme = SchemeKind.SIPMM if SchemeKind.SIPMM in curves else next(iter(curves))
    ax, ay = curves[anchor_scheme][0]
    xs = [x for pts in curves.values() for x, _ in pts]
    x_lo, x_hi = min(xs), max(xs)
    refs = [(slope, [(x, ay + slope * (x - ax)) for x in (x_lo, x_hi)]) for slope in (1.0, 0.5)]
    ys = [y for pts in curves.values() for _, y in pts]
    ys += [y for _, seg in refs for _, y in seg]
    x_lo, x_hi = x_lo - 0.25, x_hi + 0.25
    y_lo, y_hi = math.floor(min(ys) - 0.25), math.ceil(max(ys) + 0.25)

    pw, ph = _W - _LEFT - _RIGHT, _H - _TOP - _BOTTOM

    def px(x):
        return _LEFT + (x - x_lo) / (x_hi - x_lo) * pw

    def py(y):
        return _TOP + (y_hi - y) / (y_hi - y_lo) * ph

    svg = ET.Element(
        "svg",
        xmlns="http://www.w3.org/2000/svg",
        width=str(_W),
        height=str(_H),
        viewBox=f"0 0 {_W} {_H}",
        **{"font-family": "sans-serif", "font-size": "12"},
    )
    ET.SubElement(svg, "rect", x="0", y="0", width=str(_W), height=str(_H), fill="white")
    ET.SubElement(
        svg, "rect", x=str(_LEFT), y=str(_TOP), width=str(pw), height=str(ph),
        fill="none", stroke="black", **{"class": "frame"},
    )

    ticks = []
    for k in range(math.ceil(x_lo), math.floor(x_hi) + 1):
        ticks.append(f"M{_num(px(k))},{_TOP + ph} v5")
        t = ET.SubElement(svg, "text", x=_num(px(k)), y=str(_TOP + ph + 20), **{"text-anchor": "middle"})
        t.text = f"2^{k}"
    for k in range(y_lo, y_hi + 1):
        ticks.append(f"M{_LEFT},{_num(py(k))} h-5")
        t = ET.SubElement(svg, "text", x=str(_LEFT - 8), y=_num(py(k) + 4), **{"text-anchor": "end"})
        t.text = f"2^{k}"
    ET.SubElement(svg, "path", d=" ".join(ticks), stroke="black", fill="none", **{"class": "ticks"})
    xl = ET.SubElement(svg, "text", x=_num(_LEFT + pw / 2), y=str(_H - 15), **{"text-anchor": "middle"})
    xl.text = "step size h"
    yl = ET.SubElement(
        svg, "text", x="18", y=_num(_TOP + ph / 2), transform=f"rotate(-90 18 {_num(_TOP + ph / 2)})",
        **{"text-anchor": "middle"},
    )
    yl.text = "RMSE at T"

    for slope, seg in refs:
        (x0, y0), (x1, y1) = seg
        ET.SubElement(
            svg, "line",
            x1=_num(px(x0)), y1=_num(py(y0)), x2=_num(px(x1)), y2=_num(py(y1)),
            stroke="#555555", **{"stroke-dasharray": "6 4", "class": "reference", "data-slope": _num(slope)},
        )

    legend_y = _TOP + 10
    for scheme, pts in curves.items():
        colour = _COLOURS.get(scheme, "black")
        ET.SubElement(
            svg, "polyline",
            points=" ".join(f"{_num(px(x))},{_num(py(y))}" for x, y in pts),
            fill="none", stroke=colour, **{"stroke-width": "2", "class": "scheme", "data-scheme": scheme.value},
        )
        for x, y in pts:
            ET.SubElement(svg, "circle", cx=_num(px(x)), cy=_num(py(y)), r="3", fill=colour)
        ET.SubElement(
            svg, "rect", x=str(_W - _RIGHT + 15), y=str(legend_y - 9), width="14", height="4", fill=colour
        )
        label = ET.SubElement(svg, "text", x=str(_W - _RIGHT + 35), y=str(legend_y))
        fit = report.rates.get(scheme)
        label.text = scheme.value + (f"  q = {fit.rate:.4f}" if fit else "")
        legend_y += 20
    for slope, _ in refs:
        label = ET.SubElement(svg, "text", x=str(_W - _RIGHT + 15), y=str(legend_y))
        label.text = f"- - slope {slope:g}"
        legend_y += 20

    path = Path(path)
    ET.ElementTree(svg).write(path, encoding="utf-8", xml_declaration=True)
    return path


def write_manifest(path, entries: dict[str, object]) -> Path:
    """Flat ``key=value`` file, one entry per line, in insertion order."""
    path = Path(path)
    lines = [f"{k}={v}" for k, v in entries.items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_manifest(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line and not line.startswith("#"):
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out
