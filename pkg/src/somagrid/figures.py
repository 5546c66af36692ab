"""Deterministic SVG figures for the assay battery.

Hand-assembled SVG with fixed-precision coordinates: identical inputs yield
identical bytes, so figures are diffable artifacts like every other output.
Five panels mirror the analysis: occupancy bars, calibration scatter,
recovery-phase displacement curves, spectrum-distance boxes, and the
displacement-vs-spectrum coupling scatter.
"""

from __future__ import annotations

from typing import Dict, List, Sequence, Tuple

import numpy as np

COHORT_COLORS = {
    "full": "#2a6fb0",
    "no_conation": "#c2722a",
    "no_body_to_g": "#4e9a51",
}
_FALLBACK_COLOR = "#777777"


def _fmt(v: float) -> str:
    return f"{v:.3f}".rstrip("0").rstrip(".") or "0"


class SvgCanvas:
    def __init__(self, width: int, height: int, config_hash: str):
        self.width = width
        self.height = height
        self.parts: List[str] = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">',
            f"<!-- config={config_hash} -->",
            f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        ]

    def line(self, x1, y1, x2, y2, stroke="#222222", width=1.0):
        self.parts.append(
            f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
            f'stroke="{stroke}" stroke-width="{_fmt(width)}"/>'
        )

    def rect(self, x, y, w, h, fill, opacity=1.0):
        self.parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" height="{_fmt(h)}" '
            f'fill="{fill}" fill-opacity="{_fmt(opacity)}"/>'
        )

    def circle(self, cx, cy, r, fill, opacity=1.0):
        self.parts.append(
            f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="{_fmt(r)}" fill="{fill}" '
            f'fill-opacity="{_fmt(opacity)}"/>'
        )

    def polyline(self, points: Sequence[Tuple[float, float]], stroke, width=1.5):
        pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in points)
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{stroke}" stroke-width="{_fmt(width)}"/>'
        )

    def text(self, x, y, s, size=11, anchor="start", fill="#222222"):
        self.parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-family="sans-serif" font-size="{size}" '
            f'text-anchor="{anchor}" fill="{fill}">{s}</text>'
        )

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _color(cohort: str) -> str:
    return COHORT_COLORS.get(cohort, _FALLBACK_COLOR)


def _legend(svg: SvgCanvas, cohorts: Sequence[str], x: float, y: float) -> None:
    for i, name in enumerate(cohorts):
        svg.rect(x, y + 16 * i, 10, 10, _color(name))
        svg.text(x + 14, y + 9 + 16 * i, name, size=10)


def occupancy_bars(per_cohort: Dict[str, np.ndarray], config_hash: str) -> str:
    """Median zone occupancy per cohort with IQR whiskers.

    `per_cohort[name]` is an (n_seeds, 9) matrix of zone fractions.
    """
    zones = ["TL", "TM", "TR", "ML", "MM", "MR", "BL", "BM", "BR"]
    cohorts = list(per_cohort)
    w, h = 760, 320
    svg = SvgCanvas(w, h, config_hash)
    x0, y0, x1, y1 = 50, 20, w - 130, h - 40
    ymax = 1.0
    svg.line(x0, y1, x1, y1)
    svg.line(x0, y0, x0, y1)
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        yy = y1 - (y1 - y0) * frac / ymax
        svg.line(x0 - 3, yy, x0, yy)
        svg.text(x0 - 6, yy + 4, _fmt(frac), size=9, anchor="end")
    group_w = (x1 - x0) / 9
    bar_w = group_w / (len(cohorts) + 1)
    for zi, zone in enumerate(zones):
        gx = x0 + zi * group_w
        svg.text(gx + group_w / 2, y1 + 14, zone, size=10, anchor="middle")
        for ci, cohort in enumerate(cohorts):
            vals = per_cohort[cohort][:, zi]
            med = float(np.median(vals))
            q25 = float(np.percentile(vals, 25))
            q75 = float(np.percentile(vals, 75))
            bx = gx + bar_w * (ci + 0.5)
            bh = (y1 - y0) * med / ymax
            svg.rect(bx, y1 - bh, bar_w * 0.9, bh, _color(cohort), opacity=0.85)
            cx = bx + bar_w * 0.45
            svg.line(cx, y1 - (y1 - y0) * q25, cx, y1 - (y1 - y0) * q75, stroke="#222222")
    svg.text(x0, 14, "zone occupancy (median, IQR) over final training episodes", size=11)
    _legend(svg, cohorts, x1 + 12, y0 + 8)
    return svg.render()


def calibration_scatter(per_cohort: Dict[str, np.ndarray], config_hash: str) -> str:
    """Predicted vs oracle tendency gaps; `per_cohort[name]` is (n, 2) [oracle, predicted]."""
    cohorts = list(per_cohort)
    w, h = 460, 420
    svg = SvgCanvas(w, h, config_hash)
    x0, y0, x1, y1 = 60, 20, w - 130, h - 50
    allpts = np.vstack([pts for pts in per_cohort.values()]) if per_cohort else np.zeros((1, 2))
    lim = max(1e-6, float(np.abs(allpts).max()) * 1.1)

    def sx(v):
        return x0 + (v + lim) / (2 * lim) * (x1 - x0)

    def sy(v):
        return y1 - (v + lim) / (2 * lim) * (y1 - y0)

    svg.line(x0, y1, x1, y1)
    svg.line(x0, y0, x0, y1)
    svg.line(sx(-lim), sy(-lim), sx(lim), sy(lim), stroke="#bbbbbb")
    for cohort in cohorts:
        for ox, py in per_cohort[cohort]:
            svg.circle(sx(ox), sy(py), 2.0, _color(cohort), opacity=0.55)
    svg.text(x0, 14, "tendency-gap calibration: predicted vs environment oracle", size=11)
    svg.text((x0 + x1) / 2, h - 16, "oracle UP-DOWN tendency gap", size=10, anchor="middle")
    _legend(svg, cohorts, x1 + 12, y0 + 8)
    return svg.render()


def displacement_curves(per_cohort: Dict[str, np.ndarray], config_hash: str,
                        recovery_start: int) -> str:
    """Median control-shock distance in PC space over the recovery phase.

    `per_cohort[name]` is (n_seeds, T_recovery).
    """
    cohorts = list(per_cohort)
    w, h = 560, 300
    svg = SvgCanvas(w, h, config_hash)
    x0, y0, x1, y1 = 50, 20, w - 130, h - 40
    ymax = 1e-9
    for curves in per_cohort.values():
        ymax = max(ymax, float(np.median(curves, axis=0).max()) * 1.2)
    svg.line(x0, y1, x1, y1)
    svg.line(x0, y0, x0, y1)
    for cohort in cohorts:
        med = np.median(per_cohort[cohort], axis=0)
        t_axis = np.arange(len(med))
        pts = [
            (x0 + (x1 - x0) * t / max(1, len(med) - 1), y1 - (y1 - y0) * min(v, ymax) / ymax)
            for t, v in zip(t_axis, med)
        ]
        svg.polyline(pts, _color(cohort))
    svg.text(x0, 14, "recovery-phase control vs shock separation of g (PC space, median)", size=11)
    svg.text((x0 + x1) / 2, h - 16, f"timestep since recovery onset (t={recovery_start})",
             size=10, anchor="middle")
    _legend(svg, cohorts, x1 + 12, y0 + 8)
    return svg.render()


def box_panel(per_cohort: Dict[str, Sequence[float]], config_hash: str, title: str) -> str:
    cohorts = list(per_cohort)
    w, h = 420, 300
    svg = SvgCanvas(w, h, config_hash)
    x0, y0, x1, y1 = 60, 26, w - 30, h - 50
    vmax = 1e-9
    for vals in per_cohort.values():
        vmax = max(vmax, float(np.max(vals)) * 1.15)
    svg.line(x0, y1, x1, y1)
    svg.line(x0, y0, x0, y1)

    def sy(v):
        return y1 - (y1 - y0) * v / vmax

    slot = (x1 - x0) / len(cohorts)
    for ci, cohort in enumerate(cohorts):
        vals = np.asarray(per_cohort[cohort], dtype=np.float64)
        med = float(np.median(vals))
        q25 = float(np.percentile(vals, 25))
        q75 = float(np.percentile(vals, 75))
        lo = float(vals.min())
        hi = float(vals.max())
        cx = x0 + slot * (ci + 0.5)
        bw = slot * 0.3
        svg.line(cx, sy(lo), cx, sy(hi), stroke="#555555")
        svg.rect(cx - bw / 2, sy(q75), bw, max(0.5, sy(q25) - sy(q75)), _color(cohort), opacity=0.8)
        svg.line(cx - bw / 2, sy(med), cx + bw / 2, sy(med), stroke="#111111", width=2.0)
        svg.text(cx, y1 + 14, cohort, size=9, anchor="middle")
    svg.text(x0, 14, title, size=11)
    return svg.render()


def residue_scatter(points: Sequence[Tuple[str, float, float]], rho: float, p: float,
                    config_hash: str) -> str:
    """Seed-level displacement vs spectrum distance, colored by cohort."""
    w, h = 460, 420
    svg = SvgCanvas(w, h, config_hash)
    x0, y0, x1, y1 = 60, 26, w - 130, h - 50
    xs = [d for _, d, _ in points] or [1.0]
    ys = [s for _, _, s in points] or [1.0]
    xmax = max(1e-9, max(xs) * 1.15)
    ymax = max(1e-9, max(ys) * 1.15)
    svg.line(x0, y1, x1, y1)
    svg.line(x0, y0, x0, y1)
    cohorts = sorted({c for c, _, _ in points})
    for cohort, d, s in points:
        svg.circle(x0 + (x1 - x0) * d / xmax, y1 - (y1 - y0) * s / ymax, 3.0,
                   _color(cohort), opacity=0.8)
    svg.text(x0, 14, "residue coupling: PCA displacement vs metric-spectrum distance", size=11)
    svg.text(x1, y0 + 12, f"rho={_fmt(rho)} p={_fmt(p)}", size=10, anchor="end")
    svg.text((x0 + x1) / 2, h - 16, "PCA displacement", size=10, anchor="middle")
    _legend(svg, cohorts, x1 + 12, y0 + 8)
    return svg.render()
