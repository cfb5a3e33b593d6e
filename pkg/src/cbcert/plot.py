"""Level-set contours and plain SVG rendering for planar problems."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import contourpy
import numpy as np

from cbcert.poly import Polynomial

PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
           "#bcbd22", "#17becf"]


@dataclass
class Contour:
    level: float
    points: np.ndarray  # [k, 2]
    closed: bool


def grid(bbox: np.ndarray, size: int = 400) -> Tuple[np.ndarray, np.ndarray]:
    xs = np.linspace(bbox[0, 0], bbox[0, 1], size)
    ys = np.linspace(bbox[1, 0], bbox[1, 1], size)
    return np.meshgrid(xs, ys)


def evaluate_grid(p: Polynomial, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    if p.n_vars != 2:
        raise ValueError("grid plots need a planar (2-state) polynomial")
    return p.evaluate_many(np.column_stack([X.ravel(), Y.ravel()])).reshape(X.shape)


def contours(X, Y, Z, level: float = 0.0) -> List[Contour]:
    """Marching-squares contour lines of Z at ``level``."""
    if not (np.nanmin(Z) < level < np.nanmax(Z)):
        return []
    gen = contourpy.contour_generator(X, Y, Z, line_type=contourpy.LineType.Separate)
    out = []
    for line in gen.lines(level):
        line = np.asarray(line)
        closed = len(line) > 2 and np.allclose(line[0], line[-1])
        out.append(Contour(level, line, closed))
    return out


@dataclass
class SvgCanvas:
    bbox: np.ndarray
    width: int = 600
    elements: List[str] = field(default_factory=list)

    @property
    def height(self) -> int:
        span = self.bbox[:, 1] - self.bbox[:, 0]
        return int(round(self.width * span[1] / span[0]))

    def _xy(self, pts: np.ndarray) -> np.ndarray:
        lo, hi = self.bbox[:, 0], self.bbox[:, 1]
        u = (pts[:, 0] - lo[0]) / (hi[0] - lo[0]) * self.width
        v = (hi[1] - pts[:, 1]) / (hi[1] - lo[1]) * self.height
        return np.column_stack([u, v])

    def polyline(self, pts, stroke: str, width: float = 1.0, closed: bool = False, cls: str = "", dash: str = ""):
        pts = np.asarray(pts, dtype=float)
        pts = pts[np.all(np.isfinite(pts), axis=1)]
        if len(pts) < 2:
            return
        d = " ".join(f"{'M' if i == 0 else 'L'}{u:.3f},{v:.3f}" for i, (u, v) in enumerate(self._xy(pts)))
        if closed:
            d += " Z"
        attrs = f' class="{cls}"' if cls else ""
        attrs += f' data-closed="{str(closed).lower()}"'
        if dash:
            attrs += f' stroke-dasharray="{dash}"'
        self.elements.append(f'<path d="{d}" fill="none" stroke="{stroke}" stroke-width="{width}"{attrs}/>')

    def contour(self, items: Sequence[Contour], stroke: str, width: float = 1.5, cls: str = "", dash: str = ""):
        for c in items:
            self.polyline(c.points, stroke, width, c.closed, cls, dash)

    def text(self, x: float, y: float, s: str, size: int = 12):
        self.elements.append(f'<text x="{x:.1f}" y="{y:.1f}" font-size="{size}" font-family="sans-serif">{s}</text>')

    def render(self, title: str = "") -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
                f'viewBox="0 0 {self.width} {self.height}">')
        body = ['<rect width="100%" height="100%" fill="white"/>']
        if title:
            body.append(f"<title>{title}</title>")
        return "\n".join([head, *body, *self.elements, "</svg>"]) + "\n"


def square_bbox(bbox: np.ndarray, pad: float = 0.1) -> np.ndarray:
    c = bbox.mean(axis=1)
    half = 0.5 * float(np.max(bbox[:, 1] - bbox[:, 0])) * (1 + pad)
    return np.array([[c[0] - half, c[0] + half], [c[1] - half, c[1] + half]])


def overlay_svg(bbox, s: Polynomial, w: Polynomial, B: Optional[Polynomial], trajectories=(),
                grid_size: int = 400, title: str = "") -> Tuple[str, List[Contour]]:
    """Safe set, initial set, {B = 0} and trajectories; returns the SVG text and the B contours."""
    X, Y = grid(bbox, grid_size)
    canvas = SvgCanvas(bbox)
    canvas.contour(contours(X, Y, evaluate_grid(s, X, Y)), "#d62728", 2.0, "safe-set")
    canvas.contour(contours(X, Y, evaluate_grid(w, X, Y)), "#6baed6", 2.0, "initial-set")
    b_lines: List[Contour] = []
    if B is not None:
        b_lines = contours(X, Y, evaluate_grid(B, X, Y))
        canvas.contour(b_lines, "black", 2.0, "barrier")
    for k, tr in enumerate(trajectories):
        canvas.polyline(tr.states, PALETTE[k % len(PALETTE)], 0.8, cls="trajectory")
    return canvas.render(title), b_lines


def levelset_svg(bbox, p: Polynomial, levels: Sequence[float], B: Optional[Polynomial] = None,
                 grid_size: int = 400, title: str = "") -> str:
    """Contour lines of p at the given levels, with {B = 0} dashed when given."""
    X, Y = grid(bbox, grid_size)
    Z = evaluate_grid(p, X, Y)
    canvas = SvgCanvas(bbox)
    for i, lev in enumerate(levels):
        canvas.contour(contours(X, Y, Z, lev), PALETTE[i % len(PALETTE)], 1.2, f"level level-{i}")
    if B is not None:
        canvas.contour(contours(X, Y, evaluate_grid(B, X, Y)), "black", 2.0, "barrier", dash="6,3")
    return canvas.render(title)


def nice_levels(Z: np.ndarray, count: int = 9) -> List[float]:
    lo, hi = float(np.nanmin(Z)), float(np.nanmax(Z))
    if not hi > lo:
        return []
    return list(np.linspace(lo, hi, count + 2)[1:-1])
