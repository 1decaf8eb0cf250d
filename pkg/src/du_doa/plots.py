"""Dependency-free SVG trajectory plots (truth, raw DOA, smoothed track, VAD)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError
from .scene import Trajectory
from .tracker import Source

WIDTH, HEIGHT = 900, 320
LEFT, RIGHT, TOP, BOTTOM = 60, 20, 30, 40


def _f(x: float) -> str:
    return f"{x:.2f}"


class _Axes:
    def __init__(self, t_max: float, lo: float, hi: float):
        self.t_max = t_max if t_max > 0 else 1.0
        self.lo, self.hi = lo, hi

    def x(self, t: float) -> float:
        return LEFT + (WIDTH - LEFT - RIGHT) * t / self.t_max

    def y(self, v: float) -> float:
        return HEIGHT - BOTTOM - (HEIGHT - TOP - BOTTOM) * (v - self.lo) / (self.hi - self.lo)


def _frame(ax: _Axes, title: str, ylabel: str) -> list[str]:
    x0, x1 = LEFT, WIDTH - RIGHT
    y0, y1 = TOP, HEIGHT - BOTTOM
    out = [
        f'<rect x="{x0}" y="{y0}" width="{x1 - x0}" height="{y1 - y0}" fill="none" stroke="black"/>',
        f'<text x="{WIDTH / 2:.0f}" y="18" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="14" y="{(y0 + y1) / 2:.0f}" font-size="12" transform="rotate(-90 14 {(y0 + y1) / 2:.0f})"'
        f' text-anchor="middle">{ylabel}</text>',
        f'<text x="{WIDTH / 2:.0f}" y="{HEIGHT - 6}" text-anchor="middle" font-size="12">time (s)</text>',
    ]
    for v in np.linspace(ax.lo, ax.hi, 5):
        yy = ax.y(v)
        out.append(f'<line x1="{x0 - 4}" y1="{_f(yy)}" x2="{x0}" y2="{_f(yy)}" stroke="black"/>')
        out.append(f'<text x="{x0 - 6}" y="{_f(yy + 4)}" text-anchor="end" font-size="10">{v:g}</text>')
    for t in np.linspace(0.0, ax.t_max, 6):
        xx = ax.x(t)
        out.append(f'<line x1="{_f(xx)}" y1="{y1}" x2="{_f(xx)}" y2="{y1 + 4}" stroke="black"/>')
        out.append(f'<text x="{_f(xx)}" y="{y1 + 16}" text-anchor="middle" font-size="10">{t:.1f}</text>')
    return out


def _polyline(points: list[tuple[float, float]], color: str, width: float = 1.5) -> str:
    pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in points)
    return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"/>'


def _runs(mask: Sequence[bool]) -> list[tuple[int, int]]:
    runs, start = [], None
    for i, m in enumerate(list(mask) + [False]):
        if m and start is None:
            start = i
        elif not m and start is not None:
            runs.append((start, i))
            start = None
    return runs


def render_svg(rows, truth: Trajectory | None, angle: str, block_period: float | None = None) -> str:
    """SVG text for one angle (``"azimuth"`` or ``"elevation"``)."""
    if angle == "azimuth":
        lo, hi = -180.0, 180.0
        raw_of, smooth_of = (lambda r: r.raw_azimuth), (lambda r: r.smoothed_azimuth)
    else:
        lo, hi = -90.0, 90.0
        raw_of, smooth_of = (lambda r: r.raw_elevation), (lambda r: r.smoothed_elevation)
    times = [r.time_s for r in rows]
    t_max = max(times, default=0.0)
    if truth is not None:
        t_max = max(t_max, truth.end)
    if angle == "azimuth" and rows and all(0.0 <= r.raw_azimuth <= 180.0 for r in rows):
        lo = 0.0
    ax = _Axes(t_max, lo, hi)
    body = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]

    if len(times) > 1:
        half = 0.5 * (block_period or (times[1] - times[0]))
    else:
        half = 0.5 * (block_period or 0.0)
    for a, b in _runs([r.vad for r in rows]):
        x0, x1 = ax.x(max(times[a] - half, 0.0)), ax.x(times[b - 1] + half)
        body.append(
            f'<rect x="{_f(x0)}" y="{TOP}" width="{_f(x1 - x0)}" height="{HEIGHT - TOP - BOTTOM}" '
            f'fill="#f4c7c3" opacity="0.6"/>'
        )
    body += _frame(ax, f"{angle} trajectory", f"{angle} (deg)")

    if truth is not None:
        tt = np.linspace(truth.start, truth.end, 400)
        az, el = truth.sample(tt)
        vals = az if angle == "azimuth" else el
        # break the line where azimuth jumps across the seam
        seg: list[tuple[float, float]] = []
        prev = None
        for t, v in zip(tt, vals):
            if prev is not None and abs(v - prev) > 180.0:
                body.append(_polyline(seg, "black", 2.0))
                seg = []
            seg.append((ax.x(t), ax.y(v)))
            prev = v
        if seg:
            body.append(_polyline(seg, "black", 2.0))

    for r in rows:
        body.append(f'<circle cx="{_f(ax.x(r.time_s))}" cy="{_f(ax.y(raw_of(r)))}" r="2" fill="#1f77b4"/>')

    seg = []
    for r in rows:
        v = smooth_of(r)
        if v is None or r.source is Source.NONE:
            if len(seg) > 1:
                body.append(_polyline(seg, "#d62728"))
            seg = []
            continue
        seg.append((ax.x(r.time_s), ax.y(v)))
    if seg:
        body.append(_polyline(seg, "#d62728"))

    body.append("</svg>")
    return "\n".join(body) + "\n"


def emit_plots(rows, truth: Trajectory | None, out_dir: str | Path, *, with_elevation: bool = True) -> list[Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for angle in ("azimuth", "elevation") if with_elevation else ("azimuth",):
            p = out / f"{angle}.svg"
            p.write_text(render_svg(rows, truth, angle), encoding="utf-8")
            paths.append(p)
    except OSError as exc:
        raise ConfigurationError(f"cannot write plots to {out}: {exc}") from exc
    return paths
