"""Tiny standalone SVG line-plot emitter.

Hand-rolled on purpose: output bytes must be a pure function of the input so
replayed experiments diff clean.  The matplotlib renderings in
:mod:`compsamp.figures` are the pretty companions; this is the deterministic
artifact.
"""

from __future__ import annotations

import math

WIDTH, HEIGHT = 640, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 16, 28, 44
N_TICKS = 5
PALETTE = ("#1b6ca8", "#d1495b", "#3e8e5a", "#8d6b94", "#c97b2d", "#4a4a4a")


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _ticks(lo: float, hi: float, log: bool) -> list[float]:
    if log:
        lo_e, hi_e = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
        return [10.0**e for e in range(lo_e, hi_e + 1)]
    if hi == lo:
        return [lo]
    step = (hi - lo) / (N_TICKS - 1)
    return [lo + i * step for i in range(N_TICKS)]


def emit_svg(series: list[tuple[list[float], list[float]]], labels: list[str],
             path, log_y: bool = False, title: str = "",
             x_label: str = "", y_label: str = "") -> None:
    """Write a deterministic SVG line plot of (xs, ys) series.

    Raises ValueError on empty input, length mismatches, or non-finite
    values (the message names the offending series and index).
    """
    if not series:
        raise ValueError("no series to plot")
    if len(labels) != len(series):
        raise ValueError("need one label per series")
    for si, (xs, ys) in enumerate(series):
        if len(xs) == 0 or len(xs) != len(ys):
            raise ValueError(f"series {si}: empty or mismatched x/y lengths")
        for i, v in enumerate(list(xs) + list(ys)):
            if not math.isfinite(v):
                raise ValueError(
                    f"non-finite value in series {si} at index {i % len(xs)}")
    all_x = [v for xs, _ in series for v in xs]
    all_y = [v for _, ys in series for v in ys]
    if log_y:
        if min(all_y) <= 0.0:
            raise ValueError("log-y plot requires strictly positive values")
        trans = math.log10
    else:
        trans = float
    x_lo, x_hi = min(all_x), max(all_x)
    y_lo, y_hi = min(map(trans, all_y)), max(map(trans, all_y))
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def sx(x: float) -> float:
        return MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y: float) -> float:
        return MARGIN_T + (1.0 - (trans(y) - y_lo) / (y_hi - y_lo)) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" '
        f'height="{plot_h}" fill="none" stroke="#444444"/>',
    ]
    if title:
        out.append(f'<text x="{WIDTH // 2}" y="18" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="13">{title}</text>')
    for tick in _ticks(x_lo, x_hi, log=False):
        px = sx(tick)
        out.append(f'<line x1="{_fmt(px)}" y1="{MARGIN_T + plot_h}" '
                   f'x2="{_fmt(px)}" y2="{MARGIN_T + plot_h + 5}" stroke="#444444"/>')
        out.append(f'<text x="{_fmt(px)}" y="{MARGIN_T + plot_h + 18}" '
                   f'text-anchor="middle" font-family="sans-serif" '
                   f'font-size="10">{tick:.4g}</text>')
    y_tick_vals = _ticks(10.0**y_lo if log_y else y_lo,
                         10.0**y_hi if log_y else y_hi, log=log_y)
    for tick in y_tick_vals:
        ty = trans(tick)
        if not (y_lo - 1e-9 <= ty <= y_hi + 1e-9):
            continue
        py = MARGIN_T + (1.0 - (ty - y_lo) / (y_hi - y_lo)) * plot_h
        out.append(f'<line x1="{MARGIN_L - 5}" y1="{_fmt(py)}" '
                   f'x2="{MARGIN_L}" y2="{_fmt(py)}" stroke="#444444"/>')
        out.append(f'<text x="{MARGIN_L - 8}" y="{_fmt(py + 3)}" '
                   f'text-anchor="end" font-family="sans-serif" '
                   f'font-size="10">{tick:.4g}</text>')
    if x_label:
        out.append(f'<text x="{MARGIN_L + plot_w // 2}" y="{HEIGHT - 8}" '
                   f'text-anchor="middle" font-family="sans-serif" '
                   f'font-size="11">{x_label}</text>')
    if y_label:
        cy = MARGIN_T + plot_h // 2
        out.append(f'<text x="14" y="{cy}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="11" '
                   f'transform="rotate(-90 14 {cy})">{y_label}</text>')
    for si, ((xs, ys), label) in enumerate(zip(series, labels)):
        color = PALETTE[si % len(PALETTE)]
        points = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in zip(xs, ys))
        out.append(f'<polyline points="{points}" fill="none" '
                   f'stroke="{color}" stroke-width="1.5"/>')
        ly = MARGIN_T + 14 + 14 * si
        lx = MARGIN_L + plot_w - 150
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" '
                   f'y2="{ly - 4}" stroke="{color}" stroke-width="1.5"/>')
        out.append(f'<text x="{lx + 24}" y="{ly}" font-family="sans-serif" '
                   f'font-size="10">{label}</text>')
    out.append("</svg>")
    with open(path, "wb") as fh:
        fh.write("\n".join(out).encode("utf-8"))
