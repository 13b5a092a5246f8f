"""Self-contained SVG line plots: mean curves with shaded one-sigma bands.

No plotting library is involved; output depends only on the input numbers,
so identical batches produce byte-identical files.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputError, InsufficientSamples
from .rollout import RolloutBatch

PALETTE = ("#1f4e9c", "#c0392b", "#555555", "#999999", "#2e8b57", "#8e44ad")
WIDTH, HEIGHT = 640, 400
MARGIN = (60, 20, 30, 50)  # left, right, top, bottom


@dataclass
class Series:
    label: str
    t: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    color: str = ""


def batch_series(batch: RolloutBatch, quantity="actions", component=0, label=None) -> list:
    """One series per agent for a state or action component of a batch."""
    if batch.n < 1:
        raise InsufficientSamples("cannot plot an empty batch")
    tr = batch.trajectories
    out = []
    for agent in ("i", "j"):
        if quantity == "actions":
            data = tr.actions_i if agent == "i" else tr.actions_j
            t = np.arange(1, batch.T + 1)
        elif quantity == "states":
            data = tr.states_i if agent == "i" else tr.states_j
            t = np.arange(0, batch.T + 1)
        else:
            raise InputError(f"unknown quantity {quantity!r} (use 'actions' or 'states')")
        if not 0 <= component < data.shape[-1]:
            raise InputError(f"component {component} out of range for agent {agent}")
        x = data[..., component]
        std = x.std(axis=0, ddof=1) if batch.n > 1 else np.zeros(x.shape[1])
        name = f"{label or batch.provenance} {agent}"
        out.append(Series(name, t, x.mean(axis=0), std))
    return out


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return [float(v) for v in np.arange(start, hi + 0.5 * step, step)]


def render_svg(series: Sequence[Series], title="", xlabel="t", ylabel="") -> str:
    if not series:
        raise InputError("nothing to plot")
    lo = min(float(np.min(s.mean - s.std)) for s in series)
    hi = max(float(np.max(s.mean + s.std)) for s in series)
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    t0 = min(float(s.t.min()) for s in series)
    t1 = max(float(s.t.max()) for s in series)
    if t1 == t0:
        t1 = t0 + 1
    left, right, top, bottom = MARGIN
    pw, ph = WIDTH - left - right, HEIGHT - top - bottom
    X = lambda t: left + (t - t0) / (t1 - t0) * pw
    Y = lambda y: top + (hi - y) / (hi - lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{WIDTH / 2:.0f}" y="18" text-anchor="middle" font-family="sans-serif" font-size="14">{_esc(title)}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for v in _ticks(lo, hi):
        y = Y(v)
        out.append(f'<line x1="{left}" y1="{_fmt(y)}" x2="{left + pw}" y2="{_fmt(y)}" stroke="#eeeeee"/>')
        out.append(f'<text x="{left - 6}" y="{_fmt(y + 4)}" text-anchor="end" font-family="sans-serif" font-size="11">{v:g}</text>')
    for v in _ticks(t0, t1, min(10, int(t1 - t0))):
        x = X(v)
        out.append(f'<text x="{_fmt(x)}" y="{top + ph + 16}" text-anchor="middle" font-family="sans-serif" font-size="11">{v:g}</text>')
    out.append(f'<text x="{left + pw / 2:.0f}" y="{HEIGHT - 8}" text-anchor="middle" font-family="sans-serif" font-size="12">{_esc(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="14" y="{top + ph / 2:.0f}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 14 {top + ph / 2:.0f})">{_esc(ylabel)}</text>')

    for k, s in enumerate(series):
        color = s.color or PALETTE[k % len(PALETTE)]
        upper = [(X(t), Y(m + d)) for t, m, d in zip(s.t, s.mean, s.std)]
        lower = [(X(t), Y(m - d)) for t, m, d in zip(s.t, s.mean, s.std)]
        band = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in upper + lower[::-1])
        line = " ".join(f"{_fmt(X(t))},{_fmt(Y(m))}" for t, m in zip(s.t, s.mean))
        out.append(f'<polygon points="{band}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        out.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = top + 14 + 16 * k
        out.append(f'<line x1="{left + 10}" y1="{ly}" x2="{left + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + 36}" y="{ly + 4}" font-family="sans-serif" font-size="11">{_esc(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def plot_batches(batches, labels=None, quantity="actions", component=0, title="", path=None) -> str:
    """Overlay several batches (both agents each) and return or write the SVG."""
    batches = list(batches)
    if not batches:
        raise InputError("no batches given")
    labels = labels or [None] * len(batches)
    series = []
    for b, lab in zip(batches, labels):
        series.extend(batch_series(b, quantity, component, lab))
    svg = render_svg(series, title=title, ylabel=f"{quantity[:-1]} {component}")
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(svg)
    return svg
