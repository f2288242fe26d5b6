"""Batch figure rendering from wgf CSV artifacts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from wgf_plot.schemas import (
    SchemaError,
    read_density,
    read_errors,
    read_histogram,
    read_mapping,
)


class FigureKind(Enum):
    LOGLOG_ERROR = "loglog_error"
    MAPPING = "mapping"
    DENSITY_EVOLUTION = "density_evolution"
    SECOND_MOMENT = "second_moment"


@dataclass
class FigureSpec:
    kind: FigureKind
    inputs: Sequence[str]
    output: str
    xlabel: Optional[str] = None
    ylabel: Optional[str] = None
    title: Optional[str] = None
    annotate_slope: bool = True
    chi: Optional[float] = None
    m2_initial: Optional[float] = None
    dpi: int = 150


@dataclass
class RenderResult:
    output: str
    slopes: Dict[str, float] = field(default_factory=dict)


def fit_loglog_slope(n_values, errors) -> float:
    """Least-squares slope of log10(error) against log10(N)."""
    x = np.log10(np.asarray(n_values, dtype=float))
    y = np.log10(np.asarray(errors, dtype=float))
    A = np.vstack((x, np.ones_like(x))).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(coef[0])


def render(spec: FigureSpec) -> RenderResult:
    """Render one figure; raises :class:`SchemaError` on bad inputs."""
    if not spec.inputs:
        raise SchemaError("at least one input CSV is required")
    handlers = {
        FigureKind.LOGLOG_ERROR: _render_loglog,
        FigureKind.MAPPING: _render_mapping,
        FigureKind.DENSITY_EVOLUTION: _render_density,
        FigureKind.SECOND_MOMENT: _render_second_moment,
    }
    return handlers[spec.kind](spec)


def _finish(fig, spec: FigureSpec) -> None:
    if spec.title:
        fig.suptitle(spec.title)
    fig.tight_layout()
    fig.savefig(spec.output, dpi=spec.dpi)
    plt.close(fig)


def _render_loglog(spec: FigureSpec) -> RenderResult:
    rows = []
    for path in spec.inputs:
        rows.extend(read_errors(path))
    # Keep the latest recorded time per (subset, N): the sweep's final error.
    final = {}
    for row in rows:
        key = (row.subset, row.n)
        if key not in final or row.t >= final[key].t:
            final[key] = row
    subsets = sorted({s for s, _ in final})
    fig, ax = plt.subplots(figsize=(5.2, 4.2))
    slopes: Dict[str, float] = {}
    for subset in subsets:
        ns = sorted(n for s, n in final if s == subset)
        errs = [final[(subset, n)].error for n in ns]
        ax.loglog(ns, errs, marker="o", label=f"subset {subset}")
        if spec.annotate_slope and len(ns) >= 2:
            slopes[subset] = fit_loglog_slope(ns, errs)
    if slopes:
        text = "\n".join(f"{s}: slope {v:.3f}" for s, v in sorted(slopes.items()))
        ax.text(0.03, 0.03, text, transform=ax.transAxes, fontsize=9,
                verticalalignment="bottom")
    ax.set_xlabel(spec.xlabel or "N")
    ax.set_ylabel(spec.ylabel or "error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    _finish(fig, spec)
    return RenderResult(output=spec.output, slopes=slopes)


def _render_mapping(spec: FigureSpec) -> RenderResult:
    fig, ax = plt.subplots(figsize=(5.2, 4.2))
    for path in spec.inputs:
        rows = read_mapping(path)
        z = np.array([r[0] for r in rows])
        f = np.array([r[1] for r in rows])
        T = np.array([r[2] for r in rows])
        ax.plot(z, f, label="computed map", lw=1.6)
        if np.any(np.isfinite(T)):
            ax.plot(z, T, "--", label="oracle map", lw=1.2)
    ax.set_xlabel(spec.xlabel or "z")
    ax.set_ylabel(spec.ylabel or "map value")
    ax.grid(True, alpha=0.3)
    ax.legend()
    _finish(fig, spec)
    return RenderResult(output=spec.output)


def _histogram_panels(path: str):
    rows = read_histogram(path)
    panels = {}
    for t, left, right, count in rows:
        panels.setdefault(t, []).append((left, right, count))
    return dict(sorted(panels.items()))


def _density_overlay(paths: Sequence[str]):
    overlay = {}
    for path in paths[1:]:
        for t, x, v in read_density(path):
            overlay.setdefault(t, []).append((x, v))
    return overlay


def _render_density(spec: FigureSpec) -> RenderResult:
    panels = _histogram_panels(spec.inputs[0])
    overlay = _density_overlay(spec.inputs)
    times = list(panels)
    cols = min(4, len(times))
    rows_n = math.ceil(len(times) / cols)
    fig, axes = plt.subplots(
        rows_n, cols, figsize=(3.2 * cols, 2.6 * rows_n), squeeze=False,
        sharex=True,
    )
    for ax in axes.flat[len(times):]:
        ax.axis("off")
    for ax, t in zip(axes.flat, times):
        bins = panels[t]
        total = sum(c for _, _, c in bins)
        for left, right, count in bins:
            width = right - left
            dens = count / (total * width) if total and width > 0 else 0.0
            ax.bar(left, dens, width=width, align="edge", color="#9ecae9",
                   edgecolor="none")
        if t in overlay:
            pts = sorted(overlay[t])
            ax.plot([p[0] for p in pts], [p[1] for p in pts], color="#e6703a",
                    lw=1.4)
        ax.set_title(f"t = {t:g}", fontsize=9)
        ax.grid(True, alpha=0.25)
    fig.supxlabel(spec.xlabel or "x")
    fig.supylabel(spec.ylabel or "density")
    _finish(fig, spec)
    return RenderResult(output=spec.output)


def second_moments_from_histogram(path: str):
    """Binned second moment per snapshot time (midpoint rule)."""
    panels = _histogram_panels(path)
    times, moments = [], []
    for t, bins in panels.items():
        total = sum(c for _, _, c in bins)
        if total == 0:
            continue
        m2 = sum(c * (0.5 * (l + r)) ** 2 for l, r, c in bins) / total
        times.append(t)
        moments.append(m2)
    return np.array(times), np.array(moments)


def _render_second_moment(spec: FigureSpec) -> RenderResult:
    fig, ax = plt.subplots(figsize=(5.2, 4.2))
    for path in spec.inputs:
        times, m2 = second_moments_from_histogram(path)
        if len(times) == 0:
            raise SchemaError(f"{path}: no in-range particles in any snapshot")
        ax.plot(times, m2, marker="o", label="particles")
        if spec.chi is not None:
            m2_0 = spec.m2_initial if spec.m2_initial is not None else m2[0]
            ax.plot(times, m2_0 + 2.0 * (1.0 - spec.chi) * times, "--",
                    label=f"analytic rate, coupling {spec.chi:g}")
    ax.set_xlabel(spec.xlabel or "t")
    ax.set_ylabel(spec.ylabel or "second moment")
    ax.grid(True, alpha=0.3)
    ax.legend()
    _finish(fig, spec)
    return RenderResult(output=spec.output)
