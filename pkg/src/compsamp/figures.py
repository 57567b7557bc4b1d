"""Matplotlib renderings of emitted CSV artifacts.

These are companions to the deterministic SVGs: nicer to look at, not
byte-stable, always rendered to files via the Agg backend.
"""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .csvio import read_csv  # noqa: E402


def _save(fig, out_path) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_race(csv_path, out_path) -> Path:
    header, rows = read_csv(csv_path)
    idx = {name: i for i, name in enumerate(header)}
    curves = defaultdict(list)
    for row in rows:
        key = (row[idx["arm"]], row[idx["seed"]])
        curves[key].append((float(row[idx["step"]]), float(row[idx["swd"]])))
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for (arm, seed), pts in sorted(curves.items()):
        xs, ys = zip(*pts)
        style = "-" if arm == "cs" else "--"
        ax.plot(xs, ys, style, label=f"{arm} (seed {seed})", alpha=0.8)
    ax.set_xlabel("gradient steps")
    ax.set_ylabel("sliced Wasserstein distance")
    ax.set_yscale("log")
    ax.set_title("Convergence race")
    ax.legend(fontsize=7)
    return _save(fig, out_path)


def plot_trace(csv_path, out_path) -> Path:
    header, rows = read_csv(csv_path)
    idx = {name: i for i, name in enumerate(header)}
    curves = defaultdict(list)
    for row in rows:
        curves[row[idx["run_id"]]].append(
            (int(row[idx["t"]]), float(row[idx["deviation"]])))
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for rule, pts in sorted(curves.items()):
        pts.sort(reverse=True)
        xs, ys = zip(*pts)
        ax.plot(xs, ys, label=rule)
    ax.invert_xaxis()
    ax.set_xlabel("time step t")
    ax.set_ylabel(r"$\|x_t - D(x_0, t)\|_2$")
    ax.set_title("Teacher-forced deviation from the degradation path")
    ax.legend()
    return _save(fig, out_path)


def plot_magnitude(csv_path, out_path) -> Path:
    header, rows = read_csv(csv_path)
    idx = {name: i for i, name in enumerate(header)}
    by_bucket = defaultdict(list)
    for row in rows:
        by_bucket[int(row[idx["bucket"]])].append(float(row[idx["mean_norm"]]))
    buckets = sorted(by_bucket)
    means = [sum(by_bucket[b]) / len(by_bucket[b]) for b in buckets]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(buckets, means, marker="o")
    ax.set_xlabel("outer-step bucket")
    ax.set_ylabel("mean compensation-target norm")
    ax.set_title("Compensation-term magnitude during training")
    return _save(fig, out_path)


def plot_samples(csv_path, out_path) -> Path:
    header, rows = read_csv(csv_path)
    xs = [float(r[0]) for r in rows]
    ys = [float(r[1]) for r in rows] if len(header) > 1 else [0.0] * len(xs)
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(xs, ys, s=4, alpha=0.4)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_title("Generated samples")
    return _save(fig, out_path)


PLOTTERS = {"race": plot_race, "trace": plot_trace,
            "magnitude": plot_magnitude, "samples": plot_samples}
