"""Data behind the result figures, written as CSV with a static SVG rendering.

* shifts: frequency change of every damage for modes 1-6
* frf: accelerance magnitude per trial and per class mean
* densities: per-class kernel density of selected features
* confusion: the four confusion matrices
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from . import datastore
from .config import PipelineParams
from .dsp import frf_accelerance


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "bladetwin"
    return plt


def _save(fig, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    fig.clf()


def shifts(out: Path, shift_table: dict[str, np.ndarray]) -> Path:
    labels = list(shift_table)
    n_modes = len(next(iter(shift_table.values())))
    rows = [[lab, *shift_table[lab].tolist()] for lab in labels]
    csv = Path(out) / "shifts.csv"
    datastore.write_csv(csv, ["label", *[f"df{i}_hz" for i in range(1, n_modes + 1)]], rows)
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 3.5))
    width = 0.8 / len(labels)
    x = np.arange(1, n_modes + 1)
    for i, lab in enumerate(labels):
        ax.bar(x + (i - (len(labels) - 1) / 2) * width, shift_table[lab], width, label=lab)
    ax.axhline(0, color="k", lw=0.6)
    ax.set_xticks(x, [f"mode {i}" for i in x])
    ax.set_ylabel("frequency shift (Hz)")
    ax.legend(fontsize=7, ncol=len(labels))
    _save(fig, Path(out) / "shifts.svg")
    return csv


def trial_frfs(dataset: Path, params: PipelineParams) -> tuple[np.ndarray, list[tuple[tuple, np.ndarray]]]:
    """|H| of every trial of a preprocessed dataset, in (label, unit, trial) order."""
    manifest = datastore.read_manifest(dataset)
    freqs = None
    out = []
    for load in datastore.trial_loaders(dataset, manifest):
        t = load()
        n_fft = params.zero_pad * len(t.force)
        h = frf_accelerance(t.force, t.acceleration, t.sample_rate, n_fft, params.band_max_hz)
        freqs = h.frequencies
        out.append((t.key, h.magnitude))
    return freqs, out


def frf(out: Path, dataset: Path, params: PipelineParams) -> Path:
    """Per-trial magnitudes plus one class-mean curve per class (unit "all", trial "mean")."""
    freqs, curves = trial_frfs(dataset, params)
    labels = sorted({k[0] for k, _ in curves}, key=lambda s: (s != "Healthy", s))
    means = {lab: np.mean([m for k, m in curves if k[0] == lab], axis=0) for lab in labels}
    f_list = freqs.tolist()

    def rows():
        for (label, unit, trial), mag in curves:
            yield from ([f, label, unit, trial, v] for f, v in zip(f_list, mag.tolist()))
        for lab in labels:
            yield from ([f, lab, "all", "mean", v] for f, v in zip(f_list, means[lab].tolist()))

    csv = Path(out) / "frf.csv"
    datastore.write_csv(csv, ["freq_hz", "class", "unit", "trial", "magnitude"], rows())
    plt = _pyplot()
    fig, axes = plt.subplots(len(labels), 1, figsize=(7, 1.8 * len(labels)), sharex=True, squeeze=False)
    for ax, lab in zip(axes[:, 0], labels):
        first_of_unit = {}
        for (label, unit, _), mag in curves:
            if label == lab and unit not in first_of_unit:
                first_of_unit[unit] = mag
        for mag in first_of_unit.values():
            ax.semilogy(freqs, mag, color="0.7", lw=0.5)
        ax.semilogy(freqs, means[lab], color="C0", lw=0.9, ls="--")
        ax.set_ylabel(lab, fontsize=8)
    axes[-1, 0].set_xlabel("frequency (Hz)")
    fig.tight_layout()
    _save(fig, Path(out) / "frf.svg")
    return csv


def densities(out: Path, table, names: Sequence[str], n_grid: int = 200) -> Path:
    from scipy.stats import gaussian_kde

    rows = []
    plt = _pyplot()
    cols = 3
    nrows = max(1, int(np.ceil(len(names) / cols)))
    fig, axes = plt.subplots(nrows, cols, figsize=(9, 2.6 * nrows), squeeze=False)
    labels = sorted(set(table.labels.tolist()), key=lambda s: (s != "Healthy", s))
    for ax, name in zip(axes.flat, names):
        col = table.column(name)
        finite = col[np.isfinite(col)]
        lo, hi = float(np.min(finite)), float(np.max(finite))
        pad = 0.1 * (hi - lo) if hi > lo else 1.0
        grid = np.linspace(lo - pad, hi + pad, n_grid)
        for lab in labels:
            v = col[(table.labels == lab) & np.isfinite(col)]
            if v.size < 2 or np.ptp(v) == 0:
                continue
            dens = gaussian_kde(v)(grid)
            rows.extend([name, lab, x, d] for x, d in zip(grid.tolist(), dens.tolist()))
            ax.plot(grid, dens, lw=0.8, label=lab)
        ax.set_title(name, fontsize=8)
    for ax in list(axes.flat)[len(names):]:
        ax.axis("off")
    axes.flat[0].legend(fontsize=6)
    fig.tight_layout()
    _save(fig, Path(out) / "densities.svg")
    csv = Path(out) / "densities.csv"
    datastore.write_csv(csv, ["feature", "label", "x", "density"], rows)
    return csv


def confusion(out: Path, run: Path) -> Path:
    paths = sorted(Path(run).glob("confusion_*.csv"))
    if not paths:
        raise FileNotFoundError(f"no confusion matrices in {run}")
    plt = _pyplot()
    fig, axes = plt.subplots(1, len(paths), figsize=(3.2 * len(paths), 3.2), squeeze=False)
    rows = []
    for ax, path in zip(axes.flat, paths):
        header, body = datastore.read_csv(path)
        classes = header[1:]
        counts = np.array([[int(v) for v in r[1:]] for r in body])
        kind = path.stem.split("_", 1)[1]
        acc = np.trace(counts) / counts.sum()
        ax.imshow(counts, cmap="Blues")
        for i in range(len(classes)):
            for j in range(len(classes)):
                ax.text(j, i, str(counts[i, j]), ha="center", va="center", fontsize=6)
        ax.set_xticks(range(len(classes)), classes, fontsize=6, rotation=45)
        ax.set_yticks(range(len(classes)), classes, fontsize=6)
        ax.set_title(f"{kind} ({100 * acc:.1f} %)", fontsize=8)
        rows.append([kind, acc])
    fig.tight_layout()
    _save(fig, Path(out) / "confusion.svg")
    csv = Path(out) / "confusion_summary.csv"
    datastore.write_csv(csv, ["model", "accuracy"], rows)
    return csv
