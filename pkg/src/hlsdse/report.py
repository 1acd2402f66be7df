"""Rendering of run artifacts into figures and summary tables.

The report path walks a run directory, renders what it recognizes —
training curves from metrics.csv, exploration convergence from
convergence.csv, Pareto scatter plots from front files — and drops PNGs next
to a summary.csv of headline numbers.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt



def _read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def plot_training_curves(metrics_csv: str | Path, out_png: str | Path) -> None:
    header, rows = _read_csv(Path(metrics_csv))
    idx = {name: header.index(name) for name in header}
    epochs = [int(r[idx["epoch"]]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [float(r[idx["train_rmse"]]) for r in rows], label="train (loss)")
    ax.plot(epochs, [float(r[idx["val_all"]]) for r in rows], label="validation (all)")
    ax.set_xlabel("epoch")
    ax.set_ylabel("aggregate RMSE")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)


def plot_convergence(named_csvs: dict[str, str | Path], out_png: str | Path) -> None:
    """Overlay one or more (evaluations, adrs) curves, e.g. loop vs baselines."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, path in named_csvs.items():
        header, rows = _read_csv(Path(path))
        pts = [(int(r[0]), float(r[1])) for r in rows if len(r) > 1 and r[1] != ""]
        if pts:
            ax.step([p[0] for p in pts], [p[1] for p in pts], where="post", label=label)
    ax.set_xlabel("evaluations")
    ax.set_ylabel("ADRS")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)


def plot_fronts(named_csvs: dict[str, str | Path], out_png: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    markers = ["o", "s", "^", "D", "v"]
    for i, (label, path) in enumerate(named_csvs.items()):
        header, rows = _read_csv(Path(path))
        xs = [float(r[1]) for r in rows]
        ys = [float(r[2]) for r in rows]
        ax.scatter(xs, ys, s=28, marker=markers[i % len(markers)], label=label,
                   alpha=0.8)
    ax.set_xlabel("latency (cycles)")
    ax.set_ylabel("peak utilization")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)


def render_run_report(run_dir: str | Path, out_dir: str | Path) -> list[Path]:
    """Render every recognized artifact under run_dir; returns written files."""
    run = Path(run_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    summary: list[tuple[str, str]] = []

    metrics = sorted(run.rglob("metrics.csv"))
    for path in metrics:
        png = out / f"{path.parent.name}_training.png" if path.parent != run \
            else out / "training.png"
        plot_training_curves(path, png)
        written.append(png)
        header, rows = _read_csv(path)
        if rows:
            idx = header.index("val_all")
            best = min(float(r[idx]) for r in rows)
            summary.append((f"{path.relative_to(run)}:best_val_all", f"{best:.10g}"))

    conv = sorted(run.rglob("convergence.csv"))
    if conv:
        png = out / "convergence.png"
        plot_convergence({p.parent.name or "run": p for p in conv}, png)
        written.append(png)
        for path in conv:
            header, rows = _read_csv(path)
            vals = [float(r[1]) for r in rows if len(r) > 1 and r[1] != ""]
            if vals:
                summary.append((f"{path.relative_to(run)}:final_adrs", f"{vals[-1]:.10g}"))

    fronts = {p.stem: p for p in sorted(run.rglob("*.csv"))
              if p.name in ("archive.csv", "reference.csv")}
    if fronts:
        png = out / "fronts.png"
        plot_fronts(fronts, png)
        written.append(png)

    evals = sorted(run.rglob("eval.csv"))
    for path in evals:
        header, rows = _read_csv(path)
        for row in rows:
            summary.append((f"{path.relative_to(run)}:{row[0]}_all", row[-1]))

    summary_path = out / "summary.csv"
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        writer.writerows(summary)
    written.append(summary_path)
    return written
