"""Assemble experiment reports from train-toy run directories: a delimited
summary table plus matplotlib figures (loss curves, metric bars) on disk."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

SUMMARY_COLUMNS = ("run", "mode", "cl", "seed", "steps", "final_task_loss",
                   "final_cl_loss", "final_total_loss", "acc_src", "acc_tgt", "cka")


def collect_runs(runs_dir: Union[str, Path]) -> list[dict]:
    """Read every ``<run>/summary.json`` under runs_dir (sorted by run name)."""
    runs_dir = Path(runs_dir)
    runs = []
    for summary_path in sorted(runs_dir.glob("*/summary.json")):
        with summary_path.open(encoding="utf-8") as f:
            summary = json.load(f)
        run = dict(summary)
        run["run"] = summary_path.parent.name
        log = summary_path.parent / "log.jsonl"
        if log.exists():
            with log.open(encoding="utf-8") as f:
                run["records"] = [json.loads(line) for line in f if line.strip()]
        runs.append(run)
    return runs


def write_summary_table(runs: list[dict], path: Union[str, Path]) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        f.write("\t".join(SUMMARY_COLUMNS) + "\n")
        for run in runs:
            row = []
            for col in SUMMARY_COLUMNS:
                v = run.get(col, "")
                row.append(f"{v:.6f}" if isinstance(v, float) else str(v))
            f.write("\t".join(row) + "\n")


def _plot_loss_curves(runs: list[dict], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for run in runs:
        records = run.get("records")
        if not records:
            continue
        steps = [r["step"] for r in records]
        ax.plot(steps, [r["total_loss"] for r in records], label=run["run"], lw=1.2)
    ax.set_xlabel("step")
    ax.set_ylabel("total loss")
    ax.set_title("training loss")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_metric_bars(runs: list[dict], path: Path) -> None:
    labels = [run["run"] for run in runs]
    metrics = [("acc_src", "source accuracy"), ("acc_tgt", "zero-shot accuracy"),
               ("cka", "cross-lingual CKA")]
    fig, axes = plt.subplots(1, len(metrics), figsize=(4 * len(metrics), 4),
                             sharey=False)
    for ax, (key, title) in zip(axes, metrics):
        values = [run.get(key) for run in runs]
        xs = range(len(labels))
        ax.bar(xs, [v if v is not None else 0.0 for v in values])
        ax.set_xticks(list(xs))
        ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
        ax.set_title(title)
        ax.set_ylim(0, 1.05)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_report(runs_dir: Union[str, Path], out_dir: Union[str, Path],
                  runs: Optional[list[dict]] = None) -> dict:
    """Write summary.tsv plus figure files; returns the emitted paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if runs is None:
        runs = collect_runs(runs_dir)
    if not runs:
        raise ValueError(f"no run summaries found under {runs_dir}")
    table = out_dir / "summary.tsv"
    write_summary_table(runs, table)
    losses = out_dir / "loss_curves.png"
    _plot_loss_curves(runs, losses)
    bars = out_dir / "metrics.png"
    _plot_metric_bars(runs, bars)
    return {"table": str(table), "figures": [str(losses), str(bars)],
            "runs": [run["run"] for run in runs]}
