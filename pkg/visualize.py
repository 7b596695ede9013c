"""
Visualization Tools for CLAST runs

Provides plots for:
- Training loss curves
- The painting-to-class correlation matrix
- Fusion benchmark scaling
- Stylization grids (content × style class)

Plots are optional: every function is a no-op with a console note when
matplotlib is missing.
"""

import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    HAS_MATPLOTLIB = True
except ImportError:
    HAS_MATPLOTLIB = False

try:
    import seaborn as sns
    HAS_SEABORN = True
except ImportError:
    HAS_SEABORN = False

from errors import EvaluationError
from losses import LossLog
from settings import console
from styleset import ImageSample
from training import CorrelationResult


PathLike = Union[str, Path]


def _finish(fig, save_path: Optional[PathLike]) -> Optional[Path]:
    plt.tight_layout()
    if save_path:
        save_path = Path(save_path)
        save_path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(save_path, dpi=150)
        console.print(f"Saved to {save_path}")
    plt.close(fig)
    return Path(save_path) if save_path else None


def plot_loss_curves(
    losses: Union[PathLike, pd.DataFrame],
    title: str = "Training losses",
    save_path: Optional[PathLike] = None,
) -> Optional[Path]:
    """
    Plot every loss column of a losses.csv against the step, on a log scale.

    Args:
        losses: Path to a loss CSV or its DataFrame
        title: Plot title
        save_path: Optional path to save the figure
    """
    if not HAS_MATPLOTLIB:
        console.print("matplotlib required for visualization")
        return None

    frame = losses if isinstance(losses, pd.DataFrame) else LossLog.read_csv(losses)
    columns = [c for c in frame.columns if c != "step" and np.any(frame[c].to_numpy() != 0.0)]

    fig, ax = plt.subplots(figsize=(10, 6))
    colors = plt.cm.viridis(np.linspace(0, 1, max(len(columns), 1)))
    for column, color in zip(columns, colors):
        width = 2.5 if column == "total" else 1.5
        ax.plot(frame["step"], np.abs(frame[column]) + 1e-12, label=column, color=color, linewidth=width)

    ax.set_yscale("log")
    ax.set_xlabel("Step", fontsize=12)
    ax.set_ylabel("Loss", fontsize=12)
    ax.set_title(title, fontsize=14)
    ax.legend(loc="upper right")
    ax.grid(True, alpha=0.3)
    return _finish(fig, save_path)


def plot_correlation_heatmap(
    result: CorrelationResult,
    title: str = "Painting-to-class correlation",
    save_path: Optional[PathLike] = None,
) -> Optional[Path]:
    """
    Heatmap of the mean score per (true class, anchor class); a bright diagonal
    means paintings sit closest to their own class anchor.
    """
    if not HAS_MATPLOTLIB:
        console.print("matplotlib required for visualization")
        return None

    classes = result.class_ids
    grid = np.array([
        result.scores[result.labels == c].mean(axis=0) if np.any(result.labels == c) else np.zeros(len(classes))
        for c in classes
    ])
    names = [f"style-{c}" for c in classes]

    fig, ax = plt.subplots(figsize=(8, 7))
    if HAS_SEABORN:
        sns.heatmap(grid, ax=ax, cmap="viridis", vmin=0, annot=len(classes) <= 10, fmt=".2f",
                    xticklabels=names, yticklabels=names, cbar_kws={"label": "mean score"})
    else:
        im = ax.imshow(grid, cmap="viridis", vmin=0)
        plt.colorbar(im, ax=ax).set_label("mean score", fontsize=12)
        ax.set_xticks(range(len(names)))
        ax.set_yticks(range(len(names)))
        ax.set_xticklabels(names, rotation=45, ha="right")
        ax.set_yticklabels(names)

    ax.set_xlabel("Anchor class", fontsize=12)
    ax.set_ylabel("Painting class", fontsize=12)
    ax.set_title(f"{title} (argmax accuracy {result.accuracy:.2f})", fontsize=14)
    return _finish(fig, save_path)


def load_bench(path: PathLike) -> pd.DataFrame:
    with open(path) as f:
        payload = json.load(f)
    return pd.DataFrame(payload["results"])


def plot_bench_scaling(
    bench: Union[PathLike, pd.DataFrame],
    title: str = "Fusion forward time",
    save_path: Optional[PathLike] = None,
) -> Optional[Path]:
    """Median forward time (with IQR band) against sequence length, log-log."""
    if not HAS_MATPLOTLIB:
        console.print("matplotlib required for visualization")
        return None

    frame = bench if isinstance(bench, pd.DataFrame) else load_bench(bench)
    fig, ax = plt.subplots(figsize=(10, 6))
    palette = sns.color_palette("deep") if HAS_SEABORN else plt.cm.tab10.colors

    for (variant, rows), color in zip(frame.groupby("variant", sort=True), palette):
        rows = rows.sort_values("length")
        ax.plot(rows["length"], rows["median_ms"], "o-", label=variant, color=color, linewidth=2)
        ax.fill_between(
            rows["length"],
            np.maximum(rows["median_ms"] - rows["iqr_ms"] / 2, 1e-6),
            rows["median_ms"] + rows["iqr_ms"] / 2,
            color=color,
            alpha=0.2,
        )

    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel("Sequence length L (tokens)", fontsize=12)
    ax.set_ylabel("Median forward time (ms)", fontsize=12)
    ax.set_title(title, fontsize=14)
    ax.legend(loc="upper left")
    ax.grid(True, alpha=0.3, which="both")
    return _finish(fig, save_path)


def plot_stylization_grid(
    contents: Sequence[ImageSample],
    stylized: Dict[int, Sequence[ImageSample]],
    save_path: Optional[PathLike] = None,
) -> Optional[Path]:
    """
    Rows are content images; the first column is the content, the others its
    stylization into each class.

    Args:
        contents: Content images
        stylized: class id → stylized images, aligned with `contents`
    """
    if not HAS_MATPLOTLIB:
        console.print("matplotlib required for visualization")
        return None

    class_ids = sorted(stylized)
    rows, cols = len(contents), len(class_ids) + 1
    fig, axes = plt.subplots(rows, cols, figsize=(2 * cols, 2 * rows), squeeze=False)
    for r, content in enumerate(contents):
        panels = [content] + [stylized[c][r] for c in class_ids]
        for col, (ax, img) in enumerate(zip(axes[r], panels)):
            ax.imshow(np.clip(img.pixels, 0, 1).transpose(1, 2, 0), interpolation="nearest")
            ax.set_xticks([])
            ax.set_yticks([])
            if r == 0:
                ax.set_title("content" if col == 0 else f"style-{class_ids[col - 1]}", fontsize=10)
    return _finish(fig, save_path)


def analyze_run(run_dir: PathLike) -> Dict:
    """
    Summarize a completed run from its saved files.

    Args:
        run_dir: Run directory holding eval.json and the loss logs

    Returns:
        Final losses, evaluation means and, if present, the ablation table
    """
    run_path = Path(run_dir)
    if not (run_path / "eval.json").exists():
        raise EvaluationError(f"no eval.json in {run_dir}")

    with open(run_path / "eval.json") as f:
        report = json.load(f)

    analysis = {
        "config_hash": report.get("config_hash"),
        "fusion_variant": report.get("fusion_variant"),
        "means": report.get("means", {}),
        "deception_rate": report.get("deception_rate"),
        "correlation_accuracy": report.get("correlation", {}).get("argmax_accuracy"),
    }
    for name in ("losses_stage1.csv", "losses.csv"):
        if (run_path / name).exists():
            frame = LossLog.read_csv(run_path / name)
            analysis[name] = {"steps": len(frame), "final_total": float(frame["total"].iloc[-1]) if len(frame) else None}
    if (run_path / "ablation.json").exists():
        with open(run_path / "ablation.json") as f:
            analysis["ablation"] = json.load(f)["presets"]
    return analysis


def plot_run(run_dir: PathLike) -> List[Path]:
    """Write every plot the run directory has data for into <run_dir>/plots."""
    run_path = Path(run_dir)
    plots = run_path / "plots"
    written = []
    for name in ("losses_stage1.csv", "losses.csv"):
        if (run_path / name).exists():
            written.append(plot_loss_curves(run_path / name, title=name, save_path=plots / f"{Path(name).stem}.png"))
    if (run_path / "correlation.csv").exists():
        frame = pd.read_csv(run_path / "correlation.csv")
        class_cols = [c for c in frame.columns if c.startswith("style-")]
        result = CorrelationResult(
            scores=frame[class_cols].to_numpy(),
            labels=np.array([int(v.split("-")[1]) for v in frame["true_class"]]),
            class_ids=[int(c.split("-")[1]) for c in class_cols],
        )
        written.append(plot_correlation_heatmap(result, save_path=plots / "correlation.png"))
    if (run_path / "bench.json").exists():
        written.append(plot_bench_scaling(run_path / "bench.json", save_path=plots / "bench.png"))
    return [p for p in written if p is not None]
