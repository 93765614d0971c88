"""Report writers: rank-metric tables, matrix CSVs, heatmap figures."""

import json
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

TABLE_COLUMNS = ("R@1", "R@5", "R@10", "MRR", "MR")


def write_rank_report(report, out_dir, stem="rank_report"):
    """JSON (metrics + per-instance ranks) and an aligned text table."""
    os.makedirs(out_dir, exist_ok=True)
    payload = {
        "recall_at": {str(k): v for k, v in sorted(report.recall_at.items())},
        "mr": report.mr,
        "mrr": report.mrr,
        "ranks": report.ranks,
    }
    json_path = os.path.join(out_dir, f"{stem}.json")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")

    row = report.row()
    widths = [max(len(c), 8) for c in TABLE_COLUMNS]
    header = "  ".join(c.rjust(w) for c, w in zip(TABLE_COLUMNS, widths))
    values = "  ".join(f"{v:.2f}".rjust(w) for v, w in zip(row, widths))
    txt_path = os.path.join(out_dir, f"{stem}.txt")
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n" + values + "\n")
    return json_path, txt_path


def write_matrix_csv(path, matrix):
    """Full-precision delimited dump; round-trips float64 exactly."""
    matrix = np.asarray(matrix, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        for row in matrix:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(x) for x in line.split(",")])
    return np.asarray(rows, dtype=np.float64)


def write_heatmap(path, matrix, title=""):
    """Render a similarity matrix as a figure next to its CSV."""
    matrix = np.asarray(matrix, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(4.8, 3.6))
    im = ax.imshow(matrix, aspect="auto", cmap="viridis")
    ax.set_xlabel("comment position")
    ax.set_ylabel("frame position")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
