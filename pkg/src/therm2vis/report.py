"""Aggregate quality reporting: per-image CSV and mean +- std tables."""

from __future__ import annotations

import csv

import numpy as np

from .quality import QualityVector

COLUMNS = ("Sharpness", "Blur", "Exposure", "GCF", "Contrast", "LS", "Brightness")
CSV_FIELDS = ("sharpness", "blur", "exposure", "gcf", "contrast", "ls", "brightness")
SET_ORDER = ("O-VIS", "O-THM", "G-VIS")


def aggregate(vectors) -> dict:
    """Per-metric (mean, std, count) over a list of QualityVectors."""
    if not vectors:
        raise ValueError("cannot aggregate an empty set")
    data = np.array([v.as_tuple() for v in vectors], dtype=np.float64)
    out = {}
    for i, name in enumerate(QualityVector.METRIC_ORDER):
        column = data[:, i]
        # identical values must report exactly zero spread
        std = 0.0 if np.ptp(column) == 0.0 else float(column.std())
        out[name] = (float(column.mean()), std, len(vectors))
    return out


def pooled_mean(aggregates, counts) -> dict:
    """Count-weighted mean per metric across already-aggregated groups."""
    out = {}
    for name in QualityVector.METRIC_ORDER:
        total = sum(c for c in counts)
        out[name] = sum(a[name][0] * c for a, c in zip(aggregates, counts)) / total
    return out


def write_per_image_csv(path, entries) -> None:
    """entries: iterable of (image_path, set_name, QualityVector)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("path", "set") + CSV_FIELDS)
        for image_path, set_name, vec in entries:
            writer.writerow(
                [image_path, set_name] + [f"{v:.6f}" for v in vec.as_tuple()]
            )


def write_aggregate_csv(path, by_set: dict) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("set",) + tuple(f"{f}_{s}" for f in CSV_FIELDS for s in ("mean", "std")) + ("count",))
        for set_name in SET_ORDER:
            if set_name not in by_set:
                continue
            agg = by_set[set_name]
            row = [set_name]
            count = 0
            for metric in QualityVector.METRIC_ORDER:
                mean, std, count = agg[metric]
                row += [f"{mean:.6f}", f"{std:.6f}"]
            writer.writerow(row + [count])


def render_table(by_set: dict) -> str:
    """Aligned text table, one row per image set, columns in fixed order."""
    header = [""] + list(COLUMNS)
    rows = [header]
    for set_name in SET_ORDER:
        if set_name not in by_set:
            continue
        agg = by_set[set_name]
        row = [set_name]
        for metric in QualityVector.METRIC_ORDER:
            mean, std, _ = agg[metric]
            row.append(f"{mean:.3f} (±{std:.3f})")
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = []
    for r in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
    return "\n".join(lines)
