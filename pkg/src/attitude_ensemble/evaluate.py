"""Confusion matrices, accuracy reports, the comparison table and SVG heatmaps."""

from __future__ import annotations

import csv
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .attitude import CLASS_NAMES, N_CLASSES
from .errors import InvalidInputError


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts indexed ``[true, predicted]``."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (N_CLASSES, N_CLASSES) or (counts < 0).any():
            raise InvalidInputError(f"confusion counts must be a non-negative {N_CLASSES}x{N_CLASSES} grid")
        object.__setattr__(self, "counts", counts)

    @property
    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def zero_support(self) -> np.ndarray:
        """Boolean flag per true class with no samples; those rows normalize to zeros."""
        return self.support == 0

    @property
    def normalized(self) -> np.ndarray:
        sup = self.support
        out = np.zeros((N_CLASSES, N_CLASSES), dtype=np.float64)
        nz = sup > 0
        out[nz] = self.counts[nz] / sup[nz, None]
        return out

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else 0.0

    @property
    def per_class_accuracy(self) -> np.ndarray:
        return np.diag(self.normalized).copy()

    @property
    def class_averaged_accuracy(self) -> float:
        present = ~self.zero_support
        return float(self.per_class_accuracy[present].mean()) if present.any() else 0.0

    def __add__(self, other: ConfusionMatrix) -> ConfusionMatrix:
        return ConfusionMatrix(self.counts + other.counts)


def confusion(truth: Sequence[int], pred: Sequence[int]) -> ConfusionMatrix:
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    if truth.shape != pred.shape or truth.ndim != 1:
        raise InvalidInputError(f"truth and pred must be equal-length sequences, got {truth.shape} and {pred.shape}")
    if truth.size == 0:
        raise InvalidInputError("confusion needs at least one pair")
    for name, a in (("truth", truth), ("pred", pred)):
        if not np.issubdtype(a.dtype, np.integer) or a.min() < 0 or a.max() >= N_CLASSES:
            raise InvalidInputError(f"{name} entries must be class ids in 0..{N_CLASSES - 1}")
    counts = np.bincount(truth * N_CLASSES + pred, minlength=N_CLASSES * N_CLASSES)
    return ConfusionMatrix(counts.reshape(N_CLASSES, N_CLASSES))


@dataclass
class AccuracyReport:
    """Accuracy of one model or ensemble.

    ``row`` and ``column`` place it in the comparison table: models sit at
    (architecture, view), ensembles at (configuration name, "ensemble").
    """

    row: str
    column: str
    matrix: ConfusionMatrix
    kind: str = "model"
    n_voters: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def accuracy(self) -> float:
        return self.matrix.accuracy

    @property
    def class_averaged(self) -> float:
        return self.matrix.class_averaged_accuracy

    @property
    def per_class(self) -> np.ndarray:
        return self.matrix.per_class_accuracy


def report(row, column, truth, pred, kind="model", n_voters=None) -> AccuracyReport:
    return AccuracyReport(row, column, confusion(truth, pred), kind, n_voters)


ENSEMBLE_COLUMN = "ensemble"


@dataclass
class ComparisonTable:
    columns: list[str]
    rows: list[str]
    frame_weighted: dict[tuple[str, str], float]
    class_averaged: dict[tuple[str, str], float]
    ensemble_rows: list[str]

    def best(self, column: str, metric: str = "frame_weighted") -> float | None:
        values = [v for (r, c), v in getattr(self, metric).items() if c == column]
        return max(values) if values else None

    def to_markdown(self, metric: str = "frame_weighted") -> str:
        cells = getattr(self, metric)
        lines = ["| model | " + " | ".join(self.columns) + " |", "|---" * (len(self.columns) + 1) + "|"]
        for r in self.rows:
            out = []
            for c in self.columns:
                v = cells.get((r, c))
                if v is None:
                    out.append("-")
                    continue
                text = f"{100 * v:.1f}%"
                out.append(f"**{text}**" if v == self.best(c, metric) else text)
            lines.append(f"| {r} | " + " | ".join(out) + " |")
        return "\n".join(lines) + "\n"

    def write_csv(self, path, metric: str = "frame_weighted") -> None:
        cells = getattr(self, metric)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model"] + self.columns)
            for r in self.rows:
                w.writerow([r] + [f"{cells[(r, c)]:.6g}" if (r, c) in cells else "-" for c in self.columns])


def compare(reports: Sequence[AccuracyReport]) -> ComparisonTable:
    """Lay reports out as architectures x views, with ensemble rows last."""
    if not reports:
        raise InvalidInputError("compare needs at least one report")
    columns, model_rows, ens_rows = [], [], []
    fw, ca = {}, {}
    for rep in reports:
        col = ENSEMBLE_COLUMN if rep.kind == "ensemble" else rep.column
        rows = ens_rows if rep.kind == "ensemble" else model_rows
        if col != ENSEMBLE_COLUMN and col not in columns:
            columns.append(col)
        if rep.row not in rows:
            rows.append(rep.row)
        if (rep.row, col) in fw:
            raise InvalidInputError(f"two reports for ({rep.row}, {col})")
        fw[(rep.row, col)] = rep.accuracy
        ca[(rep.row, col)] = rep.class_averaged
    if ens_rows:
        columns.append(ENSEMBLE_COLUMN)
    return ComparisonTable(columns, model_rows + ens_rows, fw, ca, ens_rows)


def write_matrix_csv(path, cm: ConfusionMatrix) -> None:
    norm = cm.normalized
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true_class", "support"] + [str(c) for c in range(N_CLASSES)])
        for t in range(N_CLASSES):
            w.writerow([t, int(cm.support[t])] + [f"{v:.6g}" for v in norm[t]])


def read_matrix_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Return (support, normalized) from a matrix CSV."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = [rec for rec in reader]
    support = np.array([int(r[1]) for r in rows])
    norm = np.array([[float(v) for v in r[2:]] for r in rows])
    return support, norm


def _cell_colour(v: float) -> str:
    # White to dark blue.
    lo, hi = np.array([247, 251, 255]), np.array([8, 48, 107])
    rgb = np.rint(lo + (hi - lo) * min(max(v, 0.0), 1.0)).astype(int)
    return "#%02x%02x%02x" % tuple(rgb)


def render_heatmap(cm: ConfusionMatrix, out_path, title: str = "") -> Path:
    """Write an annotated 9x9 heatmap of the row-normalized matrix as SVG."""
    norm = cm.normalized
    cell, left, top = 48, 90, 70
    size = cell * N_CLASSES
    width, height = left + size + 20, top + size + 60
    flagged = [CLASS_NAMES[i] for i in np.flatnonzero(cm.zero_support)]
    if len(flagged) == N_CLASSES:
        note = " (no support in any class)"
    elif flagged:
        note = f" (no support: {', '.join(flagged)})"
    else:
        note = ""
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">',
        f'<title>{escape(title + note)}</title>',
        f'<text x="{width / 2}" y="22" text-anchor="middle" font-size="14">{escape(title + note)}</text>',
        f'<text x="{left + size / 2}" y="{height - 12}" text-anchor="middle" font-size="12">predicted class</text>',
        f'<text x="16" y="{top + size / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {top + size / 2})">true class</text>',
    ]
    for i, name in enumerate(CLASS_NAMES):
        parts.append(
            f'<text x="{left + i * cell + cell / 2}" y="{top - 8}" text-anchor="middle" font-size="10">{escape(name)}</text>'
        )
        parts.append(
            f'<text x="{left - 6}" y="{top + i * cell + cell / 2 + 4}" text-anchor="end" font-size="10">{escape(name)}</text>'
        )
    for t in range(N_CLASSES):
        for p in range(N_CLASSES):
            v = float(norm[t, p])
            x, y = left + p * cell, top + t * cell
            ink = "#ffffff" if v > 0.5 else "#000000"
            parts.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{_cell_colour(v)}" stroke="#cccccc"/>')
            parts.append(
                f'<text class="cell" data-true="{t}" data-pred="{p}" x="{x + cell / 2}" y="{y + cell / 2 + 4}" '
                f'text-anchor="middle" font-size="11" fill="{ink}">{v:.2f}</text>'
            )
    parts.append("</svg>")
    out_path = Path(out_path)
    out_path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return out_path
