"""On-disk dataset layout: PPM images, the labels CSV and the train/test split.

Layout under a dataset root::

    dataset.json            generation metadata (alpha, views, degradations, seeds)
    labels.csv              frame_id,view,timestamp_ms,pitch_deg,roll_deg,class_id
    split.csv               frame_id,subset   (subset is "train" or "test")
    images/<view>/<frame_id>.ppm
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attitude import N_CLASSES
from .errors import InvalidInputError, ParseError

LABELS_HEADER = ["frame_id", "view", "timestamp_ms", "pitch_deg", "roll_deg", "class_id"]
SPLIT_HEADER = ["frame_id", "subset"]


def format_real(x: float) -> str:
    """Six significant digits, as used in every CSV the package writes."""
    return f"{float(x):.6g}"


def write_ppm(path, image: np.ndarray) -> None:
    """Write an (H, W, 3) uint8 array as binary PPM (P6)."""
    image = np.asarray(image)
    if image.dtype != np.uint8 or image.ndim != 3 or image.shape[2] != 3:
        raise InvalidInputError(f"expected (H, W, 3) uint8 image, got {image.dtype} {image.shape}")
    h, w, _ = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(image).tobytes())


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    # Header is four whitespace-separated tokens followed by exactly one whitespace byte.
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic != b"P6" or maxval != 255:
        raise ParseError(f"unsupported PPM ({magic!r}, maxval {maxval})", path=path)
    pixels = data[pos + 1 : pos + 1 + w * h * 3]
    if len(pixels) != w * h * 3:
        raise ParseError("truncated PPM pixel data", path=path)
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w, 3)


def stratified_split(labels, test_fraction: float = 0.2, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Split indices per class so each class keeps roughly ``test_fraction`` in test.

    Classes with a single member stay in train. Returns sorted (train, test) index arrays.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in range(N_CLASSES):
        idx = np.flatnonzero(labels == c)
        if idx.size == 0:
            continue
        idx = rng.permutation(idx)
        n_test = int(round(idx.size * test_fraction))
        if idx.size >= 2:
            n_test = min(max(n_test, 1), idx.size - 1)
        else:
            n_test = 0
        test.append(idx[:n_test])
        train.append(idx[n_test:])
    train = np.sort(np.concatenate(train)) if train else np.zeros(0, dtype=np.int64)
    test = np.sort(np.concatenate(test)) if test else np.zeros(0, dtype=np.int64)
    return train, test


@dataclass(frozen=True)
class LabelRow:
    frame_id: int
    view: str
    timestamp_ms: int
    pitch_deg: float
    roll_deg: float
    class_id: int


@dataclass
class Dataset:
    """A generated dataset read back from disk."""

    root: Path
    rows: list[LabelRow]
    split: dict[int, str]
    meta: dict = field(default_factory=dict)

    @property
    def views(self) -> list[str]:
        seen = []
        for r in self.rows:
            if r.view not in seen:
                seen.append(r.view)
        return seen

    def image_path(self, row: LabelRow) -> Path:
        return self.root / "images" / row.view / f"{row.frame_id:06d}.ppm"

    def select(self, view: str | None = None, subset: str | None = None) -> list[LabelRow]:
        return [
            r
            for r in self.rows
            if (view is None or r.view == view) and (subset is None or self.split.get(r.frame_id) == subset)
        ]

    def arrays(self, view: str, subset: str | None = None):
        """Return (images uint8 NxHxWx3, labels, frame_ids, timestamps) for one view."""
        rows = self.select(view, subset)
        if not rows:
            raise InvalidInputError(f"no frames for view {view!r} subset {subset!r}")
        images = np.stack([read_ppm(self.image_path(r)) for r in rows])
        labels = np.array([r.class_id for r in rows], dtype=np.int64)
        frame_ids = np.array([r.frame_id for r in rows], dtype=np.int64)
        stamps = np.array([r.timestamp_ms for r in rows], dtype=np.int64)
        return images, labels, frame_ids, stamps


def write_labels_csv(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LABELS_HEADER)
        for r in rows:
            w.writerow(
                [r.frame_id, r.view, r.timestamp_ms, format_real(r.pitch_deg), format_real(r.roll_deg), r.class_id]
            )


def read_labels_csv(path) -> list[LabelRow]:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != LABELS_HEADER:
            raise ParseError(f"expected header {','.join(LABELS_HEADER)}", path=path, line=1)
        for lineno, rec in enumerate(reader, start=2):
            try:
                rows.append(
                    LabelRow(int(rec[0]), rec[1], int(rec[2]), float(rec[3]), float(rec[4]), int(rec[5]))
                )
            except (ValueError, IndexError) as exc:
                raise ParseError(f"bad labels row: {exc}", path=path, line=lineno) from exc
    return rows


def write_split_csv(path, split: dict[int, str]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SPLIT_HEADER)
        for fid in sorted(split):
            w.writerow([fid, split[fid]])


def read_split_csv(path) -> dict[int, str]:
    split = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != SPLIT_HEADER:
            raise ParseError("expected header frame_id,subset", path=path, line=1)
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != 2 or rec[1] not in ("train", "test"):
                raise ParseError(f"bad split row {rec!r}", path=path, line=lineno)
            split[int(rec[0])] = rec[1]
    return split


def load_dataset(root) -> Dataset:
    root = Path(root)
    labels = root / "labels.csv"
    if not labels.exists():
        raise InvalidInputError(f"no labels.csv under {root}")
    rows = read_labels_csv(labels)
    split_path = root / "split.csv"
    split = read_split_csv(split_path) if split_path.exists() else {}
    meta_path = root / "dataset.json"
    meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.exists() else {}
    return Dataset(root=root, rows=rows, split=split, meta=meta)
