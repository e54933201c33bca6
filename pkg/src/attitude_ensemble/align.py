"""Label externally recorded frames by nearest-timestamp lookup in a flight data log."""

from __future__ import annotations

import csv
import math
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attitude import DEFAULT_BINNING, AttitudeSample, BinningConfig, classify_attitude
from .dataset import format_real
from .errors import InvalidConfigError, InvalidInputError, ParseError

FDR_HEADER = ["timestamp_ms", "pitch_deg", "roll_deg"]
MANIFEST_HEADER = ["frame_path", "view", "timestamp_ms"]
LABELED_HEADER = MANIFEST_HEADER + ["pitch_deg", "roll_deg", "class_id", "matched_fdr_ts"]
SKIP_HEADER = ["frame_path", "nearest_delta_ms"]


@dataclass(frozen=True)
class FdrLog:
    samples: tuple[AttitudeSample, ...]

    def __post_init__(self):
        ts = [s.timestamp_ms for s in self.samples]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise InvalidInputError("FDR timestamps must be strictly increasing")

    def __len__(self):
        return len(self.samples)

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([s.timestamp_ms for s in self.samples], dtype=np.int64)


@dataclass(frozen=True)
class FrameRef:
    frame_path: str
    view: str
    timestamp_ms: int

    def __post_init__(self):
        if not self.frame_path:
            raise InvalidInputError("frame_path must be non-empty")


@dataclass(frozen=True)
class AlignmentConfig:
    tolerance_ms: float = 100
    tie_break: str = "earlier-sample"

    def __post_init__(self):
        if not self.tolerance_ms > 0:
            raise InvalidConfigError(f"tolerance_ms must be > 0, got {self.tolerance_ms}")
        if self.tie_break != "earlier-sample":
            raise InvalidConfigError(f"unsupported tie_break {self.tie_break!r}")


@dataclass(frozen=True)
class LabeledFrame:
    frame: FrameRef
    pitch_deg: float
    roll_deg: float
    class_id: int
    matched_fdr_ts: int


@dataclass(frozen=True)
class SkippedFrame:
    frame: FrameRef
    nearest_delta_ms: int


@dataclass
class AlignmentResult:
    labeled: list[LabeledFrame]
    skipped: list[SkippedFrame]


def _read_rows(path, header):
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or [h.strip() for h in first] != header:
            raise ParseError(f"missing or wrong header, expected {','.join(header)}", path=path, line=1)
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(rec)}", path=path, line=lineno)
            yield lineno, rec


def _parse_int(text, path, lineno, name):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"non-numeric {name} {text!r}", path=path, line=lineno) from None
    if not math.isfinite(value) or value != int(value):
        raise ParseError(f"{name} must be an integer, got {text!r}", path=path, line=lineno)
    return int(value)


def _parse_float(text, path, lineno, name):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"non-numeric {name} {text!r}", path=path, line=lineno) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite {name} {text!r}", path=path, line=lineno)
    return value


def parse_fdr_csv(path) -> FdrLog:
    """Read a ``timestamp_ms,pitch_deg,roll_deg`` log, rejecting unsorted or repeated timestamps."""
    samples = []
    prev = None
    for lineno, rec in _read_rows(path, FDR_HEADER):
        ts = _parse_int(rec[0], path, lineno, "timestamp_ms")
        pitch = _parse_float(rec[1], path, lineno, "pitch_deg")
        roll = _parse_float(rec[2], path, lineno, "roll_deg")
        if prev is not None and ts == prev:
            raise ParseError(f"duplicate timestamp {ts}", path=path, line=lineno)
        if prev is not None and ts < prev:
            raise ParseError(f"timestamp {ts} is earlier than previous {prev}", path=path, line=lineno)
        try:
            samples.append(AttitudeSample(ts, pitch, roll))
        except InvalidInputError as exc:
            raise ParseError(str(exc), path=path, line=lineno) from None
        prev = ts
    return FdrLog(tuple(samples))


def write_fdr_csv(path, fdr: FdrLog) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FDR_HEADER)
        for s in fdr.samples:
            w.writerow([s.timestamp_ms, repr(float(s.pitch_deg)), repr(float(s.roll_deg))])


def parse_frame_manifest(path) -> list[FrameRef]:
    frames = []
    for lineno, rec in _read_rows(path, MANIFEST_HEADER):
        if not rec[0]:
            raise ParseError("empty frame_path", path=path, line=lineno)
        frames.append(FrameRef(rec[0], rec[1], _parse_int(rec[2], path, lineno, "timestamp_ms")))
    return frames


def write_frame_manifest(path, frames: Sequence[FrameRef]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for f in frames:
            w.writerow([f.frame_path, f.view, f.timestamp_ms])


def nearest_index(fdr_ts: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Index of the closest timestamp in sorted ``fdr_ts``; exact ties go to the earlier sample."""
    right = np.searchsorted(fdr_ts, t, side="left")
    right = np.clip(right, 0, fdr_ts.size - 1)
    left = np.clip(right - 1, 0, fdr_ts.size - 1)
    d_left = np.abs(t - fdr_ts[left])
    d_right = np.abs(fdr_ts[right] - t)
    return np.where(d_left <= d_right, left, right)


def align(
    frames: Sequence[FrameRef],
    fdr: FdrLog,
    cfg: AlignmentConfig = AlignmentConfig(),
    binning: BinningConfig = DEFAULT_BINNING,
) -> AlignmentResult:
    """Match each frame to its nearest FDR sample, skipping those farther than the tolerance.

    Output keeps the input frame order.
    """
    if len(fdr) == 0:
        raise InvalidInputError("FDR log is empty")
    fdr_ts = fdr.timestamps
    t = np.array([f.timestamp_ms for f in frames], dtype=np.int64)
    idx = nearest_index(fdr_ts, t) if t.size else np.zeros(0, dtype=np.int64)
    labeled, skipped = [], []
    for frame, i in zip(frames, idx):
        s = fdr.samples[int(i)]
        delta = abs(frame.timestamp_ms - s.timestamp_ms)
        if delta > cfg.tolerance_ms:
            skipped.append(SkippedFrame(frame, delta))
            continue
        cls = classify_attitude(s.pitch_deg, s.roll_deg, binning)
        labeled.append(LabeledFrame(frame, s.pitch_deg, s.roll_deg, int(cls), s.timestamp_ms))
    return AlignmentResult(labeled, skipped)


def write_alignment(result: AlignmentResult, labeled_path, skip_path) -> None:
    with open(labeled_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LABELED_HEADER)
        for r in result.labeled:
            f = r.frame
            w.writerow(
                [f.frame_path, f.view, f.timestamp_ms, format_real(r.pitch_deg), format_real(r.roll_deg),
                 r.class_id, r.matched_fdr_ts]
            )
    with open(skip_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SKIP_HEADER)
        for r in result.skipped:
            w.writerow([r.frame.frame_path, r.nearest_delta_ms])
