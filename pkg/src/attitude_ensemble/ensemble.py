"""Per-view model registry and per-frame majority voting."""

from __future__ import annotations

import csv
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CoverageError, InvalidConfigError, InvalidInputError, ParseError
from .nn import checkpoint
from .nn.network import Network, architecture, images_to_tensor, predict

REGISTRY_HEADER = ["model_id", "view", "checkpoint_path", "arch"]

MAJORITY = "majority"
CONFIDENCE_TIEBREAK = "confidence-tiebreak"
INDEX_TIEBREAK = "index-tiebreak"


def vote(predictions: Iterable) -> tuple[int, str]:
    """Plurality vote over ``(class, confidence)`` pairs (bare class ids count with confidence 1).

    Count ties go to the larger summed confidence, then to the lowest class id.
    Returns ``(class, decision_rule)`` naming the stage that decided.
    """
    counts: dict[int, int] = {}
    confs: dict[int, list[float]] = {}
    for p in predictions:
        if isinstance(p, (tuple, list)):
            cls, conf = int(p[0]), float(p[1])
        else:
            cls, conf = int(p), 1.0
        counts[cls] = counts.get(cls, 0) + 1
        confs.setdefault(cls, []).append(conf)
    if not counts:
        raise InvalidInputError("vote needs at least one prediction")
    top = max(counts.values())
    tied = [c for c, n in counts.items() if n == top]
    if len(tied) == 1:
        return tied[0], MAJORITY
    # fsum is exactly rounded, so the result does not depend on vote order.
    sums = {c: math.fsum(confs[c]) for c in tied}
    best = max(sums.values())
    tied = [c for c in tied if sums[c] == best]
    if len(tied) == 1:
        return tied[0], CONFIDENCE_TIEBREAK
    return min(tied), INDEX_TIEBREAK


@dataclass(frozen=True)
class ModelEntry:
    model_id: str
    view: str
    checkpoint_path: Path
    arch: str


@dataclass
class ModelRegistry:
    entries: list[ModelEntry]
    models: dict[str, Network]

    def __post_init__(self):
        ids = [e.model_id for e in self.entries]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise InvalidConfigError(f"duplicate model ids {dupes}")

    @property
    def model_ids(self) -> list[str]:
        return [e.model_id for e in self.entries]

    @property
    def views(self) -> list[str]:
        out = []
        for e in self.entries:
            if e.view not in out:
                out.append(e.view)
        return out

    def entry(self, model_id: str) -> ModelEntry:
        for e in self.entries:
            if e.model_id == model_id:
                return e
        raise KeyError(model_id)

    def select(self, include: Sequence[str] | None = None, exclude_views: Sequence[str] = ()) -> list[ModelEntry]:
        if include is not None:
            unknown = set(include) - set(self.model_ids)
            if unknown:
                raise InvalidConfigError(f"unknown model ids {sorted(unknown)}")
        chosen = [
            e
            for e in self.entries
            if (include is None or e.model_id in include) and e.view not in set(exclude_views)
        ]
        if not chosen:
            raise InvalidConfigError("no models left after inclusion/exclusion")
        return chosen

    @classmethod
    def from_models(cls, items: Sequence[tuple[str, str, Network, str]]) -> ModelRegistry:
        """Build from in-memory ``(model_id, view, network, arch)`` tuples."""
        entries = [ModelEntry(mid, view, Path(""), arch) for mid, view, _, arch in items]
        return cls(entries, {mid: net for mid, _, net, _ in items})


def _arch_matches(net: Network, arch: str) -> bool:
    _, h, w = net.spec.input_shape
    try:
        expected = architecture(arch, h, w)
    except InvalidConfigError:
        return False
    return expected.to_text() == net.spec.to_text()


def read_registry(path) -> list[ModelEntry]:
    """Read ``model_id,view,checkpoint_path,arch``; relative paths resolve against the registry's folder."""
    path = Path(path)
    entries = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != REGISTRY_HEADER:
            raise ParseError(f"expected header {','.join(REGISTRY_HEADER)}", path=path, line=1)
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 4 or not rec[0]:
                raise ParseError(f"bad registry row {rec!r}", path=path, line=lineno)
            ckpt = Path(rec[2])
            if not ckpt.is_absolute():
                ckpt = path.parent / ckpt
            entries.append(ModelEntry(rec[0], rec[1], ckpt, rec[3]))
    return entries


def load_registry(path) -> ModelRegistry:
    """Read a registry CSV and load every checkpoint, checking it against its architecture tag."""
    entries = read_registry(path)
    models = {}
    for e in entries:
        if e.model_id in models:
            raise InvalidConfigError(f"duplicate model id {e.model_id!r}")
        try:
            net = checkpoint.load(e.checkpoint_path)
        except OSError as exc:
            raise InvalidConfigError(f"model {e.model_id}: cannot read {e.checkpoint_path}: {exc}") from exc
        if not _arch_matches(net, e.arch):
            raise InvalidConfigError(f"model {e.model_id}: checkpoint does not match architecture {e.arch!r}")
        models[e.model_id] = net
    return ModelRegistry(entries, models)


def write_registry(path, entries: Sequence[ModelEntry]) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REGISTRY_HEADER)
        for e in entries:
            ckpt = Path(e.checkpoint_path)
            try:
                ckpt = ckpt.resolve().relative_to(path.parent.resolve())
            except ValueError:
                pass
            w.writerow([e.model_id, e.view, ckpt.as_posix(), e.arch])


@dataclass(frozen=True)
class VoteRecord:
    timestamp_ms: int
    votes: tuple[tuple[str, int, float], ...]  # (model_id, class, confidence)
    final_class: int
    decision_rule: str


def model_predictions(
    registry: ModelRegistry,
    frames: Mapping[tuple[int, str], np.ndarray],
    entries: Sequence[ModelEntry],
    timestamps: Sequence[int],
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Run each model on its view's frames at ``timestamps``; returns id -> (classes, confidences)."""
    out = {}
    by_view: dict[str, np.ndarray] = {}
    for e in entries:
        if e.view not in by_view:
            by_view[e.view] = np.stack([frames[(t, e.view)] for t in timestamps])
        net = registry.models[e.model_id]
        images = by_view[e.view]
        x = images_to_tensor(images, net.dtype) if images.dtype == np.uint8 else images
        out[e.model_id] = predict(net, x)
    return out


def ensemble_predict(
    registry: ModelRegistry,
    frames: Mapping[tuple[int, str], np.ndarray],
    include: Sequence[str] | None = None,
    exclude_views: Sequence[str] = (),
) -> list[VoteRecord]:
    """One majority vote per timestamp over the selected models.

    ``frames`` maps ``(timestamp_ms, view)`` to an image (HxWx3 uint8) or a CHW tensor.
    """
    entries = registry.select(include, exclude_views)
    timestamps = sorted({t for t, _ in frames})
    missing = [(t, e.view) for t in timestamps for e in entries if (t, e.view) not in frames]
    if missing:
        raise CoverageError(sorted(set(missing)))
    preds = model_predictions(registry, frames, entries, timestamps)
    return votes_from_predictions(timestamps, [e.model_id for e in entries], preds)


def votes_from_predictions(timestamps, model_ids, preds) -> list[VoteRecord]:
    records = []
    for k, t in enumerate(timestamps):
        votes = tuple((mid, int(preds[mid][0][k]), float(preds[mid][1][k])) for mid in model_ids)
        final, rule = vote((c, p) for _, c, p in votes)
        records.append(VoteRecord(int(t), votes, final, rule))
    return records


def write_votes_csv(path, records: Sequence[VoteRecord]) -> None:
    model_ids = [mid for mid, _, _ in records[0].votes] if records else []
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp_ms", "final_class", "decision_rule"] + [f"pred_{m}" for m in model_ids])
        for r in records:
            w.writerow([r.timestamp_ms, r.final_class, r.decision_rule] + [c for _, c, _ in r.votes])


def read_votes_csv(path) -> tuple[list[str], list[dict]]:
    """Return (model ids, rows) where each row has timestamp_ms, final_class, decision_rule, preds."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        model_ids = [h[len("pred_") :] for h in header[3:]]
        rows = []
        for rec in reader:
            rows.append(
                {
                    "timestamp_ms": int(rec[0]),
                    "final_class": int(rec[1]),
                    "decision_rule": rec[2],
                    "preds": [int(v) for v in rec[3:]],
                }
            )
    return model_ids, rows
