"""Attitude samples and the nine-class pitch/roll discretization."""

from __future__ import annotations

import enum
import math
from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError, InvalidInputError

N_CLASSES = 9


class AttitudeClass(enum.IntEnum):
    NU = 0
    ND = 1
    RP = 2
    RN = 3
    NU_RP = 4
    NU_RN = 5
    ND_RP = 6
    ND_RN = 7
    L = 8

    @property
    def short_name(self) -> str:
        return self.name.replace("_", "+")

    @classmethod
    def from_short_name(cls, name: str) -> AttitudeClass:
        return cls[name.replace("+", "_")]


CLASS_NAMES = tuple(c.short_name for c in AttitudeClass)


@dataclass(frozen=True)
class AttitudeSample:
    """Ground-truth attitude at one instant.

    Pitch is nose-up positive, roll is right-roll positive, both in degrees.
    """

    timestamp_ms: int
    pitch_deg: float
    roll_deg: float

    def __post_init__(self):
        if int(self.timestamp_ms) != self.timestamp_ms or self.timestamp_ms < 0:
            raise InvalidInputError(f"timestamp_ms must be a non-negative integer, got {self.timestamp_ms!r}")
        if not math.isfinite(self.pitch_deg) or abs(self.pitch_deg) > 90:
            raise InvalidInputError(f"pitch_deg must be finite and within [-90, 90], got {self.pitch_deg!r}")
        if not math.isfinite(self.roll_deg) or abs(self.roll_deg) > 180:
            raise InvalidInputError(f"roll_deg must be finite and within [-180, 180], got {self.roll_deg!r}")


@dataclass(frozen=True)
class BinningConfig:
    alpha_deg: float = 3.0

    def __post_init__(self):
        if not (math.isfinite(self.alpha_deg) and self.alpha_deg > 0):
            raise InvalidConfigError(f"alpha_deg must be > 0, got {self.alpha_deg!r}")


DEFAULT_BINNING = BinningConfig()

# Lookup indexed by (pitch band, roll band); band 0 = below -alpha,
# 1 = inside [-alpha, +alpha], 2 = above +alpha.
_BAND_TO_CLASS = np.array(
    [
        [AttitudeClass.ND_RN, AttitudeClass.ND, AttitudeClass.ND_RP],
        [AttitudeClass.RN, AttitudeClass.L, AttitudeClass.RP],
        [AttitudeClass.NU_RN, AttitudeClass.NU, AttitudeClass.NU_RP],
    ],
    dtype=np.int64,
)


def _band(value, alpha):
    # Edges belong to the centre band: -alpha <= v <= +alpha.
    return np.where(value < -alpha, 0, np.where(value > alpha, 2, 1))


def classify_attitude(pitch_deg: float, roll_deg: float, cfg: BinningConfig = DEFAULT_BINNING) -> AttitudeClass:
    """Map one (pitch, roll) pair to its attitude class."""
    if not (math.isfinite(pitch_deg) and math.isfinite(roll_deg)):
        raise InvalidInputError(f"non-finite attitude ({pitch_deg!r}, {roll_deg!r})")
    a = cfg.alpha_deg
    return AttitudeClass(int(_BAND_TO_CLASS[_band(pitch_deg, a), _band(roll_deg, a)]))


def classify_many(pitch_deg, roll_deg, cfg: BinningConfig = DEFAULT_BINNING) -> np.ndarray:
    """Vectorized :func:`classify_attitude`; returns an int64 array of class ids."""
    pitch = np.asarray(pitch_deg, dtype=np.float64)
    roll = np.asarray(roll_deg, dtype=np.float64)
    if not (np.all(np.isfinite(pitch)) and np.all(np.isfinite(roll))):
        raise InvalidInputError("non-finite attitude values")
    a = cfg.alpha_deg
    return _BAND_TO_CLASS[_band(pitch, a), _band(roll, a)]


def class_histogram(samples: Iterable[AttitudeSample], cfg: BinningConfig = DEFAULT_BINNING) -> dict[int, int]:
    counts = {c: 0 for c in range(N_CLASSES)}
    for s in samples:
        counts[int(classify_attitude(s.pitch_deg, s.roll_deg, cfg))] += 1
    return counts
