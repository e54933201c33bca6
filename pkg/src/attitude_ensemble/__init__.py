"""Multi-view aircraft attitude classification.

Synthetic cockpit views are rendered from a simulated flight, labelled into
nine pitch/roll classes, classified per view by small CNNs and combined by
majority vote.
"""

from .align import AlignmentConfig, FdrLog, FrameRef
from .attitude import AttitudeClass, AttitudeSample, BinningConfig, classify_attitude, classify_many
from .ensemble import ModelRegistry, ensemble_predict, load_registry, vote
from .evaluate import ConfusionMatrix, compare, confusion, render_heatmap, report
from .flightsim import DegradationSpec, ViewSpec, generate_dataset, render_frame, simulate_trajectory

__version__ = "0.1.0"

__all__ = [
    "AlignmentConfig",
    "AttitudeClass",
    "AttitudeSample",
    "BinningConfig",
    "ConfusionMatrix",
    "DegradationSpec",
    "FdrLog",
    "FrameRef",
    "ModelRegistry",
    "ViewSpec",
    "classify_attitude",
    "classify_many",
    "compare",
    "confusion",
    "ensemble_predict",
    "generate_dataset",
    "load_registry",
    "render_frame",
    "render_heatmap",
    "report",
    "simulate_trajectory",
    "vote",
]
