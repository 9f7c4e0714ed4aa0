"""View generation, learned view selection and view ensembles."""

from .ensemble import EnsembleModel, aggregate, aggregate_backward
from .selection import select_top, train_ensemble, train_view_selection, view_scores
from .views import ViewBank, generate_views, grid_rotations, preset_rotations

__all__ = [
    "EnsembleModel",
    "ViewBank",
    "aggregate",
    "aggregate_backward",
    "generate_views",
    "grid_rotations",
    "preset_rotations",
    "select_top",
    "train_ensemble",
    "train_view_selection",
    "view_scores",
]
