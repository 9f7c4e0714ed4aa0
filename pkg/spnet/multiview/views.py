# spnet/multiview/views.py
"""
View rotation sets and the ViewBank that carries learned per-view weights.

The generated grid orders views row-major by (elevation, azimuth): view
index j = e * k + a for elevation step e and azimuth step a of a k x k grid,
so view 0 is always the identity rotation.
"""

import logging
import math
from typing import List, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..config import SPNET_THREADS
from ..exceptions import ConfigError
from ..geometry.mesh import Rotation, TriangleMesh
from ..projection.render import DEFAULT_IMAGE_SIZE, DepthImage, render_views
from ..state_management import CasterKind, HitPolicy, ProjectionKind, ViewPreset

logger = logging.getLogger(__name__)

DEFAULT_VIEW_COUNT = 64


def grid_rotations(n_views: int = DEFAULT_VIEW_COUNT) -> List[Rotation]:
    """k x k azimuth/elevation grid with 360/k degree steps, n_views = k^2"""
    steps = math.isqrt(n_views)
    if steps < 1 or steps * steps != n_views:
        raise ConfigError(f"View grid needs a square view count, got {n_views}")
    step = 360.0 / steps
    return [
        Rotation.from_degrees(azimuth=a * step, elevation=e * step)
        for e in range(steps)
        for a in range(steps)
    ]


def preset_rotations(preset: ViewPreset, n_views: int = DEFAULT_VIEW_COUNT) -> List[Rotation]:
    """Rotation set of a named view preset; n_views only applies to the selected grid"""
    if preset == ViewPreset.PLAIN:
        return [Rotation()]
    if preset == ViewPreset.MAJOR_AXES:
        return [Rotation(), Rotation.from_degrees(azimuth=90.0), Rotation.from_degrees(elevation=90.0)]
    if preset == ViewPreset.MVCNN12:
        return [Rotation.from_degrees(azimuth=k * 30.0, elevation=30.0) for k in range(12)]
    return grid_rotations(n_views)


def generate_views(
    mesh: TriangleMesh,
    kind: ProjectionKind = ProjectionKind.UV,
    rotations: Sequence[Rotation] | None = None,
    size: int = DEFAULT_IMAGE_SIZE,
    hit_policy: HitPolicy = HitPolicy.FARTHEST,
    caster_kind: CasterKind = CasterKind.BVH,
    max_workers: int | None = None,
) -> List[DepthImage]:
    """Render a normalized mesh under every rotation (the 8 x 8 grid by default)"""
    rotations = grid_rotations() if rotations is None else list(rotations)
    return render_views(mesh, kind, rotations, size, hit_policy, caster_kind, max_workers or SPNET_THREADS)


def rank_views(weights: np.ndarray) -> List[int]:
    """All view indices by descending |w|, ties to the lower index"""
    magnitude = np.abs(np.asarray(weights, dtype=np.float64))
    return [int(j) for j in np.lexsort((np.arange(len(magnitude)), -magnitude))]


class ViewBank(BaseModel):
    """Rotation set, learned view weights and the selected view indices"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    rotations: List[Rotation]
    weights: np.ndarray = Field(description="One float32 weight per view (the 1x1 convolution kernel)")
    selected: List[int] = Field(default_factory=list, description="Chosen views by descending |w|")

    @classmethod
    def uniform(cls, rotations: Sequence[Rotation]) -> "ViewBank":
        n = len(rotations)
        return cls(rotations=list(rotations), weights=np.full(n, 1.0 / n, dtype=np.float32))

    @field_validator("weights", mode="before")
    @classmethod
    def validate_weights(cls, v) -> np.ndarray:
        array = np.array(v, dtype=np.float32, copy=True).reshape(-1)
        if not np.all(np.isfinite(array)):
            raise ValueError("View weights must be finite")
        array.flags.writeable = False
        return array

    @model_validator(mode="after")
    def validate_bank(self) -> "ViewBank":
        n = len(self.rotations)
        if n == 0:
            raise ValueError("ViewBank needs at least one rotation")
        if len(self.weights) != n:
            raise ValueError(f"{len(self.weights)} weights for {n} views")
        if len(set(self.selected)) != len(self.selected):
            raise ValueError(f"Selected views repeat: {self.selected}")
        if any(j < 0 or j >= n for j in self.selected):
            raise ValueError(f"Selected view outside [0, {n})")
        magnitude = np.abs(self.weights[self.selected]) if self.selected else np.zeros(0)
        if np.any(np.diff(magnitude) > 0):
            raise ValueError("Selected views must be ordered by descending |w|")
        return self

    @property
    def num_views(self) -> int:
        return len(self.rotations)

    def ranked(self) -> List[int]:
        return rank_views(self.weights)

    def with_weights(self, weights: np.ndarray) -> "ViewBank":
        return ViewBank(rotations=self.rotations, weights=weights)

    def with_selection(self, m: int) -> "ViewBank":
        if not 1 <= m <= self.num_views:
            raise ConfigError(f"Cannot select {m} of {self.num_views} views")
        return ViewBank(rotations=self.rotations, weights=self.weights, selected=self.ranked()[:m])
