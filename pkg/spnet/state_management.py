# spnet/state_management.py
"""
Run state for the spnet pipeline - Pydantic v2 models for configuration,
dataset manifests and the metric summaries every stage emits.
"""

import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

from omegaconf import OmegaConf
from omegaconf.errors import OmegaConfBaseException
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .config import DEFAULT_CONFIG_PATH
from .exceptions import ConfigError

# settings snapshot each stage leaves in its run directory
RUN_SNAPSHOT_FILE = "run_config.yaml"

# ================================
# ENUMS FOR STANDARDIZED VALUES
# ================================

class ProjectionKind(str, Enum):
    """Sphere-to-plane mappings plus the two image baselines"""
    UV = "uv"
    KAVRAYSKIY_VII = "kavrayskiy7"
    ECKERT_IV = "eckert4"
    CASSINI = "cassini"
    DEPTH_MAP_YZ = "depthmap_yz"
    PANORAMA_Z = "panorama_z"

    @property
    def is_spherical(self) -> bool:
        return self not in (ProjectionKind.DEPTH_MAP_YZ, ProjectionKind.PANORAMA_Z)


class Aggregation(str, Enum):
    """View ensemble reductions"""
    MAX_POOL = "max_pool"
    AVG_POOL = "avg_pool"
    WEIGHTED_AVERAGE = "weighted_average"


class DistanceMetric(str, Enum):
    """Descriptor distances used for retrieval"""
    L1 = "l1"
    L2 = "l2"


class ViewPreset(str, Enum):
    """Named rotation sets"""
    PLAIN = "plain"
    MAJOR_AXES = "major_axes"
    MVCNN12 = "mvcnn12"
    SELECTED = "selected"


class CentroidMode(str, Enum):
    """How the center of an object is located before scaling"""
    BBOX = "bbox"
    MEAN = "mean"


class HitPolicy(str, Enum):
    """Which ray intersection supplies the pixel value"""
    FARTHEST = "farthest"
    NEAREST = "nearest"


class CasterKind(str, Enum):
    """Ray caster implementation"""
    BVH = "bvh"
    BRUTE = "brute"


class Split(str, Enum):
    """Dataset partitions"""
    TRAIN = "train"
    VAL = "val"
    TEST = "test"

# ================================
# CONFIGURATION MODELS
# ================================

class TrainConfig(BaseModel):
    """SGD training hyper-parameters"""
    model_config = ConfigDict(extra="forbid")

    learning_rate: float = Field(default=0.01, gt=0.0, description="SGD step size")
    batch_size: int = Field(default=16, ge=1, description="Minibatch size")
    epochs: int = Field(default=200, ge=0, description="Passes over the training split")
    dropout_rate: float = Field(default=0.2, ge=0.0, lt=1.0, description="Inverted dropout probability")
    seed: int = Field(default=0, ge=0, description="Seed for initialization, shuffling and dropout")
    hidden_units: int = Field(default=512, ge=1, description="Width of the first fully connected layer")
    stop_at_perfect: bool = Field(default=False, description="Stop once training accuracy reaches 1.0")


class RunConfig(BaseModel):
    """Complete configuration of one pipeline run"""
    model_config = ConfigDict(extra="forbid")

    projection: ProjectionKind = ProjectionKind.UV
    image_size: int = Field(default=128, ge=8, description="Rendered image side, divisible by 8")
    views: ViewPreset = ViewPreset.SELECTED
    n_views: int = Field(default=64, ge=1, description="Generated views for selection")
    top_m: int = Field(default=5, ge=1, description="Views kept after selection")
    aggregation: Aggregation = Aggregation.WEIGHTED_AVERAGE
    metric: DistanceMetric = DistanceMetric.L1
    seed: int = Field(default=0, ge=0)
    out: Path = Path("runs/default")

    centroid: CentroidMode = CentroidMode.BBOX
    hit_policy: HitPolicy = HitPolicy.FARTHEST
    caster: CasterKind = CasterKind.BVH

    train_on_all_views: bool = False
    ensemble_from_scratch: bool = False
    selection_epochs: int = Field(default=50, ge=0)
    selection_learning_rate: float = Field(default=0.01, gt=0.0)

    train: TrainConfig = Field(default_factory=TrainConfig)

    @field_validator("image_size", mode="after")
    @classmethod
    def validate_image_size(cls, v: int) -> int:
        """Three 2x2 poolings need a side divisible by 8"""
        if v % 8 != 0:
            raise ValueError(f"image_size must be divisible by 8, got {v}")
        return v

    @field_validator("n_views", mode="after")
    @classmethod
    def validate_n_views(cls, v: int) -> int:
        """The generated views form a square azimuth x elevation grid"""
        if math.isqrt(v) ** 2 != v:
            raise ValueError(f"n_views must be a perfect square, got {v}")
        return v

    @model_validator(mode="after")
    def validate_top_m(self) -> "RunConfig":
        if self.top_m > self.n_views:
            raise ValueError(f"top_m ({self.top_m}) exceeds n_views ({self.n_views})")
        return self


def _read_config_file(path: Path):
    """YAML files load directly; anything else is read as key=value lines"""
    if path.suffix.lower() in (".yaml", ".yml"):
        return OmegaConf.load(path)
    lines = []
    for raw in path.read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: expected key=value, got '{raw}'")
        key, value = (part.strip() for part in line.split("=", 1))
        lines.append(f"{key}={value}")
    return OmegaConf.from_dotlist(lines)


def load_run_config(
    config_path: Optional[Path] = None,
    overrides: Optional[Dict[str, Any]] = None,
    resume: bool = True,
) -> RunConfig:
    """
    Merge packaged defaults, an optional config file and CLI overrides.

    Overrides whose value is None are ignored so unset CLI flags never
    shadow the config file. With resume, the run_config.yaml snapshot found
    in the resolved run directory sits between the defaults and the config
    file, so later stages inherit the settings of earlier ones.
    """
    try:
        defaults = OmegaConf.load(DEFAULT_CONFIG_PATH)
        layers = []
        if config_path is not None:
            layers.append(_read_config_file(Path(config_path)))
        if overrides:
            dotlist = [f"{k}={v.value if isinstance(v, Enum) else v}" for k, v in overrides.items() if v is not None]
            layers.append(OmegaConf.from_dotlist(dotlist))
        merged = OmegaConf.merge(defaults, *layers)
        snapshot = Path(str(merged.out)) / RUN_SNAPSHOT_FILE
        if resume and snapshot.is_file():
            merged = OmegaConf.merge(defaults, OmegaConf.load(snapshot), *layers)
        merged = OmegaConf.to_container(merged, resolve=True)
    except (OSError, OmegaConfBaseException) as e:
        raise ConfigError(f"Could not read configuration: {e}") from e

    try:
        return RunConfig.model_validate(merged)
    except ValidationError as e:
        problems = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"Invalid configuration: {problems}") from e

# ================================
# DATASET MODELS
# ================================

class ManifestRecord(BaseModel):
    """One labeled mesh of the dataset"""
    object_id: str = Field(min_length=1)
    mesh_path: Path
    class_label: str = Field(min_length=1)
    split: Split


class Manifest(BaseModel):
    """Dataset manifest with unique object ids"""
    records: List[ManifestRecord] = Field(default_factory=list)

    @field_validator("records", mode="after")
    @classmethod
    def validate_unique_ids(cls, v: List[ManifestRecord]) -> List[ManifestRecord]:
        seen = set()
        for record in v:
            if record.object_id in seen:
                raise ValueError(f"Duplicate object_id '{record.object_id}'")
            seen.add(record.object_id)
        return v

    @property
    def classes(self) -> List[str]:
        """Sorted class labels; the index in this list is the class id"""
        return sorted({r.class_label for r in self.records})

    def class_index(self, label: str) -> int:
        return self.classes.index(label)

    def split(self, split: Split) -> List[ManifestRecord]:
        return [r for r in self.records if r.split == split]

# ================================
# STAGE OUTPUT MODELS
# ================================

class EpochRecord(BaseModel):
    """Line of the training log"""
    epoch: int = Field(ge=0)
    split: Split
    loss: float
    accuracy: float = Field(ge=0.0, le=1.0)


class ClassificationMetrics(BaseModel):
    """Accuracy summary for one model on one split"""
    accuracy: float = Field(ge=0.0, le=1.0)
    binary_accuracy: float = Field(ge=0.0, le=1.0, description="Mean one-vs-rest agreement over classes")
    per_class_accuracy: Dict[str, float] = Field(default_factory=dict)
    confusion_matrix: List[List[int]] = Field(default_factory=list)
    num_samples: int = Field(ge=0)


class RetrievalMetrics(BaseModel):
    """Ranking quality over all test queries"""
    metric: DistanceMetric
    mean_ap: float = Field(ge=0.0, le=1.0)
    ndcg: float = Field(ge=0.0, le=1.0)
    micro_f: float = Field(ge=0.0, le=1.0)
    macro_f: float = Field(ge=0.0, le=1.0)
    precision_at_10: float = Field(ge=0.0, le=1.0)
    recall_at_10: float = Field(ge=0.0, le=1.0)
    accuracy: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    num_queries: int = Field(ge=0)


class EvalReport(BaseModel):
    """Metrics JSON written by the eval stage"""
    projection: ProjectionKind
    classes: List[str]
    single_view: ClassificationMetrics
    ensemble: Optional[ClassificationMetrics] = None
    aggregation: Optional[Aggregation] = None
    selected_views: List[int] = Field(default_factory=list)
