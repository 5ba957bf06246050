"""Shared domain model: boxes, detections, tracklets, and configuration.

Boxes are axis-aligned, stored as top-left / bottom-right corner coordinates
in pixels. Detections carry an appearance embedding produced upstream; this
package never touches image data.
"""

from dataclasses import dataclass, fields, replace

import numpy as np


class ConfigError(ValueError):
    """Invalid configuration value or malformed config file."""


class DataFormatError(ValueError):
    """Input bytes or text do not match the documented format."""


@dataclass(frozen=True)
class BBox:
    x_left: float
    y_top: float
    x_right: float
    y_bottom: float

    def __post_init__(self):
        if self.x_right < self.x_left:
            raise ValueError(f"x_right < x_left in {self!r}")
        if self.y_bottom < self.y_top:
            raise ValueError(f"y_bottom < y_top in {self!r}")

    def width(self) -> float:
        return self.x_right - self.x_left

    def height(self) -> float:
        return self.y_bottom - self.y_top

    def area(self) -> float:
        return self.width() * self.height()

    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x_left + self.x_right), 0.5 * (self.y_top + self.y_bottom))


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0.0 when the union is empty.

    Total function: degenerate (zero-area) boxes are legal and score 0
    against anything, which also keeps them out of label matching.
    """
    ix = min(a.x_right, b.x_right) - max(a.x_left, b.x_left)
    iy = min(a.y_bottom, b.y_bottom) - max(a.y_top, b.y_top)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = a.area() + b.area() - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def cosine_similarity(u, v) -> float:
    """Cosine of the angle between two embeddings, clamped to [-1, 1].

    A zero-norm vector means "no appearance information" and yields 0.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"embedding dimension mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.clip(float(np.dot(u, v)) / (nu * nv), -1.0, 1.0))


@dataclass(eq=False)
class Detection:
    """One candidate object in one frame."""

    frame: int
    box: BBox
    score: float
    embedding: np.ndarray

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"detection score {self.score} outside [0, 1]")
        emb = np.asarray(self.embedding, dtype=np.float64)
        if emb.ndim != 1:
            raise ValueError("embedding must be a 1-d vector")
        if not np.all(np.isfinite(emb)):
            raise ValueError("embedding contains non-finite entries")
        self.embedding = emb


@dataclass(eq=False)
class Tracklet:
    """A live or recently-missed identity.

    frames_missing == 0 exactly when the tracklet was matched in the most
    recent processed frame; length counts matched frames only.
    """

    id: int
    last_detection: Detection
    smoothed_embedding: np.ndarray
    length: int = 1
    frames_missing: int = 0
    last_score: float = 1.0

    def __post_init__(self):
        self.smoothed_embedding = np.asarray(self.smoothed_embedding, dtype=np.float64)
        if not np.all(np.isfinite(self.smoothed_embedding)):
            raise ValueError("smoothed embedding contains non-finite entries")


@dataclass
class TrackerConfig:
    """Every threshold and count the inference pipeline consumes.

    age_max_frames is kept in frames internally; the CLI converts from
    seconds times fps because sequences are processed frame-indexed.
    """

    K: int = 100
    tau_init: float = 0.5
    tau_E: float = 0.4
    tau_N: float = 0.4
    age_max_frames: int = 30
    age_min_frames: int = 10
    n_iter: int = 3
    edges_per_criterion: int = 10
    d_node: int = 64
    d_edge: int = 32

    def validate(self) -> "TrackerConfig":
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if self.edges_per_criterion < 1:
            raise ConfigError("edges_per_criterion must be >= 1")
        for name in ("tau_init", "tau_E", "tau_N"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ConfigError(f"{name}={val} outside [0, 1]")
        if self.age_max_frames < 0 or self.age_min_frames < 0:
            raise ConfigError("age limits must be non-negative")
        if self.n_iter < 0:
            raise ConfigError("n_iter must be non-negative")
        if self.d_node < 1 or self.d_edge < 1:
            raise ConfigError("feature dimensions must be positive")
        return self


@dataclass
class TrainConfig:
    """Loss weights and optimizer settings for the association branch."""

    w_size: float = 0.1
    w_off: float = 1.0
    w_edge: float = 0.1
    w_node: float = 10.0
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    iou_label_threshold: float = 0.5
    learning_rate: float = 1e-2
    # "adam" converges in far fewer steps on this loss surface; "sgd" is
    # plain fixed-rate descent. Both are deterministic.
    optimizer: str = "adam"
    # Heatmap target generation: min-overlap constant of the corner-radius
    # rule, and whether summed Gaussians are clamped to 1 (the raw sum can
    # exceed 1 for overlapping objects).
    heatmap_min_overlap: float = 0.7
    heatmap_clamp: bool = True
    score_loss_beta: float = 4.0

    def validate(self) -> "TrainConfig":
        if not 0.0 < self.iou_label_threshold <= 1.0:
            raise ConfigError("iou_label_threshold must be in (0, 1]")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer '{self.optimizer}'")
        return self


def apply_config_overrides(cfg, overrides: dict):
    """Return a copy of a config dataclass with string overrides applied.

    Values are coerced to the field's type; unknown keys raise ConfigError.
    Used for key=value config files and CLI flags (flags win by being
    applied last).
    """
    by_name = {f.name: f for f in fields(cfg)}
    parsed = {}
    for key, raw in overrides.items():
        f = by_name.get(key)
        if f is None:
            raise ConfigError(f"unknown config key '{key}'")
        if isinstance(raw, str):
            try:
                if f.type in ("int", int):
                    value = int(raw)
                elif f.type in ("float", float):
                    value = float(raw)
                elif f.type in ("bool", bool):
                    low = raw.strip().lower()
                    if low in ("1", "true", "yes", "on"):
                        value = True
                    elif low in ("0", "false", "no", "off"):
                        value = False
                    else:
                        raise ValueError(raw)
                else:
                    value = raw
            except ValueError as exc:
                raise ConfigError(f"bad value for '{key}': {raw!r}") from exc
        else:
            value = raw
        parsed[key] = value
    return replace(cfg, **parsed)
