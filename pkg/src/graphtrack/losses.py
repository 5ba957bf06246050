"""Loss functions: focal classification losses for edges/nodes, Gaussian
heatmap targets, and the detection loss terms computed over supplied
prediction maps (no backbone exists here; these are pure functions).
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import ConfigError, TrainConfig
from .labels import GtObject, NodeLabels

FOCAL_EPS = 1e-7


def _focal_vec(p: np.ndarray, y: np.ndarray, gamma: float, alpha: float) -> np.ndarray:
    p = np.clip(p, FOCAL_EPS, 1.0 - FOCAL_EPS)
    pos = -alpha * (1.0 - p) ** gamma * np.log(p)
    neg = -(1.0 - alpha) * p**gamma * np.log(1.0 - p)
    return np.where(y == 1, pos, neg)


def _focal_grad_vec(p: np.ndarray, y: np.ndarray, gamma: float, alpha: float) -> np.ndarray:
    """d(focal)/dp; zero where the probability clamp is active."""
    inside = (p > FOCAL_EPS) & (p < 1.0 - FOCAL_EPS)
    p = np.clip(p, FOCAL_EPS, 1.0 - FOCAL_EPS)
    if gamma == 0.0:
        d_pos = -alpha / p
        d_neg = (1.0 - alpha) / (1.0 - p)
    else:
        d_pos = alpha * gamma * (1.0 - p) ** (gamma - 1.0) * np.log(p) - alpha * (
            1.0 - p
        ) ** gamma / p
        d_neg = -(1.0 - alpha) * gamma * p ** (gamma - 1.0) * np.log(1.0 - p) + (
            1.0 - alpha
        ) * p**gamma / (1.0 - p)
    return np.where(inside, np.where(y == 1, d_pos, d_neg), 0.0)


def focal_loss(p: float, y: int, gamma: float, alpha: float) -> float:
    """Binary focal loss for one probability; p is clamped away from 0/1."""
    if y not in (0, 1):
        raise ValueError("label must be 0 or 1")
    return float(_focal_vec(np.array([p]), np.array([y]), gamma, alpha)[0])


def edge_loss(
    edge_scores: dict,
    edge_labels: dict,
    labels_t1: NodeLabels,
    labels_t2: NodeLabels,
    *,
    gamma: float = 2.0,
    alpha: float = 0.25,
) -> float:
    """Mean focal loss over pairs with at least one positive endpoint.

    Pairs connecting two background nodes are excluded entirely; when no
    eligible pair exists the loss is 0.
    """
    total = 0.0
    n_eligible = 0
    for (i, j), score in edge_scores.items():
        if labels_t1.ny[i] != 1 and labels_t2.ny[j] != 1:
            continue
        n_eligible += 1
        total += focal_loss(score, edge_labels[(i, j)], gamma, alpha)
    if n_eligible == 0:
        return 0.0
    return total / n_eligible


def node_loss(
    node_scores_t2,
    node_labels_t2: NodeLabels,
    *,
    gamma: float = 2.0,
    alpha: float = 0.25,
) -> float:
    """Focal loss over every t2 node, normalized by the positive count;
    0 when the frame has no positive t2 node."""
    scores = np.asarray(node_scores_t2, dtype=np.float64)
    ny = np.asarray(node_labels_t2.ny)
    if scores.shape != ny.shape:
        raise ValueError("node scores and labels are misaligned")
    n_pos = int(ny.sum())
    if n_pos == 0:
        return 0.0
    return float(_focal_vec(scores, ny, gamma, alpha).sum() / n_pos)


def association_loss(edge_loss_value: float, node_loss_value: float, cfg: TrainConfig) -> float:
    return cfg.w_edge * edge_loss_value + cfg.w_node * node_loss_value


# ---------------------------------------------------------------------------
# Detection-side losses (pure functions over supplied prediction maps)
# ---------------------------------------------------------------------------


@dataclass
class HeatmapSpec:
    grid: np.ndarray  # (grid_h, grid_w), entries >= 0
    stride: int = 4
    skipped: int = 0  # objects whose center fell outside the grid


def gaussian_radius(height: float, width: float, min_overlap: float = 0.7) -> float:
    """Corner-style radius so a box shifted by r still overlays the object
    with at least min_overlap IoU; the minimum of the three quadratic cases."""
    a1 = 1.0
    b1 = height + width
    c1 = width * height * (1.0 - min_overlap) / (1.0 + min_overlap)
    r1 = (b1 + math.sqrt(max(b1 * b1 - 4.0 * a1 * c1, 0.0))) / 2.0

    a2 = 4.0
    b2 = 2.0 * (height + width)
    c2 = (1.0 - min_overlap) * width * height
    r2 = (b2 + math.sqrt(max(b2 * b2 - 4.0 * a2 * c2, 0.0))) / (2.0 * a2)

    a3 = 4.0 * min_overlap
    b3 = -2.0 * min_overlap * (height + width)
    c3 = (min_overlap - 1.0) * width * height
    r3 = (b3 + math.sqrt(max(b3 * b3 - 4.0 * a3 * c3, 0.0))) / (2.0 * a3)
    return min(r1, r2, r3)


def gaussian_sigma(
    width: float, height: float, stride: int = 4, min_overlap: float = 0.7
) -> float:
    """Kernel width for one object, derived from its box size on the grid."""
    radius = max(0, int(gaussian_radius(height / stride, width / stride, min_overlap)))
    return (2.0 * radius + 1.0) / 6.0


def gen_heatmap(
    gts: list,
    grid_h: int,
    grid_w: int,
    stride: int = 4,
    *,
    min_overlap: float = 0.7,
    clamp: bool = True,
) -> HeatmapSpec:
    """Sum of per-object Gaussians on the stride-reduced grid.

    Entries are clamped to 1 by default since overlapping objects can push
    the raw sum above 1; pass clamp=False for the raw sum. Objects whose
    quantized center lies off the grid are skipped with a warning.
    """
    if grid_h < 1 or grid_w < 1:
        raise ValueError("grid dimensions must be positive")
    grid = np.zeros((grid_h, grid_w))
    ys, xs = np.mgrid[0:grid_h, 0:grid_w]
    skipped = 0
    for gt in gts:
        cx, cy = gt.box.center()
        gx = int(cx / stride)
        gy = int(cy / stride)
        if not (0 <= gx < grid_w and 0 <= gy < grid_h):
            skipped += 1
            continue
        sigma = gaussian_sigma(gt.box.width(), gt.box.height(), stride, min_overlap)
        grid += np.exp(-((xs - gx) ** 2 + (ys - gy) ** 2) / (2.0 * sigma * sigma))
    if skipped:
        warnings.warn(f"{skipped} object center(s) outside the heatmap grid", stacklevel=2)
    if clamp:
        np.minimum(grid, 1.0, out=grid)
    return HeatmapSpec(grid=grid, stride=stride, skipped=skipped)


@dataclass(frozen=True)
class DetectionLossTerms:
    score: float
    size: float
    offset: float
    total: float


def detection_loss_terms(
    pred_score_map: np.ndarray,
    pred_size_map: np.ndarray,
    pred_offset_map: np.ndarray,
    gts: list,
    cfg: TrainConfig,
) -> DetectionLossTerms:
    """Score / size / offset losses against targets built from the objects.

    The size target per object is its four distances from center to the box
    sides, the offset target is the quantization remainder of the center on
    the grid; both use L1 at the object's assigned cell. The score loss is
    the penalty-reduced pixelwise focal loss against the Gaussian heatmap.
    With no objects every term is 0 by convention.
    """
    score_map = np.asarray(pred_score_map, dtype=np.float64)
    size_map = np.asarray(pred_size_map, dtype=np.float64)
    offset_map = np.asarray(pred_offset_map, dtype=np.float64)
    if score_map.ndim != 2:
        raise ConfigError("score map must be 2-d (grid_h, grid_w)")
    grid_h, grid_w = score_map.shape
    if size_map.shape != (grid_h, grid_w, 4):
        raise ConfigError(f"size map shape {size_map.shape} != {(grid_h, grid_w, 4)}")
    if offset_map.shape != (grid_h, grid_w, 2):
        raise ConfigError(f"offset map shape {offset_map.shape} != {(grid_h, grid_w, 2)}")
    if not gts:
        return DetectionLossTerms(0.0, 0.0, 0.0, 0.0)

    stride = 4
    heatmap = gen_heatmap(
        gts, grid_h, grid_w, stride, min_overlap=cfg.heatmap_min_overlap,
        clamp=cfg.heatmap_clamp,
    )
    target = heatmap.grid
    pred = np.clip(score_map, FOCAL_EPS, 1.0 - FOCAL_EPS)
    peak = target >= 1.0
    pos_term = ((1.0 - pred) ** 2) * np.log(pred)
    neg_term = ((1.0 - target) ** cfg.score_loss_beta) * (pred**2) * np.log(1.0 - pred)
    loss_score = -float(np.where(peak, pos_term, neg_term).sum())

    size_err = 0.0
    off_err = 0.0
    assigned = 0
    for gt in gts:
        cx, cy = gt.box.center()
        gx = int(cx / stride)
        gy = int(cy / stride)
        if not (0 <= gx < grid_w and 0 <= gy < grid_h):
            continue
        assigned += 1
        target_size = np.array(
            [cx - gt.box.x_left, gt.box.x_right - cx, cy - gt.box.y_top, gt.box.y_bottom - cy]
        )
        size_err += float(np.abs(size_map[gy, gx] - target_size).mean())
        target_off = np.array([cx / stride - gx, cy / stride - gy])
        off_err += float(np.abs(offset_map[gy, gx] - target_off).mean())
    if assigned == 0:
        return DetectionLossTerms(0.0, 0.0, 0.0, 0.0)
    loss_score /= assigned
    loss_size = size_err / assigned
    loss_off = off_err / assigned
    total = loss_score + cfg.w_size * loss_size + cfg.w_off * loss_off
    return DetectionLossTerms(loss_score, loss_size, loss_off, total)
