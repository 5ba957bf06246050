"""Pseudo-label assignment: detections vs annotated objects by IoU matching."""

from dataclasses import dataclass

import numpy as np

from .assignment import FORBIDDEN, ScoreMatrix, hungarian_max
from .core import BBox, iou
from .graph import SparseGraph, graph_pair_keys


@dataclass(frozen=True)
class GtObject:
    """One annotated object: identity, box, and visibility in [0, 1]."""

    id: int
    box: BBox
    visibility: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.visibility <= 1.0:
            raise ValueError(f"visibility {self.visibility} outside [0, 1]")


@dataclass
class NodeLabels:
    """Per-node binary label plus the assigned ground-truth id (-1 if none)."""

    ny: np.ndarray
    gt_ids: np.ndarray

    def __len__(self) -> int:
        return len(self.ny)


def assign_pseudo_labels(detections: list, gts: list, iou_threshold: float) -> NodeLabels:
    """Match detections to ground truth with IoU-maximal assignment.

    Matched pairs at or above the threshold get label 1 and the object's
    id; everything else is background. The assignment is injective on both
    sides, so one object can vouch for at most one detection.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError("iou_threshold must be in (0, 1]")
    n = len(detections)
    ny = np.zeros(n, dtype=np.int64)
    gt_ids = np.full(n, -1, dtype=np.int64)
    if n == 0 or len(gts) == 0:
        return NodeLabels(ny=ny, gt_ids=gt_ids)
    scores = np.full((n, len(gts)), FORBIDDEN)
    for i, det in enumerate(detections):
        for j, gt in enumerate(gts):
            value = iou(det.box, gt.box)
            if value > 0.0:
                scores[i, j] = value
    matches = hungarian_max(ScoreMatrix(scores))
    for i, j in matches:
        if scores[i, j] >= iou_threshold:
            ny[i] = 1
            gt_ids[i] = gts[j].id
    return NodeLabels(ny=ny, gt_ids=gt_ids)


def assign_edge_labels(
    labels_t1: NodeLabels, labels_t2: NodeLabels, graph: SparseGraph
) -> dict:
    """Per materialized pair: 1 when both endpoints carry the same gt id."""
    edge_labels = {}
    for i, j in graph_pair_keys(graph):
        positive = (
            labels_t1.ny[i] == 1
            and labels_t2.ny[j] == 1
            and labels_t1.gt_ids[i] == labels_t2.gt_ids[j]
        )
        edge_labels[(i, j)] = 1 if positive else 0
    return edge_labels
