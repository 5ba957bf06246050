"""Sparse bipartite graph construction between consecutive frames.

Nodes on the t1 side are active tracklets followed by stored missing
tracklets (or plain detections when building training pairs); t2 nodes are
the current frame's top-K detections. Each t1 node is connected to a small
candidate set selected under three criteria (center distance, cosine
similarity, IoU), and every selected pair is materialized in both directions
with direction-aware raw relational features.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import BBox, Detection, Tracklet, TrackerConfig, cosine_similarity, iou

# Substitute for log size ratios when a box side is degenerate (zero width
# or height); keeps features finite without aborting.
LOG_RATIO_CLAMP = 20.0


class NodeSide(enum.Enum):
    T1 = "t1"
    T2 = "t2"
    MISSING = "missing"


@dataclass(frozen=True)
class NodeRef:
    side: NodeSide
    index: int


@dataclass(frozen=True)
class EdgeRawFeatures:
    """Direction-aware pairwise features of a source/destination node pair.

    Reversing the direction negates dx, dy and the log size ratios while
    iou and sim are symmetric.
    """

    dx: float
    dy: float
    log_w_ratio: float
    log_h_ratio: float
    iou: float
    sim: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.dx, self.dy, self.log_w_ratio, self.log_h_ratio, self.iou, self.sim],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class GraphEdge:
    src: NodeRef
    dst: NodeRef
    raw: EdgeRawFeatures


@dataclass
class SparseGraph:
    """Directed sparse graph over one frame transition.

    nodes_t1 holds (detection, originating tracklet or None) for active
    tracklets first, then missing tracklets; n_active_t1 marks the split.
    Every selected pair appears as exactly one t1->t2 and one t2->t1 edge.
    """

    nodes_t1: list
    nodes_t2: list
    edges: list
    n_active_t1: int

    def t1_combined_index(self, ref: NodeRef) -> int:
        if ref.side is NodeSide.T1:
            return ref.index
        if ref.side is NodeSide.MISSING:
            return self.n_active_t1 + ref.index
        raise ValueError(f"{ref} is not a t1-side reference")


def _log_ratio(a: float, b: float) -> float:
    if a > 0.0 and b > 0.0:
        return float(np.clip(math.log(a / b), -LOG_RATIO_CLAMP, LOG_RATIO_CLAMP))
    if a == b:
        return 0.0
    return LOG_RATIO_CLAMP if a > b else -LOG_RATIO_CLAMP


def raw_edge_features(src: Detection, dst: Detection) -> EdgeRawFeatures:
    """Six raw relational features for the directed pair src -> dst."""
    sx, sy = src.box.center()
    dx_, dy_ = dst.box.center()
    return EdgeRawFeatures(
        dx=sx - dx_,
        dy=sy - dy_,
        log_w_ratio=_log_ratio(src.box.width(), dst.box.width()),
        log_h_ratio=_log_ratio(src.box.height(), dst.box.height()),
        iou=iou(src.box, dst.box),
        sim=cosine_similarity(src.embedding, dst.embedding),
    )


def top_k(detections: list, k: int) -> list:
    """The min(k, n) highest-scored detections, descending score.

    Ties break by ascending input index so output order is deterministic.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].score, i))
    return [detections[i] for i in order[:k]]


def select_neighbors(src: Detection, candidates: list, m: int) -> set:
    """Candidate indices selected by the three proximity criteria.

    Union of the m nearest by center distance, m highest by cosine
    similarity, and m highest by IoU; per-criterion ties break by ascending
    candidate index.
    """
    n = len(candidates)
    if n == 0:
        return set()
    if m >= n:
        return set(range(n))
    sx, sy = src.box.center()
    dist = []
    sim = []
    overlap = []
    for cand in candidates:
        cx, cy = cand.box.center()
        dist.append(math.hypot(sx - cx, sy - cy))
        sim.append(cosine_similarity(src.embedding, cand.embedding))
        overlap.append(iou(src.box, cand.box))
    by_dist = sorted(range(n), key=lambda i: (dist[i], i))[:m]
    by_sim = sorted(range(n), key=lambda i: (-sim[i], i))[:m]
    by_iou = sorted(range(n), key=lambda i: (-overlap[i], i))[:m]
    return set(by_dist) | set(by_sim) | set(by_iou)


def _tracklet_node(trk: Tracklet) -> Detection:
    # Missing tracklets keep their last box; no motion extrapolation. The
    # node feature is the smoothed embedding's direction: blending shrinks
    # the norm below the unit length detections carry, and the network is
    # only ever trained on unit-norm features (cosine terms are unaffected).
    emb = trk.smoothed_embedding
    norm = float(np.linalg.norm(emb))
    if norm > 0.0:
        emb = emb / norm
    return Detection(
        frame=trk.last_detection.frame,
        box=trk.last_detection.box,
        score=trk.last_score,
        embedding=emb,
    )


def _connect(graph: SparseGraph, cfg: TrackerConfig):
    for i, (det_i, _origin) in enumerate(graph.nodes_t1):
        if i < graph.n_active_t1:
            ref_i = NodeRef(NodeSide.T1, i)
        else:
            ref_i = NodeRef(NodeSide.MISSING, i - graph.n_active_t1)
        neighbors = select_neighbors(det_i, graph.nodes_t2, cfg.edges_per_criterion)
        for j in sorted(neighbors):
            det_j = graph.nodes_t2[j]
            ref_j = NodeRef(NodeSide.T2, j)
            graph.edges.append(GraphEdge(ref_i, ref_j, raw_edge_features(det_i, det_j)))
            graph.edges.append(GraphEdge(ref_j, ref_i, raw_edge_features(det_j, det_i)))


def build_graph(
    tracklets_t1: list,
    missing: list,
    detections_t2: list,
    cfg: TrackerConfig,
) -> SparseGraph:
    """Graph for one inference step; detections_t2 must already be top-K.

    t1 nodes are active tracklets' last detections followed by the missing
    store; an empty t2 side yields a valid graph with no edges.
    """
    nodes_t1 = [(_tracklet_node(t), t) for t in tracklets_t1]
    nodes_t1 += [(_tracklet_node(t), t) for t in missing]
    graph = SparseGraph(
        nodes_t1=nodes_t1,
        nodes_t2=list(detections_t2),
        edges=[],
        n_active_t1=len(tracklets_t1),
    )
    _connect(graph, cfg)
    return graph


def build_frame_pair_graph(
    detections_t1: list,
    detections_t2: list,
    cfg: TrackerConfig,
) -> SparseGraph:
    """Graph over two detection sets, used when training on frame pairs."""
    graph = SparseGraph(
        nodes_t1=[(d, None) for d in detections_t1],
        nodes_t2=list(detections_t2),
        edges=[],
        n_active_t1=len(detections_t1),
    )
    _connect(graph, cfg)
    return graph


def graph_pair_keys(graph: SparseGraph) -> list:
    """Sorted undirected pair keys (t1 combined index, t2 index).

    Every key corresponds to one forward and one backward directed edge.
    """
    keys = set()
    for edge in graph.edges:
        if edge.src.side is NodeSide.T2:
            keys.add((graph.t1_combined_index(edge.dst), edge.src.index))
        else:
            keys.add((graph.t1_combined_index(edge.src), edge.dst.index))
    return sorted(keys)
