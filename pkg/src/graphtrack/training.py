"""Association-branch training: exact gradients and a small descent loop.

Gradients are computed by reverse-mode chain rule through the classifiers
and every message-passing round (see mpn.backward_from_scores); the loop is
plain full-batch gradient descent with a fixed learning rate, deterministic
given the seed and dataset order. For speed the loop evaluates the whole
batch as one disjoint-union graph, which is mathematically identical to
summing per-pair gradients because messages never cross components.
"""

from dataclasses import dataclass

import numpy as np

from . import mpn
from .core import TrackerConfig, TrainConfig
from .graph import SparseGraph, build_frame_pair_graph, top_k
from .labels import NodeLabels, assign_edge_labels, assign_pseudo_labels
from .losses import _focal_grad_vec, _focal_vec


class TrainingError(RuntimeError):
    """Raised when optimization produces a non-finite loss."""


@dataclass
class PairLabels:
    labels_t1: NodeLabels
    labels_t2: NodeLabels
    edge_labels: dict  # (t1 index, t2 index) -> 0/1


@dataclass
class TrainingPair:
    graph: SparseGraph
    labels: PairLabels


def _label_arrays(pair_keys: list, labels: PairLabels):
    ny1 = labels.labels_t1.ny
    ny2 = labels.labels_t2.ny
    ey = np.array([labels.edge_labels[key] for key in pair_keys], dtype=np.int64)
    eligible = np.array([ny1[i] == 1 or ny2[j] == 1 for i, j in pair_keys], dtype=bool)
    return ey, eligible


def _loss_and_gradients(
    graph,
    params: mpn.MpnParameters,
    labels: PairLabels,
    cfg: TrainConfig,
    n_iter: int,
):
    es, ns, tape = mpn.forward_with_tape(graph, params, n_iter)
    ey, eligible = _label_arrays(tape.prep.pair_keys, labels)
    ny2 = np.asarray(labels.labels_t2.ny)

    n_eligible = int(eligible.sum())
    if n_eligible:
        per_pair = _focal_vec(es, ey, cfg.focal_gamma, cfg.focal_alpha)
        loss_edge = float(per_pair[eligible].sum() / n_eligible)
        d_es = np.where(
            eligible,
            cfg.w_edge * _focal_grad_vec(es, ey, cfg.focal_gamma, cfg.focal_alpha) / n_eligible,
            0.0,
        )
    else:
        loss_edge = 0.0
        d_es = np.zeros_like(es)

    n_pos = int(ny2.sum())
    if n_pos:
        loss_node = float(_focal_vec(ns, ny2, cfg.focal_gamma, cfg.focal_alpha).sum() / n_pos)
        d_ns = cfg.w_node * _focal_grad_vec(ns, ny2, cfg.focal_gamma, cfg.focal_alpha) / n_pos
    else:
        loss_node = 0.0
        d_ns = np.zeros_like(ns)

    loss = cfg.w_edge * loss_edge + cfg.w_node * loss_node
    grads = mpn.backward_from_scores(tape, params, d_es, d_ns)
    return loss, grads


def association_loss_value(
    graph,
    params: mpn.MpnParameters,
    labels: PairLabels,
    cfg: TrainConfig,
    n_iter: int,
) -> float:
    """Loss only, via the plain forward pass (used by finite differences)."""
    edge_scores, ns = mpn.forward(graph, params, n_iter)
    pair_keys = sorted(edge_scores)
    es = np.array([edge_scores[k] for k in pair_keys])
    ey, eligible = _label_arrays(pair_keys, labels)
    ny2 = np.asarray(labels.labels_t2.ny)
    n_eligible = int(eligible.sum())
    loss_edge = (
        float(_focal_vec(es, ey, cfg.focal_gamma, cfg.focal_alpha)[eligible].sum() / n_eligible)
        if n_eligible
        else 0.0
    )
    n_pos = int(ny2.sum())
    loss_node = (
        float(_focal_vec(ns, ny2, cfg.focal_gamma, cfg.focal_alpha).sum() / n_pos)
        if n_pos
        else 0.0
    )
    return cfg.w_edge * loss_edge + cfg.w_node * loss_node


def association_gradients(
    graph,
    params: mpn.MpnParameters,
    labels: PairLabels,
    cfg: TrainConfig,
    n_iter: int,
) -> mpn.MpnParameters:
    """Exact analytic gradient of the association loss for every tensor."""
    _, grads = _loss_and_gradients(graph, params, labels, cfg, n_iter)
    return grads


@dataclass
class _MergedBatch:
    """Dataset flattened onto one disjoint-union graph.

    Per-pair loss normalizers are baked into per-score weights so a single
    backward pass yields the gradient of the mean per-pair loss.
    """

    prep: mpn.PreparedGraph
    ey: np.ndarray
    eligible: np.ndarray
    edge_weight: np.ndarray  # w_edge / (n_pairs * n_eligible of owning pair)
    ny2: np.ndarray
    node_weight: np.ndarray  # w_node / (n_pairs * n_pos of owning pair)
    edge_owner: np.ndarray  # pair index per undirected edge pair
    node_owner: np.ndarray  # pair index per t2 node
    n_pairs: int


def _merge_dataset(dataset: list, cfg: TrainConfig) -> _MergedBatch:
    preps = [mpn.prepare_graph(pair.graph) for pair in dataset]
    merged = mpn.merge_prepared(preps)
    n_pairs = len(dataset)
    ey_parts = []
    eligible_parts = []
    edge_weight_parts = []
    ny2_parts = []
    node_weight_parts = []
    edge_owner = []
    node_owner = []
    for idx, (pair, prep) in enumerate(zip(dataset, preps)):
        ey, eligible = _label_arrays(prep.pair_keys, pair.labels)
        n_eligible = int(eligible.sum())
        scale_e = cfg.w_edge / (n_pairs * n_eligible) if n_eligible else 0.0
        ey_parts.append(ey)
        eligible_parts.append(eligible)
        edge_weight_parts.append(np.where(eligible, scale_e, 0.0))
        edge_owner.append(np.full(len(prep.pair_keys), idx, dtype=np.intp))
        ny2 = np.asarray(pair.labels.labels_t2.ny)
        n_pos = int(ny2.sum())
        scale_n = cfg.w_node / (n_pairs * n_pos) if n_pos else 0.0
        ny2_parts.append(ny2)
        node_weight_parts.append(np.full(len(ny2), scale_n))
        node_owner.append(np.full(len(ny2), idx, dtype=np.intp))
    return _MergedBatch(
        prep=merged,
        ey=np.concatenate(ey_parts),
        eligible=np.concatenate(eligible_parts),
        edge_weight=np.concatenate(edge_weight_parts),
        ny2=np.concatenate(ny2_parts),
        node_weight=np.concatenate(node_weight_parts),
        edge_owner=np.concatenate(edge_owner),
        node_owner=np.concatenate(node_owner),
        n_pairs=n_pairs,
    )


def _batch_loss_and_gradients(
    batch: _MergedBatch, params: mpn.MpnParameters, cfg: TrainConfig, n_iter: int
):
    es, ns, tape = mpn.forward_with_tape(batch.prep, params, n_iter)
    focal_e = _focal_vec(es, batch.ey, cfg.focal_gamma, cfg.focal_alpha)
    focal_n = _focal_vec(ns, batch.ny2, cfg.focal_gamma, cfg.focal_alpha)
    # edge_weight / node_weight already hold w / (n_pairs * normalizer), so
    # these sums are the mean over pairs of the per-pair association loss.
    loss = float((focal_e * batch.edge_weight).sum() + (focal_n * batch.node_weight).sum())
    d_es = batch.edge_weight * _focal_grad_vec(es, batch.ey, cfg.focal_gamma, cfg.focal_alpha)
    d_ns = batch.node_weight * _focal_grad_vec(ns, batch.ny2, cfg.focal_gamma, cfg.focal_alpha)
    grads = mpn.backward_from_scores(tape, params, d_es, d_ns)
    return loss, grads


class _AdamState:
    """Per-tensor first/second moment accumulators (deterministic)."""

    def __init__(self, params: mpn.MpnParameters):
        self.m = params.zeros_like()
        self.v = params.zeros_like()
        self.t = 0

    def update(self, params, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.t += 1
        bc1 = 1.0 - beta1**self.t
        bc2 = 1.0 - beta2**self.t
        for (_, p), (_, g), (_, m), (_, v) in zip(
            params.tensors(), grads.tensors(), self.m.tensors(), self.v.tensors()
        ):
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def train_loop(
    dataset: list,
    params: mpn.MpnParameters,
    cfg: TrainConfig,
    steps: int,
    n_iter: int = 3,
    batch_size: int = None,
) -> tuple:
    """Gradient descent over labeled frame pairs.

    Each step takes the exact gradient of the mean per-pair association
    loss over its batch and applies one update (Adam by default, plain
    descent with cfg.optimizer = "sgd"). With the default batch_size of
    None every step sees the whole dataset; otherwise fixed-size chunks
    are cycled in dataset order, which adds the gradient noise that helps
    leave plateaus while staying fully deterministic. Returns (trained
    params, loss trace with one entry per step). The input parameter set
    is not mutated. A non-finite loss aborts with the offending step named.
    """
    cfg.validate()
    params = params.copy()
    if steps == 0:
        return params, []
    if not dataset:
        raise ValueError("cannot train on an empty dataset")
    if batch_size is None or batch_size >= len(dataset):
        batches = [_merge_dataset(dataset, cfg)]
    else:
        if batch_size < 1:
            raise ValueError("batch_size must be positive")
        batches = [
            _merge_dataset(dataset[lo : lo + batch_size], cfg)
            for lo in range(0, len(dataset), batch_size)
        ]
    adam = _AdamState(params) if cfg.optimizer == "adam" else None
    trace = []
    for step_idx in range(steps):
        batch = batches[step_idx % len(batches)]
        loss, grads = _batch_loss_and_gradients(batch, params, cfg, n_iter)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at step {step_idx}")
        trace.append(loss)
        if adam is not None:
            adam.update(params, grads, cfg.learning_rate)
        else:
            params.add_scaled(grads, -cfg.learning_rate)
    return params, trace


def dataset_loss(
    dataset: list, params: mpn.MpnParameters, cfg: TrainConfig, n_iter: int = 3
) -> float:
    """Mean association loss over the dataset (no gradients)."""
    losses = [
        association_loss_value(pair.graph, params, pair.labels, cfg, n_iter)
        for pair in dataset
    ]
    return float(np.mean(losses)) if losses else 0.0


def edge_accuracy(
    dataset: list, params: mpn.MpnParameters, n_iter: int = 3, threshold: float = 0.5
) -> float:
    """Fraction of materialized pairs whose thresholded score matches its
    label, over all pairs of all graphs."""
    hits = 0
    total = 0
    for pair in dataset:
        edge_scores, _ = mpn.forward(pair.graph, params, n_iter)
        for key, score in edge_scores.items():
            total += 1
            hits += int((score >= threshold) == bool(pair.labels.edge_labels[key]))
    return hits / total if total else 1.0


def label_frame_pair(
    dets_t1: list,
    dets_t2: list,
    gts_t1: list,
    gts_t2: list,
    tracker_cfg: TrackerConfig,
    train_cfg: TrainConfig,
) -> TrainingPair:
    """Graph plus pseudo labels for one (t1, t2) detection pair."""
    graph = build_frame_pair_graph(dets_t1, dets_t2, tracker_cfg)
    labels_t1 = assign_pseudo_labels(dets_t1, gts_t1, train_cfg.iou_label_threshold)
    labels_t2 = assign_pseudo_labels(dets_t2, gts_t2, train_cfg.iou_label_threshold)
    edge_labels = assign_edge_labels(labels_t1, labels_t2, graph)
    return TrainingPair(graph, PairLabels(labels_t1, labels_t2, edge_labels))


def build_training_pairs(
    sequences: list,
    tracker_cfg: TrackerConfig,
    train_cfg: TrainConfig,
    rng: np.random.Generator,
    n_pairs: int,
    max_gap: int = 25,
) -> list:
    """Sample labeled frame pairs from (detections, ground-truth) sequences.

    Frame gaps are drawn uniformly from [1, max_gap] so the classifier also
    sees the displacement statistics of long-gap re-association, mirroring
    how the missing store is used at inference time.
    """
    pairs = []
    attempts = 0
    while len(pairs) < n_pairs and attempts < 50 * n_pairs:
        attempts += 1
        dets, gts = sequences[int(rng.integers(len(sequences)))]
        gap = int(rng.integers(1, max_gap + 1))
        if len(dets) <= gap:
            continue
        t2 = int(rng.integers(gap, len(dets)))
        t1 = t2 - gap
        d1 = top_k(dets[t1], tracker_cfg.K)
        d2 = top_k(dets[t2], tracker_cfg.K)
        if not d1 or not d2:
            continue
        pair = label_frame_pair(d1, d2, gts[t1], gts[t2], tracker_cfg, train_cfg)
        if not pair.labels.edge_labels:
            continue
        pairs.append(pair)
    if len(pairs) < n_pairs:
        raise ValueError(f"could only sample {len(pairs)} of {n_pairs} training pairs")
    return pairs
