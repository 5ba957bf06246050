import itertools

import numpy as np
import pytest

from graphtrack import (
    BBox,
    Detection,
    GtObject,
    TrackerConfig,
    assign_edge_labels,
    assign_pseudo_labels,
    build_frame_pair_graph,
    iou,
)
from graphtrack.graph import graph_pair_keys
from graphtrack.labels import NodeLabels


def det(x, y, w=10.0, h=10.0, score=0.9):
    return Detection(0, BBox(x, y, x + w, y + h), score, np.ones(4))


def gt(oid, x, y, w=10.0, h=10.0):
    return GtObject(id=oid, box=BBox(x, y, x + w, y + h), visibility=1.0)


def brute_force_labels(detections, gts, threshold):
    """Exhaustive injective assignment maximizing total IoU, then threshold."""
    n, m = len(detections), len(gts)
    best_total, best_map = -1.0, {}
    indices = list(range(m)) + [-1] * n
    for combo in itertools.permutations(indices, n):
        if len([c for c in combo if c >= 0]) != len({c for c in combo if c >= 0}):
            continue
        total = sum(
            iou(detections[i].box, gts[c].box) for i, c in enumerate(combo) if c >= 0
        )
        if total > best_total + 1e-15:
            best_total, best_map = total, dict(enumerate(combo))
    ny = np.zeros(n, dtype=int)
    ids = np.full(n, -1, dtype=int)
    for i, c in best_map.items():
        if c >= 0 and iou(detections[i].box, gts[c].box) >= threshold:
            ny[i] = 1
            ids[i] = gts[c].id
    return ny, ids


class TestPseudoLabels:
    def test_exact_box_match(self):
        labels = assign_pseudo_labels([det(0, 0)], [gt(42, 0, 0)], 0.5)
        assert labels.ny.tolist() == [1]
        assert labels.gt_ids.tolist() == [42]

    def test_below_threshold_filtered(self):
        # overlap 4x10 over union 16x10 -> iou = 0.25 < 0.5
        labels = assign_pseudo_labels([det(0, 0)], [gt(7, 6, 0)], 0.5)
        assert labels.ny.tolist() == [0]
        assert labels.gt_ids.tolist() == [-1]

    def test_boundary_iou_passes(self):
        # iou exactly 0.5: shifts that give inter/union = 0.5
        d = det(0, 0, w=10, h=10)
        g = gt(3, 0, 0, w=10, h=20)
        assert iou(d.box, g.box) == pytest.approx(0.5)
        labels = assign_pseudo_labels([d], [g], 0.5)
        assert labels.ny.tolist() == [1]

    def test_injective(self):
        dets = [det(0, 0), det(1, 1)]
        gts = [gt(9, 0.5, 0.5)]
        labels = assign_pseudo_labels(dets, gts, 0.3)
        assert labels.ny.sum() == 1

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(31)
        for _ in range(60):
            n = int(rng.integers(1, 5))
            m = int(rng.integers(1, 4))
            dets = [det(rng.uniform(0, 30), rng.uniform(0, 30), w=rng.uniform(4, 14),
                        h=rng.uniform(4, 14)) for _ in range(n)]
            gts = [gt(j + 1, rng.uniform(0, 30), rng.uniform(0, 30), w=rng.uniform(4, 14),
                      h=rng.uniform(4, 14)) for j in range(m)]
            labels = assign_pseudo_labels(dets, gts, 0.5)
            ny, ids = brute_force_labels(dets, gts, 0.5)
            assert labels.ny.tolist() == ny.tolist()
            assert labels.gt_ids.tolist() == ids.tolist()

    def test_empty_inputs(self):
        labels = assign_pseudo_labels([], [gt(1, 0, 0)], 0.5)
        assert len(labels) == 0
        labels = assign_pseudo_labels([det(0, 0)], [], 0.5)
        assert labels.ny.tolist() == [0]


class TestEdgeLabels:
    def graph(self):
        cfg = TrackerConfig(d_node=4, d_edge=4, edges_per_criterion=3)
        d1 = [det(0, 0), det(30, 30)]
        d2 = [det(1, 1), det(31, 31), det(60, 60)]
        return build_frame_pair_graph(d1, d2, cfg), d1, d2

    def test_same_id_positive(self):
        g, d1, d2 = self.graph()
        l1 = NodeLabels(ny=np.array([1, 0]), gt_ids=np.array([7, -1]))
        l2 = NodeLabels(ny=np.array([1, 0, 0]), gt_ids=np.array([7, -1, -1]))
        ey = assign_edge_labels(l1, l2, g)
        assert ey[(0, 0)] == 1

    def test_positive_vs_background_zero(self):
        g, _, _ = self.graph()
        l1 = NodeLabels(ny=np.array([1, 0]), gt_ids=np.array([7, -1]))
        l2 = NodeLabels(ny=np.array([0, 0, 0]), gt_ids=np.array([-1, -1, -1]))
        ey = assign_edge_labels(l1, l2, g)
        assert all(v == 0 for v in ey.values())

    def test_different_ids_zero(self):
        g, _, _ = self.graph()
        l1 = NodeLabels(ny=np.array([1, 0]), gt_ids=np.array([7, -1]))
        l2 = NodeLabels(ny=np.array([1, 0, 0]), gt_ids=np.array([8, -1, -1]))
        ey = assign_edge_labels(l1, l2, g)
        assert ey[(0, 0)] == 0

    def test_covers_every_materialized_pair(self):
        g, _, _ = self.graph()
        l1 = NodeLabels(ny=np.zeros(2, dtype=int), gt_ids=np.full(2, -1))
        l2 = NodeLabels(ny=np.zeros(3, dtype=int), gt_ids=np.full(3, -1))
        ey = assign_edge_labels(l1, l2, g)
        assert set(ey) == set(graph_pair_keys(g))
