import numpy as np
import pytest

from graphtrack import (
    BBox,
    Detection,
    GtObject,
    TrackerConfig,
    TrainConfig,
    build_frame_pair_graph,
)
from graphtrack import mpn
from graphtrack.labels import NodeLabels, assign_edge_labels
from graphtrack.training import (
    PairLabels,
    TrainingError,
    TrainingPair,
    _batch_loss_and_gradients,
    _loss_and_gradients,
    _merge_dataset,
    association_gradients,
    association_loss_value,
    build_training_pairs,
    dataset_loss,
    label_frame_pair,
    train_loop,
)

CFG = TrackerConfig(d_node=4, d_edge=4, edges_per_criterion=2)


def rand_det(rng, frame=0, dim=4):
    x, y = rng.uniform(0, 80, size=2)
    w, h = rng.uniform(5, 18, size=2)
    return Detection(frame, BBox(x, y, x + w, y + h), float(rng.uniform(0.2, 0.95)),
                     rng.normal(size=dim))


def random_labeled_graph(rng, n1=None, n2=None):
    n1 = n1 or int(rng.integers(2, 5))
    n2 = n2 or int(rng.integers(2, 5))
    graph = build_frame_pair_graph(
        [rand_det(rng) for _ in range(n1)], [rand_det(rng, 1) for _ in range(n2)], CFG
    )
    ny1 = rng.integers(0, 2, size=n1)
    ny2 = rng.integers(0, 2, size=n2)
    l1 = NodeLabels(ny=ny1, gt_ids=np.where(ny1 == 1, rng.integers(1, 4, n1), -1))
    l2 = NodeLabels(ny=ny2, gt_ids=np.where(ny2 == 1, rng.integers(1, 4, n2), -1))
    labels = PairLabels(l1, l2, assign_edge_labels(l1, l2, graph))
    return TrainingPair(graph, labels)


class TestGradients:
    def finite_difference_check(self, pair, params, cfg, n_iter, h=1e-5,
                                rtol=1e-3, atol=1e-6):
        grads = association_gradients(pair.graph, params, pair.labels, cfg, n_iter)
        for (name, arr), (_, garr) in zip(params.tensors(), grads.tensors()):
            flat, gflat = arr.ravel(), garr.ravel()
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + h
                up = association_loss_value(pair.graph, params, pair.labels, cfg, n_iter)
                flat[idx] = orig - h
                down = association_loss_value(pair.graph, params, pair.labels, cfg, n_iter)
                flat[idx] = orig
                fd = (up - down) / (2 * h)
                assert abs(fd - gflat[idx]) <= atol + rtol * max(abs(fd), abs(gflat[idx])), (
                    f"{name}[{idx}]: analytic {gflat[idx]}, finite-difference {fd}"
                )

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        cfg = TrainConfig()
        for n_iter in (0, 1, 2):
            pair = random_labeled_graph(rng)
            params = mpn.init_parameters(n_iter + 10, 4, 4)
            self.finite_difference_check(pair, params, cfg, n_iter)

    def test_node_weight_scales_node_gradient_contribution(self):
        rng = np.random.default_rng(1)
        pair = random_labeled_graph(rng)
        if pair.labels.labels_t2.ny.sum() == 0:
            pair.labels.labels_t2.ny[0] = 1
        params = mpn.init_parameters(3, 4, 4)
        base = association_gradients(pair.graph, params, pair.labels,
                                     TrainConfig(w_edge=0.0, w_node=10.0), 2)
        double = association_gradients(pair.graph, params, pair.labels,
                                       TrainConfig(w_edge=0.0, w_node=20.0), 2)
        for (_, a), (_, b) in zip(base.tensors(), double.tensors()):
            assert np.allclose(2.0 * a, b, rtol=1e-12, atol=1e-15)

    def test_saturated_correct_labels_give_tiny_gradients(self):
        rng = np.random.default_rng(2)
        pair = random_labeled_graph(rng)
        # all-positive labels, classifier bias forced deep into "positive"
        pair.labels.labels_t1.ny[:] = 1
        pair.labels.labels_t2.ny[:] = 1
        pair.labels.labels_t1.gt_ids[:] = np.arange(len(pair.labels.labels_t1.ny)) + 1
        pair.labels.labels_t2.gt_ids[:] = np.arange(len(pair.labels.labels_t2.ny)) + 1
        for key in pair.labels.edge_labels:
            pair.labels.edge_labels[key] = 1
        params = mpn.init_parameters(4, 4, 4)
        params.edge_cls_weight[:] = 0.0
        params.node_cls_weight[:] = 0.0
        params.edge_cls_bias[:] = 30.0
        params.node_cls_bias[:] = 30.0
        grads = association_gradients(pair.graph, params, pair.labels, TrainConfig(), 1)
        for _, g in grads.tensors():
            assert np.max(np.abs(g)) < 1e-8


class TestMergedBatch:
    def test_merged_equals_mean_of_pairs(self):
        rng = np.random.default_rng(5)
        cfg = TrainConfig(w_edge=1.0)
        dataset = [random_labeled_graph(rng) for _ in range(4)]
        params = mpn.init_parameters(0, 4, 4)
        losses = []
        total = params.zeros_like()
        for pair in dataset:
            loss, grads = _loss_and_gradients(pair.graph, params, pair.labels, cfg, 2)
            losses.append(loss)
            total.add_scaled(grads, 1.0 / len(dataset))
        batch = _merge_dataset(dataset, cfg)
        merged_loss, merged_grads = _batch_loss_and_gradients(batch, params, cfg, 2)
        assert merged_loss == pytest.approx(float(np.mean(losses)), rel=1e-12)
        for (name, a), (_, b) in zip(total.tensors(), merged_grads.tensors()):
            assert np.allclose(a, b, rtol=1e-9, atol=1e-12), name


class TestTrainLoop:
    def dataset(self, rng, n=4):
        return [random_labeled_graph(rng) for _ in range(n)]

    def test_zero_steps_leaves_params_unchanged(self):
        rng = np.random.default_rng(6)
        data = self.dataset(rng)
        params = mpn.init_parameters(0, 4, 4)
        out, trace = train_loop(data, params, TrainConfig(), 0)
        assert trace == []
        for (_, a), (_, b) in zip(params.tensors(), out.tensors()):
            assert np.array_equal(a, b)

    def test_zero_learning_rate_constant_trace(self):
        rng = np.random.default_rng(7)
        data = self.dataset(rng)
        params = mpn.init_parameters(0, 4, 4)
        _, trace = train_loop(data, params, TrainConfig(learning_rate=0.0), 5)
        assert len(set(trace)) == 1

    def test_loss_decreases(self):
        rng = np.random.default_rng(8)
        data = self.dataset(rng, n=6)
        params = mpn.init_parameters(0, 4, 4)
        trained, trace = train_loop(data, params, TrainConfig(learning_rate=0.01), 60,
                                    n_iter=1)
        assert trace[-1] < 0.5 * trace[0]
        assert dataset_loss(data, trained, TrainConfig(), n_iter=1) <= trace[0]

    def test_input_params_not_mutated(self):
        rng = np.random.default_rng(9)
        data = self.dataset(rng)
        params = mpn.init_parameters(0, 4, 4)
        snapshot = mpn.save_parameters(params)
        train_loop(data, params, TrainConfig(), 3)
        assert mpn.save_parameters(params) == snapshot

    def test_non_finite_loss_names_step(self):
        rng = np.random.default_rng(10)
        data = self.dataset(rng)
        params = mpn.init_parameters(0, 4, 4)
        params.edge_cls_weight[0] = np.nan
        with pytest.raises(TrainingError, match="step 0"):
            train_loop(data, params, TrainConfig(), 2)

    def test_sgd_option(self):
        rng = np.random.default_rng(11)
        data = self.dataset(rng)
        params = mpn.init_parameters(0, 4, 4)
        out, trace = train_loop(data, params, TrainConfig(optimizer="sgd"), 3)
        assert len(trace) == 3

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            train_loop([], mpn.init_parameters(0, 4, 4), TrainConfig(), 1)


class TestPairBuilding:
    def test_label_frame_pair_alignment(self):
        rng = np.random.default_rng(12)
        d1 = [rand_det(rng) for _ in range(3)]
        d2 = [rand_det(rng, 1) for _ in range(3)]
        gts1 = [GtObject(id=1, box=d1[0].box)]
        gts2 = [GtObject(id=1, box=d2[1].box)]
        pair = label_frame_pair(d1, d2, gts1, gts2, CFG, TrainConfig())
        assert pair.labels.labels_t1.ny[0] == 1
        assert pair.labels.labels_t2.ny[1] == 1
        key = (0, 1)
        if key in pair.labels.edge_labels:
            assert pair.labels.edge_labels[key] == 1

    def test_build_training_pairs_deterministic(self):
        from graphtrack.synth import SequenceSpec, synth_generate

        spec = SequenceSpec(n_frames=30, n_identities=4, embedding_dim=4,
                            image_w=300, image_h=300)
        seq = synth_generate(spec, seed=0)
        a = build_training_pairs([seq], CFG, TrainConfig(), np.random.default_rng(3), 6,
                                 max_gap=5)
        b = build_training_pairs([seq], CFG, TrainConfig(), np.random.default_rng(3), 6,
                                 max_gap=5)
        assert len(a) == len(b) == 6
        for pa, pb in zip(a, b):
            assert pa.labels.edge_labels == pb.labels.edge_labels
