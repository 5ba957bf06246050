import itertools

import numpy as np
import pytest

from graphtrack import BBox, DataFormatError, GtObject, evaluate
from graphtrack.metrics import aggregate_reports
from graphtrack.tracker import TrackOutput
from graphtrack.core import iou


def gt(oid, x, y, w=10.0, h=10.0, visibility=1.0):
    return GtObject(id=oid, box=BBox(x, y, x + w, y + h), visibility=visibility)


def hyp(hid, x, y, w=10.0, h=10.0):
    return TrackOutput(id=hid, box=BBox(x, y, x + w, y + h), score=0.9, recovered=False)


def moving_gt(oid, t, speed=3.0, lane=0.0):
    return gt(oid, 5 + speed * t, 5 + lane)


class TestEvaluateBasics:
    def test_perfect_tracking(self):
        gts = [[gt(1, 3 * t, 0), gt(2, 0, 40 + t)] for t in range(10)]
        results = [[hyp(11, 3 * t, 0), hyp(12, 0, 40 + t)] for t in range(10)]
        report = evaluate(results, gts)
        assert report.mota == 1.0
        assert report.idf1 == 1.0
        assert (report.fp, report.fn, report.ids) == (0, 0, 0)
        assert report.mt == 1.0 and report.ml == 0.0

    def test_empty_results_all_fn(self):
        gts = [[gt(1, 0, 0)] for _ in range(5)]
        results = [[] for _ in range(5)]
        report = evaluate(results, gts)
        assert report.fn == 5 and report.fp == 0 and report.ids == 0
        assert report.mota == 0.0
        assert report.ml == 1.0

    def test_frame_count_mismatch_rejected(self):
        with pytest.raises(DataFormatError):
            evaluate([[]], [[], []])

    def test_mota_identity(self):
        rng = np.random.default_rng(3)
        gts, results = [], []
        for t in range(40):
            frame_gt, frame_hyp = [], []
            for oid in range(3):
                g = moving_gt(oid + 1, t, lane=30.0 * oid)
                frame_gt.append(g)
                if rng.uniform() < 0.8:
                    jitter = rng.uniform(-1, 1, size=2)
                    frame_hyp.append(
                        hyp(oid + 1, g.box.x_left + jitter[0], g.box.y_top + jitter[1])
                    )
                if rng.uniform() < 0.1:
                    frame_hyp.append(hyp(50 + t, rng.uniform(100, 200), rng.uniform(100, 200)))
            gts.append(frame_gt)
            results.append(frame_hyp)
        report = evaluate(results, gts)
        assert report.mota == pytest.approx(
            1.0 - (report.fp + report.fn + report.ids) / report.n_gt
        )

    def test_identity_swap_counts_two_switches(self):
        # two parallel tracks; hypothesis ids swap halfway through
        gts, results = [], []
        for t in range(10):
            gts.append([gt(1, 3 * t, 0), gt(2, 3 * t, 50)])
            if t < 5:
                results.append([hyp(101, 3 * t, 0), hyp(102, 3 * t, 50)])
            else:
                results.append([hyp(102, 3 * t, 0), hyp(101, 3 * t, 50)])
        report = evaluate(results, gts)
        assert report.ids == 2
        assert report.fp == 0 and report.fn == 0
        assert report.mota == pytest.approx(1.0 - 2 / 20)
        # IDF1: best bijection keeps 5 + 5 matched frames per identity pairing
        assert report.idf1 == pytest.approx(0.5)

    def test_continuity_preference_keeps_previous_match(self):
        # two hypotheses both overlap one gt; the previously matched one wins
        gts = [[gt(1, 0, 0)] for _ in range(3)]
        results = [
            [hyp(7, 0, 0)],
            [hyp(7, 1, 0), hyp(8, 0.5, 0)],
            [hyp(7, 1, 0), hyp(8, 0.5, 0)],
        ]
        report = evaluate(results, gts)
        assert report.ids == 0
        assert report.fp == 2  # the extra box on frames 1 and 2

    def test_recall_by_visibility_buckets(self):
        gts, results = [], []
        for t in range(10):
            frame = [
                gt(1, 3 * t, 0, visibility=0.1),
                gt(2, 3 * t, 50, visibility=0.5),
                gt(3, 3 * t, 100, visibility=1.0),
            ]
            gts.append(frame)
            results.append([hyp(3, 3 * t, 100)])  # only the visible one tracked
        report = evaluate(results, gts)
        assert report.recall_by_visibility["[0.0,0.3)"] == 0.0
        assert report.recall_by_visibility["[0.3,0.6)"] == 0.0
        assert report.recall_by_visibility["[0.6,1.0]"] == 1.0

    def test_mt_ml_thresholds(self):
        gts, results = [], []
        for t in range(10):
            gts.append([gt(1, 3 * t, 0), gt(2, 3 * t, 50)])
            frame = [hyp(1, 3 * t, 0)]  # id 1 always tracked
            if t < 2:  # id 2 tracked 20% of its life
                frame.append(hyp(2, 3 * t, 50))
            results.append(frame)
        report = evaluate(results, gts)
        assert report.mt == 0.5
        assert report.ml == 0.5


def brute_force_frame_match(gt_objs, hyp_objs, prev_pairs, threshold):
    matches = []
    used_gt, used_hyp = set(), set()
    gt_by_id = {o.id: k for k, o in enumerate(gt_objs)}
    hyp_by_id = {o.id: k for k, o in enumerate(hyp_objs)}
    for gid, hid in prev_pairs.items():
        gi, hj = gt_by_id.get(gid), hyp_by_id.get(hid)
        if gi is None or hj is None:
            continue
        if iou(gt_objs[gi].box, hyp_objs[hj].box) >= threshold:
            matches.append((gi, hj))
            used_gt.add(gi)
            used_hyp.add(hj)
    rest_gt = [k for k in range(len(gt_objs)) if k not in used_gt]
    rest_hyp = [k for k in range(len(hyp_objs)) if k not in used_hyp]
    best, best_total = [], -1.0
    for size in range(min(len(rest_gt), len(rest_hyp)), -1, -1):
        for gsub in itertools.combinations(rest_gt, size):
            for hperm in itertools.permutations(rest_hyp, size):
                total = 0.0
                ok = True
                for gi, hj in zip(gsub, hperm):
                    v = iou(gt_objs[gi].box, hyp_objs[hj].box)
                    if v < threshold:
                        ok = False
                        break
                    total += v
                if ok and total > best_total + 1e-12:
                    best_total = total
                    best = list(zip(gsub, hperm))
    return matches + best


class TestBruteForceAgreement:
    def test_counts_match_exhaustive_matcher(self):
        rng = np.random.default_rng(11)
        gts, results = [], []
        for t in range(25):
            frame_gt = [
                gt(oid + 1, rng.uniform(0, 60), rng.uniform(0, 60)) for oid in range(4)
            ]
            frame_hyp = []
            for oid, g in enumerate(frame_gt):
                if rng.uniform() < 0.75:
                    frame_hyp.append(
                        hyp(oid + 1, g.box.x_left + rng.uniform(-2, 2),
                            g.box.y_top + rng.uniform(-2, 2))
                    )
            if rng.uniform() < 0.4:
                frame_hyp.append(hyp(9, rng.uniform(0, 60), rng.uniform(0, 60)))
            gts.append(frame_gt)
            results.append(frame_hyp)
        report = evaluate(results, gts)

        fp = fn = ids = 0
        prev, last = {}, {}
        for frame_gt, frame_hyp in zip(gts, results):
            matches = brute_force_frame_match(frame_gt, frame_hyp, prev, 0.5)
            fp += len(frame_hyp) - len(matches)
            fn += len(frame_gt) - len(matches)
            prev = {}
            for gi, hj in matches:
                gid, hid = frame_gt[gi].id, frame_hyp[hj].id
                if gid in last and last[gid] != hid:
                    ids += 1
                last[gid] = hid
                prev[gid] = hid
        assert (report.fp, report.fn, report.ids) == (fp, fn, ids)


class TestAggregate:
    def test_counts_sum_and_mota_recomputed(self):
        gts = [[gt(1, 3 * t, 0)] for t in range(10)]
        good = evaluate([[hyp(1, 3 * t, 0)] for t in range(10)], gts)
        bad = evaluate([[] for _ in range(10)], gts)
        agg = aggregate_reports([good, bad])
        assert agg.fn == 10 and agg.n_gt == 20
        assert agg.mota == pytest.approx(1.0 - 10 / 20)
