"""Tracking evaluation: MOTA with FP/FN/IDS, IDF1, MT/ML, recall buckets.

Per-frame correspondence keeps the previous frame's matches while they still
overlap at or above the IoU threshold, then optimally matches the remainder;
identity switches are counted when a ground-truth object's matched
hypothesis id differs from the last one it ever had. IDF1 comes from a
global one-to-one pairing of ground-truth and hypothesis identities that
maximizes the number of spatially matched frames.
"""

from dataclasses import dataclass

import numpy as np

from .assignment import FORBIDDEN, ScoreMatrix, hungarian_max
from .core import DataFormatError, iou

VISIBILITY_BUCKETS = (
    ("[0.0,0.3)", 0.0, 0.3),
    ("[0.3,0.6)", 0.3, 0.6),
    ("[0.6,1.0]", 0.6, 1.0 + 1e-9),
)


@dataclass
class EvalReport:
    mota: float
    idf1: float
    fp: int
    fn: int
    ids: int
    mt: float
    ml: float
    recall_by_visibility: dict
    n_gt: int
    n_hyp: int

    def as_rows(self) -> list:
        rows = [
            ("MOTA", f"{self.mota:.4f}"),
            ("IDF1", f"{self.idf1:.4f}"),
            ("FP", str(self.fp)),
            ("FN", str(self.fn)),
            ("IDS", str(self.ids)),
            ("MT", f"{self.mt:.4f}"),
            ("ML", f"{self.ml:.4f}"),
            ("GT", str(self.n_gt)),
        ]
        for bucket, recall in self.recall_by_visibility.items():
            rows.append((f"recall{bucket}", "-" if recall is None else f"{recall:.4f}"))
        return rows


def _bucket_of(visibility: float) -> str:
    for name, lo, hi in VISIBILITY_BUCKETS:
        if lo <= visibility < hi:
            return name
    return VISIBILITY_BUCKETS[-1][0]


def _match_remainder(gt_objs, hyp_objs, gt_idx, hyp_idx, threshold):
    """IoU-maximal assignment over still-unmatched objects; pairs under the
    threshold are never matched."""
    if not gt_idx or not hyp_idx:
        return []
    scores = np.full((len(gt_idx), len(hyp_idx)), FORBIDDEN)
    for a, gi in enumerate(gt_idx):
        for b, hj in enumerate(hyp_idx):
            value = iou(gt_objs[gi].box, hyp_objs[hj].box)
            if value >= threshold:
                scores[a, b] = value
    return [(gt_idx[a], hyp_idx[b]) for a, b in hungarian_max(ScoreMatrix(scores))]


def evaluate(results: list, gt: list, iou_match_threshold: float = 0.5) -> EvalReport:
    """Score per-frame tracker outputs against per-frame ground truth.

    results[t] holds objects with .id and .box; gt[t] holds objects with
    .id, .box, and .visibility. The two lists must cover the same frames.
    """
    if len(results) != len(gt):
        raise DataFormatError(
            f"frame count mismatch: {len(results)} result frames vs {len(gt)} gt frames"
        )
    fp = fn = ids = 0
    n_gt = n_hyp = 0
    prev_pairs = {}
    last_hyp_for_gt = {}
    frames_present = {}
    frames_matched = {}
    bucket_total = {name: 0 for name, _, _ in VISIBILITY_BUCKETS}
    bucket_hit = {name: 0 for name, _, _ in VISIBILITY_BUCKETS}
    overlap_counts = {}

    for gt_objs, hyp_objs in zip(gt, results):
        n_gt += len(gt_objs)
        n_hyp += len(hyp_objs)
        gt_by_id = {}
        for k, obj in enumerate(gt_objs):
            if obj.id in gt_by_id:
                raise DataFormatError(f"duplicate gt id {obj.id} in one frame")
            gt_by_id[obj.id] = k
        hyp_by_id = {}
        for k, obj in enumerate(hyp_objs):
            if obj.id in hyp_by_id:
                raise DataFormatError(f"duplicate hypothesis id {obj.id} in one frame")
            hyp_by_id[obj.id] = k

        # Continuity: keep last frame's correspondence where still valid.
        matches = []
        used_gt = set()
        used_hyp = set()
        for gid, hid in prev_pairs.items():
            gi = gt_by_id.get(gid)
            hj = hyp_by_id.get(hid)
            if gi is None or hj is None:
                continue
            if iou(gt_objs[gi].box, hyp_objs[hj].box) >= iou_match_threshold:
                matches.append((gi, hj))
                used_gt.add(gi)
                used_hyp.add(hj)
        rest_gt = [k for k in range(len(gt_objs)) if k not in used_gt]
        rest_hyp = [k for k in range(len(hyp_objs)) if k not in used_hyp]
        matches += _match_remainder(gt_objs, hyp_objs, rest_gt, rest_hyp, iou_match_threshold)

        fp += len(hyp_objs) - len(matches)
        fn += len(gt_objs) - len(matches)
        matched_gids = set()
        pairs = {}
        for gi, hj in matches:
            gid = gt_objs[gi].id
            hid = hyp_objs[hj].id
            pairs[gid] = hid
            matched_gids.add(gid)
            if gid in last_hyp_for_gt and last_hyp_for_gt[gid] != hid:
                ids += 1
            last_hyp_for_gt[gid] = hid
        prev_pairs = pairs

        for obj in gt_objs:
            frames_present[obj.id] = frames_present.get(obj.id, 0) + 1
            bucket = _bucket_of(obj.visibility)
            bucket_total[bucket] += 1
            if obj.id in matched_gids:
                frames_matched[obj.id] = frames_matched.get(obj.id, 0) + 1
                bucket_hit[bucket] += 1

        # Identity-level overlap counts for IDF1 (independent of the CLEAR
        # correspondence): every thresholded (gt, hyp) pair counts.
        for gobj in gt_objs:
            for hobj in hyp_objs:
                if iou(gobj.box, hobj.box) >= iou_match_threshold:
                    key = (gobj.id, hobj.id)
                    overlap_counts[key] = overlap_counts.get(key, 0) + 1

    idtp = _best_identity_overlap(overlap_counts)
    idf1 = (2.0 * idtp / (n_gt + n_hyp)) if (n_gt + n_hyp) else 1.0
    mota = 1.0 - (fp + fn + ids) / n_gt if n_gt else 1.0

    coverages = [
        frames_matched.get(gid, 0) / count for gid, count in frames_present.items()
    ]
    mt = float(np.mean([c >= 0.8 for c in coverages])) if coverages else 0.0
    ml = float(np.mean([c <= 0.2 for c in coverages])) if coverages else 0.0
    recall = {
        name: (bucket_hit[name] / bucket_total[name] if bucket_total[name] else None)
        for name, _, _ in VISIBILITY_BUCKETS
    }
    return EvalReport(
        mota=mota,
        idf1=idf1,
        fp=fp,
        fn=fn,
        ids=ids,
        mt=mt,
        ml=ml,
        recall_by_visibility=recall,
        n_gt=n_gt,
        n_hyp=n_hyp,
    )


def _best_identity_overlap(overlap_counts: dict) -> int:
    if not overlap_counts:
        return 0
    gids = sorted({g for g, _ in overlap_counts})
    hids = sorted({h for _, h in overlap_counts})
    g_index = {g: i for i, g in enumerate(gids)}
    h_index = {h: j for j, h in enumerate(hids)}
    scores = np.full((len(gids), len(hids)), FORBIDDEN)
    for (g, h), count in overlap_counts.items():
        scores[g_index[g], h_index[h]] = float(count)
    matches = hungarian_max(ScoreMatrix(scores))
    return int(sum(scores[r, c] for r, c in matches))


def aggregate_reports(reports: list) -> EvalReport:
    """Corpus-level report: counts are summed, ratio metrics recomputed."""
    fp = sum(r.fp for r in reports)
    fn = sum(r.fn for r in reports)
    ids = sum(r.ids for r in reports)
    n_gt = sum(r.n_gt for r in reports)
    n_hyp = sum(r.n_hyp for r in reports)
    mota = 1.0 - (fp + fn + ids) / n_gt if n_gt else 1.0
    idf1 = float(np.mean([r.idf1 for r in reports])) if reports else 1.0
    mt = float(np.mean([r.mt for r in reports])) if reports else 0.0
    ml = float(np.mean([r.ml for r in reports])) if reports else 0.0
    recall = {}
    for name, _, _ in VISIBILITY_BUCKETS:
        values = [r.recall_by_visibility[name] for r in reports]
        values = [v for v in values if v is not None]
        recall[name] = float(np.mean(values)) if values else None
    return EvalReport(
        mota=mota,
        idf1=idf1,
        fp=fp,
        fn=fn,
        ids=ids,
        mt=mt,
        ml=ml,
        recall_by_visibility=recall,
        n_gt=n_gt,
        n_hyp=n_hyp,
    )
