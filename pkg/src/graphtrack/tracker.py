"""Per-frame tracker state machine: matches, recovery, lifecycle, smoothing.

One step consumes the gated matches for a frame transition and applies, in
order: standard continuation for matched detections at or above tau_init,
recovery of matched low-score detections subject to the node-score gate,
new-track initialization for unmatched confident detections, demotion of
unmatched tracklets to the missing store (or termination when too short),
and aging out of the missing store.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .assignment import GatedMatches
from .core import BBox, Detection, Tracklet, TrackerConfig


@dataclass
class TrackerState:
    """All live identities. IDs are never reused within a sequence."""

    active: list = field(default_factory=list)
    missing: list = field(default_factory=list)
    next_id: int = 1
    frame_index: int = 0

    @classmethod
    def fresh(cls) -> "TrackerState":
        return cls()

    def check(self, cfg: TrackerConfig):
        ids = [t.id for t in self.active] + [t.id for t in self.missing]
        if len(ids) != len(set(ids)):
            raise AssertionError("duplicate tracklet ids")
        for t in self.active:
            if t.frames_missing != 0:
                raise AssertionError("active tracklet with frames_missing != 0")
        for t in self.missing:
            if not 0 < t.frames_missing <= cfg.age_max_frames:
                raise AssertionError("missing tracklet outside its age window")


@dataclass(frozen=True)
class TrackOutput:
    id: int
    box: BBox
    score: float
    recovered: bool


@dataclass
class FrameEvents:
    new_tracks: int = 0
    recovered: int = 0
    rejected_recoveries: int = 0
    moved_to_missing: int = 0
    terminated: int = 0


@dataclass
class FrameResult:
    outputs: list
    events: FrameEvents


def adaptive_smooth(emb_trk, s_t1: float, emb_det, s_t2: float) -> np.ndarray:
    """Score-weighted blend of a tracklet embedding with its matched
    detection's embedding; a zero score pair returns the tracklet embedding
    unchanged (nothing to blend in)."""
    emb_trk = np.asarray(emb_trk, dtype=np.float64)
    emb_det = np.asarray(emb_det, dtype=np.float64)
    total = s_t1 + s_t2
    if total <= 0.0:
        return emb_trk.copy()
    return emb_trk * (s_t1 / total) + emb_det * (s_t2 / total)


def step(
    state: TrackerState,
    detections_t2: list,
    node_scores_t2,
    gated: GatedMatches,
    cfg: TrackerConfig,
    *,
    allow_recovery: bool = True,
    node_gate: bool = True,
) -> tuple:
    """Advance the tracker by one frame; returns (new state, frame result).

    Rows of the gated matches index active tracklets first, then the
    missing store, mirroring graph construction. allow_recovery=False turns
    every recovery candidate into a rejection (ablation switch); with
    node_gate=False candidates are accepted without consulting node scores.
    """
    n_active = len(state.active)
    events = FrameEvents()
    outputs = []
    new_active = []
    matched_rows = set()
    consumed_cols = set()

    for row, col, _score in gated.accepted:
        trk = state.active[row] if row < n_active else state.missing[row - n_active]
        det = detections_t2[col]
        recovered = False
        if det.score < cfg.tau_init:
            ok = allow_recovery and (not node_gate or node_scores_t2[col] >= cfg.tau_N)
            if not ok:
                # Filtered out: the detection is discarded for this frame and
                # the tracklet is treated as unmatched.
                events.rejected_recoveries += 1
                consumed_cols.add(col)
                continue
            recovered = True
            events.recovered += 1
        matched_rows.add(row)
        consumed_cols.add(col)
        emb = adaptive_smooth(trk.smoothed_embedding, trk.last_score, det.embedding, det.score)
        new_active.append(
            Tracklet(
                id=trk.id,
                last_detection=det,
                smoothed_embedding=emb,
                length=trk.length + 1,
                frames_missing=0,
                last_score=det.score,
            )
        )
        outputs.append(TrackOutput(trk.id, det.box, det.score, recovered))

    next_id = state.next_id
    for col, det in enumerate(detections_t2):
        if col in consumed_cols:
            continue
        if det.score >= cfg.tau_init:
            new_active.append(
                Tracklet(
                    id=next_id,
                    last_detection=det,
                    smoothed_embedding=det.embedding.copy(),
                    length=1,
                    frames_missing=0,
                    last_score=det.score,
                )
            )
            outputs.append(TrackOutput(next_id, det.box, det.score, False))
            events.new_tracks += 1
            next_id += 1

    new_missing = []
    for row, trk in enumerate(state.active):
        if row in matched_rows:
            continue
        if trk.length >= cfg.age_min_frames:
            new_missing.append(replace(trk, frames_missing=1))
            events.moved_to_missing += 1
        else:
            events.terminated += 1
    for k, trk in enumerate(state.missing):
        if n_active + k in matched_rows:
            continue
        aged = trk.frames_missing + 1
        if aged > cfg.age_max_frames:
            events.terminated += 1
        else:
            new_missing.append(replace(trk, frames_missing=aged))

    new_state = TrackerState(
        active=new_active,
        missing=new_missing,
        next_id=next_id,
        frame_index=state.frame_index + 1,
    )
    return new_state, FrameResult(outputs=outputs, events=events)
