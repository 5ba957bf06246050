"""Sequential per-frame inference: graph, scores, assignment, lifecycle."""

from . import mpn
from .assignment import build_score_matrix, gate_matches, hungarian_max
from .core import TrackerConfig
from .graph import build_graph, top_k
from .tracker import TrackerState, step


def run_tracker(
    dets_per_frame: list,
    params: mpn.MpnParameters,
    cfg: TrackerConfig,
    *,
    recovery: bool = True,
    node_gate: bool = True,
) -> list:
    """Track a sequence; returns one FrameResult per input frame.

    The first frame bootstraps tracks from detections at or above tau_init
    for free: with no tracklets the graph has no edges, so every confident
    detection starts a new track.
    """
    cfg.validate()
    state = TrackerState.fresh()
    results = []
    for dets in dets_per_frame:
        candidates = top_k(dets, cfg.K) if dets else []
        graph = build_graph(state.active, state.missing, candidates, cfg)
        edge_scores, node_scores = mpn.forward(graph, params, cfg.n_iter)
        matrix = build_score_matrix(graph, edge_scores)
        matches = hungarian_max(matrix)
        gated = gate_matches(matches, matrix, cfg.tau_E)
        state, result = step(
            state,
            candidates,
            node_scores,
            gated,
            cfg,
            allow_recovery=recovery,
            node_gate=node_gate,
        )
        results.append(result)
    return results


def outputs_per_frame(frame_results: list) -> list:
    """Strip FrameResults down to the per-frame output lists for evaluation."""
    return [result.outputs for result in frame_results]
