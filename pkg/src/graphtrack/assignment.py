"""Edge-score matrix assembly and optimal assignment with gating."""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .graph import SparseGraph, graph_pair_keys

#: Marker for pairs that were never materialized in the graph; such entries
#: can never be selected by the solver.
FORBIDDEN = math.nan




@dataclass
class ScoreMatrix:
    """Dense (t1+missing) x t2 score matrix; NaN entries are FORBIDDEN."""

    scores: np.ndarray

    @property
    def rows(self) -> int:
        return self.scores.shape[0]

    @property
    def cols(self) -> int:
        return self.scores.shape[1]

    def valid_mask(self) -> np.ndarray:
        return np.isfinite(self.scores)

    @classmethod
    def all_forbidden(cls, rows: int, cols: int) -> "ScoreMatrix":
        return cls(scores=np.full((rows, cols), FORBIDDEN))


def build_score_matrix(graph: SparseGraph, edge_scores: dict) -> ScoreMatrix:
    """Place each pair's averaged edge score at (t1 combined row, t2 col)."""
    matrix = ScoreMatrix.all_forbidden(len(graph.nodes_t1), len(graph.nodes_t2))
    for (i, j), score in edge_scores.items():
        matrix.scores[i, j] = score
    return matrix


def hungarian_max(matrix: ScoreMatrix) -> list:
    """Matching that maximizes total score while avoiding FORBIDDEN entries.

    Leaving a row or column unmatched is allowed whenever that yields a
    higher total, which is what the brute-force oracle over all partial
    matchings computes. Implemented by padding to square with zero-gain
    slots (an assignment into one means "unmatched") and stripping them,
    together with any forbidden cells, after the solve.
    """
    if matrix.rows == 0 or matrix.cols == 0:
        return []
    valid = matrix.valid_mask()
    if not valid.any():
        return []
    n = max(matrix.rows, matrix.cols)
    gain = np.zeros((n, n))
    gain[: matrix.rows, : matrix.cols] = np.where(valid, matrix.scores, 0.0)
    rows, cols = linear_sum_assignment(-gain)
    return [
        (int(r), int(c))
        for r, c in zip(rows, cols)
        if r < matrix.rows and c < matrix.cols and valid[r, c]
    ]


@dataclass
class GatedMatches:
    accepted: list = field(default_factory=list)  # (row, col, score)
    unmatched_rows: list = field(default_factory=list)
    unmatched_cols: list = field(default_factory=list)


def gate_matches(matches: list, matrix: ScoreMatrix, tau_e: float) -> GatedMatches:
    """Keep matches with score >= tau_e; everything else is unmatched.

    Pairs under the threshold dissolve, returning both endpoints to the
    unmatched pools alongside rows/cols the solver never matched.
    """
    out = GatedMatches()
    kept_rows = set()
    kept_cols = set()
    for r, c in sorted(matches):
        score = float(matrix.scores[r, c])
        if score >= tau_e:
            out.accepted.append((r, c, score))
            kept_rows.add(r)
            kept_cols.add(c)
    out.unmatched_rows = [r for r in range(matrix.rows) if r not in kept_rows]
    out.unmatched_cols = [c for c in range(matrix.cols) if c not in kept_cols]
    return out
