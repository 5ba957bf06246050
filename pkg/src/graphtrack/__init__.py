"""graphtrack: online multi-object tracking by sparse graph association.

Detections from consecutive frames become nodes of a sparse bipartite
graph; a message-passing network refines relational edge features and
classifies edges (same identity?) and nodes (real object?). Matching is
solved optimally per frame, low-confidence detections vouched for by a
positive edge are recovered, and missed identities are re-associated from a
bounded store without any motion model.
"""

from .assignment import (  # noqa: F401
    FORBIDDEN,
    GatedMatches,
    ScoreMatrix,
    build_score_matrix,
    gate_matches,
    hungarian_max,
)
from .core import (  # noqa: F401
    BBox,
    ConfigError,
    DataFormatError,
    Detection,
    TrackerConfig,
    TrainConfig,
    Tracklet,
    cosine_similarity,
    iou,
)
from .graph import (  # noqa: F401
    EdgeRawFeatures,
    NodeRef,
    NodeSide,
    SparseGraph,
    build_frame_pair_graph,
    build_graph,
    raw_edge_features,
    select_neighbors,
    top_k,
)
from .labels import GtObject, NodeLabels, assign_edge_labels, assign_pseudo_labels  # noqa: F401
from .losses import (  # noqa: F401
    DetectionLossTerms,
    HeatmapSpec,
    association_loss,
    detection_loss_terms,
    edge_loss,
    focal_loss,
    gen_heatmap,
    node_loss,
)
from .metrics import EvalReport, aggregate_reports, evaluate  # noqa: F401
from .mpn import (  # noqa: F401
    FcBlock,
    GraphState,
    MpnParameters,
    edge_update,
    encode_edges,
    forward,
    init_parameters,
    load_parameters,
    node_update,
    save_parameters,
)
from .pipeline import outputs_per_frame, run_tracker  # noqa: F401
from .synth import OcclusionEvent, SequenceSpec, generate_corpus, synth_generate  # noqa: F401
from .tracker import (  # noqa: F401
    FrameResult,
    TrackerState,
    TrackOutput,
    adaptive_smooth,
    step,
)
from .training import (  # noqa: F401
    PairLabels,
    TrainingError,
    TrainingPair,
    association_gradients,
    build_training_pairs,
    train_loop,
)

__version__ = "0.1.0"
