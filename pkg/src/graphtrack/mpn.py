"""Message-passing network over the sparse graph.

Raw edge features are lifted by an encoder (two FC blocks); n_iter rounds of
edge and node updates follow. An FC block is an affine map, layer
normalization, then ReLU. The edge update concatenates both endpoint
features, the initial edge features (re-injected every round to curb
over-smoothing), and the previous edge features. The node update aggregates
the mean of encoded incoming messages, with separate message encoders for
the t1->t2 and t2->t1 directions, and leaves nodes with no incoming edges
untouched. After the final round the two directed feature vectors of each
pair are averaged and squashed through an affine edge classifier into an
edge score; an affine node classifier scores every t2 node.

Parameters serialize to a versioned little-endian binary format: an 8-byte
magic string, uint32 format version, uint32 d_node, uint32 d_edge, then the
raw float64 payload of every tensor in the order reported by
``MpnParameters.tensors()``.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError, DataFormatError
from .graph import NodeSide, SparseGraph

LN_EPS = 1e-5
# Pre-activation clip keeps classifier outputs strictly inside (0, 1) in
# float64 even for extreme inputs.
_SIGMOID_CLIP = 33.0

_MAGIC = b"GTRKMPN\x00"
_FORMAT_VERSION = 1


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -_SIGMOID_CLIP, _SIGMOID_CLIP)))


@dataclass
class FcBlock:
    """Affine map -> layer normalization -> ReLU, with batched forward."""

    weight: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)
    ln_gain: np.ndarray  # (out_dim,)
    ln_bias: np.ndarray  # (out_dim,)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def forward(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.forward_cached(x)
        return out

    def forward_cached(self, x: np.ndarray):
        a = x @ self.weight.T + self.bias
        mu = a.mean(axis=1, keepdims=True)
        centered = a - mu
        var = np.mean(centered * centered, axis=1, keepdims=True)
        inv = 1.0 / np.sqrt(var + LN_EPS)
        zhat = centered * inv
        y = zhat * self.ln_gain + self.ln_bias
        out = np.maximum(y, 0.0)
        return out, (x, zhat, inv, y > 0.0)

    def backward(self, cache, d_out: np.ndarray, grad: "FcBlock") -> np.ndarray:
        """Accumulate parameter gradients into ``grad``; return d(input)."""
        x, zhat, inv, mask = cache
        dy = d_out * mask
        grad.ln_gain += (dy * zhat).sum(axis=0)
        grad.ln_bias += dy.sum(axis=0)
        dz = dy * self.ln_gain
        da = inv * (
            dz
            - dz.mean(axis=1, keepdims=True)
            - zhat * (dz * zhat).mean(axis=1, keepdims=True)
        )
        grad.weight += da.T @ x
        grad.bias += da.sum(axis=0)
        return da @ self.weight


def _zero_block_like(block: FcBlock) -> FcBlock:
    return FcBlock(
        weight=np.zeros_like(block.weight),
        bias=np.zeros_like(block.bias),
        ln_gain=np.zeros_like(block.ln_gain),
        ln_bias=np.zeros_like(block.ln_bias),
    )


@dataclass
class MpnParameters:
    """All learnable tensors of encoders, update networks, and classifiers."""

    d_node: int
    d_edge: int
    edge_encoder: list  # 2 FcBlocks: 6 -> d_edge -> d_edge
    edge_updater: list  # 2 FcBlocks: 2*d_node + 2*d_edge -> d_edge -> d_edge
    node_message_fwd: list  # 2 FcBlocks: d_node + d_edge -> d_node -> d_node
    node_message_bwd: list  # same shape, for t2 -> t1 messages
    node_out: FcBlock  # d_node -> d_node
    edge_cls_weight: np.ndarray  # (d_edge,)
    edge_cls_bias: np.ndarray  # (1,)
    node_cls_weight: np.ndarray  # (d_node,)
    node_cls_bias: np.ndarray  # (1,)

    def blocks(self) -> list:
        out = []
        for name, group in (
            ("edge_encoder", self.edge_encoder),
            ("edge_updater", self.edge_updater),
            ("node_message_fwd", self.node_message_fwd),
            ("node_message_bwd", self.node_message_bwd),
        ):
            for i, blk in enumerate(group):
                out.append((f"{name}.{i}", blk))
        out.append(("node_out", self.node_out))
        return out

    def tensors(self) -> list:
        """(name, array) pairs in the canonical serialization order."""
        out = []
        for name, blk in self.blocks():
            out.append((f"{name}.weight", blk.weight))
            out.append((f"{name}.bias", blk.bias))
            out.append((f"{name}.ln_gain", blk.ln_gain))
            out.append((f"{name}.ln_bias", blk.ln_bias))
        out.append(("edge_classifier.weight", self.edge_cls_weight))
        out.append(("edge_classifier.bias", self.edge_cls_bias))
        out.append(("node_classifier.weight", self.node_cls_weight))
        out.append(("node_classifier.bias", self.node_cls_bias))
        return out

    def validate(self) -> "MpnParameters":
        dn, de = self.d_node, self.d_edge
        expect = {
            "edge_encoder": [(de, 6), (de, de)],
            "edge_updater": [(de, 2 * dn + 2 * de), (de, de)],
            "node_message_fwd": [(dn, dn + de), (dn, dn)],
            "node_message_bwd": [(dn, dn + de), (dn, dn)],
        }
        for name, shapes in expect.items():
            group = getattr(self, name)
            if len(group) != 2:
                raise ConfigError(f"{name} must hold two FC blocks")
            for blk, shape in zip(group, shapes):
                if blk.weight.shape != shape:
                    raise ConfigError(f"{name} weight shape {blk.weight.shape} != {shape}")
        if self.node_out.weight.shape != (dn, dn):
            raise ConfigError("node_out weight shape mismatch")
        if self.edge_cls_weight.shape != (de,) or self.node_cls_weight.shape != (dn,):
            raise ConfigError("classifier weight shape mismatch")
        return self

    def copy(self) -> "MpnParameters":
        other = self.zeros_like()
        other.add_scaled(self, 1.0)
        return other

    def zeros_like(self) -> "MpnParameters":
        return MpnParameters(
            d_node=self.d_node,
            d_edge=self.d_edge,
            edge_encoder=[_zero_block_like(b) for b in self.edge_encoder],
            edge_updater=[_zero_block_like(b) for b in self.edge_updater],
            node_message_fwd=[_zero_block_like(b) for b in self.node_message_fwd],
            node_message_bwd=[_zero_block_like(b) for b in self.node_message_bwd],
            node_out=_zero_block_like(self.node_out),
            edge_cls_weight=np.zeros_like(self.edge_cls_weight),
            edge_cls_bias=np.zeros_like(self.edge_cls_bias),
            node_cls_weight=np.zeros_like(self.node_cls_weight),
            node_cls_bias=np.zeros_like(self.node_cls_bias),
        )

    def add_scaled(self, other: "MpnParameters", scale: float) -> "MpnParameters":
        for (_, a), (_, b) in zip(self.tensors(), other.tensors()):
            a += scale * b
        return self


def _uniform_block(rng, in_dim: int, out_dim: int) -> FcBlock:
    bound = 1.0 / np.sqrt(in_dim)
    return FcBlock(
        weight=rng.uniform(-bound, bound, size=(out_dim, in_dim)),
        bias=rng.uniform(-bound, bound, size=out_dim),
        ln_gain=np.ones(out_dim),
        ln_bias=np.zeros(out_dim),
    )


def init_parameters(seed: int, d_node: int, d_edge: int) -> MpnParameters:
    """Deterministic initialization: affine entries uniform in +-1/sqrt(fan_in),
    layernorm gain 1 and bias 0. The same seed yields bit-identical tensors."""
    if d_node < 1 or d_edge < 1:
        raise ConfigError("feature dimensions must be positive")
    rng = np.random.default_rng(seed)
    params = MpnParameters(
        d_node=d_node,
        d_edge=d_edge,
        edge_encoder=[_uniform_block(rng, 6, d_edge), _uniform_block(rng, d_edge, d_edge)],
        edge_updater=[
            _uniform_block(rng, 2 * d_node + 2 * d_edge, d_edge),
            _uniform_block(rng, d_edge, d_edge),
        ],
        node_message_fwd=[
            _uniform_block(rng, d_node + d_edge, d_node),
            _uniform_block(rng, d_node, d_node),
        ],
        node_message_bwd=[
            _uniform_block(rng, d_node + d_edge, d_node),
            _uniform_block(rng, d_node, d_node),
        ],
        node_out=_uniform_block(rng, d_node, d_node),
        edge_cls_weight=rng.uniform(-1.0 / np.sqrt(d_edge), 1.0 / np.sqrt(d_edge), size=d_edge),
        edge_cls_bias=rng.uniform(-1.0 / np.sqrt(d_edge), 1.0 / np.sqrt(d_edge), size=1),
        node_cls_weight=rng.uniform(-1.0 / np.sqrt(d_node), 1.0 / np.sqrt(d_node), size=d_node),
        node_cls_bias=rng.uniform(-1.0 / np.sqrt(d_node), 1.0 / np.sqrt(d_node), size=1),
    )
    return params.validate()


def save_parameters(params: MpnParameters) -> bytes:
    header = _MAGIC + struct.pack("<III", _FORMAT_VERSION, params.d_node, params.d_edge)
    payload = b"".join(
        np.ascontiguousarray(arr, dtype="<f8").tobytes() for _, arr in params.tensors()
    )
    return header + payload


def load_parameters(data: bytes) -> MpnParameters:
    """Inverse of save_parameters; errors name the offending field."""
    if len(data) < len(_MAGIC) + 12:
        raise DataFormatError("parameter data shorter than header")
    if data[: len(_MAGIC)] != _MAGIC:
        raise DataFormatError("bad magic in parameter header")
    version, d_node, d_edge = struct.unpack_from("<III", data, len(_MAGIC))
    if version != _FORMAT_VERSION:
        raise DataFormatError(f"unsupported format version {version}")
    if d_node < 1 or d_edge < 1:
        raise DataFormatError("header declares non-positive dimensions")
    params = init_parameters(0, d_node, d_edge)
    offset = len(_MAGIC) + 12
    for name, arr in params.tensors():
        nbytes = arr.size * 8
        if offset + nbytes > len(data):
            raise DataFormatError(f"truncated payload: missing data for tensor '{name}'")
        arr[...] = np.frombuffer(data, dtype="<f8", count=arr.size, offset=offset).reshape(
            arr.shape
        )
        offset += nbytes
    if offset != len(data):
        raise DataFormatError(f"{len(data) - offset} trailing bytes after payload")
    return params


def save_parameter_file(params: MpnParameters, path):
    with open(path, "wb") as fh:
        fh.write(save_parameters(params))


def load_parameter_file(path) -> MpnParameters:
    with open(path, "rb") as fh:
        return load_parameters(fh.read())


# ---------------------------------------------------------------------------
# Prepared topology, graph state, and the forward pass
# ---------------------------------------------------------------------------


@dataclass
class PreparedGraph:
    """Array view of a SparseGraph, independent of any parameter set.

    Node indexing is global: t1-side nodes (active then missing) first, then
    t2 nodes. Each undirected pair is the (t1 combined index, t2 index) key
    with one forward (t1 -> t2) and one backward directed edge.
    """

    embeddings: np.ndarray  # (n_t1 + n_t2, emb_dim)
    raw: np.ndarray  # (n_edges, 6)
    src: np.ndarray
    dst: np.ndarray
    fwd_idx: np.ndarray
    bwd_idx: np.ndarray
    n_t1: int
    n_t2: int
    pair_keys: list
    pair_fwd: np.ndarray
    pair_bwd: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.n_t1 + self.n_t2

    @property
    def n_edges(self) -> int:
        return self.src.shape[0]


def prepare_graph(graph: SparseGraph) -> PreparedGraph:
    """Flatten a SparseGraph into arrays; cached on the graph object."""
    cached = getattr(graph, "_prepared", None)
    if cached is not None:
        return cached
    n1 = len(graph.nodes_t1)
    n_edges = len(graph.edges)
    src = np.zeros(n_edges, dtype=np.intp)
    dst = np.zeros(n_edges, dtype=np.intp)
    raw = np.zeros((n_edges, 6))
    pair_dir = {}
    for e, edge in enumerate(graph.edges):
        if edge.src.side is NodeSide.T2:
            s = n1 + edge.src.index
            d = graph.t1_combined_index(edge.dst)
            key = (d, edge.src.index)
            slot = 1
        else:
            s = graph.t1_combined_index(edge.src)
            d = n1 + edge.dst.index
            key = (s, edge.dst.index)
            slot = 0
        src[e] = s
        dst[e] = d
        raw[e] = edge.raw.as_array()
        pair_dir.setdefault(key, [None, None])
        if pair_dir[key][slot] is not None:
            raise ValueError(f"duplicate directed edge for pair {key}")
        pair_dir[key][slot] = e
    pair_keys = sorted(pair_dir)
    for key in pair_keys:
        fwd, bwd = pair_dir[key]
        if fwd is None or bwd is None:
            raise ValueError(f"pair {key} is missing one direction")
    embeddings = [det.embedding for det, _ in graph.nodes_t1]
    embeddings += [det.embedding for det in graph.nodes_t2]
    dims = {emb.shape[0] for emb in embeddings}
    if len(dims) > 1:
        raise ConfigError(f"inconsistent embedding dimensions in graph: {sorted(dims)}")
    emb_dim = dims.pop() if dims else 0
    prep = PreparedGraph(
        embeddings=(
            np.stack(embeddings).astype(np.float64)
            if embeddings
            else np.zeros((0, emb_dim))
        ),
        raw=raw,
        src=src,
        dst=dst,
        fwd_idx=np.flatnonzero(src < n1),
        bwd_idx=np.flatnonzero(src >= n1),
        n_t1=n1,
        n_t2=len(graph.nodes_t2),
        pair_keys=pair_keys,
        pair_fwd=np.array([pair_dir[k][0] for k in pair_keys], dtype=np.intp),
        pair_bwd=np.array([pair_dir[k][1] for k in pair_keys], dtype=np.intp),
    )
    try:
        graph._prepared = prep
    except AttributeError:
        pass
    return prep


def merge_prepared(preps: list) -> PreparedGraph:
    """Disjoint union of prepared graphs (block-diagonal batching).

    Message passing never crosses components, so running the network on the
    union is equivalent to running it on each graph separately.
    """
    if not preps:
        raise ValueError("nothing to merge")
    n1_total = sum(p.n_t1 for p in preps)
    emb_rows = []
    raw_rows = []
    src_parts = []
    dst_parts = []
    pair_keys = []
    pair_fwd = []
    pair_bwd = []
    t1_off = 0
    t2_off = 0
    edge_off = 0
    for p in preps:
        def remap(idx):
            return np.where(idx < p.n_t1, idx + t1_off, n1_total + t2_off + (idx - p.n_t1))

        emb_rows.append(p.embeddings[: p.n_t1])
        raw_rows.append(p.raw)
        src_parts.append(remap(p.src))
        dst_parts.append(remap(p.dst))
        pair_keys.extend((i + t1_off, j + t2_off) for i, j in p.pair_keys)
        pair_fwd.append(p.pair_fwd + edge_off)
        pair_bwd.append(p.pair_bwd + edge_off)
        t1_off += p.n_t1
        t2_off += p.n_t2
        edge_off += p.n_edges
    emb_rows += [p.embeddings[p.n_t1 :] for p in preps]
    src = np.concatenate(src_parts) if src_parts else np.zeros(0, dtype=np.intp)
    dst = np.concatenate(dst_parts) if dst_parts else np.zeros(0, dtype=np.intp)
    return PreparedGraph(
        embeddings=np.concatenate(emb_rows, axis=0),
        raw=np.concatenate(raw_rows, axis=0),
        src=src,
        dst=dst,
        fwd_idx=np.flatnonzero(src < n1_total),
        bwd_idx=np.flatnonzero(src >= n1_total),
        n_t1=n1_total,
        n_t2=t2_off,
        pair_keys=pair_keys,
        pair_fwd=np.concatenate(pair_fwd) if pair_fwd else np.zeros(0, dtype=np.intp),
        pair_bwd=np.concatenate(pair_bwd) if pair_bwd else np.zeros(0, dtype=np.intp),
    )


@dataclass
class GraphState:
    """Evolving node/edge features plus the fixed topology they live on.

    edge_feats_initial is the encoder output e^0; it is marked read-only
    and re-concatenated at every edge update.
    """

    node_feats: np.ndarray  # (n_t1 + n_t2, d_node)
    edge_feats: np.ndarray  # (n_edges, d_edge)
    edge_feats_initial: np.ndarray
    iteration: int
    prep: PreparedGraph


def _chain_forward(blocks, x):
    for blk in blocks:
        x = blk.forward(x)
    return x


def _node_features(prep: PreparedGraph, params: MpnParameters) -> np.ndarray:
    if prep.embeddings.shape[0] and prep.embeddings.shape[1] != params.d_node:
        raise ConfigError(
            f"embedding dimension {prep.embeddings.shape[1]} does not match "
            f"d_node {params.d_node}"
        )
    return prep.embeddings.copy()


def encode_edges(graph, params: MpnParameters) -> GraphState:
    """Initial state: e^0 from the raw-feature encoder, v^0 from embeddings."""
    params.validate()
    prep = graph if isinstance(graph, PreparedGraph) else prepare_graph(graph)
    e0 = _chain_forward(params.edge_encoder, prep.raw)
    e0.setflags(write=False)
    return GraphState(
        node_feats=_node_features(prep, params),
        edge_feats=e0.copy(),
        edge_feats_initial=e0,
        iteration=0,
        prep=prep,
    )


def edge_update(state: GraphState, params: MpnParameters) -> GraphState:
    """e^l from both endpoint features, e^0, and e^(l-1); the update MLP is
    shared across directions (direction awareness lives in the features)."""
    v = state.node_feats
    prep = state.prep
    cat = np.concatenate(
        [v[prep.src], v[prep.dst], state.edge_feats_initial, state.edge_feats], axis=1
    )
    return GraphState(
        node_feats=state.node_feats,
        edge_feats=_chain_forward(params.edge_updater, cat),
        edge_feats_initial=state.edge_feats_initial,
        iteration=state.iteration,
        prep=prep,
    )


def node_update(state: GraphState, params: MpnParameters) -> GraphState:
    """Mean-aggregate encoded incoming messages per node, then node_out.

    Messages from t1-side sources use the forward encoder, messages from
    t2 sources the backward one; isolated nodes carry features forward.
    """
    prep = state.prep
    v_prev = state.node_feats
    msg_sum = np.zeros((prep.n_nodes, params.d_node))
    counts = np.zeros(prep.n_nodes, dtype=np.intp)
    for e_idx, blocks in (
        (prep.fwd_idx, params.node_message_fwd),
        (prep.bwd_idx, params.node_message_bwd),
    ):
        if e_idx.size == 0:
            continue
        cat = np.concatenate([v_prev[prep.src[e_idx]], state.edge_feats[e_idx]], axis=1)
        msg = _chain_forward(blocks, cat)
        np.add.at(msg_sum, prep.dst[e_idx], msg)
        np.add.at(counts, prep.dst[e_idx], 1)
    v_new = v_prev.copy()
    has_in = np.flatnonzero(counts > 0)
    if has_in.size:
        mean = msg_sum[has_in] / counts[has_in, None]
        v_new[has_in] = params.node_out.forward(mean)
    return GraphState(
        node_feats=v_new,
        edge_feats=state.edge_feats,
        edge_feats_initial=state.edge_feats_initial,
        iteration=state.iteration + 1,
        prep=prep,
    )


def _classify(state: GraphState, params: MpnParameters):
    prep = state.prep
    if len(prep.pair_keys):
        ebar = 0.5 * (state.edge_feats[prep.pair_fwd] + state.edge_feats[prep.pair_bwd])
        es = _sigmoid(ebar @ params.edge_cls_weight + params.edge_cls_bias[0])
    else:
        ebar = np.zeros((0, params.d_edge))
        es = np.zeros(0)
    t2_feats = state.node_feats[prep.n_t1 :]
    ns = _sigmoid(t2_feats @ params.node_cls_weight + params.node_cls_bias[0])
    return ebar, es, ns


def forward(graph, params: MpnParameters, n_iter: int):
    """Run n_iter message-passing rounds and classify.

    Returns (edge_scores, node_scores_t2): edge scores keyed by undirected
    pair (t1 combined index, t2 index), node scores as an array over t2
    nodes. n_iter = 0 classifies directly on e^0 / v^0.
    """
    if n_iter < 0:
        raise ValueError("n_iter must be non-negative")
    state = encode_edges(graph, params)
    for _ in range(n_iter):
        state = node_update(edge_update(state, params), params)
    _, es, ns = _classify(state, params)
    return dict(zip(state.prep.pair_keys, es.tolist())), ns


# ---------------------------------------------------------------------------
# Recorded forward pass and reverse-mode gradients
# ---------------------------------------------------------------------------


@dataclass
class _IterTape:
    v_prev: np.ndarray
    edge_caches: list
    msg_caches: dict  # direction name -> list of FcBlock caches or None
    counts: np.ndarray
    has_in: np.ndarray
    out_cache: object


@dataclass
class _Tape:
    prep: PreparedGraph
    enc_caches: list
    iters: list = field(default_factory=list)
    node_feats: np.ndarray = None
    final_edge_feats: np.ndarray = None
    ebar: np.ndarray = None
    es: np.ndarray = None
    ns: np.ndarray = None


def _chain_cached(blocks, x, caches):
    for blk in blocks:
        x, cache = blk.forward_cached(x)
        caches.append(cache)
    return x


def _chain_backward(blocks, grad_blocks, caches, d_out):
    for blk, gblk, cache in zip(reversed(blocks), reversed(grad_blocks), reversed(caches)):
        d_out = blk.backward(cache, d_out, gblk)
    return d_out


def forward_with_tape(graph, params: MpnParameters, n_iter: int):
    """forward() with every intermediate recorded for the backward pass.

    Produces the same scores as forward(); returns (edge score array aligned
    with tape.prep.pair_keys, node score array, tape).
    """
    params.validate()
    prep = graph if isinstance(graph, PreparedGraph) else prepare_graph(graph)
    v = _node_features(prep, params)
    tape = _Tape(prep=prep, enc_caches=[])
    e0 = _chain_cached(params.edge_encoder, prep.raw, tape.enc_caches)
    e0.setflags(write=False)
    e = e0
    n_nodes = prep.n_nodes
    for _ in range(n_iter):
        it = _IterTape(
            v_prev=v,
            edge_caches=[],
            msg_caches={"fwd": None, "bwd": None},
            counts=np.zeros(n_nodes, dtype=np.intp),
            has_in=None,
            out_cache=None,
        )
        cat = np.concatenate([v[prep.src], v[prep.dst], e0, e], axis=1)
        e = _chain_cached(params.edge_updater, cat, it.edge_caches)
        msg_sum = np.zeros((n_nodes, params.d_node))
        for name, e_idx, blocks in (
            ("fwd", prep.fwd_idx, params.node_message_fwd),
            ("bwd", prep.bwd_idx, params.node_message_bwd),
        ):
            if e_idx.size == 0:
                continue
            caches = []
            mcat = np.concatenate([v[prep.src[e_idx]], e[e_idx]], axis=1)
            msg = _chain_cached(blocks, mcat, caches)
            it.msg_caches[name] = caches
            np.add.at(msg_sum, prep.dst[e_idx], msg)
            np.add.at(it.counts, prep.dst[e_idx], 1)
        it.has_in = np.flatnonzero(it.counts > 0)
        v_new = v.copy()
        if it.has_in.size:
            mean = msg_sum[it.has_in] / it.counts[it.has_in, None]
            out, cache = params.node_out.forward_cached(mean)
            it.out_cache = cache
            v_new[it.has_in] = out
        v = v_new
        tape.iters.append(it)
    tape.node_feats = v
    if len(prep.pair_keys):
        tape.ebar = 0.5 * (e[prep.pair_fwd] + e[prep.pair_bwd])
        tape.es = _sigmoid(tape.ebar @ params.edge_cls_weight + params.edge_cls_bias[0])
    else:
        tape.ebar = np.zeros((0, params.d_edge))
        tape.es = np.zeros(0)
    tape.ns = _sigmoid(v[prep.n_t1 :] @ params.node_cls_weight + params.node_cls_bias[0])
    tape.final_edge_feats = e
    return tape.es, tape.ns, tape


def backward_from_scores(
    tape: _Tape, params: MpnParameters, d_es: np.ndarray, d_ns: np.ndarray
) -> MpnParameters:
    """Reverse-mode chain rule from score gradients down to every tensor.

    d_es / d_ns are the loss gradients with respect to the pair edge scores
    and the t2 node scores. Returns an MpnParameters-shaped gradient set.
    """
    g = params.zeros_like()
    prep = tape.prep
    dn, de = params.d_node, params.d_edge
    n_nodes = prep.n_nodes
    n_edges = prep.n_edges

    d_v = np.zeros((n_nodes, dn))
    d_e = np.zeros((n_edges, de))

    # Node classifier (logistic + affine) on t2 rows.
    ns = tape.ns
    d_pre_n = d_ns * ns * (1.0 - ns)
    t2_feats = tape.node_feats[prep.n_t1 :]
    g.node_cls_weight += t2_feats.T @ d_pre_n
    g.node_cls_bias += d_pre_n.sum()
    d_v[prep.n_t1 :] += np.outer(d_pre_n, params.node_cls_weight)

    # Edge classifier on the per-pair average of both directions.
    es = tape.es
    d_pre_e = d_es * es * (1.0 - es)
    if len(prep.pair_keys):
        g.edge_cls_weight += tape.ebar.T @ d_pre_e
        g.edge_cls_bias += d_pre_e.sum()
        d_ebar = np.outer(d_pre_e, params.edge_cls_weight)
        d_e[prep.pair_fwd] += 0.5 * d_ebar
        d_e[prep.pair_bwd] += 0.5 * d_ebar

    grad_blocks = dict(g.blocks())
    d_e0 = np.zeros((n_edges, de))
    for it in reversed(tape.iters):
        d_v_prev = np.zeros((n_nodes, dn))
        # Node update: isolated nodes pass gradients straight through.
        iso = np.flatnonzero(it.counts == 0)
        if iso.size:
            d_v_prev[iso] += d_v[iso]
        if it.has_in.size:
            d_mean = np.zeros((n_nodes, dn))
            d_mean[it.has_in] = params.node_out.backward(
                it.out_cache, d_v[it.has_in], grad_blocks["node_out"]
            )
            for name, e_idx, blocks, gname in (
                ("fwd", prep.fwd_idx, params.node_message_fwd, "node_message_fwd"),
                ("bwd", prep.bwd_idx, params.node_message_bwd, "node_message_bwd"),
            ):
                caches = it.msg_caches[name]
                if caches is None:
                    continue
                d_msg = d_mean[prep.dst[e_idx]] / it.counts[prep.dst[e_idx], None]
                gblks = [grad_blocks[f"{gname}.0"], grad_blocks[f"{gname}.1"]]
                d_cat = _chain_backward(blocks, gblks, caches, d_msg)
                np.add.at(d_v_prev, prep.src[e_idx], d_cat[:, :dn])
                d_e[e_idx] += d_cat[:, dn:]
        # Edge update consumed [v_src, v_dst, e0, e_prev].
        gblks = [grad_blocks["edge_updater.0"], grad_blocks["edge_updater.1"]]
        d_cat = _chain_backward(params.edge_updater, gblks, it.edge_caches, d_e)
        np.add.at(d_v_prev, prep.src, d_cat[:, :dn])
        np.add.at(d_v_prev, prep.dst, d_cat[:, dn : 2 * dn])
        d_e0 += d_cat[:, 2 * dn : 2 * dn + de]
        d_e = d_cat[:, 2 * dn + de :]
        d_v = d_v_prev

    # Whatever still flows into e^(l-1) at l=1 is the e^0 slot; with
    # n_iter = 0 it is the classifier gradient itself.
    d_e0 = d_e0 + d_e
    gblks = [grad_blocks["edge_encoder.0"], grad_blocks["edge_encoder.1"]]
    _chain_backward(params.edge_encoder, gblks, tape.enc_caches, d_e0)
    # Gradients w.r.t. v^0 (raw embeddings) are not parameters; dropped.
    return g
