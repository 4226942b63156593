"""Hierarchical graph encoder over reversed syntax trees.

Stacked frequency-adaptive convolutions (FAConv) with degree-aware top-k
pooling (ASTGPool), a global max readout per depth, GRU fusion of the
per-depth readouts, and a learnable residual blend with the root's frozen
content embedding. All parameters live on the autodiff tape; reverse mode
provides exact gradients with the pooling selection held fixed at the
forward-pass choice.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from astsearch.errors import ContractViolation, FormatError, ShapeError
from astsearch.graph import CodeGraph
from astsearch.tensor import Tensor, concat, gather_rows, l2_normalize, parameter, segment_sum

logger = logging.getLogger(__name__)

POOLING_METHODS = ("astgpool", "topkpool", "sagpool")

CHECKPOINT_VERSION = 1


@dataclass
class FaConvLayer:
    gate: Tensor  # (2h,) shared attention vector
    eps: float    # initial-feature mixing coefficient, fixed during training


@dataclass
class AstGPoolLayer:
    proj: Tensor   # (h,) score projection p
    beta1: Tensor  # scalar weight on the feature term
    beta2: Tensor  # scalar weight on the in-degree term
    ratio: float   # fraction of nodes kept


@dataclass
class GruParams:
    w_z: Tensor
    u_z: Tensor
    b_z: Tensor
    w_r: Tensor
    u_r: Tensor
    b_r: Tensor
    w_h: Tensor
    u_h: Tensor
    b_h: Tensor


@dataclass
class GraphState:
    """Mutable per-forward activations; h0 rows track pooled node sets."""

    h: Tensor             # current node features, n x hidden
    h0: Tensor            # projected initial features, n x hidden
    edges: np.ndarray     # (E, 2) int64, columns (src, dst)
    root: int
    indeg: np.ndarray     # in-degree per node under the current edges
    scores: np.ndarray | None = None  # post-pool scores of the kept nodes

    @property
    def num_nodes(self) -> int:
        return int(self.h.shape[0])


def _indegrees(edges: np.ndarray, n: int) -> np.ndarray:
    indeg = np.zeros(n, dtype=np.float64)
    if edges.size:
        np.add.at(indeg, edges[:, 1], 1.0)
    return indeg


def _edges_array(edges) -> np.ndarray:
    arr = np.asarray(edges, dtype=np.int64)
    return arr.reshape(-1, 2) if arr.size else np.zeros((0, 2), dtype=np.int64)


class GnnModel:
    """All learnable parameters of the hierarchical encoder."""

    def __init__(
        self,
        in_width: int,
        d_out: int,
        hidden: int | None = None,
        depth: int = 3,
        eps: float = 0.5,
        ratio: float = 0.1,
        pooling: str = "astgpool",
        pool_after_last: bool = True,
        seed: int = 0,
    ):
        if pooling not in POOLING_METHODS:
            raise ContractViolation(f"unknown pooling method {pooling!r}")
        if not 0.0 < ratio <= 1.0:
            raise ContractViolation(f"pooling ratio must be in (0, 1], got {ratio}")
        # Hidden size follows the embedder dimension unless overridden.
        hidden = d_out if hidden is None else hidden
        self.in_width = in_width
        self.d_out = d_out
        self.hidden = hidden
        self.depth = depth
        self.ratio = ratio
        self.pooling = pooling
        self.pool_after_last = pool_after_last
        self.seed = seed

        rng = np.random.default_rng(seed)
        h = hidden
        self.input_projection = parameter(_glorot(rng, in_width, h))
        self.conv = [FaConvLayer(gate=parameter(_glorot(rng, 2 * h, 1).reshape(2 * h)), eps=eps) for _ in range(depth)]
        self.pool = [
            AstGPoolLayer(
                proj=parameter(_glorot(rng, h, 1).reshape(h)),
                beta1=parameter(1.0),
                beta2=parameter(1.0),
                ratio=ratio,
            )
            for _ in range(depth)
        ]
        self.gru = GruParams(
            w_z=parameter(_glorot(rng, h, h)),
            u_z=parameter(_glorot(rng, h, h)),
            b_z=parameter(np.zeros(h)),
            w_r=parameter(_glorot(rng, h, h)),
            u_r=parameter(_glorot(rng, h, h)),
            b_r=parameter(np.zeros(h)),
            w_h=parameter(_glorot(rng, h, h)),
            u_h=parameter(_glorot(rng, h, h)),
            b_h=parameter(np.zeros(h)),
        )
        self.output_projection = parameter(_glorot(rng, h, d_out))
        # sigmoid(lambda) starts at 0.2: the frozen encoder dominates early.
        self.lambda_raw = parameter(math.log(0.2 / 0.8))
        # tau = exp(-raw); raw starts at ln(1/0.07) so tau starts at 0.07.
        self.tau_raw = parameter(math.log(1.0 / 0.07))

    def parameters(self) -> list[tuple[str, Tensor]]:
        params: list[tuple[str, Tensor]] = [("input_projection", self.input_projection)]
        for i, layer in enumerate(self.conv):
            params.append((f"conv.{i}.g", layer.gate))
        for i, layer in enumerate(self.pool):
            params.append((f"pool.{i}.p", layer.proj))
            params.append((f"pool.{i}.beta1", layer.beta1))
            params.append((f"pool.{i}.beta2", layer.beta2))
        for name in ("w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h"):
            params.append((f"gru.{name}", getattr(self.gru, name)))
        params.append(("output_projection", self.output_projection))
        params.append(("lambda", self.lambda_raw))
        params.append(("tau", self.tau_raw))
        return params

    def zero_grad(self) -> None:
        for _, p in self.parameters():
            p.zero_grad()

    def balance(self) -> Tensor:
        """sigmoid(lambda): the GNN's share of the output blend."""
        return self.lambda_raw.sigmoid()

    def temperature(self) -> Tensor:
        """tau = exp(-raw), clamped to at least 1e-3."""
        return (-self.tau_raw).exp().maximum(1e-3)

    def encode(self, graph: CodeGraph, root_embedding: np.ndarray) -> Tensor:
        return model_forward(self, graph, root_embedding)

    def manifest_dims(self) -> dict:
        return {
            "in_width": self.in_width,
            "d_out": self.d_out,
            "hidden": self.hidden,
            "depth": self.depth,
        }

    def manifest_config(self) -> dict:
        return {
            "eps": self.conv[0].eps if self.conv else 0.5,
            "ratio": self.ratio,
            "pooling": self.pooling,
            "pool_after_last": self.pool_after_last,
        }


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    scale = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-scale, scale, size=(fan_in, fan_out))


# --- forward operations ------------------------------------------------------


def initial_state(model: GnnModel, graph: CodeGraph) -> GraphState:
    if graph.features.shape[1] != model.in_width:
        raise ShapeError(
            f"graph feature width {graph.features.shape[1]} does not match model input {model.in_width}"
        )
    edges = _edges_array(graph.edges)
    h0 = Tensor(graph.features) @ model.input_projection
    return GraphState(
        h=h0,
        h0=h0,
        edges=edges,
        root=graph.root,
        indeg=_indegrees(edges, graph.num_nodes),
    )


def faconv_forward(layer: FaConvLayer, state: GraphState) -> Tensor:
    """One frequency-adaptive convolution.

    h'_i = eps * h0_i + sum_{j -> i} tanh(g . [h_i || h_j]) / sqrt(d_i d_j) * h_j
    with d = in-degree + 1 on the current graph; an empty neighborhood
    contributes nothing beyond the initial-feature term.
    """
    if layer.gate.shape[0] != 2 * state.h.shape[1]:
        raise ShapeError(
            f"gate size {layer.gate.shape[0]} does not match hidden width {state.h.shape[1]}"
        )
    base = layer.eps * state.h0
    if not state.edges.size:
        return base
    src, dst = state.edges[:, 0], state.edges[:, 1]
    d = state.indeg + 1.0
    inv_sqrt = 1.0 / np.sqrt(d[dst] * d[src])
    h_dst = gather_rows(state.h, dst)
    h_src = gather_rows(state.h, src)
    alpha = concat([h_dst, h_src], axis=1) @ layer.gate
    coef = alpha.tanh() * Tensor(inv_sqrt)
    messages = h_src * coef.reshape(-1, 1)
    return base + segment_sum(messages, dst, state.num_nodes)


def _projection_score(proj: Tensor, state: GraphState) -> Tensor:
    """(H p) / ||p||; a zero projection vector contributes nothing (flagged)."""
    norm = float(np.linalg.norm(proj.data))
    if norm == 0.0:
        logger.warning("pooling projection vector is zero; feature term disabled")
        return Tensor(np.zeros(state.num_nodes))
    return (state.h @ proj) / (proj * proj).sum().sqrt()


def astgpool_score(layer: AstGPoolLayer, state: GraphState) -> Tensor:
    """score = beta1 * (H p)/||p|| + beta2 * in-degree."""
    return layer.beta1 * _projection_score(layer.proj, state) + layer.beta2 * Tensor(state.indeg)


def topkpool_score(layer: AstGPoolLayer, state: GraphState) -> Tensor:
    return _projection_score(layer.proj, state)


def sagpool_score(layer: AstGPoolLayer, state: GraphState) -> Tensor:
    """One self-loop graph-convolution attention pass:
    score_i = sum_{j in N(i) + {i}} (h_j . p) / sqrt(d_i d_j), d = in-degree + 1.
    """
    raw = state.h @ layer.proj
    d = state.indeg + 1.0
    score = raw * Tensor(1.0 / d)
    if state.edges.size:
        src, dst = state.edges[:, 0], state.edges[:, 1]
        inv_sqrt = 1.0 / np.sqrt(d[dst] * d[src])
        score = score + segment_sum(gather_rows(raw, src) * Tensor(inv_sqrt), dst, state.num_nodes)
    return score


_SCORE_FNS = {
    "astgpool": astgpool_score,
    "topkpool": topkpool_score,
    "sagpool": sagpool_score,
}


def select_top_k(scores: np.ndarray, ratio: float, root: int) -> np.ndarray:
    """Kept node ids: top ceil(ratio*n) by score, ties to the lower id,
    with the root forced in (displacing the lowest kept non-root)."""
    n = scores.shape[0]
    k = max(1, math.ceil(ratio * n))
    order = np.lexsort((np.arange(n), -scores))
    top = order[:k]
    if root not in top:
        top = np.concatenate([top[: k - 1], [root]])
    return np.sort(top)


def graph_pool(
    layer: AstGPoolLayer,
    state: GraphState,
    method: str = "astgpool",
    forced_kept: np.ndarray | None = None,
) -> tuple[GraphState, np.ndarray]:
    """Score, select, gate, and induce the subgraph; returns the kept ids.

    forced_kept replays a previously recorded selection (used to hold the
    non-differentiable choice fixed, e.g. for finite-difference checks).
    """
    try:
        scores = _SCORE_FNS[method](layer, state)
    except KeyError:
        raise ContractViolation(f"unknown pooling method {method!r}") from None
    kept = forced_kept if forced_kept is not None else select_top_k(scores.data, layer.ratio, state.root)

    gate = gather_rows(scores.tanh(), kept)
    new_h = gather_rows(state.h, kept) * gate.reshape(-1, 1)
    new_h0 = gather_rows(state.h0, kept)

    remap = np.full(state.num_nodes, -1, dtype=np.int64)
    remap[kept] = np.arange(kept.shape[0])
    edges = state.edges
    if edges.size:
        mask = (remap[edges[:, 0]] >= 0) & (remap[edges[:, 1]] >= 0)
        edges = remap[edges[mask]]
    else:
        edges = np.zeros((0, 2), dtype=np.int64)
    new_state = GraphState(
        h=new_h,
        h0=new_h0,
        edges=edges,
        root=int(remap[state.root]),
        indeg=_indegrees(edges, kept.shape[0]),
        scores=scores.data[kept].copy(),
    )
    return new_state, kept


def global_max_pool(state: GraphState) -> Tensor:
    """Coordinatewise max over nodes; the root guarantees non-emptiness."""
    return state.h.max(axis=0)


def gru_fuse(gru: GruParams, features: list[Tensor]) -> Tensor:
    """GRU over the per-depth readouts F1..FL from a zero hidden state.

    Per step: z = sigmoid(x W_z + h U_z + b_z), r = sigmoid(x W_r + h U_r + b_r),
    h~ = tanh(x W_h + (r*h) U_h + b_h), h' = (1-z)*h + z*h~.
    """
    if not features:
        raise ContractViolation("gru_fuse needs at least one feature vector")
    h = Tensor(np.zeros(gru.b_z.shape[0]))
    for x in features:
        z = (x @ gru.w_z + h @ gru.u_z + gru.b_z).sigmoid()
        r = (x @ gru.w_r + h @ gru.u_r + gru.b_r).sigmoid()
        candidate = (x @ gru.w_h + (r * h) @ gru.u_h + gru.b_h).tanh()
        h = (1.0 - z) * h + z * candidate
    return h


def model_forward(
    model: GnnModel,
    graph: CodeGraph,
    root_embedding: np.ndarray,
    fixed_selections: list[np.ndarray] | None = None,
    trace: dict | None = None,
) -> Tensor:
    """Full encoder pass: returns the unit-norm code embedding.

    Per depth: FAConv, global-max readout, then pooling (optionally skipped
    after the last depth). The GRU fuses the readouts; the output projection
    maps to the embedder dimension; sigmoid(lambda) blends with the root's
    frozen embedding.
    """
    root_embedding = np.asarray(root_embedding, dtype=np.float64)
    if root_embedding.shape != (model.d_out,):
        raise ShapeError(
            f"root embedding has shape {root_embedding.shape}, model expects ({model.d_out},)"
        )
    state = initial_state(model, graph)
    features: list[Tensor] = []
    selections: list[np.ndarray] = []
    for level in range(model.depth):
        state.h = faconv_forward(model.conv[level], state)
        features.append(global_max_pool(state))
        if level < model.depth - 1 or model.pool_after_last:
            forced = fixed_selections[level] if fixed_selections is not None else None
            state, kept = graph_pool(model.pool[level], state, model.pooling, forced_kept=forced)
            selections.append(kept)
    fused = gru_fuse(model.gru, features)
    gnn_out = fused @ model.output_projection
    lam = model.balance()
    blended = lam * gnn_out + (1.0 - lam) * Tensor(root_embedding)
    if trace is not None:
        trace["selections"] = selections
        trace["features"] = features
        trace["final_state"] = state
    return l2_normalize(blended)


def backward(model, output: Tensor, grad_at_output: np.ndarray) -> dict[str, np.ndarray]:
    """Reverse pass from a forward output; returns gradients keyed by name.

    The pooling selection stays as chosen in the forward pass; gradients flow
    through the tanh score gates and the kept features.
    """
    model.zero_grad()
    output.backward(np.asarray(grad_at_output, dtype=np.float64))
    return {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for name, p in model.parameters()}


# --- MLP adapter baseline ------------------------------------------------------


class MlpAdapter:
    """Two-layer perceptron remap of the root embedding (no graph input),
    with the same residual blend and normalization as the graph encoder."""

    def __init__(self, d_out: int, hidden: int | None = None, seed: int = 0):
        hidden = 2 * d_out if hidden is None else hidden
        self.in_width = 0
        self.d_out = d_out
        self.hidden = hidden
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.w1 = parameter(_glorot(rng, d_out, hidden))
        self.b1 = parameter(np.zeros(hidden))
        self.w2 = parameter(_glorot(rng, hidden, d_out))
        self.b2 = parameter(np.zeros(d_out))
        self.lambda_raw = parameter(math.log(0.2 / 0.8))
        self.tau_raw = parameter(math.log(1.0 / 0.07))

    @classmethod
    def identity_initialized(cls, d_out: int) -> "MlpAdapter":
        """relu(x) - relu(-x) == x: the adapter reproduces its input exactly."""
        adapter = cls(d_out, hidden=2 * d_out)
        eye = np.eye(d_out)
        adapter.w1.data = np.concatenate([eye, -eye], axis=1)
        adapter.w2.data = np.concatenate([eye, -eye], axis=0)
        adapter.b1.data[:] = 0.0
        adapter.b2.data[:] = 0.0
        return adapter

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [
            ("mlp.w1", self.w1),
            ("mlp.b1", self.b1),
            ("mlp.w2", self.w2),
            ("mlp.b2", self.b2),
            ("lambda", self.lambda_raw),
            ("tau", self.tau_raw),
        ]

    def zero_grad(self) -> None:
        for _, p in self.parameters():
            p.zero_grad()

    def balance(self) -> Tensor:
        return self.lambda_raw.sigmoid()

    def temperature(self) -> Tensor:
        return (-self.tau_raw).exp().maximum(1e-3)

    def encode(self, graph: CodeGraph | None, root_embedding: np.ndarray) -> Tensor:
        return mlp_adapter_forward(self, root_embedding)

    def manifest_dims(self) -> dict:
        return {"d_out": self.d_out, "hidden": self.hidden, "in_width": 0, "depth": 0}

    def manifest_config(self) -> dict:
        return {"pooling": "none"}


def mlp_adapter_forward(adapter: MlpAdapter, root_embedding: np.ndarray) -> Tensor:
    root_embedding = np.asarray(root_embedding, dtype=np.float64)
    if root_embedding.shape != (adapter.d_out,):
        raise ShapeError(
            f"root embedding has shape {root_embedding.shape}, adapter expects ({adapter.d_out},)"
        )
    x = Tensor(root_embedding)
    hidden = (x @ adapter.w1 + adapter.b1).maximum(0.0)
    remapped = hidden @ adapter.w2 + adapter.b2
    lam = adapter.balance()
    return l2_normalize(lam * remapped + (1.0 - lam) * x)


# --- checkpoint format -----------------------------------------------------------


def _serialize(model) -> tuple[bytes, bytes]:
    """(manifest bytes, float32 blob bytes) for a model; deterministic."""
    tensors = []
    blob = bytearray()
    for name, p in model.parameters():
        payload = np.asarray(p.data, dtype="<f4").tobytes()
        tensors.append(
            {"name": name, "shape": list(np.shape(p.data)), "offset": len(blob), "len": len(payload)}
        )
        blob.extend(payload)
    manifest = {
        "version": CHECKPOINT_VERSION,
        "kind": "mlp_adapter" if isinstance(model, MlpAdapter) else "gnn",
        "dims": model.manifest_dims(),
        "config": model.manifest_config(),
        "seed": model.seed,
        "tensors": tensors,
    }
    manifest_bytes = json.dumps(manifest, sort_keys=True).encode("utf-8")
    return manifest_bytes, bytes(blob)


def model_fingerprint(model) -> str:
    manifest_bytes, blob = _serialize(model)
    digest = hashlib.sha256(manifest_bytes + blob).hexdigest()
    return f"model:sha256:{digest[:32]}"


def save_checkpoint(model, path: str | Path) -> None:
    """Manifest JSON at `path`, raw float32 blob at `path + '.blob'`."""
    path = Path(path)
    manifest_bytes, blob = _serialize(model)
    manifest = json.loads(manifest_bytes)
    manifest["blob"] = path.name + ".blob"
    path.write_bytes(json.dumps(manifest, sort_keys=True).encode("utf-8"))
    Path(str(path) + ".blob").write_bytes(blob)


def load_checkpoint(path: str | Path):
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read checkpoint manifest: {exc}") from exc
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {manifest.get('version')}")
    blob = Path(path.parent / manifest["blob"]).read_bytes()
    dims = manifest["dims"]
    config = manifest.get("config", {})
    if manifest.get("kind") == "mlp_adapter":
        model = MlpAdapter(d_out=dims["d_out"], hidden=dims["hidden"], seed=manifest.get("seed", 0))
    else:
        model = GnnModel(
            in_width=dims["in_width"],
            d_out=dims["d_out"],
            hidden=dims["hidden"],
            depth=dims["depth"],
            eps=config.get("eps", 0.5),
            ratio=config.get("ratio", 0.1),
            pooling=config.get("pooling", "astgpool"),
            pool_after_last=config.get("pool_after_last", True),
            seed=manifest.get("seed", 0),
        )
    params = dict(model.parameters())
    manifest_names = {spec["name"] for spec in manifest["tensors"]}
    missing = set(params) - manifest_names
    if missing:
        raise FormatError(f"checkpoint is missing tensors: {sorted(missing)}")
    for spec in manifest["tensors"]:
        name = spec["name"]
        if name not in params:
            raise FormatError(f"checkpoint tensor {name!r} not in model")
        raw = blob[spec["offset"] : spec["offset"] + spec["len"]]
        values = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        shape = tuple(spec["shape"])
        if values.size != int(np.prod(shape, dtype=np.int64)):
            raise FormatError(f"tensor {name!r} payload size mismatch")
        params[name].data = values.reshape(shape)
    return model
