"""Graph encoder: layer oracles, pooling semantics, forward contract, gradients."""

from __future__ import annotations

import math

import numpy as np
import pytest

from astsearch.errors import ContractViolation, ShapeError
from astsearch.gnn import (
    AstGPoolLayer,
    FaConvLayer,
    GnnModel,
    GraphState,
    GruParams,
    MlpAdapter,
    astgpool_score,
    backward,
    faconv_forward,
    global_max_pool,
    graph_pool,
    gru_fuse,
    initial_state,
    load_checkpoint,
    mlp_adapter_forward,
    model_forward,
    sagpool_score,
    save_checkpoint,
    select_top_k,
    topkpool_score,
    _indegrees,
)
from astsearch.graph import CodeGraph
from astsearch.tensor import Tensor, parameter
from tests.gradcheck import random_tree_graph, run_gradient_suite

RNG = np.random.default_rng(7)


def make_state(h, edges, root=0, h0=None):
    h = np.asarray(h, dtype=np.float64)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    return GraphState(
        h=Tensor(h),
        h0=Tensor(h0 if h0 is not None else h.copy()),
        edges=edges,
        root=root,
        indeg=_indegrees(edges, h.shape[0]),
    )


def star_state(hidden=2):
    # center 0 with three leaves feeding it (reversed edges leaf -> center)
    h = RNG.normal(size=(4, hidden))
    return make_state(h, [[1, 0], [2, 0], [3, 0]], root=0)


class TestFaConv:
    def test_edgeless_graph_returns_scaled_initial_features(self):
        h0 = RNG.normal(size=(3, 4))
        h = RNG.normal(size=(3, 4))
        state = make_state(h, np.zeros((0, 2)), h0=h0)
        layer = FaConvLayer(gate=parameter(RNG.normal(size=8)), eps=0.3)
        out = faconv_forward(layer, state)
        np.testing.assert_allclose(out.data, 0.3 * h0, atol=1e-15)

    def test_gate_coefficients_bounded(self):
        state = star_state(hidden=3)
        layer = FaConvLayer(gate=parameter(RNG.normal(size=6) * 10), eps=0.5)
        # alpha = tanh(...) checked indirectly: message norm can't exceed sum |h_j| / sqrt(d)
        out = faconv_forward(layer, state)
        assert np.all(np.isfinite(out.data))

    def test_two_node_chain_matches_straight_line_oracle(self):
        hidden = 3
        h = np.array([[0.5, -0.25, 0.75], [1.0, 0.5, -0.5]])
        h0 = np.array([[0.2, 0.1, -0.3], [0.4, -0.2, 0.6]])
        gate = np.array([0.1, -0.2, 0.3, 0.05, 0.15, -0.1])
        eps = 0.25
        state = make_state(h, [[0, 1]], root=1, h0=h0)
        layer = FaConvLayer(gate=parameter(gate.copy()), eps=eps)
        out = faconv_forward(layer, state).data

        # independent oracle: explicit loops over the definition
        indeg = np.array([0.0, 1.0])
        d = indeg + 1.0
        expected = eps * h0.copy()
        for src, dst in [(0, 1)]:
            alpha = math.tanh(float(gate @ np.concatenate([h[dst], h[src]])))
            expected[dst] += alpha / math.sqrt(d[dst] * d[src]) * h[src]
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_shape_mismatch_raises(self):
        state = star_state(hidden=3)
        layer = FaConvLayer(gate=parameter(np.zeros(4)), eps=0.5)
        with pytest.raises(ShapeError):
            faconv_forward(layer, state)


class TestAstGPoolScore:
    def test_star_degree_only(self):
        state = star_state()
        layer = AstGPoolLayer(
            proj=parameter(RNG.normal(size=2)),
            beta1=parameter(0.0),
            beta2=parameter(1.0),
            ratio=0.5,
        )
        np.testing.assert_allclose(astgpool_score(layer, state).data, [3.0, 0.0, 0.0, 0.0], atol=1e-15)

    def test_beta2_zero_reduces_to_topk_scores(self):
        state = star_state(hidden=4)
        p = RNG.normal(size=4)
        layer = AstGPoolLayer(parameter(p.copy()), parameter(1.0), parameter(0.0), ratio=0.5)
        np.testing.assert_allclose(
            astgpool_score(layer, state).data,
            topkpool_score(layer, state).data,
            atol=1e-15,
        )

    def test_hand_computed_five_node_fixture(self):
        h = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [-1.0, 0.5], [0.5, -0.5]])
        state = make_state(h, [[1, 0], [2, 0], [3, 2], [4, 2]], root=0)
        layer = AstGPoolLayer(
            proj=parameter(np.array([3.0, 4.0])),
            beta1=parameter(1.0),
            beta2=parameter(1.0),
            ratio=0.5,
        )
        # by hand: H p / ||p|| = [0.6, 0.8, 1.4, -0.2, -0.1]; indeg = [2, 0, 2, 0, 0]
        np.testing.assert_allclose(
            astgpool_score(layer, state).data, [2.6, 0.8, 3.4, -0.2, -0.1], atol=1e-12
        )

    def test_zero_projection_vector_is_flagged_not_fatal(self, caplog):
        state = star_state()
        layer = AstGPoolLayer(parameter(np.zeros(2)), parameter(1.0), parameter(1.0), ratio=0.5)
        with caplog.at_level("WARNING"):
            scores = astgpool_score(layer, state)
        np.testing.assert_allclose(scores.data, state.indeg)
        assert "zero" in caplog.text

    def test_sagpool_matches_loop_oracle(self):
        state = star_state(hidden=3)
        p = RNG.normal(size=3)
        layer = AstGPoolLayer(parameter(p.copy()), parameter(1.0), parameter(1.0), ratio=0.5)
        got = sagpool_score(layer, state).data

        h = state.h.data
        d = state.indeg + 1.0
        raw = h @ p
        expected = raw / d
        for src, dst in state.edges:
            expected[dst] += raw[src] / math.sqrt(d[dst] * d[src])
        np.testing.assert_allclose(got, expected, atol=1e-12)


class TestGraphPool:
    def layer(self, ratio, hidden=2, p=None):
        return AstGPoolLayer(
            proj=parameter(p if p is not None else RNG.normal(size=hidden)),
            beta1=parameter(1.0),
            beta2=parameter(1.0),
            ratio=ratio,
        )

    def test_half_ratio_keeps_two_of_four(self):
        state = star_state()
        new_state, kept = graph_pool(self.layer(0.5), state)
        assert kept.shape[0] == 2
        assert new_state.num_nodes == 2

    def test_ratio_one_keeps_all_and_gates(self):
        state = star_state()
        scores = astgpool_score(self.layer(1.0), state)
        layer = self.layer(1.0)
        scores = astgpool_score(layer, state)
        new_state, kept = graph_pool(layer, state)
        np.testing.assert_array_equal(kept, np.arange(4))
        np.testing.assert_allclose(
            new_state.h.data, state.h.data * np.tanh(scores.data)[:, None], atol=1e-12
        )

    def test_star_quarter_ratio_keeps_center_root(self):
        state = star_state()
        layer = AstGPoolLayer(parameter(np.zeros(2)), parameter(0.0), parameter(1.0), ratio=0.25)
        new_state, kept = graph_pool(layer, state)
        np.testing.assert_array_equal(kept, [0])
        assert new_state.root == 0

    def test_root_forced_in(self):
        # root scores lowest; must displace the weakest kept non-root
        h = np.diag([0.0, 3.0, 2.0, 1.0])
        state = make_state(h, [[1, 0], [2, 1], [3, 2]], root=0)
        layer = AstGPoolLayer(parameter(np.ones(4)), parameter(1.0), parameter(0.0), ratio=0.5)
        scores = astgpool_score(layer, state).data
        assert scores[0] < min(scores[1:])  # precondition: root is weakest
        _, kept = graph_pool(layer, state)
        assert 0 in kept
        assert set(kept.tolist()) == {0, 1}  # top non-root kept, weakest dropped

    def test_tie_break_prefers_lower_id(self):
        h = np.ones((4, 2))
        state = make_state(h, [[1, 0], [2, 0], [3, 0]], root=0)
        layer = AstGPoolLayer(parameter(np.ones(2)), parameter(1.0), parameter(0.0), ratio=0.5)
        _, kept = graph_pool(layer, state)
        np.testing.assert_array_equal(kept, [0, 1])

    def test_monotone_in_ratio(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            n = int(rng.integers(3, 12))
            edges = [[i, int(rng.integers(0, i))] for i in range(1, n)]
            state = make_state(rng.normal(size=(n, 3)), edges, root=0)
            layer = AstGPoolLayer(parameter(rng.normal(size=3)), parameter(1.0), parameter(1.0), ratio=1.0)
            kept_sets = []
            for ratio in (0.2, 0.4, 0.6, 0.8, 1.0):
                layer.ratio = ratio
                _, kept = graph_pool(layer, state)
                kept_sets.append(set(kept.tolist()))
            for smaller, larger in zip(kept_sets, kept_sets[1:]):
                assert smaller <= larger

    def test_degree_only_matches_exhaustive_oracle_on_random_trees(self):
        failures = 0
        for seed in range(100):
            rng = np.random.default_rng(1000 + seed)
            n = int(rng.integers(2, 20))
            edges = [[i, int(rng.integers(0, i))] for i in range(1, n)]
            ratio = float(rng.choice([0.1, 0.25, 0.5, 0.75]))
            state = make_state(rng.normal(size=(n, 2)), edges, root=0)
            layer = AstGPoolLayer(parameter(rng.normal(size=2)), parameter(0.0), parameter(1.0), ratio=ratio)
            _, kept = graph_pool(layer, state)

            # exhaustive oracle: count in-degrees by scanning, order by
            # (-degree, id), take k, then apply the documented root rule
            indeg = [0] * n
            for _, dst in edges:
                indeg[dst] += 1
            order = sorted(range(n), key=lambda i: (-indeg[i], i))
            k = max(1, math.ceil(ratio * n))
            top = order[:k]
            if 0 not in top:
                top = top[: k - 1] + [0]
            if set(kept.tolist()) != set(top):
                failures += 1
        assert failures == 0

    def test_topk_kept_set_invariant_under_positive_scaling(self):
        rng = np.random.default_rng(5)
        n = 9
        edges = [[i, int(rng.integers(0, i))] for i in range(1, n)]
        h = rng.normal(size=(n, 3))
        p = rng.normal(size=3)
        for scale in (0.01, 1.0, 250.0):
            state = make_state(h * scale, edges, root=0)
            layer = AstGPoolLayer(parameter(p.copy()), parameter(1.0), parameter(0.0), ratio=0.4)
            _, kept = graph_pool(layer, state, method="topkpool")
            if scale == 0.01:
                reference = kept.tolist()
            assert kept.tolist() == reference

    def test_induced_subgraph_edges(self):
        # chain 3->2->1->0; dropping node 2 removes both its edges
        h = np.array([[9.0], [8.0], [-9.0], [7.0]])
        state = make_state(h, [[1, 0], [2, 1], [3, 2]], root=0)
        layer = AstGPoolLayer(parameter(np.ones(1)), parameter(1.0), parameter(0.0), ratio=0.75)
        new_state, kept = graph_pool(layer, state)
        np.testing.assert_array_equal(kept, [0, 1, 3])
        assert new_state.edges.tolist() == [[1, 0]]  # only 1->0 survives, relabeled

    def test_unknown_method(self):
        state = star_state()
        with pytest.raises(ContractViolation):
            graph_pool(self.layer(0.5), state, method="mystery")


class TestGlobalMaxPool:
    def test_single_node(self):
        state = make_state([[1.0, -2.0, 3.0]], np.zeros((0, 2)))
        np.testing.assert_array_equal(global_max_pool(state).data, [1.0, -2.0, 3.0])

    def test_two_nodes_coordinatewise(self):
        state = make_state([[1.0, -2.0], [0.0, 5.0]], np.zeros((0, 2)))
        np.testing.assert_array_equal(global_max_pool(state).data, [1.0, 5.0])

    def test_matches_brute_force(self):
        h = RNG.normal(size=(7, 5))
        state = make_state(h, np.zeros((0, 2)))
        expected = np.array([max(h[i, k] for i in range(7)) for k in range(5)])
        np.testing.assert_array_equal(global_max_pool(state).data, expected)


def random_gru(hidden, seed):
    rng = np.random.default_rng(seed)
    mats = {n: parameter(rng.normal(size=(hidden, hidden)) * 0.3) for n in ("w_z", "u_z", "w_r", "u_r", "w_h", "u_h")}
    vecs = {n: parameter(rng.normal(size=hidden) * 0.1) for n in ("b_z", "b_r", "b_h")}
    return GruParams(**mats, **vecs)


class TestGruFuse:
    def test_single_step_closed_form(self):
        gru = random_gru(4, seed=1)
        x = RNG.normal(size=4)
        got = gru_fuse(gru, [Tensor(x)]).data

        def sig(v):
            return 1.0 / (1.0 + np.exp(-v))

        z = sig(x @ gru.w_z.data + gru.b_z.data)  # h = 0 drops the U terms
        candidate = np.tanh(x @ gru.w_h.data + gru.b_h.data)
        np.testing.assert_allclose(got, z * candidate, atol=1e-12)

    def test_all_zero_parameters_give_zero_output(self):
        zeros = {n: parameter(np.zeros((3, 3))) for n in ("w_z", "u_z", "w_r", "u_r", "w_h", "u_h")}
        vecs = {n: parameter(np.zeros(3)) for n in ("b_z", "b_r", "b_h")}
        gru = GruParams(**zeros, **vecs)
        out = gru_fuse(gru, [Tensor(np.ones(3))]).data
        np.testing.assert_array_equal(out, np.zeros(3))

    def test_three_step_sequence_matches_oracle(self):
        gru = random_gru(4, seed=2)
        xs = [RNG.normal(size=4) for _ in range(3)]
        got = gru_fuse(gru, [Tensor(x) for x in xs]).data

        def sig(v):
            return 1.0 / (1.0 + np.exp(-v))

        h = np.zeros(4)
        for x in xs:
            z = sig(x @ gru.w_z.data + h @ gru.u_z.data + gru.b_z.data)
            r = sig(x @ gru.w_r.data + h @ gru.u_r.data + gru.b_r.data)
            cand = np.tanh(x @ gru.w_h.data + (r * h) @ gru.u_h.data + gru.b_h.data)
            h = (1.0 - z) * h + z * cand
        np.testing.assert_allclose(got, h, atol=1e-12)

    def test_empty_sequence_rejected(self):
        with pytest.raises(ContractViolation):
            gru_fuse(random_gru(4, seed=3), [])


def random_graph_and_root(seed, width, d_out, max_nodes=12):
    rng = np.random.default_rng(seed)
    graph = random_tree_graph(rng, max_nodes, width)
    root = rng.normal(size=d_out)
    return graph, root / np.linalg.norm(root)


class TestModelForward:
    def test_lambda_floor_returns_root_embedding(self):
        graph, root = random_graph_and_root(0, 12, 8)
        model = GnnModel(in_width=12, d_out=8, hidden=8, seed=0)
        model.lambda_raw.data = np.float64(-60.0)  # sigmoid -> 0
        out = model_forward(model, graph, root)
        np.testing.assert_allclose(out.data, root, atol=1e-12)

    def test_output_is_unit_norm(self):
        graph, root = random_graph_and_root(1, 12, 8)
        model = GnnModel(in_width=12, d_out=8, hidden=8, seed=1)
        assert abs(np.linalg.norm(model_forward(model, graph, root).data) - 1.0) < 1e-6

    def test_bitwise_deterministic(self):
        graph, root = random_graph_and_root(2, 12, 8)
        model = GnnModel(in_width=12, d_out=8, hidden=8, seed=2)
        a = model_forward(model, graph, root).data
        b = model_forward(model, graph, root).data
        assert a.tobytes() == b.tobytes()

    def test_backward_bitwise_deterministic(self):
        graph, root = random_graph_and_root(9, 12, 8)
        model = GnnModel(in_width=12, d_out=8, hidden=8, seed=9)
        seed_grad = np.linspace(-1.0, 1.0, 8)
        grads_a = backward(model, model_forward(model, graph, root), seed_grad)
        grads_b = backward(model, model_forward(model, graph, root), seed_grad)
        for name in grads_a:
            assert grads_a[name].tobytes() == grads_b[name].tobytes(), name

    def test_undirected_graph_forward_runs(self):
        # ablation path: both edge directions present
        rng = np.random.default_rng(40)
        graph = random_tree_graph(rng, 8, 12)
        graph.edges = graph.edges + [(d, s) for s, d in graph.edges]
        root = rng.normal(size=8)
        root /= np.linalg.norm(root)
        model = GnnModel(in_width=12, d_out=8, hidden=8, seed=5)
        out = model_forward(model, graph, root)
        assert np.all(np.isfinite(out.data))
        assert abs(np.linalg.norm(out.data) - 1.0) < 1e-9

    def test_wrong_feature_width(self):
        graph, root = random_graph_and_root(3, 12, 8)
        model = GnnModel(in_width=10, d_out=8, hidden=8)
        with pytest.raises(ShapeError):
            model_forward(model, graph, root)

    def test_wrong_root_dim(self):
        graph, _ = random_graph_and_root(3, 12, 8)
        model = GnnModel(in_width=12, d_out=8, hidden=8)
        with pytest.raises(ShapeError):
            model_forward(model, graph, np.zeros(5))

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(11)
        graph, root_emb = random_graph_and_root(4, 12, 8, max_nodes=10)
        model = GnnModel(in_width=12, d_out=8, hidden=8, seed=4, ratio=0.5)
        perm = rng.permutation(graph.num_nodes)
        features = np.empty_like(graph.features)
        features[perm] = graph.features
        permuted = CodeGraph(
            num_nodes=graph.num_nodes,
            edges=[(int(perm[s]), int(perm[d])) for s, d in graph.edges],
            features=features,
            root=int(perm[graph.root]),
            node_kinds=graph.node_kinds.copy(),
            kinds=list(graph.kinds),
            contents=list(graph.contents),
        )
        out_a = model_forward(model, graph, root_emb).data
        out_b = model_forward(model, permuted, root_emb).data
        np.testing.assert_allclose(out_a, out_b, atol=1e-9)

        # first-depth rows are permuted coordinates of each other
        state_a = initial_state(model, graph)
        state_b = initial_state(model, permuted)
        h_a = faconv_forward(model.conv[0], state_a).data
        h_b = faconv_forward(model.conv[0], state_b).data
        np.testing.assert_allclose(h_b[perm], h_a, atol=1e-12)

    def test_root_survives_every_pool_depth(self):
        for seed in range(8):
            graph, root_emb = random_graph_and_root(seed + 20, 12, 8)
            model = GnnModel(in_width=12, d_out=8, hidden=8, seed=seed, ratio=0.3)
            trace: dict = {}
            model_forward(model, graph, root_emb, trace=trace)
            assert trace["final_state"].root >= 0
            current_root = graph.root
            for kept in trace["selections"]:
                assert current_root in kept
                current_root = int(np.where(kept == current_root)[0][0])

    def test_pool_after_last_flag_changes_final_state(self):
        graph, root_emb = random_graph_and_root(30, 12, 8, max_nodes=12)
        kwargs = dict(in_width=12, d_out=8, hidden=8, seed=3, ratio=0.5)
        with_pool = GnnModel(pool_after_last=True, **kwargs)
        without_pool = GnnModel(pool_after_last=False, **kwargs)
        t1: dict = {}
        t2: dict = {}
        model_forward(with_pool, graph, root_emb, trace=t1)
        model_forward(without_pool, graph, root_emb, trace=t2)
        assert len(t1["selections"]) == 3
        assert len(t2["selections"]) == 2


class TestMlpAdapter:
    def test_identity_initialization_reproduces_input(self):
        adapter = MlpAdapter.identity_initialized(6)
        root = RNG.normal(size=6)
        root /= np.linalg.norm(root)
        np.testing.assert_allclose(mlp_adapter_forward(adapter, root).data, root, atol=1e-12)

    def test_dimension_contract(self):
        adapter = MlpAdapter(d_out=8, seed=0)
        root = np.ones(8) / math.sqrt(8.0)
        out = mlp_adapter_forward(adapter, root)
        assert out.data.shape == (8,)
        assert abs(np.linalg.norm(out.data) - 1.0) < 1e-9

    def test_forward_matches_loop_oracle(self):
        adapter = MlpAdapter(d_out=4, hidden=5, seed=9)
        root = RNG.normal(size=4)
        root /= np.linalg.norm(root)
        got = mlp_adapter_forward(adapter, root).data

        hidden = np.maximum(root @ adapter.w1.data + adapter.b1.data, 0.0)
        remapped = hidden @ adapter.w2.data + adapter.b2.data
        lam = 1.0 / (1.0 + math.exp(-float(adapter.lambda_raw.data)))
        blended = lam * remapped + (1.0 - lam) * root
        np.testing.assert_allclose(got, blended / np.linalg.norm(blended), atol=1e-12)


class TestCheckpoint:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_randomized_round_trip_bit_exact(self, tmp_path, seed):
        model = GnnModel(in_width=11, d_out=8, hidden=6, depth=2, seed=seed)
        rng = np.random.default_rng(seed)
        for _, p in model.parameters():
            # float32-representable values so the float32 blob is lossless
            p.data = np.asarray(
                rng.standard_normal(size=p.data.shape).astype(np.float32), dtype=np.float64
            ).reshape(p.data.shape)
        path = tmp_path / "first" / "model.ckpt"
        path.parent.mkdir()
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        for (name_a, a), (name_b, b) in zip(model.parameters(), loaded.parameters()):
            assert name_a == name_b
            assert a.data.tobytes() == b.data.tobytes()
        path2 = tmp_path / "second" / "model.ckpt"
        path2.parent.mkdir()
        save_checkpoint(loaded, path2)
        assert path.read_bytes() == path2.read_bytes()
        assert (str(path) + ".blob") != (str(path2) + ".blob")
        blob_a = (path.parent / "model.ckpt.blob").read_bytes()
        blob_b = (path2.parent / "model.ckpt.blob").read_bytes()
        assert blob_a == blob_b

    def test_missing_tensor_detected(self, tmp_path):
        import json

        from astsearch.errors import FormatError

        model = GnnModel(in_width=11, d_out=8, hidden=6, depth=2, seed=0)
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, path)
        manifest = json.loads(path.read_text())
        manifest["tensors"] = manifest["tensors"][:-1]
        path.write_text(json.dumps(manifest))
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_adapter_round_trip(self, tmp_path):
        adapter = MlpAdapter(d_out=6, seed=1)
        path = tmp_path / "adapter.ckpt"
        save_checkpoint(adapter, path)
        loaded = load_checkpoint(path)
        assert isinstance(loaded, MlpAdapter)
        root = np.ones(6) / math.sqrt(6.0)
        a = mlp_adapter_forward(adapter, root).data
        b = mlp_adapter_forward(loaded, root).data
        np.testing.assert_allclose(a, b, atol=1e-7)  # float32 checkpoint rounding


class TestSelectTopK:
    def test_forced_root_drops_lowest_non_root(self):
        scores = np.array([0.0, 5.0, 4.0, 3.0])
        kept = select_top_k(scores, ratio=0.5, root=0)
        np.testing.assert_array_equal(kept, [0, 1])

    def test_ties_prefer_lower_id(self):
        scores = np.ones(5)
        kept = select_top_k(scores, ratio=0.4, root=0)
        np.testing.assert_array_equal(kept, [0, 1])


class TestGradients:
    def test_gradient_suite_single_seed(self):
        worst = run_gradient_suite(seeds=(0,))
        for cls, rel in worst.items():
            assert rel < 1e-4, f"{cls}: {rel}"

    def test_backward_returns_all_parameter_gradients(self):
        graph, root = random_graph_and_root(6, 12, 8)
        model = GnnModel(in_width=12, d_out=8, hidden=8, seed=6)
        out = model_forward(model, graph, root)
        grads = backward(model, out, np.ones(8))
        assert set(grads) == {name for name, _ in model.parameters()}
        assert any(np.abs(g).max() > 0 for g in grads.values())
