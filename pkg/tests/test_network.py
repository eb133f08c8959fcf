import numpy as np
import pytest

from treeconv.datagen import random_tree
from treeconv.errors import ValidationError
from treeconv.gradcheck import model_gradient_checks
from treeconv.network import (
    LOWER_LEFT,
    LOWER_RIGHT,
    TOP,
    ModelParams,
    assign_pool_regions,
    backward,
    combined_node_vectors,
    compile_tree,
    conv_coefficients,
    cross_entropy,
    forward,
    pool_max,
    tree_convolve,
)
from treeconv.trees import Ast, annotate


def random_params(rng, n_symbols, f, c, h, k, scale=0.5, bow_dim=0):
    params = ModelParams.zeros(n_symbols, f, c, h, k, bow_dim=bow_dim)
    for t in params.tensors().values():
        t += rng.uniform(-scale, scale, t.shape)
    return params


# Naive reference: materialize the full interpolated weight matrix per window
# member and evaluate the window sum node by node.
def naive_tree_convolve(node_vectors, annotated, params):
    ast = annotated.ast
    out = np.zeros((len(ast), params.n_conv))
    for node in range(len(ast)):
        pre = params.b_conv.copy()
        w_top = (1.0 * params.w_conv_top + 0.0 * params.w_conv_left
                 + 0.0 * params.w_conv_right)
        pre = pre + w_top @ node_vectors[node]
        kids = ast.children[node]
        for i, child in enumerate(kids, start=1):
            if len(kids) == 1:
                eta_r = 0.5
            else:
                eta_r = (i - 1) / (len(kids) - 1)
            w = (1.0 - eta_r) * params.w_conv_left + eta_r * params.w_conv_right
            pre = pre + w @ node_vectors[child]
        out[node] = np.tanh(pre)
    return out


class TestConvCoefficients:
    def test_top(self):
        assert conv_coefficients("top") == (1.0, 0.0, 0.0)

    def test_bottom_endpoints_of_three(self):
        assert conv_coefficients("bottom", 1, 3) == (0.0, 1.0, 0.0)
        assert conv_coefficients("bottom", 2, 3) == (0.0, 0.5, 0.5)
        assert conv_coefficients("bottom", 3, 3) == (0.0, 0.0, 1.0)

    def test_only_child(self):
        assert conv_coefficients("bottom", 1, 1) == (0.0, 0.5, 0.5)

    def test_normalization_random(self, rng):
        for _ in range(200):
            n = int(rng.integers(1, 9))
            p = int(rng.integers(1, n + 1))
            t, l, r = conv_coefficients("bottom", p, n)
            assert t + l + r == 1.0

    def test_rejects_deeper_windows(self):
        with pytest.raises(ValidationError):
            conv_coefficients("top", window_depth=3)

    def test_rejects_bad_level(self):
        with pytest.raises(ValidationError):
            conv_coefficients("middle")


class TestCombinedVectors:
    def test_leaves_keep_embeddings(self, rng):
        ann = annotate(random_tree(rng, 15, 4))
        params = random_params(rng, 4, 5, 5, 5, 3)
        combined = combined_node_vectors(ann, params)
        for node in range(15):
            if ann.ast.is_leaf(node):
                assert np.array_equal(combined[node],
                                      params.embeddings[ann.ast.symbols[node]])

    def test_comb1_identity_collapses(self, rng):
        ann = annotate(random_tree(rng, 10, 4))
        params = random_params(rng, 4, 5, 5, 5, 3)
        params.w_comb1[:] = np.eye(5)
        params.w_comb2[:] = 0.0
        combined = combined_node_vectors(ann, params)
        for node in range(10):
            assert np.allclose(combined[node],
                               params.embeddings[ann.ast.symbols[node]], atol=1e-15)

    def test_comb2_identity_gives_coded(self, rng):
        ann = annotate(random_tree(rng, 10, 4))
        params = random_params(rng, 4, 5, 5, 5, 3)
        params.w_comb1[:] = 0.0
        params.w_comb2[:] = np.eye(5)
        combined = combined_node_vectors(ann, params)
        for node in range(10):
            if not ann.ast.is_leaf(node):
                assert np.all(combined[node] > -1.0) and np.all(combined[node] < 1.0)


class TestTreeConvolve:
    def test_zero_leaf_zero_output(self):
        ann = annotate(Ast((0,), ((),), 0))
        params = ModelParams.zeros(1, 3, 3, 3, 2)
        out = tree_convolve(np.zeros((1, 3)), ann, params)
        assert np.array_equal(out, np.zeros((1, 3)))

    def test_single_node_identity_kernel(self):
        ann = annotate(Ast((0,), ((),), 0))
        params = ModelParams.zeros(1, 3, 3, 3, 2)
        params.w_conv_top[:] = np.eye(3)
        x = np.array([[0.001, -0.002, 0.0005]])
        out = tree_convolve(x, ann, params)
        assert np.allclose(out, x, atol=1e-8)

    def test_matches_naive_oracle_three_nodes(self, rng):
        ast = Ast((0, 1, 2), ((1, 2), (), ()), 0)
        ann = annotate(ast)
        params = random_params(rng, 3, 4, 5, 4, 2)
        x = rng.uniform(-1, 1, (3, 4))
        assert np.allclose(tree_convolve(x, ann, params),
                           naive_tree_convolve(x, ann, params), atol=1e-12)

    def test_matches_naive_oracle_random_trees(self, rng):
        for _ in range(20):
            ann = annotate(random_tree(rng, int(rng.integers(2, 30)), 5))
            params = random_params(rng, 5, 6, 7, 4, 3)
            x = rng.uniform(-1, 1, (len(ann.ast), 6))
            assert np.allclose(tree_convolve(x, ann, params),
                               naive_tree_convolve(x, ann, params), atol=1e-12)

    def test_output_shape_preserved(self, rng):
        ann = annotate(random_tree(rng, 17, 4))
        params = random_params(rng, 4, 5, 9, 4, 2)
        out = tree_convolve(rng.uniform(-1, 1, (17, 5)), ann, params)
        assert out.shape == (17, 9)


class TestPoolRegions:
    def test_single_node_goes_lower_left(self):
        ann = annotate(Ast((0,), ((),), 0))
        regions = assign_pool_regions(ann, k=0.6)
        assert regions[0] == LOWER_LEFT

    def test_declaration_snippet_regions(self, decl_tree):
        ast, vocab = decl_tree
        ann = annotate(ast)
        regions = assign_pool_regions(ann, k=0.6)
        by_symbol = {vocab.symbol_of(ast.symbols[i]): regions[i] for i in range(len(ast))}
        # mean leaf depth 3, threshold 1.8: only the root is above it
        assert by_symbol["Decl"] == TOP
        assert by_symbol["TypeDecl"] == LOWER_LEFT
        assert by_symbol["IdentifierType"] == LOWER_LEFT
        assert by_symbol["ID"] == LOWER_LEFT  # h_pos exactly 0.5 ties left
        assert by_symbol["BinaryOp"] == LOWER_RIGHT
        assert by_symbol["Constant"] == LOWER_RIGHT

    def test_perfect_binary_tree(self):
        # depth-4 perfect binary tree: leaves at depth 4, threshold 2.4,
        # so depths 1..2 pool TOP; left-half leaves pool LOWER_LEFT
        nodes = 15
        children = [((2 * i + 1, 2 * i + 2) if 2 * i + 2 < nodes else ())
                    for i in range(nodes)]
        ann = annotate(Ast(tuple(0 for _ in range(nodes)), tuple(children), 0))
        regions = assign_pool_regions(ann, k=0.6)
        for node in range(nodes):
            if ann.depth[node] <= 2:
                assert regions[node] == TOP
            elif ann.h_pos[node] <= 0.5:
                assert regions[node] == LOWER_LEFT
            else:
                assert regions[node] == LOWER_RIGHT
        leaves = [i for i in range(nodes) if not children[i]]
        assert regions[leaves[0]] == LOWER_LEFT
        assert regions[leaves[-1]] == LOWER_RIGHT

    def test_total_partition_random(self, rng):
        for _ in range(20):
            ann = annotate(random_tree(rng, int(rng.integers(1, 40)), 3))
            regions = assign_pool_regions(ann)
            assert regions.shape == (len(ann.ast),)
            assert np.all((regions >= TOP) & (regions <= LOWER_RIGHT))


class TestPoolMax:
    def test_one_node_per_region(self, rng):
        conv = rng.uniform(-1, 1, (3, 4))
        regions = np.array([TOP, LOWER_LEFT, LOWER_RIGHT])
        pooled, argmax = pool_max(conv, regions)
        assert np.array_equal(pooled, conv)
        assert np.array_equal(argmax, np.array([[0] * 4, [1] * 4, [2] * 4]))

    def test_empty_region_is_zero(self, rng):
        conv = rng.uniform(-1, 1, (2, 3))
        regions = np.array([TOP, LOWER_LEFT])
        pooled, argmax = pool_max(conv, regions)
        assert np.array_equal(pooled[LOWER_RIGHT], np.zeros(3))
        assert np.all(argmax[LOWER_RIGHT] == -1)

    def test_matches_exhaustive_scan(self, rng):
        for _ in range(30):
            n = int(rng.integers(1, 12))
            conv = rng.uniform(-1, 1, (n, 5))
            regions = np.array([int(rng.integers(0, 3)) for _ in range(n)])
            pooled, argmax = pool_max(conv, regions)
            for region in (TOP, LOWER_LEFT, LOWER_RIGHT):
                nodes = [i for i in range(n) if regions[i] == region]
                for dim in range(5):
                    if not nodes:
                        assert pooled[region, dim] == 0.0
                        assert argmax[region, dim] == -1
                    else:
                        best = max(nodes, key=lambda i: (conv[i, dim], -i))
                        assert pooled[region, dim] == conv[best, dim]
                        assert argmax[region, dim] == best

    def test_ties_break_to_smallest_index(self):
        conv = np.array([[1.0, 0.0], [1.0, 2.0], [1.0, 2.0]])
        regions = np.array([TOP, TOP, TOP])
        _, argmax = pool_max(conv, regions)
        assert argmax[TOP, 0] == 0
        assert argmax[TOP, 1] == 1


class TestForward:
    def test_zero_params_uniform_probs(self, rng):
        ann = annotate(random_tree(rng, 9, 3))
        params = ModelParams.zeros(3, 4, 4, 4, 4)
        probs, _ = forward(ann, params)
        assert np.array_equal(probs, np.full(4, 0.25))
        assert abs(cross_entropy(probs, 2) - np.log(4.0)) < 1e-12

    def test_probabilities_sum_to_one(self, rng):
        for _ in range(10):
            ann = annotate(random_tree(rng, int(rng.integers(1, 25)), 5))
            params = random_params(rng, 5, 6, 7, 8, 3)
            probs, _ = forward(ann, params)
            assert abs(probs.sum() - 1.0) < 1e-12
            assert np.all(probs > 0)

    def test_deterministic(self, rng):
        ann = annotate(random_tree(rng, 14, 4))
        params = random_params(rng, 4, 5, 5, 5, 3)
        p1, _ = forward(ann, params)
        p2, _ = forward(ann, params)
        assert np.array_equal(p1, p2)

    def test_bow_sizing_errors(self, rng):
        ann = annotate(random_tree(rng, 6, 3))
        plain = random_params(rng, 3, 4, 4, 4, 2)
        with pytest.raises(ValidationError):
            forward(ann, plain, bow=np.ones(4))
        sized = random_params(rng, 3, 4, 4, 4, 2, bow_dim=4)
        with pytest.raises(ValidationError):
            forward(ann, sized)
        probs, _ = forward(ann, sized, bow=np.ones(4))
        assert abs(probs.sum() - 1.0) < 1e-12

    def test_order_sensitivity(self, rng):
        # swapping two structurally different sibling subtrees changes the
        # window coefficients, so the output must change
        left_heavy = Ast((0, 1, 2, 3, 4), ((1, 4), (2, 3), (), (), ()), 0)
        right_heavy = Ast((0, 1, 2, 3, 4), ((4, 1), (2, 3), (), (), ()), 0)
        params = random_params(rng, 5, 6, 6, 6, 3)
        p_left, _ = forward(annotate(left_heavy), params)
        p_right, _ = forward(annotate(right_heavy), params)
        assert not np.allclose(p_left, p_right, atol=1e-10)


class TestBackward:
    def test_matches_finite_differences(self):
        # the module's central correctness oracle: every tensor, random
        # coordinates, random 8..15-node trees, 4-dim layers, 3 classes
        for seed in range(3):
            checks = model_gradient_checks(seed, dims=4)
            assert len(checks) == 14
            for c in checks:
                assert c.passed, (seed, c.name, c.max_rel_err, c.worst)
                assert c.max_rel_err < 1e-4

    def test_repeated_backward_identical(self, rng):
        ann = annotate(random_tree(rng, 12, 4))
        params = random_params(rng, 4, 4, 4, 4, 3)
        _, trace = forward(ann, params)
        g1 = backward(trace, 1, params)
        g2 = backward(trace, 1, params)
        assert set(g1) == set(g2)
        for name in g1:
            assert np.array_equal(g1[name], g2[name])

    def test_bad_label_rejected(self, rng):
        ann = annotate(random_tree(rng, 5, 3))
        params = random_params(rng, 3, 4, 4, 4, 2)
        _, trace = forward(ann, params)
        with pytest.raises(ValidationError):
            backward(trace, 2, params)

    def test_stale_trace_rejected(self, rng):
        ann = annotate(random_tree(rng, 5, 3))
        params = random_params(rng, 3, 4, 4, 4, 2)
        _, trace = forward(ann, params)
        other = random_params(rng, 3, 6, 5, 4, 2)
        with pytest.raises(ValidationError):
            backward(trace, 1, other)


class TestCompileTree:
    def test_single_node_tree(self, rng):
        ct = compile_tree(annotate(Ast((0,), ((),), 0)))
        assert ct.n_nodes == 1
        assert len(ct.edge_parent_node) == 0
        params = random_params(rng, 1, 3, 3, 3, 2)
        probs, _ = forward(ct, params)
        assert abs(probs.sum() - 1.0) < 1e-12

    def test_symbol_out_of_table(self, rng):
        ann = annotate(Ast((7,), ((),), 0))
        params = ModelParams.zeros(3, 4, 4, 4, 2)
        with pytest.raises(ValidationError):
            forward(ann, params)
