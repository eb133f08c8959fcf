"""The tree convolution model: exact forward and backward passes.

Per tree, the pipeline is

1. embed every node; non-leaves additionally mix their own embedding with a
   tanh encoding of their children's embeddings (two learned combination
   matrices, initialized diagonal);
2. slide a depth-2 feature detector over every (node, children) window,
   interpolating between three weight matrices (top/left/right) by each
   node's position inside the window;
3. max-pool the detector outputs into three regions (TOP and the lower left
   and right halves) to obtain a fixed-size vector;
4. a tanh hidden layer and a softmax output produce class probabilities.

Backpropagation is hand-derived and exact; the position coefficients depend
only on tree shape and are treated as constants. Trees are "compiled" once
into flat edge arrays so both passes run as a handful of matrix products.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from treeconv.errors import ValidationError
from treeconv.numerics import softmax, tanh_prime
from treeconv.pretrain import CodingParams, EmbeddingTable, coding_coefficients
from treeconv.trees import AnnotatedAst

TOP, LOWER_LEFT, LOWER_RIGHT = 0, 1, 2
REGION_NAMES = ("TOP", "LOWER_LEFT", "LOWER_RIGHT")

#: Tensors that receive weight decay (never biases, never the embeddings).
WEIGHT_MATRICES = frozenset({
    "w_code_left", "w_code_right", "w_comb1", "w_comb2",
    "w_conv_top", "w_conv_left", "w_conv_right", "w_hidden", "w_out",
})

TENSOR_NAMES = (
    "embeddings",
    "w_code_left", "w_code_right", "b_code",
    "w_comb1", "w_comb2",
    "w_conv_top", "w_conv_left", "w_conv_right", "b_conv",
    "w_hidden", "b_hidden", "w_out", "b_out",
)


@dataclass
class ModelParams:
    """The complete trainable parameter set, plus the pooling threshold factor."""

    embeddings: np.ndarray  # (n_symbols + 1, n_features)
    w_code_left: np.ndarray  # (n_features, n_features)
    w_code_right: np.ndarray
    b_code: np.ndarray  # (n_features,)
    w_comb1: np.ndarray  # (n_features, n_features)
    w_comb2: np.ndarray
    w_conv_top: np.ndarray  # (n_conv, n_features)
    w_conv_left: np.ndarray
    w_conv_right: np.ndarray
    b_conv: np.ndarray  # (n_conv,)
    w_hidden: np.ndarray  # (n_hidden, 3*n_conv + bow_dim)
    b_hidden: np.ndarray  # (n_hidden,)
    w_out: np.ndarray  # (n_classes, n_hidden)
    b_out: np.ndarray  # (n_classes,)
    pool_k: float = 0.6

    @property
    def n_features(self) -> int:
        return self.embeddings.shape[1]

    @property
    def n_conv(self) -> int:
        return self.w_conv_top.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.w_hidden.shape[0]

    @property
    def n_classes(self) -> int:
        return self.w_out.shape[0]

    @property
    def bow_dim(self) -> int:
        return self.w_hidden.shape[1] - 3 * self.n_conv

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in TENSOR_NAMES}

    def embedding_table(self) -> EmbeddingTable:
        return EmbeddingTable(self.embeddings)

    def coding_params(self) -> CodingParams:
        return CodingParams(self.w_code_left, self.w_code_right, self.b_code)

    def copy(self) -> "ModelParams":
        return ModelParams(**{n: t.copy() for n, t in self.tensors().items()},
                           pool_k=self.pool_k)

    def validate_shapes(self) -> None:
        f, c, h, k = self.n_features, self.n_conv, self.n_hidden, self.n_classes
        expect = {
            "w_code_left": (f, f), "w_code_right": (f, f), "b_code": (f,),
            "w_comb1": (f, f), "w_comb2": (f, f),
            "w_conv_top": (c, f), "w_conv_left": (c, f), "w_conv_right": (c, f),
            "b_conv": (c,), "b_hidden": (h,), "w_out": (k, h), "b_out": (k,),
        }
        for name, shape in expect.items():
            if getattr(self, name).shape != shape:
                raise ValidationError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if self.w_hidden.shape[1] < 3 * c:
            raise ValidationError("hidden layer narrower than the pooled features")

    @classmethod
    def zeros(cls, n_symbols: int, n_features: int, n_conv: int, n_hidden: int,
              n_classes: int, bow_dim: int = 0, pool_k: float = 0.6) -> "ModelParams":
        f, c = n_features, n_conv
        return cls(
            embeddings=np.zeros((n_symbols + 1, f)),
            w_code_left=np.zeros((f, f)), w_code_right=np.zeros((f, f)),
            b_code=np.zeros(f),
            w_comb1=np.zeros((f, f)), w_comb2=np.zeros((f, f)),
            w_conv_top=np.zeros((c, f)), w_conv_left=np.zeros((c, f)),
            w_conv_right=np.zeros((c, f)), b_conv=np.zeros(c),
            w_hidden=np.zeros((n_hidden, 3 * c + bow_dim)), b_hidden=np.zeros(n_hidden),
            w_out=np.zeros((n_classes, n_hidden)), b_out=np.zeros(n_classes),
            pool_k=pool_k,
        )


def conv_coefficients(level: str, position: int = 1, sibling_count: int = 1,
                      window_depth: int = 2) -> tuple[float, float, float]:
    """(top, left, right) mixture for one node of a depth-2 window.

    The window's top node takes the full top matrix, (1, 0, 0). A bottom node
    at 1-based position ``p`` of ``n`` siblings takes (0, 1-r, r) with
    ``r = (p-1)/(n-1)``, and (0, 0.5, 0.5) for an only child. Depth inside
    the window is counted upward from the bottom so that the "top" weight
    actually lands on the window's top node; the top-down reading of the
    same ratio would zero it out there and leave its position undefined.
    """
    if window_depth != 2:
        raise ValidationError("only depth-2 windows are supported")
    if level == "top":
        return 1.0, 0.0, 0.0
    if level != "bottom":
        raise ValidationError(f"bad window level: {level!r}")
    if not 1 <= position <= sibling_count:
        raise ValidationError(f"position {position} outside 1..{sibling_count}")
    eta_r = 0.5 if sibling_count == 1 else (position - 1) / (sibling_count - 1)
    return 0.0, 1.0 - eta_r, eta_r


@dataclass
class CompiledTree:
    """Flat edge-array view of an annotated tree, reusable across passes."""

    annotated: AnnotatedAst
    syms: np.ndarray  # (n,) int64 symbol ids
    nonleaf_nodes: np.ndarray  # (m,) int64, ascending node indices
    # One entry per (non-leaf parent, child) pair:
    edge_parent_node: np.ndarray  # (E,) node index of the window top
    edge_parent_row: np.ndarray  # (E,) row of the parent in nonleaf_nodes
    edge_child_node: np.ndarray  # (E,)
    code_wl: np.ndarray  # (E,) leaf fraction * left coefficient
    code_wr: np.ndarray  # (E,)
    eta_l: np.ndarray  # (E,) window position coefficients
    eta_r: np.ndarray  # (E,)
    regions: np.ndarray  # (n,) int64 pooling region per node

    @property
    def n_nodes(self) -> int:
        return len(self.syms)


def assign_pool_regions(annotated: AnnotatedAst, k: float = 0.6) -> np.ndarray:
    """Region per node: TOP above the depth threshold, else lower by position.

    TOP holds nodes with depth strictly below ``k * mean leaf depth``; the
    rest go LOWER_LEFT when their horizontal position is <= 0.5 (ties left)
    and LOWER_RIGHT otherwise.
    """
    threshold = k * annotated.mean_leaf_depth
    lower = np.where(annotated.h_pos <= 0.5, LOWER_LEFT, LOWER_RIGHT)
    return np.where(annotated.depth < threshold, TOP, lower).astype(np.int64)


def compile_tree(annotated: AnnotatedAst, pool_k: float = 0.6) -> CompiledTree:
    ast = annotated.ast
    n = len(ast)
    syms = np.array(ast.symbols, dtype=np.int64)
    nonleaf = [node for node in range(n) if ast.children[node]]
    row_of = {node: row for row, node in enumerate(nonleaf)}

    ep, er, ec, wl, wr, el, erow = [], [], [], [], [], [], []
    for node in nonleaf:
        kids = ast.children[node]
        count = len(kids)
        parent_leaves = float(annotated.leaf_count[node])
        for i, child in enumerate(kids, start=1):
            frac = float(annotated.leaf_count[child]) / parent_leaves
            c_l, c_r = coding_coefficients(i, count)
            _, eta_left, eta_right = conv_coefficients("bottom", i, count)
            ep.append(node)
            er.append(row_of[node])
            ec.append(child)
            wl.append(frac * c_l)
            wr.append(frac * c_r)
            el.append(eta_left)
            erow.append(eta_right)

    return CompiledTree(
        annotated=annotated,
        syms=syms,
        nonleaf_nodes=np.array(nonleaf, dtype=np.int64),
        edge_parent_node=np.array(ep, dtype=np.int64),
        edge_parent_row=np.array(er, dtype=np.int64),
        edge_child_node=np.array(ec, dtype=np.int64),
        code_wl=np.array(wl, dtype=np.float64),
        code_wr=np.array(wr, dtype=np.float64),
        eta_l=np.array(el, dtype=np.float64),
        eta_r=np.array(erow, dtype=np.float64),
        regions=assign_pool_regions(annotated, pool_k),
    )


def _as_compiled(tree, pool_k: float) -> CompiledTree:
    if isinstance(tree, CompiledTree):
        return tree
    if isinstance(tree, AnnotatedAst):
        return compile_tree(tree, pool_k)
    raise ValidationError(f"expected AnnotatedAst or CompiledTree, got {type(tree).__name__}")


@dataclass
class ForwardTrace:
    """Every intermediate needed to backpropagate exactly."""

    tree: CompiledTree
    node_emb: np.ndarray  # (n, n_features) embedding per node
    coded: np.ndarray  # (m, n_features) child encodings of non-leaves
    combined: np.ndarray  # (n, n_features) convolution inputs
    conv_out: np.ndarray  # (n, n_conv)
    pooled: np.ndarray  # (3, n_conv)
    argmax: np.ndarray  # (3, n_conv) winning node index, -1 for empty region
    bow_input: np.ndarray | None  # transformed counts appended to the hidden input
    hidden_in: np.ndarray
    hidden: np.ndarray
    probs: np.ndarray


def _combined_vectors(ct: CompiledTree, params: ModelParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if int(ct.syms.max()) >= params.embeddings.shape[0]:
        raise ValidationError("symbol id outside the embedding table")
    x = params.embeddings[ct.syms]
    m = len(ct.nonleaf_nodes)
    u_l = np.zeros((m, params.n_features))
    u_r = np.zeros((m, params.n_features))
    child_vecs = x[ct.edge_child_node]
    np.add.at(u_l, ct.edge_parent_row, ct.code_wl[:, None] * child_vecs)
    np.add.at(u_r, ct.edge_parent_row, ct.code_wr[:, None] * child_vecs)
    coded = np.tanh(u_l @ params.w_code_left.T + u_r @ params.w_code_right.T + params.b_code)
    combined = x.copy()
    combined[ct.nonleaf_nodes] = (x[ct.nonleaf_nodes] @ params.w_comb1.T
                                  + coded @ params.w_comb2.T)
    return x, coded, combined


def combined_node_vectors(annotated: AnnotatedAst, params: ModelParams) -> np.ndarray:
    """Convolution inputs per node: leaves keep their embeddings verbatim;
    non-leaves mix their own embedding with their children's encoding."""
    _, _, combined = _combined_vectors(_as_compiled(annotated, params.pool_k), params)
    return combined


def tree_convolve(node_vectors: np.ndarray, tree, params: ModelParams) -> np.ndarray:
    """Depth-2 windows over every node; output tree has the input's shape.

    A leaf's window contains only the node itself (missing child layers
    contribute nothing, which is the zero-padding contract).
    """
    ct = _as_compiled(tree, params.pool_k)
    if node_vectors.shape != (ct.n_nodes, params.n_features):
        raise ValidationError("node vector matrix has the wrong shape")
    pre = node_vectors @ params.w_conv_top.T + params.b_conv
    c_l = np.zeros_like(node_vectors)
    c_r = np.zeros_like(node_vectors)
    child_vecs = node_vectors[ct.edge_child_node]
    np.add.at(c_l, ct.edge_parent_node, ct.eta_l[:, None] * child_vecs)
    np.add.at(c_r, ct.edge_parent_node, ct.eta_r[:, None] * child_vecs)
    pre += c_l @ params.w_conv_left.T + c_r @ params.w_conv_right.T
    return np.tanh(pre)


def pool_max(conv_out: np.ndarray, regions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension maxima over each region; empty regions give zeros.

    Returns (pooled, argmax) where argmax holds the winning node index per
    dimension (ties to the smallest index) and -1 for empty regions.
    """
    n_conv = conv_out.shape[1]
    pooled = np.zeros((3, n_conv))
    argmax = np.full((3, n_conv), -1, dtype=np.int64)
    for region in (TOP, LOWER_LEFT, LOWER_RIGHT):
        nodes = np.nonzero(regions == region)[0]
        if len(nodes) == 0:
            continue
        rows = conv_out[nodes]
        local = rows.argmax(axis=0)
        pooled[region] = rows[local, np.arange(n_conv)]
        argmax[region] = nodes[local]
    return pooled, argmax


def bow_transform(counts: np.ndarray) -> np.ndarray:
    """log(1 + count): bounded scale next to tanh-range pooled features."""
    return np.log1p(np.asarray(counts, dtype=np.float64))


def forward(tree, params: ModelParams, bow: np.ndarray | None = None) -> tuple[np.ndarray, ForwardTrace]:
    """Full pass; returns class probabilities and the trace for `backward`."""
    ct = _as_compiled(tree, params.pool_k)
    x, coded, combined = _combined_vectors(ct, params)
    conv_out = tree_convolve(combined, ct, params)
    pooled, argmax = pool_max(conv_out, ct.regions)

    parts = [pooled[TOP], pooled[LOWER_LEFT], pooled[LOWER_RIGHT]]
    bow_input = None
    if params.bow_dim:
        if bow is None:
            raise ValidationError("model expects counting features but none were given")
        bow = np.asarray(bow)
        if bow.shape != (params.bow_dim,):
            raise ValidationError(f"counting features have dim {bow.shape}, expected ({params.bow_dim},)")
        bow_input = bow_transform(bow)
        parts.append(bow_input)
    elif bow is not None:
        raise ValidationError("counting features given but the model is not sized for them")

    hidden_in = np.concatenate(parts)
    hidden = np.tanh(params.w_hidden @ hidden_in + params.b_hidden)
    probs = softmax(params.w_out @ hidden + params.b_out)
    trace = ForwardTrace(ct, x, coded, combined, conv_out, pooled, argmax,
                         bow_input, hidden_in, hidden, probs)
    return probs, trace


def cross_entropy(probs: np.ndarray, label: int) -> float:
    with np.errstate(divide="ignore"):  # p == 0 legitimately yields inf
        return float(-np.log(probs[label]))


def backward(trace: ForwardTrace, label: int, params: ModelParams) -> dict[str, np.ndarray]:
    """Exact gradients of the cross-entropy loss for every tensor.

    Max pooling routes gradient only through each region's winning nodes;
    the leaf-fraction and window-position coefficients are functions of tree
    shape only and carry no gradient.
    """
    ct = trace.tree
    if not 0 <= label < params.n_classes:
        raise ValidationError(f"label {label} outside [0, {params.n_classes})")
    if trace.combined.shape[1] != params.n_features or trace.conv_out.shape[1] != params.n_conv:
        raise ValidationError("trace does not match the parameter shapes")

    n_conv = params.n_conv
    grads: dict[str, np.ndarray] = {}

    dlogits = trace.probs.copy()
    dlogits[label] -= 1.0
    grads["w_out"] = np.outer(dlogits, trace.hidden)
    grads["b_out"] = dlogits
    dhidden = params.w_out.T @ dlogits
    dhidden_pre = dhidden * tanh_prime(trace.hidden)
    grads["w_hidden"] = np.outer(dhidden_pre, trace.hidden_in)
    grads["b_hidden"] = dhidden_pre
    dhidden_in = params.w_hidden.T @ dhidden_pre

    dconv = np.zeros_like(trace.conv_out)
    cols = np.arange(n_conv)
    for region in (TOP, LOWER_LEFT, LOWER_RIGHT):
        dregion = dhidden_in[region * n_conv:(region + 1) * n_conv]
        idx = trace.argmax[region]
        valid = idx >= 0
        np.add.at(dconv, (idx[valid], cols[valid]), dregion[valid])

    dpre = dconv * tanh_prime(trace.conv_out)
    grads["b_conv"] = dpre.sum(axis=0)
    grads["w_conv_top"] = dpre.T @ trace.combined
    dcombined = dpre @ params.w_conv_top

    ge = dpre[ct.edge_parent_node]
    child_comb = trace.combined[ct.edge_child_node]
    grads["w_conv_left"] = (ct.eta_l[:, None] * ge).T @ child_comb
    grads["w_conv_right"] = (ct.eta_r[:, None] * ge).T @ child_comb
    np.add.at(dcombined, ct.edge_child_node,
              ct.eta_l[:, None] * (ge @ params.w_conv_left)
              + ct.eta_r[:, None] * (ge @ params.w_conv_right))

    g_emb = np.zeros_like(params.embeddings)
    leaf_mask = np.ones(ct.n_nodes, dtype=bool)
    leaf_mask[ct.nonleaf_nodes] = False
    np.add.at(g_emb, ct.syms[leaf_mask], dcombined[leaf_mask])

    dc = dcombined[ct.nonleaf_nodes]
    grads["w_comb1"] = dc.T @ trace.node_emb[ct.nonleaf_nodes]
    np.add.at(g_emb, ct.syms[ct.nonleaf_nodes], dc @ params.w_comb1)
    grads["w_comb2"] = dc.T @ trace.coded
    dz = (dc @ params.w_comb2) * tanh_prime(trace.coded)
    grads["b_code"] = dz.sum(axis=0)

    dz_e = dz[ct.edge_parent_row]
    child_emb = trace.node_emb[ct.edge_child_node]
    grads["w_code_left"] = (ct.code_wl[:, None] * dz_e).T @ child_emb
    grads["w_code_right"] = (ct.code_wr[:, None] * dz_e).T @ child_emb
    np.add.at(g_emb, ct.syms[ct.edge_child_node],
              ct.code_wl[:, None] * (dz_e @ params.w_code_left)
              + ct.code_wr[:, None] * (dz_e @ params.w_code_right))

    grads["embeddings"] = g_emb
    return grads
