"""Embedding analysis: distances, agglomerative merges, dendrogram export.

Linkage distances are computed directly from the original distance matrix
with correctly-rounded sums (`math.fsum`), so results are independent of
iteration order and exactly reproducible against a naive reference.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass

import numpy as np

from treeconv.errors import ValidationError

LINKAGES = ("average", "single", "complete")


def pairwise_distances(vectors: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix; exactly symmetric with a zero diagonal."""
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or len(x) < 2:
        raise ValidationError("need at least two vectors")
    diff = x[:, None, :] - x[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


@dataclass(frozen=True)
class Merge:
    left: int  # cluster id (leaves are 0..n-1; merge k creates id n+k)
    right: int
    distance: float
    size: int  # leaves under the new cluster


@dataclass(frozen=True)
class Dendrogram:
    n_leaves: int
    merges: tuple[Merge, ...]

    def __post_init__(self):
        if len(self.merges) != self.n_leaves - 1:
            raise ValidationError("a dendrogram over n leaves has exactly n-1 merges")


def _linkage_distance(members_a: list[int], members_b: list[int],
                      dist: np.ndarray, linkage: str) -> float:
    pairs = (dist[i, j] for i in members_a for j in members_b)
    if linkage == "average":
        return math.fsum(pairs) / (len(members_a) * len(members_b))
    if linkage == "single":
        return min(pairs)
    return max(pairs)


def agglomerative_cluster(dist: np.ndarray, linkage: str = "average") -> Dendrogram:
    """Bottom-up merging; ties break on the smallest (id, id) pair.

    Cluster ids follow the usual convention: leaves are 0..n-1 and the k-th
    merge creates id n+k.
    """
    if linkage not in LINKAGES:
        raise ValidationError(f"unknown linkage: {linkage!r}")
    dist = np.asarray(dist, dtype=np.float64)
    n = dist.shape[0]
    if dist.shape != (n, n) or n < 2:
        raise ValidationError("distance matrix must be square with n >= 2")

    members: dict[int, list[int]] = {i: [i] for i in range(n)}
    merges: list[Merge] = []
    for step in range(n - 1):
        active = sorted(members)
        best = None
        for ai, a in enumerate(active):
            for b in active[ai + 1:]:
                d = _linkage_distance(members[a], members[b], dist, linkage)
                key = (d, a, b)
                if best is None or key < best:
                    best = key
        d, a, b = best
        new_id = n + step
        members[new_id] = members.pop(a) + members.pop(b)
        merges.append(Merge(a, b, d, len(members[new_id])))
    return Dendrogram(n, tuple(merges))


def nearest_neighbors(vectors: np.ndarray, query: int, k: int) -> list[tuple[int, float]]:
    """The k nearest other rows by Euclidean distance, ties by smaller id."""
    x = np.asarray(vectors, dtype=np.float64)
    if not 0 <= query < len(x):
        raise ValidationError(f"unknown symbol id: {query}")
    if not 0 < k < len(x):
        raise ValidationError(f"k must be in 1..{len(x) - 1}")
    deltas = x - x[query]
    d = np.sqrt(np.sum(deltas * deltas, axis=1))
    order = sorted((i for i in range(len(x)) if i != query), key=lambda i: (d[i], i))
    return [(i, float(d[i])) for i in order[:k]]


# ---------------------------------------------------------------------------
# Export formats
# ---------------------------------------------------------------------------


def _merge_children(dend: Dendrogram) -> dict[int, Merge]:
    return {dend.n_leaves + k: m for k, m in enumerate(dend.merges)}


def export_dendrogram(dend: Dendrogram, fmt: str = "json",
                      labels: list[str] | None = None) -> str:
    """Lossless text export; ``fmt`` is ``"json"`` (nested document) or
    ``"newick"``. Both carry merge indices so parsing restores merge order."""
    if labels is not None and len(labels) != dend.n_leaves:
        raise ValidationError("one label per leaf required")
    by_id = _merge_children(dend)

    def label(i: int) -> str:
        return labels[i] if labels is not None else str(i)

    if fmt == "json":
        def node_doc(cid: int):
            if cid < dend.n_leaves:
                return {"leaf": cid, "label": label(cid)}
            k = cid - dend.n_leaves
            m = by_id[cid]
            return {"merge": k, "distance": m.distance,
                    "left": node_doc(m.left), "right": node_doc(m.right)}

        root = dend.n_leaves + len(dend.merges) - 1
        return json.dumps({"n_leaves": dend.n_leaves, "tree": node_doc(root)},
                          separators=(",", ":"))
    if fmt == "newick":
        def node_text(cid: int) -> str:
            if cid < dend.n_leaves:
                return f"L{cid}"
            m = by_id[cid]
            return f"({node_text(m.left)},{node_text(m.right)})M{cid - dend.n_leaves}:{m.distance!r}"

        root = dend.n_leaves + len(dend.merges) - 1
        return node_text(root) + ";"
    raise ValidationError(f"unsupported format: {fmt!r}")


def parse_dendrogram(text: str, fmt: str = "json") -> Dendrogram:
    """Inverse of `export_dendrogram` for both formats."""
    if fmt == "json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"malformed dendrogram document: {exc}") from None
        n = doc["n_leaves"]
        found: dict[int, tuple[int, int, float]] = {}

        def walk(node) -> int:
            if "leaf" in node:
                return node["leaf"]
            left = walk(node["left"])
            right = walk(node["right"])
            found[node["merge"]] = (left, right, node["distance"])
            return n + node["merge"]

        walk(doc["tree"])
        return _merges_to_dendrogram(n, found)
    if fmt == "newick":
        if not text.endswith(";"):
            raise ValidationError("newick text must end with ';'")
        tokens = re.findall(r"\(|\)|,|;|[^(),;]+", text)
        pos = 0

        def parse_node() -> tuple[int, dict]:
            nonlocal pos
            tok = tokens[pos]
            if tok == "(":
                pos += 1
                left, acc = parse_node()
                if tokens[pos] != ",":
                    raise ValidationError("expected ',' in newick text")
                pos += 1
                right, acc_r = parse_node()
                acc.update(acc_r)
                if tokens[pos] != ")":
                    raise ValidationError("expected ')' in newick text")
                pos += 1
                tag = tokens[pos]
                pos += 1
                m = re.fullmatch(r"M(\d+):(.+)", tag)
                if not m:
                    raise ValidationError(f"bad merge tag: {tag!r}")
                k, d = int(m.group(1)), float(m.group(2))
                acc[k] = (left, right, d)
                return -(k + 1), acc  # placeholder until n is known
            if not tok.startswith("L"):
                raise ValidationError(f"bad leaf tag: {tok!r}")
            pos += 1
            return int(tok[1:]), {}

        _, found = parse_node()
        n = len(found) + 1

        def resolve(cid: int) -> int:
            return n + (-cid - 1) if cid < 0 else cid

        resolved = {k: (resolve(left), resolve(right), d)
                    for k, (left, right, d) in found.items()}
        return _merges_to_dendrogram(n, resolved)
    raise ValidationError(f"unsupported format: {fmt!r}")


def _merges_to_dendrogram(n: int, found: dict[int, tuple[int, int, float]]) -> Dendrogram:
    if sorted(found) != list(range(n - 1)):
        raise ValidationError("merge indices must be dense 0..n-2")
    sizes = {i: 1 for i in range(n)}
    merges = []
    for k in range(n - 1):
        left, right, d = found[k]
        size = sizes[left] + sizes[right]
        sizes[n + k] = size
        merges.append(Merge(left, right, d, size))
    return Dendrogram(n, tuple(merges))


def distances_csv(dist: np.ndarray, labels: list[str]) -> str:
    """Distance matrix as CSV with a label header row and column."""
    dist = np.asarray(dist)
    if dist.shape != (len(labels), len(labels)):
        raise ValidationError("labels do not match the distance matrix")
    lines = ["symbol," + ",".join(labels)]
    for name, row in zip(labels, dist):
        lines.append(name + "," + ",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"
