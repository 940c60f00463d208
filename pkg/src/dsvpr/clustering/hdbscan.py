"""Hierarchical density clustering of 2-D points.

Pipeline: core distances -> mutual-reachability minimum spanning tree
(Prim, dense, no n x n buffer) -> single-linkage merge tree -> condensed
tree under ``min_cluster_size`` -> excess-of-mass flat extraction.

When the condensed tree never splits (one dense body), excess-of-mass has
no candidate below the root. The whole body is then returned as a single
cluster, and points whose detachment distance exceeds
``single_cluster_outlier_factor`` times the median detachment distance are
noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

NOISE = -1
_MIN_DIST = 1e-12


@dataclass
class CondensedTree:
    parent: np.ndarray
    child: np.ndarray
    lambda_val: np.ndarray
    child_size: np.ndarray
    n_points: int


def core_distances(points: np.ndarray, k: int) -> np.ndarray:
    """Distance to the k-th nearest neighbour, the point itself counted as the first."""
    k = min(k, len(points))
    if k <= 1:
        return np.zeros(len(points))
    dist, _ = cKDTree(points).query(points, k=k)
    return dist[:, -1]


def mutual_reachability_mst(points: np.ndarray, core: np.ndarray) -> np.ndarray:
    """(n-1, 3) rows ``(a, b, weight)`` of the MST under max(core_a, core_b, |a-b|)."""
    n = len(points)
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    src = np.zeros(n, dtype=np.int64)
    edges = np.empty((n - 1, 3))
    current = 0
    for i in range(n - 1):
        in_tree[current] = True
        d = np.sqrt(((points - points[current]) ** 2).sum(axis=1))
        mr = np.maximum(np.maximum(d, core), core[current])
        better = (mr < best) & ~in_tree
        best[better] = mr[better]
        src[better] = current
        best[in_tree] = np.inf
        nxt = int(np.argmin(best))
        edges[i] = (src[nxt], nxt, best[nxt])
        current = nxt
    return edges


def single_linkage(mst: np.ndarray, n: int) -> np.ndarray:
    """Merge tree rows ``(left, right, distance, size)``; node ``n + i`` is row i."""
    order = np.argsort(mst[:, 2], kind="stable")
    parent = np.arange(2 * n - 1)
    size = np.ones(2 * n - 1, dtype=np.int64)
    out = np.empty((n - 1, 4))

    def find(x: int) -> int:
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for i, e in enumerate(order):
        a, b, w = int(mst[e, 0]), int(mst[e, 1]), mst[e, 2]
        ra, rb = find(a), find(b)
        node = n + i
        parent[ra] = parent[rb] = node
        size[node] = size[ra] + size[rb]
        out[i] = (ra, rb, w, size[node])
    return out


def condense_tree(linkage: np.ndarray, min_cluster_size: int) -> CondensedTree:
    n = linkage.shape[0] + 1
    root = 2 * n - 2
    left = linkage[:, 0].astype(np.int64)
    right = linkage[:, 1].astype(np.int64)
    dist = linkage[:, 2]
    sizes = linkage[:, 3].astype(np.int64)

    def node_size(x: int) -> int:
        return 1 if x < n else int(sizes[x - n])

    def leaves(x: int) -> list[int]:
        out, stack = [], [x]
        while stack:
            y = stack.pop()
            if y < n:
                out.append(y)
            else:
                stack.append(int(right[y - n]))
                stack.append(int(left[y - n]))
        return out

    relabel = {root: n}
    next_label = n + 1
    rows: list[tuple[int, int, float, int]] = []
    stack = [root]
    while stack:
        node = stack.pop()
        label = relabel[node]
        i = node - n
        lam = 1.0 / max(dist[i], _MIN_DIST)
        lch, rch = int(left[i]), int(right[i])
        ls, rs = node_size(lch), node_size(rch)
        big_l, big_r = ls >= min_cluster_size, rs >= min_cluster_size
        if big_l and big_r:
            for ch, sz in ((lch, ls), (rch, rs)):
                relabel[ch] = next_label
                rows.append((label, next_label, lam, sz))
                next_label += 1
            # both children hold >= min_cluster_size >= 2 points, so both are merge nodes
            stack.append(rch)
            stack.append(lch)
        else:
            for ch, big in ((lch, big_l), (rch, big_r)):
                if big:
                    relabel[ch] = label
                    if ch >= n:
                        stack.append(ch)
                else:
                    for leaf in leaves(ch):
                        rows.append((label, leaf, lam, 1))
    arr = np.array(rows, dtype=np.float64).reshape(-1, 4)
    return CondensedTree(
        parent=arr[:, 0].astype(np.int64),
        child=arr[:, 1].astype(np.int64),
        lambda_val=arr[:, 2],
        child_size=arr[:, 3].astype(np.int64),
        n_points=n,
    )


def cluster_stability(tree: CondensedTree) -> dict[int, float]:
    n = tree.n_points
    clusters = np.unique(np.concatenate([[n], tree.child[tree.child_size > 1]]))
    birth = {int(c): 0.0 for c in clusters}
    for c, lam, sz in zip(tree.child, tree.lambda_val, tree.child_size):
        if sz > 1:
            birth[int(c)] = float(lam)
    stability = {int(c): 0.0 for c in clusters}
    for p, lam, sz in zip(tree.parent, tree.lambda_val, tree.child_size):
        stability[int(p)] += (float(lam) - birth[int(p)]) * int(sz)
    return stability


def select_clusters_eom(tree: CondensedTree, stability: dict[int, float]) -> list[int]:
    """Excess-of-mass selection over non-root candidates (ids in ascending order)."""
    stability = dict(stability)
    n = tree.n_points
    is_cluster_child = tree.child_size > 1
    children: dict[int, list[int]] = {c: [] for c in stability}
    for p, c in zip(tree.parent[is_cluster_child], tree.child[is_cluster_child]):
        children[int(p)].append(int(c))
    candidates = sorted((c for c in stability if c != n), reverse=True)
    selected = {c: True for c in candidates}
    for c in candidates:
        sub = sum(stability[ch] for ch in children[c])
        if sub > stability[c]:
            selected[c] = False
            stability[c] = sub
        else:
            stack = list(children[c])
            while stack:
                d = stack.pop()
                selected[d] = False
                stack.extend(children[d])
    return sorted(c for c, keep in selected.items() if keep)


def _label_points(tree: CondensedTree, chosen: list[int]) -> np.ndarray:
    n = tree.n_points
    up = {int(c): int(p) for p, c in zip(tree.parent, tree.child)}
    label_of = {c: i for i, c in enumerate(chosen)}
    labels = np.full(n, NOISE, dtype=np.int64)
    for point in range(n):
        node = up.get(point)
        while node is not None and node not in label_of:
            node = up.get(node)
        if node is not None:
            labels[point] = label_of[node]
    return labels


def hdbscan(
    points,
    min_cluster_size: int = 10,
    min_samples: int | None = None,
    single_cluster_outlier_factor: float = 3.0,
) -> np.ndarray:
    """Flat labels (0..K-1, noise = -1) for an (n, 2) coordinate array."""
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if min_cluster_size < 2:
        raise ValueError("min_cluster_size must be >= 2")
    if n < min_cluster_size:
        return np.full(n, NOISE, dtype=np.int64)
    core = core_distances(pts, min_samples or min_cluster_size)
    mst = mutual_reachability_mst(pts, core)
    tree = condense_tree(single_linkage(mst, n), min_cluster_size)
    chosen = select_clusters_eom(tree, cluster_stability(tree))
    if chosen:
        return _label_points(tree, chosen)

    # no split: every point detached straight from the root
    detach = np.empty(n)
    leaf_rows = tree.child < n
    detach[tree.child[leaf_rows]] = 1.0 / tree.lambda_val[leaf_rows]
    cutoff = single_cluster_outlier_factor * float(np.median(detach))
    labels = np.where(detach <= cutoff, 0, NOISE).astype(np.int64)
    if np.count_nonzero(labels == 0) < min_cluster_size:
        return np.full(n, NOISE, dtype=np.int64)
    return labels
