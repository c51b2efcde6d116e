"""Density-based clustering: single linkage over mutual reachability,
condensed tree, excess-of-mass selection, and point labeling.

The pipeline is the published HDBSCAN algorithm: core distances (k = number
of neighbors counting self), mutual-reachability MST (see kernels), a
single-linkage dendrogram built from the MST edges, a condensed tree at the
minimum cluster size, per-cluster stability, and either excess-of-mass or
leaf cluster selection. Ties are broken deterministically everywhere: MST
edges sort by (weight, lower endpoint, higher endpoint) and the Prim scan
prefers the lowest point index.

Numerics worth knowing: lambda = 1/distance, with distance 0 (duplicate
points) mapping to +inf; stability sums (lambda - birth_lambda) * size with
inf - inf treated as 0 contribution.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import kernels

_SIZE_T = np.int64


@dataclass(frozen=True)
class HdbscanResult:
    labels: np.ndarray  # int64, -1 = outlier, cluster ids dense from 0
    stabilities: dict[int, float]  # cluster id -> excess-of-mass stability


class _UnionFind:
    """Union-find over 2n-1 slots; merged components get fresh labels n.. ."""

    def __init__(self, n: int):
        self.parent = np.full(2 * n - 1, -1, dtype=_SIZE_T)
        self.size = np.concatenate(
            [np.ones(n, dtype=_SIZE_T), np.zeros(n - 1, dtype=_SIZE_T)]
        )
        self.next_label = n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != -1:
            root = self.parent[root]
        while self.parent[x] != -1:
            nxt = int(self.parent[x])
            self.parent[x] = root
            x = nxt
        return root

    def union(self, a: int, b: int) -> None:
        self.size[self.next_label] = self.size[a] + self.size[b]
        self.parent[a] = self.next_label
        self.parent[b] = self.next_label
        self.next_label += 1


def single_linkage(edges: np.ndarray, n: int) -> np.ndarray:
    """Dendrogram rows (left, right, distance, size) from MST edges.

    Internal nodes are numbered n .. 2n-2 in merge order; row i describes
    node n+i. Equal-weight edges merge in (weight, u, v) order.
    """
    order = np.lexsort((edges[:, 1], edges[:, 0], edges[:, 2]))
    edges = edges[order]
    uf = _UnionFind(n)
    Z = np.empty((n - 1, 4))
    for i in range(n - 1):
        a = uf.find(int(edges[i, 0]))
        b = uf.find(int(edges[i, 1]))
        Z[i, 0] = a
        Z[i, 1] = b
        Z[i, 2] = edges[i, 2]
        Z[i, 3] = uf.size[a] + uf.size[b]
        uf.union(a, b)
    return Z


_CONDENSED_DTYPE = np.dtype(
    [
        ("parent", _SIZE_T),
        ("child", _SIZE_T),
        ("lam", np.float64),
        ("size", _SIZE_T),
    ]
)


def condense_tree(Z: np.ndarray, n: int, min_cluster_size: int) -> np.ndarray:
    """Collapse the dendrogram into clusters that survive min_cluster_size.

    Cluster nodes are renumbered from n (the root); rows record either a
    child cluster splitting off or a point falling out, both at the lambda
    of the split.
    """
    root = 2 * n - 2
    relabel = np.full(2 * n - 1, -1, dtype=_SIZE_T)
    relabel[root] = n
    next_label = n + 1
    ignore = np.zeros(2 * n - 1, dtype=bool)

    def subtree(start: int) -> list[int]:
        out = []
        q = deque([start])
        while q:
            node = q.popleft()
            out.append(node)
            if node >= n:
                row = Z[node - n]
                q.append(int(row[0]))
                q.append(int(row[1]))
        return out

    rows: list[tuple[int, int, float, int]] = []
    for node in subtree(root):
        if node < n or ignore[node]:
            continue
        left, right, dist = int(Z[node - n][0]), int(Z[node - n][1]), Z[node - n][2]
        lam = 1.0 / dist if dist > 0.0 else np.inf
        left_count = int(Z[left - n][3]) if left >= n else 1
        right_count = int(Z[right - n][3]) if right >= n else 1
        parent_label = int(relabel[node])

        def fall_out(side: int) -> None:
            for sub in subtree(side):
                if sub < n:
                    rows.append((parent_label, sub, lam, 1))
                ignore[sub] = True

        if left_count >= min_cluster_size and right_count >= min_cluster_size:
            relabel[left] = next_label
            rows.append((parent_label, next_label, lam, left_count))
            next_label += 1
            relabel[right] = next_label
            rows.append((parent_label, next_label, lam, right_count))
            next_label += 1
        elif left_count < min_cluster_size and right_count < min_cluster_size:
            fall_out(left)
            fall_out(right)
        elif left_count < min_cluster_size:
            relabel[right] = parent_label
            fall_out(left)
        else:
            relabel[left] = parent_label
            fall_out(right)
    return np.array(rows, dtype=_CONDENSED_DTYPE)


def compute_stability(condensed: np.ndarray, n: int) -> dict[int, float]:
    births: dict[int, float] = {}
    for row in condensed:
        child = int(row["child"])
        if child >= n:
            births[child] = float(row["lam"])
    births[n] = 0.0
    stability = {int(c): 0.0 for c in np.unique(condensed["parent"])}
    for row in condensed:
        parent = int(row["parent"])
        contribution = (float(row["lam"]) - births[parent]) * int(row["size"])
        if np.isnan(contribution):  # inf-born cluster shedding points at inf
            contribution = 0.0
        stability[parent] += contribution
    return stability


def _cluster_children(condensed: np.ndarray, n: int) -> dict[int, list[int]]:
    children: dict[int, list[int]] = {}
    for row in condensed:
        child = int(row["child"])
        if child >= n:
            children.setdefault(int(row["parent"]), []).append(child)
    return children


def select_eom(
    condensed: np.ndarray,
    stability: dict[int, float],
    n: int,
    allow_single_cluster: bool = False,
) -> list[int]:
    """Excess-of-mass: keep a cluster iff it is more stable than the sum of
    its subtree's chosen clusters; processed bottom-up (descending node id)."""
    node_list = sorted(stability.keys(), reverse=True)
    if not allow_single_cluster:
        node_list = [c for c in node_list if c != n]
    children = _cluster_children(condensed, n)
    is_selected = {c: True for c in node_list}
    adjusted = dict(stability)
    for node in node_list:
        subtree_total = sum(adjusted[c] for c in children.get(node, ()))
        if subtree_total > adjusted[node]:
            is_selected[node] = False
            adjusted[node] = subtree_total
        else:
            pending = deque(children.get(node, ()))
            while pending:
                c = pending.popleft()
                is_selected[c] = False
                pending.extend(children.get(c, ()))
    return sorted(c for c, keep in is_selected.items() if keep)


def select_leaf(
    condensed: np.ndarray, n: int, allow_single_cluster: bool = False
) -> list[int]:
    """Leaf selection: the cluster-tree nodes with no cluster children."""
    children = _cluster_children(condensed, n)
    nodes = set(children.keys())
    for kids in children.values():
        nodes.update(kids)
    leaves = sorted(node for node in nodes if node not in children or not children[node])
    leaves = [c for c in leaves if c != n]
    if not leaves and allow_single_cluster and len(condensed) > 0:
        return [n]
    return leaves


def label_points(
    condensed: np.ndarray,
    selected: list[int],
    n: int,
    allow_single_cluster: bool = False,
) -> np.ndarray:
    """Assign each point to its nearest selected ancestor cluster, else -1."""
    selected_set = set(selected)
    label_of = {c: i for i, c in enumerate(sorted(selected_set))}
    slots = int(condensed["parent"].max()) + 1 if len(condensed) else n + 1
    parent = np.arange(slots, dtype=_SIZE_T)

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = int(parent[x])
        return x

    for row in condensed:
        child = int(row["child"])
        if child not in selected_set:
            parent[find(child)] = find(int(row["parent"]))

    point_lambda = np.zeros(n)
    if allow_single_cluster and n in selected_set:
        for row in condensed:
            if int(row["child"]) < n:
                point_lambda[int(row["child"])] = float(row["lam"])
        root_rows = condensed[condensed["parent"] == n]
        root_cut = float(root_rows["lam"].max()) if len(root_rows) else np.inf

    labels = np.full(n, -1, dtype=_SIZE_T)
    for p in range(n):
        cluster = find(p)
        if cluster not in selected_set:
            continue
        if cluster == n and allow_single_cluster:
            # root membership: only points that persist to the root's last
            # split count as members (reference-implementation rule)
            if point_lambda[p] >= root_cut:
                labels[p] = label_of[cluster]
        else:
            labels[p] = label_of[cluster]
    return labels


def run_hdbscan(
    points: np.ndarray,
    min_cluster_size: int = 10,
    min_samples: int = 10,
    selection: str = "eom",
    allow_single_cluster: bool = False,
) -> HdbscanResult:
    """Full pipeline over a points matrix; see module docstring."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("points must be a 2-D matrix")
    n = points.shape[0]
    if n == 0:
        return HdbscanResult(np.empty(0, dtype=_SIZE_T), {})
    if n < min_cluster_size or n < 2:
        return HdbscanResult(np.full(n, -1, dtype=_SIZE_T), {})

    core = kernels.core_distances(points, min_samples)
    edges = kernels.prim_mst(points, core)
    Z = single_linkage(edges, n)
    condensed = condense_tree(Z, n, min_cluster_size)
    stability = compute_stability(condensed, n)
    if selection == "eom":
        selected = select_eom(condensed, stability, n, allow_single_cluster)
    elif selection == "leaf":
        selected = select_leaf(condensed, n, allow_single_cluster)
    else:
        raise ValueError(f"unknown selection method {selection!r}")
    labels = label_points(condensed, selected, n, allow_single_cluster)

    stabilities = {}
    for i, node in enumerate(sorted(selected)):
        stabilities[i] = float(stability.get(node, 0.0))
    # drop ids for clusters that ended up empty after labeling (possible
    # only in the allow_single_cluster root case)
    present = set(int(v) for v in np.unique(labels) if v >= 0)
    stabilities = {k: v for k, v in stabilities.items() if k in present}
    if set(stabilities) != present or (present and sorted(present) != list(range(len(present)))):
        # re-densify labels if the root rule emptied a cluster id
        remap = {old: new for new, old in enumerate(sorted(present))}
        new_labels = np.full(n, -1, dtype=_SIZE_T)
        for old, new in remap.items():
            new_labels[labels == old] = new
        labels = new_labels
        stabilities = {remap[k]: v for k, v in stabilities.items() if k in remap}
    return HdbscanResult(labels, stabilities)
