"""Exact binary MRF minimization via s-t min-cut (Dinic's algorithm).

Any pairwise-submodular binary energy reduces to a cut problem: each
pairwise table (A,B,C,D) = (E00,E01,E10,E11) with B+C >= A+D contributes
C-A to x's label-1 cost, D-C to y's label-1 cost, and a directed edge
x->y with capacity B+C-A-D, which is cut exactly when x=0 and y=1. Node
costs are shifted per node so both t-links are nonnegative; shifts and the
dropped constants only offset the energy, not the argmin.

Source side = label 0, sink side = label 1.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_EPS = 1e-12


@njit(cache=True)
def _dinic(n, head, eto, enxt, ecap, s, t):
    level = np.empty(n, dtype=np.int64)
    it = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    stack = np.empty(n + 1, dtype=np.int64)
    sedge = np.empty(n + 1, dtype=np.int64)
    flow = 0.0
    while True:
        # BFS level graph.
        level[:] = -1
        level[s] = 0
        queue[0] = s
        qh, qt = 0, 1
        while qh < qt:
            u = queue[qh]
            qh += 1
            e = head[u]
            while e != -1:
                v = eto[e]
                if ecap[e] > _EPS and level[v] < 0:
                    level[v] = level[u] + 1
                    queue[qt] = v
                    qt += 1
                e = enxt[e]
        if level[t] < 0:
            return flow
        it[:] = head
        # Iterative DFS for blocking flow.
        while True:
            if it[s] == -1:
                break
            top = 0
            stack[0] = s
            found = False
            while top >= 0:
                u = stack[top]
                if u == t:
                    # Augment along the stack path.
                    push = np.inf
                    for i in range(top):
                        e = sedge[i]
                        if ecap[e] < push:
                            push = ecap[e]
                    for i in range(top):
                        e = sedge[i]
                        ecap[e] -= push
                        ecap[e ^ 1] += push
                    flow += push
                    # Restart from the lowest saturated edge.
                    cut = top
                    for i in range(top):
                        if ecap[sedge[i]] <= _EPS:
                            cut = i
                            break
                    top = cut
                    found = True
                    continue
                e = it[u]
                advanced = False
                while e != -1:
                    v = eto[e]
                    if ecap[e] > _EPS and level[v] == level[u] + 1:
                        sedge[top] = e
                        top += 1
                        stack[top] = v
                        advanced = True
                        break
                    e = enxt[e]
                    it[u] = e
                if not advanced:
                    level[u] = -1  # dead end, prune
                    top -= 1
                    if top >= 0:
                        it[stack[top]] = enxt[it[stack[top]]]
            if not found:
                break


@njit(cache=True)
def _source_side(n, head, eto, enxt, ecap, s):
    seen = np.zeros(n, dtype=np.bool_)
    queue = np.empty(n, dtype=np.int64)
    seen[s] = True
    queue[0] = s
    qh, qt = 0, 1
    while qh < qt:
        u = queue[qh]
        qh += 1
        e = head[u]
        while e != -1:
            v = eto[e]
            if ecap[e] > _EPS and not seen[v]:
                seen[v] = True
                queue[qt] = v
                qt += 1
            e = enxt[e]
    return seen


def solve_binary_mrf(unary0: np.ndarray, unary1: np.ndarray,
                     edges_ij: np.ndarray, tables: np.ndarray
                     ) -> tuple[np.ndarray, float]:
    """Exact minimizer of a pairwise-submodular binary energy.

    unary0/unary1: (n,) label costs. edges_ij: (m, 2) int node pairs.
    tables: (m, 4) rows (E00, E01, E10, E11), each B+C >= A+D.
    Returns (labels (n,) uint8, minimal energy evaluated on the labels).
    """
    n = len(unary0)
    m = len(edges_ij)
    cost1 = unary1.astype(float).copy()
    cost0 = unary0.astype(float).copy()
    if m:
        a, b, c, d = tables[:, 0], tables[:, 1], tables[:, 2], tables[:, 3]
        if np.any(b + c - a - d < -1e-9):
            raise ValueError("pairwise table is not submodular")
        np.add.at(cost1, edges_ij[:, 0], c - a)
        np.add.at(cost1, edges_ij[:, 1], d - c)
        ncap = np.maximum(b + c - a - d, 0.0)
    else:
        ncap = np.empty(0)

    shift = np.minimum(cost0, cost1)
    cost0 = cost0 - shift
    cost1 = cost1 - shift

    num_nodes = n + 2
    s, t = n, n + 1
    # t-links (two per node) + n-links, each with a paired reverse edge.
    num_edges = 2 * (2 * n + m)
    eto = np.empty(num_edges, dtype=np.int64)
    enxt = np.empty(num_edges, dtype=np.int64)
    ecap = np.zeros(num_edges, dtype=np.float64)
    head = np.full(num_nodes, -1, dtype=np.int64)

    # Interleave manually: edge 2k is forward, 2k+1 its reverse.
    us = np.concatenate([np.full(n, s), np.arange(n),
                         edges_ij[:, 0] if m else np.empty(0, dtype=int)])
    vs = np.concatenate([np.arange(n), np.full(n, t),
                         edges_ij[:, 1] if m else np.empty(0, dtype=int)])
    caps = np.concatenate([cost1, cost0, ncap])
    fwd = 2 * np.arange(len(us))
    eto[fwd] = vs
    ecap[fwd] = caps
    eto[fwd + 1] = us
    # Vectorized adjacency lists: chain edges of equal source in index order.
    src = np.empty(num_edges, dtype=np.int64)
    src[fwd] = us
    src[fwd + 1] = vs
    order = np.argsort(src, kind="stable")
    osrc = src[order]
    enxt[order] = np.concatenate([order[1:], [-1]])
    enxt[order[:-1][osrc[:-1] != osrc[1:]]] = -1
    first = np.ones(num_edges, dtype=bool)
    first[1:] = osrc[1:] != osrc[:-1]
    head[osrc[first]] = order[first]

    _dinic(num_nodes, head, eto, enxt, ecap, s, t)
    on_source = _source_side(num_nodes, head, eto, enxt, ecap, s)
    labels = (~on_source[:n]).astype(np.uint8)  # sink side = label 1

    energy = float(unary1[labels == 1].sum() + unary0[labels == 0].sum())
    if m:
        la = labels[edges_ij[:, 0]].astype(int)
        lb = labels[edges_ij[:, 1]].astype(int)
        energy += float(tables[np.arange(m), 2 * la + lb].sum())
    return labels, energy


def grid_edges(h: int, w: int) -> np.ndarray:
    """4-connected (i, j) index pairs on an h x w grid, row-major."""
    idx = np.arange(h * w).reshape(h, w)
    horiz = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1)
    vert = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1)
    return np.concatenate([horiz, vert], axis=0)


def solve_potts_grid(u0: np.ndarray, u1: np.ndarray, w_h: np.ndarray,
                     w_v: np.ndarray) -> tuple[np.ndarray, float]:
    """Potts model on an HxW grid; w_h pairs (r,c)-(r,c+1), w_v vertical."""
    h, w = u0.shape
    edges = grid_edges(h, w)
    weights = np.concatenate([w_h.ravel(), w_v.ravel()])
    tables = np.zeros((len(weights), 4))
    tables[:, 1] = weights
    tables[:, 2] = weights
    labels, energy = solve_binary_mrf(u0.ravel(), u1.ravel(), edges, tables)
    return labels.reshape(h, w), energy
