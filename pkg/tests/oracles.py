"""Independent reference implementations used by the tests."""

from functools import lru_cache

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from flagmatch.tracer import DecodingGraph, Edge, EdgeClass, LogicalEffect, Strategy

REL = 1e-9


@lru_cache(maxsize=None)
def all_pairings(k: int) -> np.ndarray:
    """Every pairing of k defects (partner k = boundary) in lexicographic order.

    Row ``m`` gives the partner position of each defect. The lowest unmatched
    defect tries partners in increasing order, the boundary last.
    """
    out = []

    def rec(partner, free):
        if not free:
            out.append(partner)
            return
        i, rest = free[0], free[1:]
        for pos, j in enumerate(rest):
            rec(partner + ((i, j), (j, i)), rest[:pos] + rest[pos + 1:])
        rec(partner + ((i, k),), rest)

    rec((), tuple(range(k)))
    out = [tuple(dict(p)[i] for i in range(k)) for p in out]
    return np.array(out, dtype=np.int64).reshape(len(out), k)


def distances(graph: DecodingGraph) -> np.ndarray:
    n = graph.n_events + 1
    rows, cols, w = [], [], []
    for e in graph.edges:
        rows += [e.u, e.v]
        cols += [e.v, e.u]
        # csgraph treats explicit zeros as missing; weights here are positive
        w += [e.weight, e.weight]
    m = csr_matrix((w, (rows, cols)), shape=(n, n))
    return shortest_path(m, method="D", directed=False)


def brute_force_matching(graph: DecodingGraph, defects, dist=None):
    """Minimum-weight pairing set by exhaustive enumeration."""
    defects = sorted(defects)
    k = len(defects)
    if k == 0:
        return (), 0.0
    d = distances(graph) if dist is None else dist
    b = graph.boundary
    idx = np.array(defects)
    cost = np.empty((k, k + 1))
    cost[:, :k] = d[np.ix_(idx, idx)] / 2
    cost[:, k] = d[idx, b]
    P = all_pairings(k)
    totals = cost[np.arange(k), P].sum(axis=1)
    best = totals.min()
    m = int(np.flatnonzero(totals <= best + REL * max(1.0, abs(best)))[0])
    pairs = []
    for i, j in enumerate(P[m].tolist()):
        if j == k:
            pairs.append((defects[i], b))
        elif i < j:
            pairs.append((defects[i], defects[j]))
    return tuple(pairs), float(totals[m])


def random_graph(rng: np.random.Generator, n_events: int, integer: bool) -> DecodingGraph:
    b = n_events
    edges = {}

    def w():
        return float(rng.integers(1, 4)) if integer else float(rng.uniform(0.1, 5.0))

    order = rng.permutation(n_events)
    # a spanning chain to the boundary keeps every defect matchable
    for a, c in zip(order, list(order[1:]) + [b]):
        u, v = sorted((int(a), int(c)))
        edges[(u, v)] = w()
    for _ in range(int(rng.integers(0, 2 * n_events + 1))):
        u, v = sorted(int(x) for x in rng.choice(n_events + 1, 2, replace=False))
        edges[(u, v)] = w()
    classes = list(EdgeClass)
    effects = {EdgeClass.FLIP: LogicalEffect.FLIPS, EdgeClass.NO_FLIP: LogicalEffect.PRESERVES,
               EdgeClass.AMBIGUOUS: LogicalEffect.MIXED}
    out = []
    for (u, v), wt in sorted(edges.items()):
        cls = classes[int(rng.integers(0, 3))]
        out.append(Edge(u, v, wt, 0.1, cls, effects[cls]))
    nodes = tuple(range(n_events + 1))
    return DecodingGraph(n_events, tuple(out), Strategy.ANALYTICAL, nodes)


def event_marginals(circuit, locations, semantics="flagged") -> np.ndarray:
    """Exact event firing probabilities from single-fault traces.

    Faults of one location are exclusive, distinct locations independent.
    """
    from flagmatch.sim import event_map
    from flagmatch.tracer import trace_faults

    n = len(event_map(circuit, semantics == "deflagged"))
    per = {}
    for loc, f, mask, _ in trace_faults(circuit, locations, semantics):
        q = per.setdefault(loc.instruction_index, np.zeros(n))
        for e in range(n):
            if mask >> e & 1:
                q[e] += loc.faults[f][1]
    if not per:
        return np.zeros(n)
    return (1 - np.prod([1 - 2 * q for q in per.values()], axis=0)) / 2
