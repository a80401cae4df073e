"""Minimum-weight perfect matching and post-selection.

Pair costs are shortest-path distances in the decoding graph, with the merged
boundary available as a partner to every defect. Matching is exact: a memoized
search over defect subsets for up to ``DP_LIMIT`` defects, and the blossom
algorithm from networkx beyond that. Ties are broken lexicographically: the
lowest unmatched defect takes the smallest partner id (the boundary id is the
largest) that still allows an optimal completion.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .sim import ShotBatch, ShotRecord
from .tracer import DecodingGraph, Edge, EdgeClass

DP_LIMIT = 14
TOL = 1e-9


class UnknownEventError(KeyError):
    """A defect refers to an event absent from the decoding graph."""


class UndefinedRateError(ZeroDivisionError):
    """Logical error rate requested with no accepted shots."""


class Scheme(str, enum.Enum):
    FULL = "full"
    NONE = "none"
    PARTIAL = "partial"


class Verdict(str, enum.Enum):
    ACCEPTED = "Accepted"
    REJECTED_FULL = "RejectedFull"
    REJECTED_PARTIAL = "RejectedPartial"


@dataclass(frozen=True)
class MatchingResult:
    pairs: tuple[tuple[int, int], ...]
    edge_path: tuple[tuple[Edge, ...], ...]
    total_weight: float
    used_ambiguous: bool
    logical_correction: int


def _tol(x: float) -> float:
    return TOL * max(1.0, abs(x))


class Matcher:
    """Shortest paths and matchings on a fixed decoding graph."""

    def __init__(self, graph: DecodingGraph):
        self.graph = graph
        n = graph.n_events + 1
        self.n = n
        w = np.full((n, n), np.inf)
        np.fill_diagonal(w, 0.0)
        self.adj: list[list[int]] = [[] for _ in range(n)]
        self.edges: dict[tuple[int, int], Edge] = {}
        for e in graph.edges:
            a, b = e.u, e.v
            w[a, b] = w[b, a] = e.weight
            self.edges[(a, b)] = self.edges[(b, a)] = e
            self.adj[a].append(b)
            self.adj[b].append(a)
        for nb in self.adj:
            nb.sort()
        self.w = w
        d = w.copy()
        for k in range(n):
            np.minimum(d, d[:, k, None] + d[None, k, :], out=d)
        self.dist = d
        self._paths: dict[tuple[int, int], tuple] = {}
        self._cache: dict[tuple[int, ...], MatchingResult] = {}
        self.known = {e.u for e in graph.edges} | {e.v for e in graph.edges}

    @property
    def boundary(self) -> int:
        return self.graph.boundary

    def path(self, a: int, b: int) -> tuple[Edge, ...]:
        """Lexicographically smallest shortest path from ``a`` to ``b``."""
        key = (a, b)
        if key in self._paths:
            return self._paths[key]
        d = self.dist
        if not math.isfinite(d[a, b]):
            raise ValueError(f"no path between {a} and {b}")
        out = []
        seen = {a}
        cur = a
        while cur != b:
            target = d[cur, b]
            for nxt in self.adj[cur]:
                if nxt in seen:
                    continue
                if self.w[cur, nxt] + d[nxt, b] <= target + _tol(target):
                    break
            else:
                raise RuntimeError("shortest path reconstruction failed")
            out.append(self.edges[(cur, nxt)])
            seen.add(nxt)
            cur = nxt
        self._paths[key] = tuple(out)
        return self._paths[key]

    def pairing(self, defects: tuple[int, ...]) -> tuple[tuple[tuple[int, int], ...], float]:
        k = len(defects)
        if k > DP_LIMIT:
            return self._blossom(defects)
        d = self.dist
        bnd = self.boundary
        idx = list(defects)

        @lru_cache(maxsize=None)
        def best(mask: int) -> float:
            if not mask:
                return 0.0
            i = (mask & -mask).bit_length() - 1
            rest = mask & ~(1 << i)
            cost = d[idx[i], bnd] + best(rest)
            m = rest
            while m:
                j = (m & -m).bit_length() - 1
                m &= m - 1
                c = d[idx[i], idx[j]] + best(rest & ~(1 << j))
                if c < cost:
                    cost = c
            return cost

        full = (1 << k) - 1
        total = best(full)
        if not math.isfinite(total):
            raise ValueError(f"defects {defects} cannot be matched")
        pairs = []
        mask = full
        while mask:
            target = best(mask)
            i = (mask & -mask).bit_length() - 1
            rest = mask & ~(1 << i)
            choice = None
            m = rest
            while m:
                j = (m & -m).bit_length() - 1
                m &= m - 1
                if d[idx[i], idx[j]] + best(rest & ~(1 << j)) <= target + _tol(target):
                    choice = j
                    break
            if choice is None:
                pairs.append((idx[i], bnd))
                mask = rest
            else:
                pairs.append((idx[i], idx[choice]))
                mask = rest & ~(1 << choice)
        return tuple(pairs), total

    def _blossom(self, defects):
        import networkx as nx

        d = self.dist
        bnd = self.boundary
        g = nx.Graph()
        big = 1.0 + 2.0 * max(
            [d[a, bnd] for a in defects] + [d[a, b] for a in defects for b in defects if a != b]
        )
        for a in defects:
            g.add_edge(a, ("b", a), weight=big - d[a, bnd])
            for b in defects:
                if a < b:
                    g.add_edge(a, b, weight=big - d[a, b])
                    g.add_edge(("b", a), ("b", b), weight=big)
        mate = nx.max_weight_matching(g, maxcardinality=True)
        pairs = []
        for u, v in mate:
            if isinstance(u, tuple) and isinstance(v, tuple):
                continue
            if isinstance(u, tuple):
                u, v = v, u
            pairs.append((u, bnd) if isinstance(v, tuple) else (min(u, v), max(u, v)))
        pairs.sort()
        total = sum(d[a, b] for a, b in pairs)
        return tuple(pairs), total

    def match(self, defects) -> MatchingResult:
        key = tuple(sorted(defects))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        for e in key:
            if e not in self.known:
                raise UnknownEventError(e)
        pairs, total = self.pairing(key)
        paths = tuple(self.path(a, b) for a, b in pairs)
        amb = any(e.cls is EdgeClass.AMBIGUOUS for p in paths for e in p)
        corr = sum(e.cls is EdgeClass.FLIP for p in paths for e in p) & 1
        res = MatchingResult(pairs, paths, float(total), amb, corr)
        self._cache[key] = res
        return res


def mwpm(graph: DecodingGraph | Matcher, defects) -> MatchingResult:
    m = graph if isinstance(graph, Matcher) else Matcher(graph)
    return m.match(defects)


@dataclass(frozen=True)
class DecodedShot:
    record: ShotRecord
    verdict: Verdict
    corrected_logical: int
    failed: bool


def decode_shot(graph: DecodingGraph | Matcher | None, record: ShotRecord,
                scheme: Scheme | str) -> DecodedShot:
    """Decode one shot; ``graph=None`` reports the raw (undecoded) readout."""
    scheme = Scheme(scheme)
    defects = record.defects
    verdict = Verdict.ACCEPTED
    corr = 0
    if scheme is Scheme.FULL:
        if defects:
            verdict = Verdict.REJECTED_FULL
    elif graph is not None:
        res = mwpm(graph, defects)
        if scheme is Scheme.PARTIAL and res.used_ambiguous:
            verdict = Verdict.REJECTED_PARTIAL
        else:
            corr = res.logical_correction
    return DecodedShot(record, verdict, corr, corr != record.logical_flip_truth)


@dataclass
class DecodedBatch:
    verdict: np.ndarray  # Verdict codes: 0 accepted, 1 rejected full, 2 rejected partial
    corrected: np.ndarray
    failed: np.ndarray
    scheme: Scheme

    CODES = (Verdict.ACCEPTED, Verdict.REJECTED_FULL, Verdict.REJECTED_PARTIAL)

    def __len__(self) -> int:
        return len(self.verdict)

    @property
    def accepted(self) -> np.ndarray:
        return self.verdict == 0

    def rows(self):
        for i, (v, c, f) in enumerate(zip(self.verdict.tolist(), self.corrected.tolist(),
                                          self.failed.tolist())):
            yield i, self.scheme.value, self.CODES[v].value, int(c), int(f)


def decode_batch(graph: DecodingGraph | Matcher | None, batch: ShotBatch,
                 scheme: Scheme | str) -> DecodedBatch:
    """Vectorized ``decode_shot`` over a batch, matching each syndrome once."""
    scheme = Scheme(scheme)
    n = len(batch)
    ev = batch.events
    any_ev = ev.any(axis=1)
    verdict = np.zeros(n, dtype=np.int8)
    corr = np.zeros(n, dtype=bool)
    if scheme is Scheme.FULL:
        verdict[any_ev] = 1
    elif graph is not None and n:
        matcher = graph if isinstance(graph, Matcher) else Matcher(graph)
        rows = np.flatnonzero(any_ev)
        packed = np.packbits(ev[rows], axis=1)
        uniq, inv = np.unique(packed, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        u_corr = np.zeros(len(uniq), dtype=bool)
        u_amb = np.zeros(len(uniq), dtype=bool)
        width = ev.shape[1]
        for k, row in enumerate(uniq):
            bits = np.unpackbits(row)[:width]
            res = matcher.match(tuple(np.flatnonzero(bits).tolist()))
            u_corr[k] = res.logical_correction
            u_amb[k] = res.used_ambiguous
        c = u_corr[inv]
        if scheme is Scheme.PARTIAL:
            rej = u_amb[inv]
            verdict[rows[rej]] = 2
            c = c & ~rej
        corr[rows] = c
    failed = corr != batch.logical
    return DecodedBatch(verdict, corr, failed, scheme)


@dataclass(frozen=True)
class LogicalErrorRate:
    p_fail_per_accepted: float
    acceptance_fraction: float
    stderr: float
    acceptance_stderr: float
    n_total: int
    n_accepted: int
    n_failed: int


def logical_error_rate(decoded) -> LogicalErrorRate:
    """Failure rate among accepted shots, acceptance and binomial errors."""
    if isinstance(decoded, DecodedBatch):
        n = len(decoded)
        acc = int(decoded.accepted.sum())
        fail = int((decoded.failed & decoded.accepted).sum())
    else:
        n = acc = fail = 0
        for d in decoded:
            n += 1
            if d.verdict is Verdict.ACCEPTED:
                acc += 1
                fail += bool(d.failed)
    if acc == 0:
        raise UndefinedRateError("no accepted shots")
    p = fail / acc
    a = acc / n
    return LogicalErrorRate(p, a, math.sqrt(p * (1 - p) / acc), math.sqrt(a * (1 - a) / n),
                            n, acc, fail)


def format_decoded(decoded: DecodedBatch) -> str:
    lines = ["shot,scheme,verdict,corrected_logical,failed"]
    lines += [",".join(map(str, row)) for row in decoded.rows()]
    return "\n".join(lines) + "\n"


def parse_decoded(text: str) -> DecodedBatch:
    lines = text.strip().splitlines()[1:]
    codes = {v.value: i for i, v in enumerate(DecodedBatch.CODES)}
    verdict, corr, failed = [], [], []
    scheme = Scheme.NONE
    for line in lines:
        _, sch, v, c, f = line.split(",")
        scheme = Scheme(sch)
        verdict.append(codes[v])
        corr.append(int(c))
        failed.append(int(f))
    return DecodedBatch(np.array(verdict, dtype=np.int8), np.array(corr, dtype=bool),
                        np.array(failed, dtype=bool), scheme)
