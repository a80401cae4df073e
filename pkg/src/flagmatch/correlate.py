"""Hyperedge probabilities from event statistics.

Model: every hyperedge ``h`` fires independently with probability ``alpha_h``
and toggles all of its events. The estimator follows four steps:

1. expectations ``<h>``: fraction of shots in which all events of ``h`` are 1;
2. clusters: hyperedges by decreasing size, each kept unless it is a subset
   of a cluster already chosen;
3. per cluster ``c``, solve for the ``alpha`` of its members pretending they
   are the only hyperedges;
4. top-down adjustment for larger hyperedges that overlap a cluster in a
   member, ``alpha <- (alpha - alpha') / (1 - 2 alpha')``, then the mean over
   clusters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .sim import ShotBatch, event_map
from .tracer import Hyperedge

SOLVER_TOL = 1e-10

Key = tuple[int, ...]


def _key(h) -> Key:
    return tuple(h.events) if isinstance(h, Hyperedge) else tuple(sorted(h))


@dataclass
class EventStatistics:
    n_shots: int
    subset_counts: dict[Key, int]

    def expectation(self, h) -> float:
        return self.subset_counts[_key(h)] / self.n_shots

    def __add__(self, other: EventStatistics) -> EventStatistics:
        if self.subset_counts.keys() != other.subset_counts.keys():
            raise ValueError("statistics cover different event sets")
        return EventStatistics(
            self.n_shots + other.n_shots,
            {k: v + other.subset_counts[k] for k, v in self.subset_counts.items()},
        )


def _event_array(shots) -> np.ndarray:
    if isinstance(shots, ShotBatch):
        return shots.events
    if isinstance(shots, np.ndarray):
        return shots.astype(bool, copy=False)
    parts = []
    recs = []
    for item in shots:
        if isinstance(item, ShotBatch):
            parts.append(item.events)
        else:
            recs.append(item.events)
    if recs:
        parts.append(np.array(recs, dtype=bool))
    return np.concatenate(parts) if parts else np.zeros((0, 0), dtype=bool)


def accumulate(shots, hyperedges, extra=()) -> EventStatistics:
    """AND-counts for every hyperedge event set (plus ``extra`` sets)."""
    ev = _event_array(shots)
    keys = sorted({_key(h) for h in hyperedges} | {_key(k) for k in extra})
    n = ev.shape[0]
    if n == 0:
        return EventStatistics(0, {k: 0 for k in keys})
    cols = np.packbits(ev.T, axis=1)
    counts = {}
    for k in keys:
        acc = cols[k[0]].copy()
        for e in k[1:]:
            acc &= cols[e]
        counts[k] = int(np.bitwise_count(acc).sum())
    return EventStatistics(n, counts)


def cluster(hyperedges) -> list[Key]:
    """Greedy cover of the hypergraph by its maximal hyperedges."""
    keys = sorted({_key(h) for h in hyperedges}, key=lambda k: (-len(k), k))
    out: list[Key] = []
    sets: list[set] = []
    for k in keys:
        s = set(k)
        if not any(s <= c for c in sets):
            out.append(k)
            sets.append(s)
    return out


@dataclass
class ClusterSolution:
    cluster: Key
    alphas: dict[Key, float]
    residual: float
    converged: bool = True
    projected: bool = False


class _ClusterModel:
    """AND-moments of a cluster's members as functions of their alphas."""

    def __init__(self, c: Key, members: list[Key]):
        pos = {e: i for i, e in enumerate(c)}
        self.k = len(c)
        self.masks = [sum(1 << pos[e] for e in m) for m in members]
        s = np.arange(1 << self.k)
        self.perm = [s ^ m for m in self.masks]
        self.A = np.array([(s & m) == m for m in self.masks], dtype=float)

    def dist(self, alpha, skip: int | None = None) -> np.ndarray:
        p = np.zeros(1 << self.k)
        p[0] = 1.0
        for j, (a, perm) in enumerate(zip(alpha, self.perm)):
            if j != skip:
                p = (1 - a) * p + a * p[perm]
        return p

    def moments(self, alpha) -> np.ndarray:
        return self.A @ self.dist(alpha)

    def jacobian(self, alpha) -> np.ndarray:
        cols = []
        for j, perm in enumerate(self.perm):
            q = self.dist(alpha, skip=j)
            cols.append(self.A @ (q[perm] - q))
        return np.array(cols).T


def _closed_form_pair(xi: float, xj: float, xij: float):
    """Invert the three AND-moments of a size-2 cluster with all members."""
    si, sj = 1 - 2 * xi, 1 - 2 * xj
    sij = 1 - 2 * xi - 2 * xj + 4 * xij
    if si <= 0 or sj <= 0 or sij <= 0:
        return None
    r = si * sj / sij
    if r > 1:
        return None
    t = math.sqrt(r)  # 1 - 2 alpha_ij
    return (1 - si / t) / 2, (1 - sj / t) / 2, (1 - t) / 2


def solve_cluster(c, stats: EventStatistics, members) -> ClusterSolution:
    """Solve the member system of one cluster at the empirical moments."""
    c = _key(c)
    keys = sorted({_key(m) for m in members}, key=lambda k: (len(k), k))
    if not keys or any(not set(k) <= set(c) for k in keys):
        raise ValueError("members must be nonempty subsets of the cluster")
    target = np.array([stats.expectation(k) for k in keys])
    model = _ClusterModel(c, keys)
    alpha = None
    if len(keys) == 1 and keys[0] == c:
        alpha = np.array([target[0]])
    elif len(c) == 2 and len(keys) == 3:
        sol = _closed_form_pair(*target)
        if sol is not None:
            alpha = np.array(sol)
    if alpha is not None and np.all((alpha >= 0) & (alpha <= 0.5)):
        res = float(np.linalg.norm(model.moments(alpha) - target))
        return ClusterSolution(c, dict(zip(keys, alpha.tolist())), res)
    x0 = np.clip(target, 0.0, 0.49)
    fit = least_squares(
        lambda a: model.moments(a) - target,
        x0,
        jac=model.jacobian,
        bounds=(0.0, 0.5),
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
        max_nfev=500,
    )
    res = float(np.linalg.norm(fit.fun))
    ok = res < SOLVER_TOL
    at_bound = bool(np.any(fit.active_mask != 0))
    return ClusterSolution(c, dict(zip(keys, fit.x.tolist())), res, ok, not ok and at_bound)


class SingularAdjustmentError(ZeroDivisionError):
    pass


def adjust_value(alpha: float, alpha_prime: float) -> float:
    if alpha_prime == 0.5:
        raise SingularAdjustmentError("adjusting by a hyperedge with probability 1/2")
    return (alpha - alpha_prime) / (1 - 2 * alpha_prime)


def adjust(solutions, hyperedges, flags: list | None = None) -> dict[Key, float]:
    """Top-down adjustment and averaging of the per-cluster estimates."""
    keys = sorted({_key(h) for h in hyperedges}, key=lambda k: (-len(k), k))
    sets = {k: frozenset(k) for k in keys}
    final: dict[Key, float] = {}
    for h in keys:
        hs = sets[h]
        vals = []
        for sol in solutions:
            if h not in sol.alphas:
                continue
            cs = frozenset(sol.cluster)
            v = sol.alphas[h]
            for hp in keys:
                if len(hp) <= len(h):
                    break
                hps = sets[hp]
                if hps & cs == hs and not hps <= cs:
                    try:
                        v = adjust_value(v, final[hp])
                    except SingularAdjustmentError:
                        if flags is None:
                            raise
                        flags.append((h, hp))
            vals.append(v)
        if not vals:
            raise ValueError(f"hyperedge {h} is in no solved cluster")
        final[h] = float(np.mean(vals))
    return final


def members_of(c: Key, keys) -> list[Key]:
    cs = set(c)
    return [k for k in keys if set(k) <= cs]


def estimate(stats: EventStatistics, hyperedges, flags: list | None = None):
    """Cluster, solve and adjust; returns (alphas, solutions)."""
    keys = sorted({_key(h) for h in hyperedges})
    sols = [solve_cluster(c, stats, members_of(c, keys)) for c in cluster(keys)]
    return adjust(sols, keys, flags), sols


@dataclass
class Calibration:
    alphas: dict[Key, float]
    stderr: dict[Key, float]
    solutions: list[ClusterSolution]
    n_shots: int
    max_size: int | None = None
    flags: list = field(default_factory=list)

    def hyperedges(self, reference) -> list[Hyperedge]:
        """``reference`` hyperedges carrying calibrated probabilities."""
        out = []
        for h in reference:
            k = _key(h)
            if k in self.alphas:
                out.append(h.with_probability(self.alphas[k]))
        return out

    @property
    def max_residual(self) -> float:
        return max((s.residual for s in self.solutions), default=0.0)

    def metadata(self) -> dict:
        return {
            "n_shots": self.n_shots,
            "truncation": "none" if self.max_size is None else f"size<={self.max_size}",
            "max_residual": f"{self.max_residual:.3e}",
            "unconverged": sum(not s.converged for s in self.solutions),
        }


def calibrate(shots, circuit=None, hyperedges=(), max_size: int | None = None,
              n_batches: int = 30, extra=()) -> Calibration:
    """Correlation estimate of every hyperedge probability.

    ``max_size`` restricts the candidate set to hyperedges of at most that
    size (the truncated analysis). Standard errors come from the spread of
    estimates over ``n_batches`` contiguous sub-samples.
    """
    ev = _event_array(shots)
    if circuit is not None:
        widths = {len(event_map(circuit)), len(event_map(circuit, deflagged=True))}
        if ev.shape[1] not in widths:
            raise ValueError("event width does not match the circuit")
    keys = sorted({_key(h) for h in hyperedges} | {_key(k) for k in extra})
    if max_size is not None:
        keys = [k for k in keys if len(k) <= max_size]
    n = ev.shape[0]
    nb = n_batches if n_batches and n >= 2 * n_batches else 0
    if nb:
        bounds = np.linspace(0, n, nb + 1).astype(int)
        parts = [accumulate(ev[a:b], keys) for a, b in zip(bounds[:-1], bounds[1:])]
        stats = parts[0]
        for p in parts[1:]:
            stats = stats + p
    else:
        parts = []
        stats = accumulate(ev, keys)
    flags: list = []
    alphas, sols = estimate(stats, keys, flags)
    stderr = {k: math.nan for k in keys}
    if parts:
        reps = [estimate(p, keys, [])[0] for p in parts]
        for k in keys:
            vals = np.array([r[k] for r in reps])
            stderr[k] = float(vals.std(ddof=1) / math.sqrt(len(vals)))
    return Calibration(alphas, stderr, sols, n, max_size, flags)


def sample_hyperedges(alphas: dict, n_events: int, n_shots: int, seed: int) -> np.ndarray:
    """Events of the independent-hyperedge process with known ``alphas``.

    Each hyperedge fires with its own probability and toggles its events.
    Returns a ``(n_shots, n_events)`` bool array.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    ev = np.zeros((n_shots, n_events), dtype=bool)
    for k in sorted(alphas, key=_key):
        fire = rng.random(n_shots) < alphas[k]
        for e in _key(k):
            ev[:, e] ^= fire
    return ev
