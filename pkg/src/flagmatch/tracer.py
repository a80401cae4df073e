"""Single-fault tracing into a decoding hypergraph, and decoding graphs.

Every fault is a Pauli inserted after an instruction (before it for a
measurement). Its raw-flip footprint is obtained from a backward sweep that
records, for each point of the circuit and each single-qubit X or Z, which
later measurements it flips; a fault's footprint is the XOR over its
components. Events and the logical effect then follow from the event map.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

from .circuit import D0, D3, Circuit, Kind, Role
from .noise import CHANNEL_PARAM, FaultLocation, NoiseParams
from .pauli import PauliString
from .sim import EventMap, event_map


class Semantics(str, enum.Enum):
    FLAGGED = "flagged"
    DEFLAGGED = "deflagged"


class LogicalEffect(str, enum.Enum):
    FLIPS = "flips"
    PRESERVES = "preserves"
    MIXED = "mixed"


class EdgeClass(str, enum.Enum):
    FLIP = "flip"
    NO_FLIP = "no-flip"
    AMBIGUOUS = "ambiguous"


class Strategy(str, enum.Enum):
    UNIFORM = "uniform"
    ANALYTICAL = "analytical"
    CORRELATION = "correlation"


class CalibrationIncompleteError(KeyError):
    """A correlation-weighted graph was requested without all probabilities."""


@dataclass(frozen=True)
class Hyperedge:
    events: tuple[int, ...]
    probability: float
    logical_flip: LogicalEffect
    sources: tuple[tuple[int, int], ...] = ()
    # d(probability)/d(param) at first order, in NoiseParams field order.
    sensitivity: tuple[float, ...] = (0.0,) * 6

    @property
    def size(self) -> int:
        return len(self.events)

    def with_probability(self, p: float) -> Hyperedge:
        return replace(self, probability=p)


def _components(p: PauliString):
    for q in range(p.n):
        if p.x_bits >> q & 1:
            yield q, 0
        if p.z_bits >> q & 1:
            yield q, 1


class SensitivityTable:
    """``table[i][q][k]``: raw flips from X (k=0) or Z (k=1) on q just before i.

    Index ``len(instructions)`` is the end of the circuit (no flips).
    """

    def __init__(self, circuit: Circuit):
        n = circuit.n_qubits
        instrs = circuit.instructions
        bit_of = {}
        b = 0
        for i, ins in enumerate(instrs):
            if ins.kind is Kind.MEASURE_Z:
                bit_of[i] = b
                b += 1
        after = [[0, 0] for _ in range(n)]
        rows: list[list[list[int]]] = [None] * (len(instrs) + 1)
        rows[len(instrs)] = after
        basis = [[PauliString.single(n, q, "X"), PauliString.single(n, q, "Z")] for q in range(n)]
        for i in range(len(instrs) - 1, -1, -1):
            ins = instrs[i]
            kind, qs = ins.kind, ins.qubits
            before = [list(r) for r in after]
            if kind is Kind.MEASURE_Z:
                before[qs[0]][0] ^= 1 << bit_of[i]
            elif kind in (Kind.PREP_Z, Kind.PREP_X, Kind.RESET):
                before[qs[0]] = [0, 0]
            elif kind in (Kind.H, Kind.CNOT):
                for q in qs:
                    for k in (0, 1):
                        p = basis[q][k]
                        p = p.h(q) if kind is Kind.H else p.cnot(*qs)
                        m = 0
                        for qq, kk in _components(p):
                            m ^= after[qq][kk]
                        before[q][k] = m
            rows[i] = before
            after = before
        self.rows = rows

    def flips(self, position: int, pauli: PauliString) -> int:
        row = self.rows[position]
        m = 0
        for q, k in _components(pauli):
            m ^= row[q][k]
        return m


def fault_position(circuit: Circuit, instruction_index: int) -> int:
    """Sweep position at which a fault of this instruction enters."""
    if circuit.instructions[instruction_index].kind is Kind.MEASURE_Z:
        return instruction_index
    return instruction_index + 1


class Tracer:
    """Raw-flip footprints of single faults for one circuit."""

    def __init__(self, circuit: Circuit):
        self.circuit = circuit
        self.table = SensitivityTable(circuit)
        n = circuit.n_qubits
        flags: dict[int, dict[str, int]] = {}
        for idx, ins in enumerate(circuit.instructions):
            if ins.kind is Kind.MEASURE_Z and ins.label.role is Role.FLAG:
                flags.setdefault(ins.label.round, {})[ins.label.tag] = idx
        self.deflag = []
        for rnd in sorted(flags):
            pos = max(flags[rnd].values()) + 1
            self.deflag.append((
                circuit.bit(Role.FLAG, rnd, "02"),
                circuit.bit(Role.FLAG, rnd, "13"),
                self.table.flips(pos, PauliString.single(n, D0, "X")),
                self.table.flips(pos, PauliString.single(n, D3, "X")),
            ))

    def raw_mask(self, instruction_index: int, pauli: PauliString) -> int:
        """Raw flips from ``pauli`` (whole register) at an instruction."""
        return self.table.flips(fault_position(self.circuit, instruction_index), pauli)

    def deflagged(self, mask: int) -> int:
        """Apply the flag-conditioned software corrections round by round."""
        for lb, rb, lfix, rfix in self.deflag:
            left, right = mask >> lb & 1, mask >> rb & 1
            if left and not right:
                mask ^= lfix
            elif right and not left:
                mask ^= rfix
        return mask


def trace_faults(circuit: Circuit, locations: list[FaultLocation],
                 semantics: Semantics | str = Semantics.FLAGGED):
    """Yield ``(location, fault_index, event_mask, logical_bit)`` per fault."""
    semantics = Semantics(semantics)
    tr = Tracer(circuit)
    emap = event_map(circuit, deflagged=semantics is Semantics.DEFLAGGED)
    n = circuit.n_qubits
    for loc in locations:
        qs = circuit.instructions[loc.instruction_index].qubits
        for f, (fault, _) in enumerate(loc.faults):
            mask = tr.raw_mask(loc.instruction_index, fault.on(n, qs))
            if semantics is Semantics.DEFLAGGED:
                mask = tr.deflagged(mask)
            yield loc, f, emap.events_of_mask(mask), emap.logical_of_mask(mask)


def _mask_tuple(mask: int) -> tuple[int, ...]:
    out = []
    e = 0
    while mask:
        if mask & 1:
            out.append(e)
        mask >>= 1
        e += 1
    return tuple(out)


def trace_hypergraph(circuit: Circuit, locations: list[FaultLocation],
                     semantics: Semantics | str = Semantics.FLAGGED) -> list[Hyperedge]:
    """Group single faults by their nonempty event set.

    Probabilities are summed at first order. A hyperedge is ``mixed`` when its
    sources disagree on flipping the measured logical.
    """
    names = NoiseParams.names()
    acc: dict[int, list] = {}
    for loc, f, ev, lg in trace_faults(circuit, locations, semantics):
        if not ev:
            continue
        slot = acc.setdefault(ev, [0.0, set(), [], [0.0] * 6])
        slot[0] += loc.faults[f][1]
        slot[1].add(lg)
        slot[2].append((loc.instruction_index, f))
        slot[3][names.index(CHANNEL_PARAM[loc.channel])] += loc.share
    out = []
    for ev, (p, lgs, src, sens) in acc.items():
        if len(lgs) == 2:
            eff = LogicalEffect.MIXED
        else:
            eff = LogicalEffect.FLIPS if 1 in lgs else LogicalEffect.PRESERVES
        out.append(Hyperedge(_mask_tuple(ev), p, eff, tuple(src), tuple(sens)))
    out.sort(key=lambda h: h.events)
    return out


def undetected_logical_faults(circuit: Circuit, locations: list[FaultLocation],
                              semantics: Semantics | str = Semantics.FLAGGED):
    """Faults that flip the logical readout without firing any event."""
    return [(loc.instruction_index, f) for loc, f, ev, lg in
            trace_faults(circuit, locations, semantics) if not ev and lg]


# Decoding graphs


@dataclass(frozen=True)
class Edge:
    u: int
    v: int  # boundary edges use v == graph.boundary
    weight: float
    probability: float
    cls: EdgeClass
    effect: LogicalEffect = LogicalEffect.PRESERVES


@dataclass(frozen=True)
class DecodingGraph:
    n_events: int
    edges: tuple[Edge, ...]
    strategy: Strategy
    nodes: tuple[int, ...] = field(default=())

    @property
    def boundary(self) -> int:
        """The merged boundary node; it sorts after every event."""
        return self.n_events

    def edge_map(self) -> dict[tuple[int, int], Edge]:
        return {(e.u, e.v): e for e in self.edges}


P_MAX = 0.5 - 1e-9


def edge_weight(p: float) -> float:
    """Natural-log weight ``ln((1-P)/P)`` with P clamped below 1/2."""
    p = min(p, P_MAX)
    return math.log((1.0 - p) / p)


_CLASS = {
    LogicalEffect.FLIPS: EdgeClass.FLIP,
    LogicalEffect.PRESERVES: EdgeClass.NO_FLIP,
    LogicalEffect.MIXED: EdgeClass.AMBIGUOUS,
}


def _key(events) -> tuple[int, ...]:
    return tuple(events.events) if isinstance(events, Hyperedge) else tuple(events)


def build_decoding_graph(
    hyperedges: list[Hyperedge],
    strategy: Strategy | str = Strategy.ANALYTICAL,
    correlation_probs: dict | None = None,
    n_events: int | None = None,
) -> DecodingGraph:
    """Graph over the size-1 and size-2 hyperedges.

    Edges with probability <= 0 are dropped; probabilities at or above 1/2 are
    clamped just below it. ``correlation_probs`` is keyed by event tuple (or
    Hyperedge) and must cover every size-1/2 hyperedge.
    """
    strategy = Strategy(strategy)
    if n_events is None:
        n_events = 1 + max((max(h.events) for h in hyperedges), default=-1)
    probs = None
    if strategy is Strategy.CORRELATION:
        if correlation_probs is None:
            raise CalibrationIncompleteError("correlation strategy needs calibrated probabilities")
        probs = {_key(k): v for k, v in correlation_probs.items()}
    edges = []
    for h in hyperedges:
        if h.size > 2:
            continue
        p = h.probability
        if probs is not None:
            try:
                p = probs[h.events]
            except KeyError:
                raise CalibrationIncompleteError(f"no calibrated probability for {h.events}") from None
        if not p > 0:
            continue
        w = 1.0 if strategy is Strategy.UNIFORM else edge_weight(p)
        u, v = (h.events[0], n_events) if h.size == 1 else h.events
        edges.append(Edge(u, v, w, min(p, P_MAX), _CLASS[h.logical_flip], h.logical_flip))
    edges.sort(key=lambda e: (e.u, e.v))
    nodes = tuple(sorted({e.u for e in edges} | {e.v for e in edges} | {n_events}))
    return classify_edges(DecodingGraph(n_events, tuple(edges), strategy, nodes))


def classify_edges(graph: DecodingGraph) -> DecodingGraph:
    """Label edges by whether their source faults all, never, or partly flip."""
    edges = tuple(replace(e, cls=_CLASS[e.effect]) for e in graph.edges)
    return replace(graph, edges=edges)


# Text formats


def format_hypergraph(hyperedges: list[Hyperedge], meta: dict | None = None) -> str:
    lines = ["# flagmatch-hypergraph v1"]
    for k, v in (meta or {}).items():
        lines.append(f"# {k}={v}")
    for h in sorted(hyperedges, key=lambda h: h.events):
        lines.append(f"{' '.join(map(str, h.events))} | {h.probability!r} | {h.logical_flip.value}")
    return "\n".join(lines) + "\n"


def parse_hypergraph(text: str) -> tuple[list[Hyperedge], dict]:
    meta = {}
    out = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            k, sep, v = line[1:].strip().partition("=")
            if sep:
                meta[k.strip()] = v.strip()
            continue
        ev, p, cls = (s.strip() for s in line.split("|"))
        out.append(Hyperedge(tuple(int(e) for e in ev.split()), float(p), LogicalEffect(cls)))
    return out, meta


def format_graph(graph: DecodingGraph) -> str:
    lines = [
        "# flagmatch-graph v1",
        f"# strategy={graph.strategy.value}",
        f"# n_events={graph.n_events}",
    ]
    for e in graph.edges:
        v = "B" if e.v == graph.boundary else str(e.v)
        lines.append(f"{e.u} {v} | {e.probability!r} | {e.cls.value} | {e.weight!r}")
    return "\n".join(lines) + "\n"


def parse_graph(text: str) -> DecodingGraph:
    meta = {}
    rows = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            k, sep, v = line[1:].strip().partition("=")
            if sep:
                meta[k.strip()] = v.strip()
            continue
        rows.append([s.strip() for s in line.split("|")])
    n = int(meta["n_events"])
    inverse = {v: k for k, v in _CLASS.items()}
    edges = []
    for ends, p, cls, w in rows:
        a, b = ends.split()
        cls = EdgeClass(cls)
        edges.append(Edge(int(a), n if b == "B" else int(b), float(w), float(p), cls, inverse[cls]))
    nodes = tuple(sorted({e.u for e in edges} | {e.v for e in edges} | {n}))
    return DecodingGraph(n, tuple(edges), Strategy(meta["strategy"]), nodes)
