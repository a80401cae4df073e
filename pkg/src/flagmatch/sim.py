"""Pauli-frame Monte Carlo sampling of the memory experiment.

Frames are tracked relative to the noiseless run, so every raw bit is a flip
and every event is 0 without faults. Shots are processed in fixed chunks;
chunk ``k`` draws from its own stream seeded by ``(seed, k)``, which keeps the
output independent of how chunks are spread over threads.
"""

from __future__ import annotations

import enum
import functools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .circuit import D0, D3, DATA_NAMES, SX, SZ02, SZ13, Circuit, Kind, Role
from .noise import FaultLocation, NoiseParams
from .pauli import PauliString

CHUNK = 1 << 15


class EventKind(str, enum.Enum):
    STAB_DIFF = "diff"
    FLAG = "flag"
    FIRST_CHECK = "first"
    FINAL_DIFF = "final"


@dataclass(frozen=True)
class EventId:
    kind: EventKind
    stabilizer: str  # stabilizer name, or flag side for FLAG events
    round: int
    index: int

    def __str__(self) -> str:
        return f"{self.index}:{self.kind.value}:{self.stabilizer}:{self.round}"


@dataclass(frozen=True)
class EventMap:
    """Linear map from raw measurement flips to events and the logical bit."""

    ids: tuple[EventId, ...]
    bits: tuple[tuple[int, ...], ...]
    logical_bits: tuple[int, ...]
    n_bits: int

    def __len__(self) -> int:
        return len(self.ids)

    def matrix(self) -> np.ndarray:
        m = np.zeros((self.n_bits, len(self.ids)), dtype=np.uint8)
        for e, bs in enumerate(self.bits):
            m[list(bs), e] = 1
        return m

    def events_of(self, raw: np.ndarray) -> np.ndarray:
        """Events for a (shots, n_bits) boolean array of raw flips."""
        out = raw.astype(np.uint8) @ self.matrix()
        return (out & 1).astype(bool)

    def logical_of(self, raw: np.ndarray) -> np.ndarray:
        return np.bitwise_xor.reduce(raw[:, list(self.logical_bits)], axis=1)

    def events_of_mask(self, mask: int) -> int:
        """Event bitmask for an integer bitmask of raw flips."""
        out = 0
        for e, bs in enumerate(self.bits):
            if sum(mask >> b & 1 for b in bs) & 1:
                out |= 1 << e
        return out

    def logical_of_mask(self, mask: int) -> int:
        return sum(mask >> b & 1 for b in self.logical_bits) & 1

    def index(self, kind: EventKind, stabilizer: str, round: int) -> int:
        for e in self.ids:
            if (e.kind, e.stabilizer, e.round) == (kind, stabilizer, round):
                return e.index
        raise KeyError((kind, stabilizer, round))


def event_map(circuit: Circuit, deflagged: bool = False) -> EventMap:
    """Events in time order: stabilizer comparisons and flag outcomes.

    A stabilizer known at preparation (S_X for +L/-L, the weight-2 checks for
    0L/1L) gives a FirstCheck event at its first measurement; a randomly
    projected one only becomes a reference. Later measurements are compared
    with the previous one, and the final transversal readout is compared with
    the last check of each stabilizer it determines.
    """
    x_basis = circuit.initial_state.x_basis
    last: dict[str, int | str | None] = {
        SX: "det" if x_basis else None,
        SZ02: None if x_basis else "det",
        SZ13: None if x_basis else "det",
    }
    specs: list[tuple[EventKind, str, int, tuple[int, ...]]] = []

    def compare(stab, rnd, bits, final=False):
        prev = last[stab]
        if prev is None:
            return
        kind = EventKind.FINAL_DIFF if final else (
            EventKind.FIRST_CHECK if prev == "det" else EventKind.STAB_DIFF)
        ref = () if prev == "det" else (prev,)
        specs.append((kind, stab, rnd, tuple(bits) + ref))

    data = {}
    for b, lab in enumerate(circuit.bit_labels):
        if lab.role is Role.FLAG:
            if not deflagged:
                specs.append((EventKind.FLAG, lab.tag, lab.round, (b,)))
        elif lab.role is Role.FINAL_DATA:
            data[lab.tag] = b
        else:
            stab = lab.stabilizer
            compare(stab, lab.round, (b,))
            last[stab] = b
    d = [data[name] for name in DATA_NAMES]
    final_round = circuit.rounds + 1
    if x_basis:
        compare(SX, final_round, d, final=True)
        logical = (d[0], d[2])
    else:
        compare(SZ02, final_round, (d[0], d[2]), final=True)
        compare(SZ13, final_round, (d[1], d[3]), final=True)
        logical = (d[0], d[1])
    ids = tuple(EventId(k, s, r, i) for i, (k, s, r, _) in enumerate(specs))
    return EventMap(ids, tuple(bits for *_, bits in specs), logical, circuit.n_bits)


@dataclass(frozen=True)
class ShotRecord:
    raw_flips: tuple[int, ...]
    events: tuple[int, ...]
    logical_flip_truth: int

    @property
    def defects(self) -> tuple[int, ...]:
        return tuple(i for i, v in enumerate(self.events) if v)


@dataclass
class ShotBatch:
    """Columnar block of shots; iterate for ``ShotRecord`` values."""

    raw: np.ndarray  # (shots, n_bits) bool
    events: np.ndarray  # (shots, n_events) bool
    logical: np.ndarray  # (shots,) bool
    emap: EventMap

    def __len__(self) -> int:
        return self.raw.shape[0]

    def __iter__(self) -> Iterator[ShotRecord]:
        return self.records()

    def records(self) -> Iterator[ShotRecord]:
        for r, e, l in zip(self.raw.astype(int).tolist(), self.events.astype(int).tolist(),
                           self.logical.astype(int).tolist()):
            yield ShotRecord(tuple(r), tuple(e), l)

    def __getitem__(self, sl) -> ShotBatch:
        return ShotBatch(self.raw[sl], self.events[sl], self.logical[sl], self.emap)

    @classmethod
    def from_raw(cls, raw: np.ndarray, emap: EventMap) -> ShotBatch:
        raw = np.ascontiguousarray(raw, dtype=bool)
        return cls(raw, emap.events_of(raw), emap.logical_of(raw), emap)

    @classmethod
    def from_records(cls, records, emap: EventMap) -> ShotBatch:
        raw = np.array([r.raw_flips for r in records], dtype=bool).reshape(-1, emap.n_bits)
        return cls.from_raw(raw, emap)

    @classmethod
    def concat(cls, batches) -> ShotBatch:
        batches = list(batches)
        return cls(
            np.concatenate([b.raw for b in batches]),
            np.concatenate([b.events for b in batches]),
            np.concatenate([b.logical for b in batches]),
            batches[0].emap,
        )


# Frame propagation


class _Program:
    """Circuit compiled for batched frame propagation."""

    def __init__(self, circuit: Circuit, locations: list[FaultLocation] | None):
        self.circuit = circuit
        self.ops = []
        bit = 0
        by_index = {loc.instruction_index: loc for loc in locations or []}
        for idx, ins in enumerate(circuit.instructions):
            if ins.kind is Kind.BARRIER:
                continue
            b = None
            if ins.kind is Kind.MEASURE_Z:
                b, bit = bit, bit + 1
            loc = by_index.get(idx)
            fault = None
            if loc is not None and loc.rate > 0:
                k = len(loc.faults)
                px = np.zeros((k, len(ins.qubits)), dtype=bool)
                pz = np.zeros_like(px)
                for f, (fault_, _) in enumerate(loc.faults):
                    for j in range(len(ins.qubits)):
                        px[f, j] = fault_.pauli.x_bits >> j & 1
                        pz[f, j] = fault_.pauli.z_bits >> j & 1
                fault = (loc.total, px, pz)
            self.ops.append((ins.kind, ins.qubits, b, fault))

    def run(self, x, z, raw, inject) -> None:
        for i, (kind, qs, b, fault) in enumerate(self.ops):
            if kind is Kind.MEASURE_Z:
                if fault is not None:
                    inject(x, z, qs, fault)
                raw[b] = x[qs[0]]
                continue
            if kind is Kind.CNOT:
                c, t = qs
                x[t] ^= x[c]
                z[c] ^= z[t]
            elif kind is Kind.H:
                q = qs[0]
                tmp = x[q].copy()
                x[q] = z[q]
                z[q] = tmp
            elif kind in (Kind.PREP_Z, Kind.PREP_X, Kind.RESET):
                x[qs[0]] = False
                z[qs[0]] = False
            if fault is not None:
                inject(x, z, qs, fault)


def _fire_positions(rng: np.random.Generator, p: float, m: int) -> np.ndarray:
    """Sorted indices in ``range(m)`` selected independently with probability p."""
    mean = p * m
    size = int(mean + 6 * math.sqrt(mean) + 8)
    pos = np.cumsum(rng.geometric(p, size)) - 1
    while pos[-1] < m:
        pos = np.concatenate([pos, pos[-1] + np.cumsum(rng.geometric(p, size))])
    return pos[pos < m]


def _sample_chunk(prog: _Program, m: int, seed: int, chunk_index: int) -> np.ndarray:
    ss = np.random.SeedSequence([seed, chunk_index])
    rng = np.random.Generator(np.random.Philox(ss))
    nq = prog.circuit.n_qubits
    x = np.zeros((nq, m), dtype=bool)
    z = np.zeros((nq, m), dtype=bool)
    raw = np.zeros((prog.circuit.n_bits, m), dtype=bool)

    def inject(x, z, qs, fault):
        p, px, pz = fault
        pos = _fire_positions(rng, p, m)
        if pos.size == 0:
            return
        f = rng.integers(px.shape[0], size=pos.size)
        for j, q in enumerate(qs):
            x[q, pos] ^= px[f, j]
            z[q, pos] ^= pz[f, j]

    prog.run(x, z, raw, inject)
    return raw.T


def sample(
    circuit: Circuit,
    locations: list[FaultLocation],
    n_shots: int,
    seed: int,
    threads: int = 1,
) -> ShotBatch:
    """Sample ``n_shots`` noisy executions; deterministic in ``seed``.

    Each fault location fires with its total rate, independently per shot,
    and then applies one of its faults chosen uniformly.
    """
    if n_shots < 0:
        raise ValueError("n_shots must be nonnegative")
    prog = _Program(circuit, locations)
    emap = event_map(circuit)
    sizes = [min(CHUNK, n_shots - s) for s in range(0, n_shots, CHUNK)]
    jobs = [(prog, m, seed, k) for k, m in enumerate(sizes)]
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda a: _sample_chunk(*a), jobs))
    else:
        parts = [_sample_chunk(*a) for a in jobs]
    raw = np.concatenate(parts) if parts else np.zeros((0, circuit.n_bits), dtype=bool)
    return ShotBatch.from_raw(raw, emap)


def iter_batches(circuit, locations, n_shots, seed, batch_shots: int = CHUNK * 8):
    """Yield consecutive slices of the ``sample`` stream without holding it all.

    The union of the yielded batches equals ``sample(...)`` for the same seed
    as long as ``batch_shots`` is a multiple of the chunk size.
    """
    if batch_shots % CHUNK:
        raise ValueError("batch_shots must be a multiple of the chunk size")
    prog = _Program(circuit, locations)
    emap = event_map(circuit)
    k = 0
    for start in range(0, n_shots, batch_shots):
        stop = min(n_shots, start + batch_shots)
        parts = []
        for s in range(start, stop, CHUNK):
            parts.append(_sample_chunk(prog, min(CHUNK, stop - s), seed, k))
            k += 1
        yield ShotBatch.from_raw(np.concatenate(parts), emap)


def propagate(circuit: Circuit, injections) -> np.ndarray:
    """Raw flips for independent single-shot fault patterns.

    ``injections`` is a list of dicts, one per shot, mapping an instruction
    index to a PauliString over the whole register; the Pauli acts after the
    instruction, or before it for a measurement. Returns (shots, n_bits).
    A single dict gives a single row.
    """
    single = isinstance(injections, dict)
    if single:
        injections = [injections]
    nq = circuit.n_qubits
    m = len(injections)
    at: dict[int, list] = {}
    for col, pattern in enumerate(injections):
        for idx, p in pattern.items():
            at.setdefault(idx, []).append((col, p))
    x = np.zeros((nq, m), dtype=bool)
    z = np.zeros((nq, m), dtype=bool)
    raw = np.zeros((circuit.n_bits, m), dtype=bool)

    def apply(idx):
        for col, p in at.get(idx, ()):
            for q in range(nq):
                x[q, col] ^= bool(p.x_bits >> q & 1)
                z[q, col] ^= bool(p.z_bits >> q & 1)

    bit = 0
    for idx, ins in enumerate(circuit.instructions):
        kind, qs = ins.kind, ins.qubits
        if kind is Kind.MEASURE_Z:
            apply(idx)
            raw[bit] = x[qs[0]]
            bit += 1
            continue
        if kind is Kind.CNOT:
            x[qs[1]] ^= x[qs[0]]
            z[qs[0]] ^= z[qs[1]]
        elif kind is Kind.H:
            x[qs[0]], z[qs[0]] = z[qs[0]].copy(), x[qs[0]].copy()
        elif kind in (Kind.PREP_Z, Kind.PREP_X, Kind.RESET):
            x[qs[0]] = z[qs[0]] = False
        apply(idx)
    return raw[:, 0] if single else raw.T.copy()


# Deflagging


@dataclass(frozen=True)
class DeflagRule:
    round: int
    left_bit: int
    right_bit: int
    left_fix: np.ndarray  # raw bits flipped by software X on d0
    right_fix: np.ndarray  # raw bits flipped by software X on d3


@functools.lru_cache(maxsize=32)
def deflag_rules(circuit: Circuit) -> tuple[DeflagRule, ...]:
    rules = []
    flags = {}
    for idx, ins in enumerate(circuit.instructions):
        if ins.kind is Kind.MEASURE_Z and ins.label.role is Role.FLAG:
            flags.setdefault(ins.label.round, {})[ins.label.tag] = idx
    n = circuit.n_qubits
    for rnd in sorted(flags):
        idx = max(flags[rnd].values())
        fixes = [
            propagate(circuit, {idx: PauliString.single(n, q, "X")}) for q in (D0, D3)
        ]
        rules.append(DeflagRule(
            rnd,
            circuit.bit(Role.FLAG, rnd, "02"),
            circuit.bit(Role.FLAG, rnd, "13"),
            fixes[0],
            fixes[1],
        ))
    return tuple(rules)


def deflag_raw(raw: np.ndarray, circuit: Circuit) -> np.ndarray:
    """Apply the flag-conditioned software X corrections to raw flips.

    Only w02 raised: X on d0. Only w13 raised: X on d3. Both or neither: no
    action. Corrections act on every later measurement they anticommute with.
    """
    out = np.array(raw, dtype=bool, copy=True)
    for rule in deflag_rules(circuit):
        left = out[:, rule.left_bit]
        right = out[:, rule.right_bit]
        only_l = left & ~right
        only_r = right & ~left
        out ^= only_l[:, None] & rule.left_fix[None, :]
        out ^= only_r[:, None] & rule.right_fix[None, :]
    return out


def apply_deflagging(shots: ShotBatch | ShotRecord, circuit: Circuit):
    """Deflag a batch or a single record; flag events are dropped."""
    emap = event_map(circuit, deflagged=True)
    if isinstance(shots, ShotRecord):
        if len(shots.raw_flips) != circuit.n_bits:
            raise ValueError("record does not belong to this circuit")
        raw = deflag_raw(np.array([shots.raw_flips], dtype=bool), circuit)
        return next(ShotBatch.from_raw(raw, emap).records())
    if shots.raw.shape[1] != circuit.n_bits:
        raise ValueError("shots do not belong to this circuit")
    return ShotBatch.from_raw(deflag_raw(shots.raw, circuit), emap)


# Shot stream files


def _hex(bits: np.ndarray) -> list[str]:
    n = bits.shape[1]
    width = max(1, (n + 3) // 4)
    packed = np.packbits(bits, axis=1, bitorder="little")
    return [format(int.from_bytes(row.tobytes(), "little"), f"0{width}x") for row in packed]


def _unhex(words: list[str], n: int) -> np.ndarray:
    out = np.zeros((len(words), n), dtype=bool)
    nbytes = (n + 7) // 8
    if not words:
        return out
    buf = b"".join(int(w, 16).to_bytes(nbytes, "little") for w in words)
    arr = np.frombuffer(buf, dtype=np.uint8).reshape(len(words), nbytes)
    return np.unpackbits(arr, axis=1, bitorder="little")[:, :n].astype(bool)


def write_shots(fh, batch: ShotBatch, circuit: Circuit, params: NoiseParams | None,
                seed: int | None, deflagged: bool = False) -> None:
    """Header then one ``raw events logical`` line of hex words per shot.

    Hex words are little-endian bit vectors: bit ``i`` is raw bit or event
    index ``i``.
    """
    fh.write("# flagmatch-shots v1\n")
    fh.write(f"# circuit={circuit.digest()}\n")
    fh.write(f"# semantics={'deflagged' if deflagged else 'flagged'}\n")
    if params is not None:
        fh.write("# params=" + ",".join(f"{k}={v!r}" for k, v in zip(params.names(),
                                                                   params.as_tuple())) + "\n")
    fh.write(f"# seed={seed}\n# n_shots={len(batch)}\n")
    fh.write(f"# n_bits={batch.raw.shape[1]} n_events={batch.events.shape[1]}\n")
    for e in batch.emap.ids:
        fh.write(f"# event {e}\n")
    for r, e, l in zip(_hex(batch.raw), _hex(batch.events), batch.logical.astype(int)):
        fh.write(f"{r} {e} {l}\n")


def read_shots(fh, circuit: Circuit) -> tuple[ShotBatch, dict]:
    """Parse a shot stream; events are recomputed and checked against the file."""
    header = {}
    raws, evs, logs = [], [], []
    for line in fh:
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("event "):
                continue
            for tok in body.split():
                k, sep, v = tok.partition("=")
                if sep:
                    header[k] = v
            continue
        if not line.strip():
            continue
        r, e, l = line.split()
        raws.append(r)
        evs.append(e)
        logs.append(l)
    if header.get("circuit") not in (None, circuit.digest()):
        raise ValueError("shot stream was produced by a different circuit")
    emap = event_map(circuit, header.get("semantics") == "deflagged")
    n_bits = int(header.get("n_bits", circuit.n_bits))
    raw = _unhex(raws, n_bits)
    batch = ShotBatch.from_raw(raw, emap)
    stored = _unhex(evs, len(emap))
    if stored.shape != batch.events.shape or not np.array_equal(stored, batch.events):
        raise ValueError("stored events disagree with raw flips")
    if logs and not np.array_equal(np.array(logs, dtype=int).astype(bool), batch.logical):
        raise ValueError("stored logical bits disagree with raw flips")
    return batch, header
