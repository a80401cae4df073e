"""Construction of the flagged [[4,1,2]] memory-experiment circuits.

Serialized form (one instruction per line, ``#`` starts a header/comment)::

    # flagmatch-circuit v1
    # n_qubits=7 variant=ZXZ state=-L rounds=1 deflagging=0 equalize=0
    <slot> <kind> <qubit>... [<role>/<tag>/<round>]

Qubits are register indices (d0..d3 = 0..3, w02 = 4, w4 = 5, w13 = 6). A
``MeasureZ`` carries its measurement label; its bit index is its position
among the ``MeasureZ`` lines. ``Barrier`` lines have no qubits.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field, replace

from .pauli import LAYOUT, CodeDefinition, Variant, code_412


class Kind(str, enum.Enum):
    PREP_Z = "PrepZ"
    PREP_X = "PrepX"
    H = "H"
    CNOT = "CNOT"
    IDLE = "Idle"
    MEASURE_Z = "MeasureZ"
    RESET = "ConditionalReset"
    BARRIER = "Barrier"


class Role(str, enum.Enum):
    PREP_CHECK = "prep"
    XCHECK = "xcheck"
    FLAG = "flag"
    ZCHECK = "zcheck"
    FINAL_DATA = "data"


class State(str, enum.Enum):
    ZERO = "0L"
    ONE = "1L"
    PLUS = "+L"
    MINUS = "-L"

    @property
    def x_basis(self) -> bool:
        return self in (State.PLUS, State.MINUS)


# Stabilizer names used by labels and events.
SX, SZ02, SZ13 = "sx", "sz02", "sz13"
SIDE_STAB = {"02": SZ02, "13": SZ13}

D0, D1, D2, D3 = LAYOUT["d0"], LAYOUT["d1"], LAYOUT["d2"], LAYOUT["d3"]
W02, W4, W13 = LAYOUT["w02"], LAYOUT["w4"], LAYOUT["w13"]
DATA = (D0, D1, D2, D3)
DATA_NAMES = ("d0", "d1", "d2", "d3")


@dataclass(frozen=True)
class MeasurementLabel:
    role: Role
    round: int
    tag: str

    def __str__(self) -> str:
        return f"{self.role.value}/{self.tag}/{self.round}"

    @classmethod
    def parse(cls, text: str) -> MeasurementLabel:
        role, tag, rnd = text.split("/")
        return cls(Role(role), int(rnd), tag)

    @property
    def stabilizer(self) -> str | None:
        """Name of the stabilizer whose eigenvalue this bit reports, if any."""
        if self.role is Role.XCHECK:
            return SX
        if self.role is Role.ZCHECK:
            return SIDE_STAB[self.tag]
        if self.role is Role.PREP_CHECK:
            return self.tag
        return None


@dataclass(frozen=True)
class Instruction:
    kind: Kind
    qubits: tuple[int, ...]
    slot: int
    label: MeasurementLabel | None = None

    def __post_init__(self):
        want = {Kind.CNOT: 2, Kind.BARRIER: 0}.get(self.kind, 1)
        if len(self.qubits) != want:
            raise ValueError(f"{self.kind.value} needs {want} qubits, got {self.qubits}")
        if (self.kind is Kind.MEASURE_Z) != (self.label is not None):
            raise ValueError("exactly the MeasureZ instructions carry labels")

    def shifted(self, offset: int) -> Instruction:
        return replace(self, slot=self.slot + offset)

    def to_line(self) -> str:
        parts = [str(self.slot), self.kind.value, *map(str, self.qubits)]
        if self.label is not None:
            parts.append(str(self.label))
        return " ".join(parts)


@dataclass(frozen=True)
class Circuit:
    instructions: tuple[Instruction, ...]
    n_qubits: int
    bit_labels: tuple[MeasurementLabel, ...]
    variant: Variant
    initial_state: State
    rounds: int
    deflagging: bool = False
    equalize_round_duration: bool = False
    _bit_of: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        labels = tuple(i.label for i in self.instructions if i.kind is Kind.MEASURE_Z)
        if labels != self.bit_labels:
            raise ValueError("bit labels disagree with MeasureZ instructions")
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate measurement labels")
        slots = [i.slot for i in self.instructions]
        if slots != sorted(slots):
            raise ValueError("time slots must be non-decreasing")
        seen = set()
        for ins in self.instructions:
            for q in ins.qubits:
                if not 0 <= q < self.n_qubits:
                    raise ValueError(f"qubit {q} out of range")
                if (ins.slot, q) in seen:
                    raise ValueError(f"qubit {q} used twice in slot {ins.slot}")
                seen.add((ins.slot, q))
        object.__setattr__(self, "_bit_of", {lab: b for b, lab in enumerate(labels)})

    @property
    def n_bits(self) -> int:
        return len(self.bit_labels)

    def bit(self, role: Role, round: int, tag: str) -> int:
        return self._bit_of[MeasurementLabel(role, round, tag)]

    def bits_with(self, role: Role) -> list[int]:
        return [b for b, lab in enumerate(self.bit_labels) if lab.role is role]

    def metadata(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "variant": self.variant.value,
            "state": self.initial_state.value,
            "rounds": self.rounds,
            "deflagging": int(self.deflagging),
            "equalize": int(self.equalize_round_duration),
        }

    def to_text(self) -> str:
        meta = " ".join(f"{k}={v}" for k, v in self.metadata().items())
        lines = ["# flagmatch-circuit v1", f"# {meta}"]
        lines += [ins.to_line() for ins in self.instructions]
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


def parse_circuit(text: str) -> Circuit:
    meta: dict[str, str] = {}
    instructions = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    meta[k] = v
            continue
        tok = line.split()
        kind = Kind(tok[1])
        label = None
        rest = tok[2:]
        if kind is Kind.MEASURE_Z:
            label = MeasurementLabel.parse(rest[-1])
            rest = rest[:-1]
        instructions.append(Instruction(kind, tuple(int(q) for q in rest), int(tok[0]), label))
    labels = tuple(i.label for i in instructions if i.label is not None)
    try:
        return Circuit(
            tuple(instructions),
            int(meta["n_qubits"]),
            labels,
            Variant(meta["variant"]),
            State(meta["state"]),
            int(meta["rounds"]),
            bool(int(meta.get("deflagging", 0))),
            bool(int(meta.get("equalize", 0))),
        )
    except KeyError as exc:
        raise ValueError(f"circuit header missing {exc}") from None


# Check schedules. Slots are relative to the start of the check and idles are
# left to the builder.


def _measure(q: int, slot: int, role: Role, tag: str, rnd: int) -> Instruction:
    return Instruction(Kind.MEASURE_Z, (q,), slot, MeasurementLabel(role, rnd, tag))


def xcheck_schedule(code: CodeDefinition | None = None, round: int = 1, prep: bool = False):
    """Flag-bracketed measurement of the weight-4 check.

    The syndrome qubit w4 is put in |+> and copied onto both flags; each flag
    then couples to its two data qubits and is uncomputed by a second CNOT from
    w4. A fault that spreads to two data qubits leaves a flag flipped.
    """
    role = Role.PREP_CHECK if prep else Role.XCHECK
    tag = SX if prep else "w4"
    cx = Kind.CNOT
    seq = [
        Instruction(Kind.H, (W4,), 0),
        Instruction(cx, (W4, W02), 1),
        Instruction(cx, (W4, W13), 2),
        Instruction(cx, (W02, D2), 3),
        Instruction(cx, (W13, D1), 3),
        Instruction(cx, (W02, D0), 4),
        Instruction(cx, (W13, D3), 4),
        Instruction(cx, (W4, W02), 5),
        Instruction(cx, (W4, W13), 6),
        Instruction(Kind.H, (W4,), 7),
        _measure(W4, 8, role, tag, round),
        _measure(W02, 8, Role.FLAG, "02", round),
        _measure(W13, 8, Role.FLAG, "13", round),
        Instruction(Kind.RESET, (W4,), 9),
        Instruction(Kind.RESET, (W02,), 9),
        Instruction(Kind.RESET, (W13,), 9),
    ]
    return seq


def zcheck_schedule(code: CodeDefinition | None = None, side: str = "02", round: int = 1,
                    prep: bool = False):
    """Weight-2 Z-parity check of one side using that side's flag as ancilla."""
    anc, (a, b) = {"02": (W02, (D0, D2)), "13": (W13, (D1, D3))}[side]
    if prep:
        role, tag = Role.PREP_CHECK, SIDE_STAB[side]
    else:
        role, tag = Role.ZCHECK, side
    return [
        Instruction(Kind.CNOT, (a, anc), 0),
        Instruction(Kind.CNOT, (b, anc), 1),
        _measure(anc, 2, role, tag, round),
        Instruction(Kind.RESET, (anc,), 3),
    ]


XCHECK_SLOTS = 10
ZCHECK_SLOTS = 4


class _Builder:
    def __init__(self, n_qubits: int):
        self.n = n_qubits
        self.out: list[Instruction] = []
        self.slot = 0

    def block(self, instrs, length: int | None = None) -> None:
        """Append a check block, filling unused (slot, qubit) cells with idles."""
        length = length or (max(i.slot for i in instrs) + 1)
        by_slot: dict[int, list[Instruction]] = {}
        for ins in instrs:
            by_slot.setdefault(ins.slot, []).append(ins)
        for s in range(length):
            here = sorted(by_slot.get(s, []), key=lambda i: i.qubits)
            busy = {q for i in here for q in i.qubits}
            row = [i.shifted(self.slot) for i in here]
            row += [Instruction(Kind.IDLE, (q,), self.slot + s) for q in range(self.n) if q not in busy]
            row.sort(key=lambda i: (i.kind is Kind.IDLE, i.qubits))
            self.out.extend(row)
        self.slot += length
        self.barrier()

    def raw(self, instrs) -> None:
        for ins in instrs:
            self.out.append(ins.shifted(self.slot))
        self.slot += max(i.slot for i in instrs) + 1

    def barrier(self) -> None:
        self.out.append(Instruction(Kind.BARRIER, (), max(self.slot - 1, 0)))


def _zcheck_block(rnd: int, prep: bool):
    return zcheck_schedule(side="02", round=rnd, prep=prep) + zcheck_schedule(
        side="13", round=rnd, prep=prep
    )


def build_circuit(
    code: CodeDefinition | Variant | str,
    initial_state: State | str,
    rounds: int,
    deflagging: bool = False,
    equalize_round_duration: bool = False,
) -> Circuit:
    """Memory experiment: prep, ``rounds`` check rounds, transversal readout.

    ``+L``/``-L`` start from |++++> (with Z_L applied for ``-L``), measure both
    weight-2 checks, run X-check then Z-check each round and read the data out
    in the X basis. ``0L``/``1L`` start from |0000> (X_L for ``1L``), measure
    the weight-4 check, run Z-check then X-check and read out in the Z basis.
    The logical Paulis distinguishing ``-L``/``1L`` are folded into the product
    state preparation and only change the noiseless reference.

    The XZX variant is the same schedule conjugated by Hadamards on the data:
    an H layer follows data preparation and precedes the final readout.
    """
    if not isinstance(code, CodeDefinition):
        code = code_412(code)
    state = State(initial_state)
    if rounds < 0:
        raise ValueError("rounds must be nonnegative")
    n = code.n_qubits
    b = _Builder(n)
    xcheck_first = state.x_basis
    xzx = code.variant is Variant.XZX
    # Data start in the eigenbasis of the readout; XZX swaps it.
    data_prep = Kind.PREP_X if xcheck_first != xzx else Kind.PREP_Z
    b.raw(
        [Instruction(data_prep, (q,), 0) for q in DATA]
        + [Instruction(Kind.PREP_Z, (q,), 0) for q in (W02, W4, W13)]
    )
    b.barrier()
    if xzx:
        b.block([Instruction(Kind.H, (q,), 0) for q in DATA])
    zlen = XCHECK_SLOTS if equalize_round_duration else ZCHECK_SLOTS
    if xcheck_first:
        b.block(_zcheck_block(0, prep=True), zlen)
    else:
        b.block(xcheck_schedule(code, 0, prep=True))
    for rnd in range(1, rounds + 1):
        if xcheck_first:
            b.block(xcheck_schedule(code, rnd))
            b.block(_zcheck_block(rnd, prep=False), zlen)
        else:
            b.block(_zcheck_block(rnd, prep=False), zlen)
            b.block(xcheck_schedule(code, rnd))
    if xzx:
        b.block([Instruction(Kind.H, (q,), 0) for q in DATA])
    final = []
    slot = 0
    if xcheck_first != xzx:
        final += [Instruction(Kind.H, (q,), 0) for q in DATA]
        slot = 1
    final += [
        _measure(q, slot, Role.FINAL_DATA, name, rounds + 1) for q, name in zip(DATA, DATA_NAMES)
    ]
    b.block(final)
    b.out.pop()  # no trailing barrier
    instrs = tuple(b.out)
    labels = tuple(i.label for i in instrs if i.kind is Kind.MEASURE_Z)
    return Circuit(
        instrs, n, labels, code.variant, state, rounds, deflagging, equalize_round_duration
    )
