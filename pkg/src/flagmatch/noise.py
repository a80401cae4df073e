"""Six-parameter Pauli noise model and fault-location enumeration."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, fields
from typing import NamedTuple

from .circuit import Circuit, Kind
from .pauli import PauliString


class Channel(str, enum.Enum):
    DEPOLARIZE1 = "Depolarize1"
    DEPOLARIZE2 = "Depolarize2"
    INIT_FLIP = "BitFlipInit"
    MEAS_FLIP = "MeasFlip"
    RESET_FLIP = "ResetFlip"
    IDLE = "IdleDepolarize"


#: Which parameter drives each channel.
CHANNEL_PARAM = {
    Channel.DEPOLARIZE1: "p1",
    Channel.IDLE: "pw",
    Channel.INIT_FLIP: "pi",
    Channel.MEAS_FLIP: "pm",
    Channel.RESET_FLIP: "pr",
    Channel.DEPOLARIZE2: "p2",
}

_KIND_CHANNEL = {
    Kind.PREP_Z: Channel.INIT_FLIP,
    Kind.PREP_X: Channel.INIT_FLIP,
    Kind.H: Channel.DEPOLARIZE1,
    Kind.CNOT: Channel.DEPOLARIZE2,
    Kind.IDLE: Channel.IDLE,
    Kind.MEASURE_Z: Channel.MEAS_FLIP,
    Kind.RESET: Channel.RESET_FLIP,
}


@dataclass(frozen=True)
class NoiseParams:
    p1: float = 7.30e-4
    pw: float = 1.80e-3
    pi: float = 3.00e-3
    pm: float = 4.30e-3
    pr: float = 1.10e-2
    p2: float = 8.60e-3

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not 0.0 <= v < 0.5:
                raise ValueError(f"{f.name}={v} outside [0, 1/2)")

    @classmethod
    def names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, k) for k in self.names())

    def to_text(self) -> str:
        return "".join(f"{k}={getattr(self, k)!r}\n" for k in self.names())

    @classmethod
    def from_text(cls, text: str) -> NoiseParams:
        """Parse ``key=value`` tokens separated by whitespace or newlines."""
        values = {}
        for tok in text.replace(",", " ").split():
            if tok.startswith("#"):
                break
            key, sep, val = tok.partition("=")
            if not sep:
                raise ValueError(f"expected key=value, got {tok!r}")
            if key not in cls.names():
                raise ValueError(f"unknown noise parameter {key!r}")
            values[key] = float(val)
        return cls(**values)

    def scaled(self, factor: float) -> NoiseParams:
        return NoiseParams(*(factor * v for v in self.as_tuple()))


#: Least-squares fit of the six-parameter model to hardware hyperedge data.
FIT = NoiseParams()
#: Simultaneous randomized-benchmarking values of the same device.
RB_SIMULTANEOUS = NoiseParams(p1=2.20e-4, pw=6.00e-3, pi=7.00e-3, pm=7.70e-3, pr=1.00e-2,
                              p2=9.00e-3)
ZERO = NoiseParams(0, 0, 0, 0, 0, 0)
PRESETS = {"fit": FIT, "rb": RB_SIMULTANEOUS, "zero": ZERO}


def epc_to_epg(epc: float, n_qubits: int) -> float:
    """Convert error per Clifford to error per gate; EPC/EPG = (2^n-1)/2^n."""
    d = 2 ** n_qubits
    return epc * d / (d - 1)


class Fault(NamedTuple):
    """Either a Pauli on the instruction's qubits or a classical bit flip.

    ``pauli`` is expressed on the instruction's own qubits (operand order).
    Gate, idle, prep and reset faults act after the instruction; measurement
    faults are an X just before it.
    """

    pauli: PauliString

    def on(self, n: int, qubits) -> PauliString:
        return self.pauli.embed(n, qubits)


@dataclass(frozen=True)
class FaultLocation:
    instruction_index: int
    channel: Channel
    rate: float
    faults: tuple[tuple[Fault, float], ...]

    @property
    def param(self) -> str:
        return CHANNEL_PARAM[self.channel]

    @property
    def share(self) -> float:
        """Fraction of the rate carried by each fault (uniform split)."""
        return 1.0 / len(self.faults)

    @property
    def total(self) -> float:
        return sum(p for _, p in self.faults)


def _paulis(k: int) -> list[PauliString]:
    out = []
    for letters in itertools.product("IXYZ", repeat=k):
        if set(letters) != {"I"}:
            out.append(PauliString.from_str("".join(letters)))
    return out


_ONE = _paulis(1)
_TWO = _paulis(2)
_X = PauliString.from_str("X")
_Z = PauliString.from_str("Z")


def location_faults(kind: Kind) -> list[PauliString]:
    if kind is Kind.CNOT:
        return _TWO
    if kind in (Kind.H, Kind.IDLE):
        return _ONE
    if kind is Kind.PREP_X:
        return [_Z]
    return [_X]


def enumerate_faults(circuit: Circuit, params: NoiseParams = FIT,
                     overrides: dict | None = None) -> list[FaultLocation]:
    """One fault location per non-barrier instruction.

    ``overrides`` maps ``(qubit, channel)`` to a rate replacing the global
    parameter; for two-qubit gates the key is the control qubit.
    """
    overrides = {(q, Channel(c)): v for (q, c), v in (overrides or {}).items()}
    out = []
    for idx, ins in enumerate(circuit.instructions):
        if ins.kind is Kind.BARRIER:
            continue
        channel = _KIND_CHANNEL[ins.kind]
        rate = overrides.get((ins.qubits[0], channel), getattr(params, CHANNEL_PARAM[channel]))
        paulis = location_faults(ins.kind)
        each = rate / len(paulis)
        out.append(FaultLocation(idx, channel, rate, tuple((Fault(p), each) for p in paulis)))
    return out
