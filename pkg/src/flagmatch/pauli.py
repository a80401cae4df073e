"""Pauli operators in symplectic form and the [[4,1,2]] code definition."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field


class DimensionError(ValueError):
    """Raised when two Pauli operators act on different qubit counts."""


_LETTERS = {(0, 0): "I", (1, 0): "X", (0, 1): "Z", (1, 1): "Y"}
_BITS = {v: k for k, v in _LETTERS.items()}


def _popcount(v: int) -> int:
    return bin(v).count("1")


@dataclass(frozen=True)
class PauliString:
    """Hermitian Pauli operator ``sign * P_0 (x) P_1 (x) ... (x) P_{n-1}``.

    Qubit ``q`` corresponds to bit ``q`` of ``x_bits`` and ``z_bits``; a qubit
    with both bits set carries ``Y``. Only real signs are kept.
    """

    n: int
    x_bits: int = 0
    z_bits: int = 0
    sign: int = 1

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("qubit count must be nonnegative")
        limit = 1 << self.n
        if not (0 <= self.x_bits < limit and 0 <= self.z_bits < limit):
            raise ValueError("bitmask wider than qubit count")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    @classmethod
    def identity(cls, n: int) -> PauliString:
        return cls(n)

    @classmethod
    def from_str(cls, text: str) -> PauliString:
        """Parse strings such as ``"XIXI"``, ``"+ZZII"`` or ``"-YXYX"``."""
        s = text.strip()
        sign = 1
        if s and s[0] in "+-":
            sign = -1 if s[0] == "-" else 1
            s = s[1:]
        x = z = 0
        for q, ch in enumerate(s):
            try:
                bx, bz = _BITS[ch]
            except KeyError:
                raise ValueError(f"invalid Pauli letter {ch!r} in {text!r}") from None
            x |= bx << q
            z |= bz << q
        return cls(len(s), x, z, sign)

    @classmethod
    def single(cls, n: int, qubit: int, letter: str) -> PauliString:
        bx, bz = _BITS[letter]
        return cls(n, bx << qubit, bz << qubit)

    def __str__(self) -> str:
        body = "".join(
            _LETTERS[(self.x_bits >> q & 1, self.z_bits >> q & 1)] for q in range(self.n)
        )
        return ("-" if self.sign < 0 else "") + body

    def __repr__(self) -> str:
        return f"PauliString({str(self)!r})"

    def __mul__(self, other: PauliString) -> PauliString:
        return multiply(self, other)

    def __getitem__(self, qubit: int) -> str:
        return _LETTERS[(self.x_bits >> qubit & 1, self.z_bits >> qubit & 1)]

    @property
    def weight(self) -> int:
        return _popcount(self.x_bits | self.z_bits)

    @property
    def support(self) -> tuple[int, ...]:
        m = self.x_bits | self.z_bits
        return tuple(q for q in range(self.n) if m >> q & 1)

    def is_identity(self) -> bool:
        return self.x_bits == 0 and self.z_bits == 0

    def unsigned(self) -> PauliString:
        return PauliString(self.n, self.x_bits, self.z_bits)

    def h(self, q: int) -> PauliString:
        """Conjugate by a Hadamard on qubit ``q``."""
        bx, bz = self.x_bits >> q & 1, self.z_bits >> q & 1
        sign = -self.sign if bx & bz else self.sign
        x = self.x_bits & ~(1 << q) | bz << q
        z = self.z_bits & ~(1 << q) | bx << q
        return PauliString(self.n, x, z, sign)

    def cnot(self, c: int, t: int) -> PauliString:
        """Conjugate by a CNOT with control ``c`` and target ``t``."""
        xc, zc = self.x_bits >> c & 1, self.z_bits >> c & 1
        xt, zt = self.x_bits >> t & 1, self.z_bits >> t & 1
        sign = self.sign
        if xc & zt & (xt ^ zc ^ 1):
            sign = -sign
        x = self.x_bits ^ (xc << t)
        z = self.z_bits ^ (zt << c)
        return PauliString(self.n, x, z, sign)

    def restricted(self, qubits) -> PauliString:
        """Drop support outside ``qubits`` (keeps the qubit count)."""
        mask = 0
        for q in qubits:
            mask |= 1 << q
        return PauliString(self.n, self.x_bits & mask, self.z_bits & mask, self.sign)

    def embed(self, n: int, qubits) -> PauliString:
        """Place this operator on ``qubits`` of a larger ``n``-qubit register."""
        qubits = list(qubits)
        if len(qubits) != self.n:
            raise DimensionError("qubit map length differs from operator size")
        x = z = 0
        for i, q in enumerate(qubits):
            x |= (self.x_bits >> i & 1) << q
            z |= (self.z_bits >> i & 1) << q
        return PauliString(n, x, z, self.sign)


def _check(a: PauliString, b: PauliString) -> None:
    if a.n != b.n:
        raise DimensionError(f"qubit counts differ: {a.n} vs {b.n}")


def commutes(a: PauliString, b: PauliString) -> int:
    """Return 0 if ``a`` and ``b`` commute and 1 if they anticommute."""
    _check(a, b)
    return _popcount(a.x_bits & b.z_bits ^ a.z_bits & b.x_bits) & 1


def multiply(a: PauliString, b: PauliString) -> PauliString:
    """Group product ``a * b``.

    Products of commuting operators are Hermitian and come out exact. For an
    anticommuting pair the product carries a factor of +-i; that factor is
    dropped as ``i**(k-1)``, so ``a*b`` and ``b*a`` still differ by -1.
    """
    _check(a, b)
    # Each Hermitian Pauli is i^{|x&z|} X^x Z^z; moving Z^{z_a} past X^{x_b}
    # costs (-1)^{z_a . x_b}.
    x = a.x_bits ^ b.x_bits
    z = a.z_bits ^ b.z_bits
    k = (
        _popcount(a.x_bits & a.z_bits)
        + _popcount(b.x_bits & b.z_bits)
        + 2 * _popcount(a.z_bits & b.x_bits)
        - _popcount(x & z)
    ) % 4
    if k & 1:
        k -= 1
    sign = a.sign * b.sign * (-1 if k == 2 else 1)
    return PauliString(a.n, x, z, sign)


def gf2_rank(paulis) -> int:
    """Rank of the symplectic vectors of ``paulis`` over GF(2)."""
    rows = []
    for p in paulis:
        v = p.x_bits | p.z_bits << p.n
        for r in rows:
            v = min(v, v ^ r)
        if v:
            rows.append(v)
    return len(rows)


class Variant(str, enum.Enum):
    ZXZ = "ZXZ"
    XZX = "XZX"


#: Physical-qubit roles; data qubits first, then ancillas in layout order.
LAYOUT = {"d0": 0, "d1": 1, "d2": 2, "d3": 3, "w02": 4, "w4": 5, "w13": 6}

#: Device qubit numbers of the heavy-hexagon patch used for each role.
DEVICE_QUBITS = {"d0": 0, "w02": 1, "d2": 2, "w4": 4, "d1": 6, "w13": 7, "d3": 10}


@dataclass(frozen=True)
class CodeDefinition:
    variant: Variant
    stabilizers: tuple[PauliString, ...]
    logical_x: PauliString
    logical_z: PauliString
    layout: dict = field(default_factory=lambda: dict(LAYOUT))
    n_data: int = 4

    @property
    def n_qubits(self) -> int:
        return len(self.layout)

    def check(self) -> None:
        """Raise ``ValueError`` unless the code invariants hold."""
        ops = list(self.stabilizers) + [self.logical_x, self.logical_z]
        for s in self.stabilizers:
            for o in ops:
                if commutes(s, o):
                    raise ValueError(f"{s} anticommutes with {o}")
        if not commutes(self.logical_x, self.logical_z):
            raise ValueError("logical operators commute")
        if gf2_rank(self.stabilizers) != len(self.stabilizers):
            raise ValueError("stabilizers are dependent")


def code_412(variant: Variant | str = Variant.ZXZ) -> CodeDefinition:
    """The [[4,1,2]] code in the ZXZ layout or its Hadamard conjugate XZX."""
    variant = Variant(variant)
    names = {
        Variant.ZXZ: (("ZIZI", "XXXX", "IZIZ"), "XIXI", "ZZII"),
        Variant.XZX: (("XIXI", "ZZZZ", "IXIX"), "ZIZI", "XXII"),
    }
    stabs, lx, lz = names[variant]
    code = CodeDefinition(
        variant,
        tuple(PauliString.from_str(s) for s in stabs),
        PauliString.from_str(lx),
        PauliString.from_str(lz),
    )
    code.check()
    return code
