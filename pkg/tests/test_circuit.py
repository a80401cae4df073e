import pytest

from flagmatch.circuit import (
    D0, D1, D2, D3, SZ02, W02, W4,
    Kind, Role, State, build_circuit, parse_circuit, xcheck_schedule, zcheck_schedule,
)
from flagmatch.pauli import PauliString, code_412, commutes
from flagmatch.sim import EventKind, event_map
from flagmatch.tracer import Tracer

from conftest import frame_after

N = 7


def test_bit_counts_minus():
    c0 = build_circuit("ZXZ", "-L", 0)
    assert c0.n_bits == 6
    assert not c0.bits_with(Role.XCHECK) and not c0.bits_with(Role.FLAG)
    assert len(c0.bits_with(Role.PREP_CHECK)) == 2
    c1 = build_circuit("ZXZ", "-L", 1)
    assert c1.n_bits == 11
    assert len(c1.bits_with(Role.XCHECK)) == 1
    assert len(c1.bits_with(Role.FLAG)) == 2
    assert len(c1.bits_with(Role.ZCHECK)) == 2


def test_zero_state_order():
    c = build_circuit("ZXZ", "0L", 1)
    roles = [lab.role for lab in c.bit_labels]
    # prep: syndrome plus two flags, then Z-checks before the X-check
    assert roles[:3].count(Role.PREP_CHECK) == 1 and roles[:3].count(Role.FLAG) == 2
    assert roles[3:5] == [Role.ZCHECK, Role.ZCHECK]
    assert sorted(roles[5:8]) == sorted([Role.FLAG, Role.XCHECK, Role.FLAG])
    assert roles[-4:] == [Role.FINAL_DATA] * 4
    # Z-basis readout: no Hadamards after the last round
    last_measure = max(i for i, ins in enumerate(c.instructions) if ins.label
                       and ins.label.role is not Role.FINAL_DATA)
    tail = c.instructions[last_measure:]
    assert not any(ins.kind is Kind.H for ins in tail)
    plus = build_circuit("ZXZ", "+L", 1)
    assert any(ins.kind is Kind.H for ins in plus.instructions[-12:])


def test_determinism_and_round_trip():
    for state in State:
        for variant in ("ZXZ", "XZX"):
            a = build_circuit(variant, state, 2)
            b = build_circuit(code_412(variant), state.value, 2)
            assert a.to_text() == b.to_text()
            assert parse_circuit(a.to_text()) == a


def test_circuit_invariants():
    c = build_circuit("ZXZ", "-L", 3, equalize_round_duration=True)
    slots = [i.slot for i in c.instructions]
    assert slots == sorted(slots)
    used = set()
    for ins in c.instructions:
        for q in ins.qubits:
            assert (ins.slot, q) not in used
            used.add((ins.slot, q))
    assert c.n_bits == sum(ins.kind is Kind.MEASURE_Z for ins in c.instructions)
    labels = [(l.role, l.round, l.tag) for l in c.bit_labels]
    assert len(labels) == len(set(labels))


def test_idles_fill_slots():
    c = build_circuit("ZXZ", "-L", 1)
    by_slot = {}
    for ins in c.instructions:
        for q in ins.qubits:
            by_slot.setdefault(ins.slot, set()).add(q)
    assert all(qs == set(range(N)) for qs in by_slot.values())


def test_equalize_pads_zchecks():
    a = build_circuit("ZXZ", "-L", 2)
    b = build_circuit("ZXZ", "-L", 2, equalize_round_duration=True)
    assert b.instructions[-1].slot - a.instructions[-1].slot == 2 * 6 + 6
    assert sum(i.kind is Kind.IDLE for i in b.instructions) > sum(
        i.kind is Kind.IDLE for i in a.instructions)


def test_instruction_validation():
    from flagmatch.circuit import Instruction
    with pytest.raises(ValueError):
        Instruction(Kind.CNOT, (0,), 0)
    with pytest.raises(ValueError):
        Instruction(Kind.H, (0, 1), 0)


def _xcheck_start(c, rnd=1):
    idx = c.instructions.index(next(i for i in c.instructions
                                    if i.label and i.label.role is Role.XCHECK
                                    and i.label.round == rnd))
    # walk back to the Hadamard opening the block
    while not (c.instructions[idx].kind is Kind.H and c.instructions[idx].qubits == (W4,)):
        idx -= 1
    idx -= 1
    while not (c.instructions[idx].kind is Kind.H and c.instructions[idx].qubits == (W4,)):
        idx -= 1
    return idx


def test_hook_error_is_flagged():
    c = build_circuit("ZXZ", "-L", 1)
    start = _xcheck_start(c)
    # X on w4 after the first fan-out CNOT
    cx1 = next(i for i in range(start, len(c.instructions))
               if c.instructions[i].kind is Kind.CNOT and c.instructions[i].qubits == (W4, W02))
    p = PauliString.single(N, W4, "X")
    tr = Tracer(c)
    mask = tr.raw_mask(cx1, p)
    flags = [c.bit(Role.FLAG, 1, s) for s in ("02", "13")]
    raised = [mask >> b & 1 for b in flags]
    assert sum(raised) == 1
    end = next(i for i in range(cx1, len(c.instructions))
               if c.instructions[i].label and c.instructions[i].label.role is Role.FLAG)
    data = frame_after(c, p, cx1 + 1, end).restricted(range(4))
    assert data.weight == 2 and data.z_bits == 0


def test_fault_free_xcheck_reads_eigenvalue():
    code = code_412()
    sched = xcheck_schedule(code)
    kinds = [i.kind for i in sched]
    assert kinds.count(Kind.MEASURE_Z) == 3 and kinds.count(Kind.CNOT) == 8
    # fault-free frames are identity, so nothing flips
    c = build_circuit("ZXZ", "+L", 1)
    assert frame_after(c, PauliString.identity(N), 0).is_identity()


def test_zx_fault_fires_two_events():
    # Z on d0 and X on w02 (letters in qubit order) after the CNOT w02 -> d0
    c = build_circuit("ZXZ", "-L", 2)
    idx = next(i for i, ins in enumerate(c.instructions)
               if ins.kind is Kind.CNOT and ins.qubits == (W02, D0))
    p = PauliString.single(N, D0, "Z") * PauliString.single(N, W02, "X")
    em = event_map(c)
    ev = em.events_of_mask(Tracer(c).raw_mask(idx, p))
    assert bin(ev).count("1") == 2


def test_zcheck_schedule_and_parity():
    s = zcheck_schedule(side="02")
    assert [i.kind for i in s] == [Kind.CNOT, Kind.CNOT, Kind.MEASURE_Z, Kind.RESET]
    assert {s[0].qubits[0], s[1].qubits[0]} == {D0, D2}
    s13 = zcheck_schedule(side="13")
    assert {s13[0].qubits[0], s13[1].qubits[0]} == {D1, D3}
    code = code_412()
    # X_L|0000> = |1010>: Z0Z2 sees two flips
    assert commutes(code.stabilizers[0], code.logical_x) == 0
    assert commutes(code.stabilizers[2], code.logical_x) == 0


@pytest.mark.parametrize("state", ["-L", "0L"])
def test_zcheck_measurement_flip(state):
    r = 3
    c = build_circuit("ZXZ", state, r)
    em = event_map(c)
    for k in range(1, r + 1):
        b = c.bit(Role.ZCHECK, k, "02")
        ev = em.events_of_mask(1 << b)
        fired = [em.ids[i] for i in range(len(em)) if ev >> i & 1]
        assert all(e.stabilizer == SZ02 for e in fired)
        if state == "-L" and k == r:
            assert len(fired) == 1
        else:
            assert len(fired) == 2
            assert fired[1].round == fired[0].round + 1 or fired[1].kind is EventKind.FINAL_DIFF
