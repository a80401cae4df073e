import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flagmatch.circuit import D0, D2, W02, W4, Kind, Role, build_circuit
from flagmatch.noise import FIT, ZERO, Channel, FaultLocation, enumerate_faults
from flagmatch.pauli import PauliString
from flagmatch.sim import (
    EventKind, ShotBatch, ShotRecord, apply_deflagging, event_map, iter_batches, propagate,
    read_shots, sample, write_shots,
)

from conftest import frame_after

N = 7


def test_zero_noise_all_zero():
    for state in ("-L", "0L", "+L", "1L"):
        c = build_circuit("ZXZ", state, 3)
        b = sample(c, enumerate_faults(c, ZERO), 1000, 1)
        assert not b.raw.any() and not b.events.any() and not b.logical.any()
        assert all(not any(r.events) for r in b.records())


def test_event_counts():
    for r in range(4):
        assert len(event_map(build_circuit("ZXZ", "-L", r))) == 5 * r + 1
    assert [len(event_map(build_circuit("ZXZ", "0L", r))) for r in (0, 1)] == [4, 9]
    assert len(event_map(build_circuit("ZXZ", "-L", 10), deflagged=True)) == 3 * 10 + 1


@pytest.mark.parametrize("k", [1, 2, 3])
def test_single_measurement_fault(k):
    c = build_circuit("ZXZ", "-L", 3)
    idx = next(i for i, ins in enumerate(c.instructions)
               if ins.label and ins.label.role is Role.ZCHECK and ins.label.round == k
               and ins.label.tag == "13")
    locs = [l for l in enumerate_faults(c, FIT) if l.instruction_index == idx]
    locs = [FaultLocation(idx, Channel.MEAS_FLIP, 0.3, ((locs[0].faults[0][0], 0.3),))]
    b = sample(c, locs, 2000, 4)
    fired = b.events[b.events.any(axis=1)]
    assert len(fired) > 400
    assert (fired == fired[0]).all()
    ids = [b.emap.ids[i] for i in np.flatnonzero(fired[0])]
    assert all(e.kind is EventKind.STAB_DIFF and e.stabilizer == "sz13" for e in ids)
    assert [e.round for e in ids] == ([k, k + 1] if k < 3 else [3])


def test_rejection_per_round():
    frac = []
    for r in range(0, 11, 2):
        c = build_circuit("ZXZ", "-L", r)
        b = sample(c, enumerate_faults(c, FIT), 20000, 100 + r)
        frac.append(1 - b.events.any(axis=1).mean())
    slope = np.polyfit(range(0, 11, 2), np.log(frac), 1)[0]
    rejection = 1 - np.exp(slope)
    assert 0.205 <= rejection <= 0.305


def test_reproducible_and_thread_invariant():
    c = build_circuit("ZXZ", "-L", 2)
    locs = enumerate_faults(c, FIT)
    a = sample(c, locs, 70000, 9)
    b = sample(c, locs, 70000, 9, threads=3)
    assert np.array_equal(a.raw, b.raw)
    assert not np.array_equal(a.raw, sample(c, locs, 70000, 10).raw)
    parts = ShotBatch.concat(iter_batches(c, locs, 70000, 9, batch_shots=1 << 15))
    assert np.array_equal(parts.raw, a.raw)


def test_prefix_stability():
    c = build_circuit("ZXZ", "-L", 1)
    locs = enumerate_faults(c, FIT)
    assert np.array_equal(sample(c, locs, 1 << 15, 3).raw, sample(c, locs, 1 << 16, 3).raw[:1 << 15])


def _random_pauli(draw_x, draw_z):
    return PauliString(N, draw_x, draw_z)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_linearity(data):
    c = build_circuit("ZXZ", "0L", 2)
    n = len(c.instructions)
    def inj():
        i = data.draw(st.integers(0, n - 1))
        p = PauliString(N, data.draw(st.integers(0, 127)), data.draw(st.integers(0, 127)))
        return i, p
    (i1, p1), (i2, p2) = inj(), inj()
    both = {i1: p1} if i1 != i2 else {i1: p1 * p2}
    if i1 != i2:
        both[i2] = p2
    rows = propagate(c, [{i1: p1}, {i2: p2}, both])
    assert np.array_equal(rows[0] ^ rows[1], rows[2])
    em = event_map(c)
    ev = em.events_of(rows)
    assert np.array_equal(ev[0] ^ ev[1], ev[2])


def _hook(c, rnd=1):
    for i, ins in enumerate(c.instructions):
        if ins.kind is Kind.CNOT and ins.qubits == (W4, W02):
            lab = next(x.label for x in c.instructions[i:] if x.label)
            if lab.round == rnd:
                return i
    raise AssertionError


def test_deflag_hook_error():
    c = build_circuit("ZXZ", "-L", 2)
    i = _hook(c)
    p = PauliString.single(N, W02, "X")
    stop = next(j for j in range(i, len(c.instructions)) if c.instructions[j].label)
    data = frame_after(c, p, i + 1, stop).restricted(range(4))
    assert data.support == (D0, D2) and data.z_bits == 0
    raw = propagate(c, {i: p})
    l, r = c.bit(Role.FLAG, 1, "02"), c.bit(Role.FLAG, 1, "13")
    assert raw[l] and not raw[r]
    rec = ShotRecord(tuple(raw.astype(int)), (), 0)
    out = apply_deflagging(rec, c)
    # software X on d0 leaves X on d2 alone: the same footprint as a single X on d2
    flag_m = max(c.bit(Role.FLAG, 1, s) for s in ("02", "13"))
    meas = [j for j, ins in enumerate(c.instructions) if ins.kind is Kind.MEASURE_Z][flag_m]
    ref = propagate(c, {meas: PauliString.single(N, D2, "X")})
    plain = event_map(c, deflagged=True)
    assert out.events == tuple(plain.events_of(ref[None, :])[0].astype(int))
    assert out.logical_flip_truth == plain.logical_of(ref[None, :])[0]
    assert sum(out.events) <= 2


def test_deflag_no_flags_and_both_flags():
    c = build_circuit("ZXZ", "-L", 3)
    flagged, plain = event_map(c), event_map(c, deflagged=True)
    keep = [i for i, e in enumerate(flagged.ids) if e.kind is not EventKind.FLAG]
    assert len(keep) == len(plain)
    rng = np.random.default_rng(0)
    flag_bits = c.bits_with(Role.FLAG)
    for _ in range(50):
        raw = rng.random(c.n_bits) < 0.3
        raw[flag_bits] = rng.random() < 0.5  # all flags equal: none or both each round
        rec = next(ShotBatch.from_raw(raw[None, :], flagged).records())
        out = apply_deflagging(rec, c)
        assert out.raw_flips == rec.raw_flips
        assert out.events == tuple(rec.events[i] for i in keep)
        assert out.logical_flip_truth == rec.logical_flip_truth
    with pytest.raises(ValueError):
        apply_deflagging(ShotRecord((0,) * 3, (), 0), c)


@pytest.mark.parametrize("deflagged", [False, True])
def test_stream_round_trip(deflagged):
    c = build_circuit("ZXZ", "+L", 2)
    b = sample(c, enumerate_faults(c, FIT), 3000, 2)
    if deflagged:
        b = apply_deflagging(b, c)
    fh = io.StringIO()
    write_shots(fh, b, c, FIT, 2, deflagged)
    fh.seek(0)
    back, header = read_shots(fh, c)
    assert np.array_equal(back.raw, b.raw)
    assert np.array_equal(back.events, b.events)
    assert np.array_equal(back.logical, b.logical)
    assert header["seed"] == "2" and header["n_shots"] == "3000"
    assert header["semantics"] == ("deflagged" if deflagged else "flagged")
    with pytest.raises(ValueError):
        read_shots(io.StringIO(fh.getvalue()), build_circuit("ZXZ", "+L", 3))


def test_stream_rejects_tampering():
    c = build_circuit("ZXZ", "-L", 1)
    b = sample(c, enumerate_faults(c, FIT), 200, 2)
    fh = io.StringIO()
    write_shots(fh, b, c, FIT, 2)
    lines = fh.getvalue().splitlines()
    k = next(i for i, l in enumerate(lines) if not l.startswith("#"))
    raw, ev, lg = lines[k].split()
    lines[k] = f"{raw} {ev} {1 - int(lg)}"
    with pytest.raises(ValueError):
        read_shots(io.StringIO("\n".join(lines)), c)


def test_logical_truth_matches_frame():
    c = build_circuit("ZXZ", "-L", 1)
    n = len(c.instructions)
    # Z on d0 right before readout flips the X-basis logical d0^d2
    last = next(i for i in range(n - 1, 0, -1)
                if c.instructions[i].kind is Kind.H and c.instructions[i].qubits == (D0,))
    raw = propagate(c, {last - 1: PauliString.single(N, D0, "Z")})
    assert event_map(c).logical_of(raw[None, :])[0]
