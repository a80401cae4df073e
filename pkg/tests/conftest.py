import pytest

from flagmatch.circuit import Kind, build_circuit
from flagmatch.noise import FIT, enumerate_faults
from flagmatch.pauli import PauliString
from flagmatch.tracer import trace_hypergraph


def frame_after(circuit, pauli: PauliString, start: int, stop: int | None = None) -> PauliString:
    """Conjugate ``pauli`` through instructions ``start..stop-1`` gate by gate."""
    stop = len(circuit.instructions) if stop is None else stop
    p = pauli
    for ins in circuit.instructions[start:stop]:
        if ins.kind is Kind.H:
            p = p.h(ins.qubits[0])
        elif ins.kind is Kind.CNOT:
            p = p.cnot(*ins.qubits)
        elif ins.kind in (Kind.PREP_Z, Kind.PREP_X, Kind.RESET):
            q = ins.qubits[0]
            p = PauliString(p.n, p.x_bits & ~(1 << q), p.z_bits & ~(1 << q), p.sign)
    return p


@pytest.fixture(scope="session")
def traced():
    cache = {}

    def get(state="-L", rounds=1, semantics="flagged", params=FIT):
        key = (state, rounds, semantics, params)
        if key not in cache:
            c = build_circuit("ZXZ", state, rounds)
            locs = enumerate_faults(c, params)
            cache[key] = (c, locs, trace_hypergraph(c, locs, semantics))
        return cache[key]

    return get


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
