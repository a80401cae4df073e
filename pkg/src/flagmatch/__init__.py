"""Flag-qubit syndrome extraction on the [[4,1,2]] code with matching decoders.

Modules: ``pauli`` (Pauli algebra and code definitions), ``circuit``
(schedules), ``noise`` (circuit-level channels), ``sim`` (Pauli-frame
sampling), ``tracer`` (fault hypergraph and decoding graphs), ``correlate``
(hyperedge probabilities from data), ``decoder`` (matching and
post-selection) and ``analysis`` (fits and reports).
"""

__version__ = "0.1.0"

from .circuit import Circuit, State, build_circuit, parse_circuit
from .correlate import calibrate
from .decoder import Scheme, decode_batch, decode_shot, logical_error_rate, mwpm
from .noise import FIT, RB_SIMULTANEOUS, NoiseParams, enumerate_faults
from .pauli import PauliString, Variant, code_412
from .sim import event_map, sample
from .tracer import Semantics, Strategy, build_decoding_graph, trace_hypergraph

__all__ = [
    "Circuit", "State", "build_circuit", "parse_circuit", "calibrate", "Scheme",
    "decode_batch", "decode_shot", "logical_error_rate", "mwpm", "FIT", "RB_SIMULTANEOUS",
    "NoiseParams", "enumerate_faults", "PauliString", "Variant", "code_412", "event_map",
    "sample", "Semantics", "Strategy", "build_decoding_graph", "trace_hypergraph",
]
