"""Command-line driver: simulate, trace, calibrate, decode, report.

Every command reads a flat ``key=value`` run configuration (``--config``);
any field can be overridden with the flag of the same name. All randomness
comes from ``seed``.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from . import __version__
from .analysis import FitFailureError, Report, SweepRow, fit_decay, points_csv
from .circuit import Circuit, State, build_circuit, parse_circuit
from .correlate import calibrate
from .decoder import (
    Scheme,
    UndefinedRateError,
    decode_batch,
    format_decoded,
    logical_error_rate,
    parse_decoded,
)
from .noise import PRESETS, NoiseParams, enumerate_faults
from .pauli import Variant
from .sim import apply_deflagging, event_map, read_shots, sample, write_shots
from .tracer import (
    CalibrationIncompleteError,
    Semantics,
    Strategy,
    build_decoding_graph,
    format_graph,
    format_hypergraph,
    parse_graph,
    parse_hypergraph,
    trace_hypergraph,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_CALIBRATION = 4
EXIT_FIT = 5


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    state: str = "-L"
    rounds: int = 1
    shots: int = 10000
    seed: int = 0
    noise: str = "fit"
    strategy: str = "analytical"
    scheme: str = "none"
    deflagging: bool = False
    output_dir: str = "out"
    variant: str = "ZXZ"

    def __post_init__(self):
        try:
            State(self.state)
            Strategy(self.strategy)
            Scheme(self.scheme)
            Variant(self.variant)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.rounds < 0 or self.shots < 0:
            raise ConfigError("rounds and shots must be nonnegative")

    def to_text(self) -> str:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            out.append(f"{f.name}={int(v) if isinstance(v, bool) else v}")
        return "\n".join(out) + "\n"

    @classmethod
    def from_text(cls, text: str) -> RunConfig:
        return cls.from_dict(_parse_kv(text))

    @classmethod
    def from_dict(cls, values: dict) -> RunConfig:
        kinds = {f.name: f.type for f in fields(cls)}
        kw = {}
        for k, v in values.items():
            if k not in kinds:
                raise ConfigError(f"unknown config key {k!r}")
            kw[k] = _convert(kinds[k], v, k)
        return cls(**kw)

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def noise_params(self) -> NoiseParams:
        if self.noise in PRESETS:
            return PRESETS[self.noise]
        path = Path(self.noise)
        try:
            return NoiseParams.from_text(path.read_text())
        except OSError as exc:
            raise IOError(f"cannot read noise file {path}: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def circuit(self) -> Circuit:
        return build_circuit(self.variant, self.state, self.rounds, deflagging=self.deflagging)


def _parse_kv(text: str) -> dict:
    out = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        k, sep, v = line.partition("=")
        if not sep:
            raise ConfigError(f"expected key=value, got {raw!r}")
        out[k.strip()] = v.strip()
    return out


def _convert(kind, value, name):
    if not isinstance(value, str):
        return value
    try:
        if kind in (int, "int"):
            return int(value)
        if kind in (bool, "bool"):
            if value.lower() in ("1", "true", "yes"):
                return True
            if value.lower() in ("0", "false", "no"):
                return False
            raise ValueError(value)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {value!r}") from None
    return value


def load_config(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        try:
            values.update(_parse_kv(Path(args.config).read_text()))
        except OSError as exc:
            raise IOError(str(exc)) from exc
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return RunConfig.from_dict(values)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _outdir(cfg: RunConfig) -> Path:
    p = Path(cfg.output_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _manifest(cfg: RunConfig, circuit: Circuit, extra: dict | None = None) -> str:
    lines = [
        f"flagmatch_version={__version__}",
        f"config_sha256={cfg.digest()}",
        f"circuit_sha256={circuit.digest()}",
    ]
    lines += [f"config.{k}={v}" for k, v in _parse_kv(cfg.to_text()).items()]
    for k, v in (extra or {}).items():
        lines.append(f"{k}={v}")
    return "\n".join(lines) + "\n"


def cmd_simulate(cfg: RunConfig, threads: int = 1) -> Path:
    circuit = cfg.circuit()
    params = cfg.noise_params()
    out = _outdir(cfg)
    _write(out / "circuit.txt", circuit.to_text())
    batch = sample(circuit, enumerate_faults(circuit, params), cfg.shots, cfg.seed, threads)
    if cfg.deflagging:
        batch = apply_deflagging(batch, circuit)
    path = out / "shots.txt"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        write_shots(fh, batch, circuit, params, cfg.seed, cfg.deflagging)
    _write(out / "manifest.txt", _manifest(cfg, circuit, {
        "params": params.to_text().replace("\n", " ").strip(),
        "n_shots": cfg.shots,
    }))
    return path


def cmd_trace(cfg: RunConfig) -> tuple[Path, Path]:
    circuit = cfg.circuit()
    params = cfg.noise_params()
    sem = Semantics.DEFLAGGED if cfg.deflagging else Semantics.FLAGGED
    hyper = trace_hypergraph(circuit, enumerate_faults(circuit, params), sem)
    out = _outdir(cfg)
    n_events = len(event_map(circuit, cfg.deflagging))
    meta = {"circuit": circuit.digest(), "semantics": sem.value, "n_events": n_events}
    hpath = out / "hypergraph.txt"
    _write(hpath, format_hypergraph(hyper, meta))
    strategy = Strategy(cfg.strategy)
    if strategy is Strategy.CORRELATION:
        raise CalibrationIncompleteError(
            f"correlation weights need data; run calibrate on {hpath}")
    gpath = out / f"graph_{strategy.value}.txt"
    _write(gpath, format_graph(build_decoding_graph(hyper, strategy, n_events=n_events)))
    return hpath, gpath


def cmd_calibrate(cfg: RunConfig, shots_path, hypergraph_path, max_size: int | None = None
                  ) -> tuple[Path, Path]:
    circuit = cfg.circuit()
    hyper, meta = parse_hypergraph(Path(hypergraph_path).read_text())
    with open(shots_path) as fh:
        batch, _ = read_shots(fh, circuit)
    cal = calibrate(batch, circuit, hyper, max_size=max_size)
    calibrated = cal.hyperedges(hyper)
    n_events = int(meta.get("n_events", len(batch.emap)))
    out = _outdir(cfg)
    cpath = out / "calibrated.txt"
    _write(cpath, format_hypergraph(calibrated, {**meta, **cal.metadata()}))
    gpath = out / "graph_correlation.txt"
    probs = {h.events: h.probability for h in calibrated}
    _write(gpath, format_graph(build_decoding_graph(hyper, Strategy.CORRELATION, probs,
                                                    n_events=n_events)))
    return cpath, gpath


def cmd_decode(cfg: RunConfig, shots_path, graph_path, scheme: str | None = None) -> Path:
    circuit = cfg.circuit()
    scheme = Scheme(scheme or cfg.scheme)
    with open(shots_path) as fh:
        batch, _ = read_shots(fh, circuit)
    graph = parse_graph(Path(graph_path).read_text()) if graph_path else None
    if graph is not None and graph.n_events != batch.events.shape[1]:
        raise ConfigError(f"graph has {graph.n_events} events but shots have "
                          f"{batch.events.shape[1]}; flagged/deflagged semantics mixed?")
    decoded = decode_batch(graph, batch, scheme)
    out = _outdir(cfg)
    path = out / f"decoded_{scheme.value}.csv"
    _write(path, format_decoded(decoded))
    return path


def cmd_report(cfg: RunConfig, inputs: list[tuple[int, str]], name: str = "report") -> tuple[Path, Path]:
    """Rates per decoded file and a decay fit when three or more round counts exist."""
    report = Report()
    points = []
    for rounds, path in sorted(inputs):
        decoded = parse_decoded(Path(path).read_text())
        try:
            ler = logical_error_rate(decoded)
        except UndefinedRateError:
            continue
        report.rows.append(SweepRow(cfg.state, rounds, decoded.scheme.value, cfg.strategy,
                                    ler.p_fail_per_accepted, ler.stderr,
                                    ler.acceptance_fraction, ler.n_total))
        points.append((rounds, ler.p_fail_per_accepted, ler.stderr))
    out = _outdir(cfg)
    if len({r for r, _, _ in points}) >= 3:
        report.fits["decay"] = fit_decay(points)
        _write(out / f"{name}_points.csv", points_csv(points))
    csv_path, kv_path = out / f"{name}.csv", out / f"{name}.txt"
    _write(csv_path, report.to_csv())
    _write(kv_path, report.to_kv())
    return csv_path, kv_path


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flagmatch", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config")
        for f in fields(RunConfig):
            flag = "--" + f.name.replace("_", "-")
            sp.add_argument(flag, dest=f.name, default=None)
        sp.add_argument("--threads", type=int, default=1)

    common(sub.add_parser("simulate", help="sample a shot stream"))
    common(sub.add_parser("trace", help="trace the hypergraph and build a decoding graph"))
    sp = sub.add_parser("calibrate", help="correlation estimate of hyperedge probabilities")
    common(sp)
    sp.add_argument("--shots-file", required=True)
    sp.add_argument("--hypergraph", required=True)
    sp.add_argument("--max-size", type=int, default=None)
    sp = sub.add_parser("decode", help="decode a shot stream")
    common(sp)
    sp.add_argument("--shots-file", required=True)
    sp.add_argument("--graph", default=None, help="omit for the undecoded readout")
    sp = sub.add_parser("report", help="summarize decoded files")
    common(sp)
    sp.add_argument("inputs", nargs="+", metavar="ROUNDS:CSV")
    sp.add_argument("--name", default="report")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args)
        if args.command == "simulate":
            print(cmd_simulate(cfg, args.threads))
        elif args.command == "trace":
            print(*cmd_trace(cfg), sep="\n")
        elif args.command == "calibrate":
            print(*cmd_calibrate(cfg, args.shots_file, args.hypergraph, args.max_size), sep="\n")
        elif args.command == "decode":
            print(cmd_decode(cfg, args.shots_file, args.graph))
        elif args.command == "report":
            inputs = []
            for item in args.inputs:
                r, sep, path = item.partition(":")
                if not sep:
                    raise ConfigError(f"expected ROUNDS:CSV, got {item!r}")
                inputs.append((int(r), path))
            print(*cmd_report(cfg, inputs, args.name), sep="\n")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CalibrationIncompleteError as exc:
        print(f"calibration incomplete: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except FitFailureError as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (OSError, IOError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
