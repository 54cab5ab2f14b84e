"""Scenario configuration: YAML schema, overrides and conversion to engine objects.

The file is a nested mapping. Every key is checked against the schema below;
unknown keys and wrong types are rejected with the dotted path of the offending
entry (``propagator.dt``, ``initial_state.terms[1].weight``).
"""
from __future__ import annotations

import dataclasses
import math
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .analytic import GaussianParams
from .model import BasisIndex, Parity, PhysicalParams, WallTrajectory
from .numeric import PropagatorConfig

SCENARIOS = ("strong-check", "weak-scan", "oracle-compare", "theta-selftest", "reversal")
WEIGHT_NORM_TOL = 1e-12


class SchemaError(ValueError):
    """Configuration does not match the schema; the message starts with the key path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path or '<root>'}: {message}")


@dataclass
class ParamsSection:
    m: float = 1.0
    hbar: float = 1.0
    c: float = 137.035999


@dataclass
class TrajectorySection:
    kind: str = "smooth"
    L0: float = 100.0
    q: float = 1e-4
    beta: float | None = 1e3
    T: float | None = None


@dataclass
class TermSection:
    n: int = 0
    parity: str = "even"
    weight: typing.Any = 1.0


@dataclass
class InitialStateSection:
    """kind is gaussian (uses d), basis (n, parity) or superposition (terms)."""

    kind: str = "superposition"
    d: float = 1.0
    n: int = 0
    parity: str = "even"
    terms: list[TermSection] = field(default_factory=lambda: [
        TermSection(10, "even", 1 / math.sqrt(2)),
        TermSection(1, "even", -1 / math.sqrt(2)),
    ])


@dataclass
class GridSection:
    n_points: int = 4096


@dataclass
class PropagatorSection:
    dt: float | None = 1e-4
    space_order: int = 4
    cfl: float = 0.45
    refactor_tol: float = 1e-15
    norm_abort: float = 1e-6
    chunk_steps: int = 200_000
    backend: str | None = None
    refine: bool = True


@dataclass
class TimesSection:
    start: float = 0.0
    stop: float = 0.1
    step: float = 1e-4


@dataclass
class WeakScanSection:
    engine: str = "auto"
    control: bool = True
    signature_factor: float = 1e3


@dataclass
class StrongCheckSection:
    x_min: float = -25.0
    x_max: float = 25.0
    x_samples: int = 1000
    t_max: float = 1e3
    t_samples: int = 100
    tolerance: float = 1e-8


@dataclass
class OracleSection:
    tolerance: float = 1e-6
    drift_tolerance: float = 1e-8


@dataclass
class ThetaSection:
    samples: int = 1000
    seed: int = 20240601
    tolerance: float = 1e-12
    imag_kappa_min: float = 0.05
    imag_kappa_max: float = 50.0


@dataclass
class ReversalSection:
    rebase_points: int = 8193
    coefficient_floor: float = 1e-6
    norm_tolerance: float = 1e-8


@dataclass
class ScenarioConfig:
    scenario: str = "weak-scan"
    params: ParamsSection = field(default_factory=ParamsSection)
    trajectory: TrajectorySection = field(default_factory=TrajectorySection)
    initial_state: InitialStateSection = field(default_factory=InitialStateSection)
    grid: GridSection = field(default_factory=GridSection)
    propagator: PropagatorSection = field(default_factory=PropagatorSection)
    probes: list[float] = field(default_factory=lambda: [35.0, 40.0, 45.0])
    times: typing.Any = field(default_factory=TimesSection)
    weak_scan: WeakScanSection = field(default_factory=WeakScanSection)
    strong_check: StrongCheckSection = field(default_factory=StrongCheckSection)
    oracle_compare: OracleSection = field(default_factory=OracleSection)
    theta_selftest: ThetaSection = field(default_factory=ThetaSection)
    reversal: ReversalSection = field(default_factory=ReversalSection)
    output_dir: str = "out"

    # engine objects
    def physical_params(self) -> PhysicalParams:
        return PhysicalParams(self.params.m, self.params.hbar, self.params.c)

    def wall_trajectory(self) -> WallTrajectory:
        tr = self.trajectory
        kind = tr.kind
        if kind == "static":
            return WallTrajectory.static(tr.L0)
        if kind == "linear":
            return WallTrajectory.linear(tr.L0, tr.q)
        if kind == "smooth":
            return WallTrajectory.smooth(tr.L0, tr.q, tr.beta)
        return WallTrajectory.reversal(tr.L0, tr.q, tr.T)

    def propagator_config(self) -> PropagatorConfig:
        p = self.propagator
        return PropagatorConfig(dt=p.dt, n_points=self.grid.n_points, space_order=p.space_order, cfl=p.cfl,
                                refactor_tol=p.refactor_tol, norm_abort=p.norm_abort,
                                chunk_steps=p.chunk_steps, backend=p.backend, refine=p.refine)

    def gaussian(self) -> GaussianParams:
        return GaussianParams(self.initial_state.d)

    def superposition(self) -> list[tuple[BasisIndex, complex]]:
        s = self.initial_state
        if s.kind == "basis":
            return [(BasisIndex(s.n, Parity(s.parity)), 1.0 + 0j)]
        return [(BasisIndex(t.n, Parity(t.parity)), parse_complex(t.weight, "")) for t in s.terms]

    def time_list(self) -> np.ndarray:
        if isinstance(self.times, TimesSection):
            tm = self.times
            count = int(round((tm.stop - tm.start) / tm.step)) + 1
            # rounding keeps t_k = start + k step free of accumulated drift
            return np.round(tm.start + tm.step * np.arange(count), 15)
        return np.asarray(self.times, dtype=float)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["initial_state"]["terms"] = [
            {**t, "weight": _weight_repr(parse_complex(t["weight"], ""))} for t in out["initial_state"]["terms"]
        ]
        return out


def _weight_repr(w: complex):
    return w.real if w.imag == 0 else [w.real, w.imag]


def parse_complex(value, path: str) -> complex:
    """Accept a number, a [re, im] pair or a string such as '0.5-0.5j'."""
    if isinstance(value, bool):
        raise SchemaError(path, "expected a number, got a boolean")
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(_number(value[0], f"{path}[0]"), _number(value[1], f"{path}[1]"))
    if isinstance(value, str):
        try:
            return complex(value.replace(" ", ""))
        except ValueError:
            pass
    raise SchemaError(path, f"cannot read {value!r} as a complex weight")


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        # YAML 1.1 reads 1e-4 (no dot) as a string
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                pass
        raise SchemaError(path, f"expected a number, got {value!r}")
    return float(value)


def _integer(value, path: str) -> int:
    if isinstance(value, bool):
        raise SchemaError(path, "expected an integer, got a boolean")
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    raise SchemaError(path, f"expected an integer, got {value!r}")


def _coerce(value, kind, path: str):
    origin = typing.get_origin(kind)
    if kind is typing.Any:
        return value
    if origin in (typing.Union, types.UnionType):
        options = typing.get_args(kind)
        if value is None and type(None) in options:
            return None
        inner = [o for o in options if o is not type(None)]
        return _coerce(value, inner[0], path)
    if value is None:
        raise SchemaError(path, "value is required")
    if origin is list:
        if not isinstance(value, list):
            raise SchemaError(path, f"expected a list, got {type(value).__name__}")
        (item,) = typing.get_args(kind)
        return [_coerce(v, item, f"{path}[{i}]") for i, v in enumerate(value)]
    if dataclasses.is_dataclass(kind):
        return _build(kind, value, path)
    if kind is bool:
        if not isinstance(value, bool):
            raise SchemaError(path, f"expected true/false, got {value!r}")
        return value
    if kind is int:
        return _integer(value, path)
    if kind is float:
        return _number(value, path)
    if kind is str:
        if not isinstance(value, str):
            raise SchemaError(path, f"expected a string, got {value!r}")
        return value
    raise TypeError(f"schema type {kind!r} not handled")


def _build(cls, raw, path: str):
    if not isinstance(raw, dict):
        raise SchemaError(path, f"expected a mapping, got {type(raw).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - names)
    if unknown:
        where = f"{path}.{unknown[0]}" if path else str(unknown[0])
        raise SchemaError(where, f"unknown key (allowed: {', '.join(sorted(names))})")
    kwargs = {}
    for name in names:
        if name not in raw:
            continue
        sub = f"{path}.{name}" if path else name
        kind = hints[name]
        if cls is ScenarioConfig and name == "times":
            kwargs[name] = _times(raw[name], sub)
        else:
            kwargs[name] = _coerce(raw[name], kind, sub)
    return cls(**kwargs)


def _times(raw, path: str):
    if isinstance(raw, list):
        return [_number(v, f"{path}[{i}]") for i, v in enumerate(raw)]
    return _build(TimesSection, raw, path)


def _check(cfg: ScenarioConfig):
    """Cross-field rules the type schema cannot express."""
    if cfg.scenario not in SCENARIOS:
        raise SchemaError("scenario", f"must be one of {', '.join(SCENARIOS)}")
    kinds = ("static", "linear", "smooth", "reversal")
    if cfg.trajectory.kind not in kinds:
        raise SchemaError("trajectory.kind", f"must be one of {', '.join(kinds)}")
    if cfg.initial_state.kind not in ("gaussian", "basis", "superposition"):
        raise SchemaError("initial_state.kind", "must be gaussian, basis or superposition")
    for i, term in enumerate(cfg.initial_state.terms):
        if term.parity not in ("even", "odd"):
            raise SchemaError(f"initial_state.terms[{i}].parity", "must be even or odd")
        parse_complex(term.weight, f"initial_state.terms[{i}].weight")
    if cfg.initial_state.kind == "superposition":
        weights = [parse_complex(t.weight, "") for t in cfg.initial_state.terms]
        if not weights:
            raise SchemaError("initial_state.terms", "superposition needs at least one term")
        total = sum(abs(w) ** 2 for w in weights)
        if abs(total - 1) > WEIGHT_NORM_TOL:
            raise SchemaError("initial_state.terms", f"weights have squared norm {total!r}, not 1")
    times = cfg.time_list()
    if times.size == 0 or np.any(np.diff(times) <= 0) or times[0] < 0:
        raise SchemaError("times", "output times must be non-negative and strictly increasing")
    if cfg.weak_scan.engine not in ("auto", "numeric", "analytic"):
        raise SchemaError("weak_scan.engine", "must be auto, numeric or analytic")

    linear = cfg.trajectory.kind in ("static", "linear")
    if cfg.scenario in ("strong-check", "oracle-compare") and not linear:
        raise SchemaError("trajectory.kind", f"{cfg.scenario} needs a static or linear trajectory")
    if cfg.scenario == "strong-check" and cfg.initial_state.kind != "gaussian":
        raise SchemaError("initial_state.kind", "strong-check compares Gaussian packets")
    if cfg.scenario == "weak-scan":
        if cfg.weak_scan.engine == "analytic" and not linear:
            raise SchemaError("weak_scan.engine", "time-dependent wall speed needs the numeric engine")
        if times[0] != 0.0:
            raise SchemaError("times", "a weak scan starts at t = 0")
    if cfg.scenario == "reversal":
        if cfg.trajectory.kind != "reversal":
            raise SchemaError("trajectory.kind", "reversal scenario needs a reversal trajectory")
        if cfg.initial_state.kind != "basis":
            raise SchemaError("initial_state.kind", "reversal scenario starts from one basis state")
    # build engine objects to surface their own validation with a location
    for where, make in (("params", cfg.physical_params), ("trajectory", cfg.wall_trajectory),
                        ("propagator", cfg.propagator_config)):
        try:
            make()
        except ValueError as exc:
            raise SchemaError(where, str(exc)) from None
    for i, (probe) in enumerate(cfg.probes):
        if not abs(probe) < cfg.trajectory.L0 / 2:
            raise SchemaError(f"probes[{i}]", f"probe {probe} lies outside the box")


def apply_override(raw: dict, assignment: str) -> dict:
    """Set ``a.b.c=value`` in a raw mapping; the value is parsed as YAML."""
    if "=" not in assignment:
        raise SchemaError("", f"override {assignment!r} is not of the form key=value")
    key, text = assignment.split("=", 1)
    parts = key.strip().split(".")
    if not all(parts):
        raise SchemaError(key, "empty path component in override")
    node = raw
    for i, part in enumerate(parts[:-1]):
        child = node.get(part)
        if child is None:
            child = node[part] = {}
        if not isinstance(child, dict):
            raise SchemaError(".".join(parts[: i + 1]), "cannot descend into a non-mapping value")
        node = child
    node[parts[-1]] = yaml.safe_load(text)
    return raw


def config_from_mapping(raw, overrides=()) -> ScenarioConfig:
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise SchemaError("", "top level must be a mapping")
    # a run manifest stores the resolved config under "config"
    if "config" in raw and "engine" in raw:
        raw = raw["config"]
    for assignment in overrides:
        apply_override(raw, assignment)
    cfg = _build(ScenarioConfig, raw, "")
    _check(cfg)
    return cfg


def load_config(path, overrides=()) -> ScenarioConfig:
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise SchemaError("", f"YAML syntax error at {where}") from None
    return config_from_mapping(raw, overrides)
