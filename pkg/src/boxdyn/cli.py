"""Command line entry point: ``boxdyn <scenario> --config <file>``.

Exit codes
    0  every check in the report passed
    2  configuration error (schema, types, incompatible scenario settings)
    3  engine or tolerance failure (a report check failed, or an engine raised)
    4  input/output error
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import backend as default_backend
from .analytic import (AnalyticError, NodeError, SpectralCoefficients, basis_physical, basis_tilde,
                       expand_initial, gaussian_closed_form, gaussian_initial, propagate_spectral,
                       ratio_static_moving, ratio_tail_bound, rebase_at_reversal)
from .config import SCENARIOS, ScenarioConfig, SchemaError, load_config
from .model import (Grid, ModelError, WallTrajectory, WaveField, eigenstate, eigenvalue, wall_length)
from .numeric import ConfigError, PropagationError, propagate_series, to_physical
from .observables import ConsistencyError, ObservableSeries, ProbePoint, snapshot_provider, weak_scan
from .theta import ThetaConvergenceError, identity_residuals, sample_arguments

EXIT_OK, EXIT_CONFIG, EXIT_ENGINE, EXIT_IO = 0, 2, 3, 4
CSV_COLUMNS = ("t", "x", "density", "j", "v", "re_pw", "inside_light_cone", "defined")
REAL_STATE_TOL = 1e-14


def fmt(value) -> str:
    """17 significant digits, so every double survives a text round trip."""
    return "%.16e" % value


@dataclass
class Report:
    """Named pass/fail checks plus the numbers behind them."""

    scenario: str
    checks: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)

    def check(self, name: str, ok: bool, detail: str):
        self.checks.append((name, bool(ok), detail))

    def note(self, text: str):
        self.notes.append(text)

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.checks)

    def render(self) -> str:
        lines = [f"scenario: {self.scenario}"]
        lines += [f"{'PASS' if ok else 'FAIL'} {name}: {detail}" for name, ok, detail in self.checks]
        lines += [f"note: {text}" for text in self.notes]
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


# CSV output

def series_rows(series: ObservableSeries):
    cone = series.inside_light_cone
    for k in range(len(series)):
        yield (fmt(series.t[k]), fmt(series.probe.x), fmt(series.density[k]), fmt(series.j[k]),
               fmt(series.v[k]), fmt(series.re_pw[k]), str(int(cone[k])), str(int(series.defined[k])))


def _probe_tag(x: float) -> str:
    return "x" + repr(float(x)).replace("-", "m").replace(".", "p")


def emit_series(series: list[ObservableSeries], directory, stem: str = "series") -> list[Path]:
    """Write one CSV per probe and a combined CSV; returns the paths written."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    header = ",".join(CSV_COLUMNS) + "\n"
    paths = []
    combined = [header]
    for s in series:
        body = "".join(",".join(row) + "\n" for row in series_rows(s))
        path = directory / f"{stem}_{_probe_tag(s.probe.x)}.csv"
        path.write_text(header + body)
        paths.append(path)
        combined.append(body)
    path = directory / f"{stem}.csv"
    path.write_text("".join(combined))
    paths.append(path)
    return paths


def read_series_csv(path) -> dict[str, np.ndarray]:
    """Column arrays of a file written by ``emit_series``."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].split(",") != list(CSV_COLUMNS):
        raise ValueError(f"{path} does not carry the series header")
    rows = [line.split(",") for line in lines[1:]]
    cols = list(zip(*rows)) if rows else [()] * len(CSV_COLUMNS)
    out = {}
    for name, values in zip(CSV_COLUMNS, cols):
        kind = int if name in ("inside_light_cone", "defined") else float
        out[name] = np.array([kind(v) for v in values], dtype=kind)
    return out


def write_table(path: Path, columns, rows) -> Path:
    text = ",".join(columns) + "\n" + "".join(",".join(r) + "\n" for r in rows)
    path.write_text(text)
    return path


# state preparation

def initial_field(cfg: ScenarioConfig, traj: WallTrajectory, grid: Grid) -> WaveField:
    """Transformed-frame state at t = 0 (equal to the physical state, since L(0) = L0)."""
    kind = cfg.initial_state.kind
    if kind == "gaussian":
        return gaussian_initial(cfg.gaussian(), grid)
    if kind == "basis" and traj.is_linear:
        idx, _ = cfg.superposition()[0]
        return basis_tilde(idx, traj, 0.0, grid, cfg.physical_params())
    samples = sum(w * eigenstate(idx, traj.L0, grid).samples for idx, w in cfg.superposition())
    return WaveField(samples, grid, 0.0)


def static_superposition(cfg: ScenarioConfig, L: float, t: float, grid: Grid) -> WaveField:
    """Exact fixed-wall evolution of an eigenstate superposition."""
    params = cfg.physical_params()
    samples = sum(w * np.exp(-1j * eigenvalue(idx, L, params) * t / params.hbar) * eigenstate(idx, L, grid).samples
                  for idx, w in cfg.superposition())
    return WaveField(samples, grid, t)


def _numeric_physical(cfg: ScenarioConfig, traj: WallTrajectory, times):
    grid = Grid.transformed(traj, cfg.grid.n_points)
    psi0 = initial_field(cfg, traj, grid)
    snaps, stats = propagate_series(psi0, traj, times, cfg.propagator_config(), cfg.physical_params())
    return [to_physical(s, traj, s.t) for s in snaps], stats


def _analytic_physical(cfg: ScenarioConfig, traj: WallTrajectory, times):
    params = cfg.physical_params()
    n = cfg.grid.n_points
    psi0 = initial_field(cfg, traj, Grid.transformed(traj, n))
    coeffs = expand_initial(psi0, traj, params=params)
    return [propagate_spectral(coeffs, t, Grid.physical(traj, t, n), params) for t in times]


# scenarios

def run_weak_scan(cfg: ScenarioConfig, out: Path, report: Report) -> list[Path]:
    traj = cfg.wall_trajectory()
    params = cfg.physical_params()
    times = cfg.time_list()
    probes = [ProbePoint.at(x, traj.L0, params) for x in cfg.probes]
    engine = cfg.weak_scan.engine
    if engine == "auto":
        engine = "numeric"
    report.metrics["engine"] = engine

    def fields_for(tr):
        if engine == "numeric":
            fields, stats = _numeric_physical(cfg, tr, times)
            return fields, stats.max_norm_drift, stats.steps
        fields = _analytic_physical(cfg, tr, times)
        return fields, max(abs(f.norm_sq() - 1) for f in fields), 0

    fields, drift, steps = fields_for(traj)
    series = weak_scan(snapshot_provider(fields), probes, times, params)
    paths = emit_series(series, out, "series")
    report.metrics.update(norm_drift=drift, steps=steps)
    report.check("norm drift", drift < 1e-8, f"{drift:.3e} (limit 1e-08)")
    if times[0] == 0.0:
        start = max(abs(s.re_pw[0]) for s in series)
        report.metrics["re_pw_t0_max"] = start
        report.check("Re P_w(t=0) = 0 at every probe", start <= REAL_STATE_TOL, f"max |Re P_w(0)| = {start:.3e}")

    if not cfg.weak_scan.control:
        return paths
    static = WallTrajectory.static(traj.L0)
    control, cdrift, _ = fields_for(static)
    cseries = weak_scan(snapshot_provider(control), probes, times, params)
    paths += emit_series(cseries, out, "control")
    report.metrics["control_norm_drift"] = cdrift
    exact = None
    if cfg.initial_state.kind != "gaussian":
        exact = weak_scan(lambda t: static_superposition(cfg, traj.L0, t, Grid.physical(static, t, cfg.grid.n_points)),
                          probes, times, params)
    factor = cfg.weak_scan.signature_factor
    for i, (s, c) in enumerate(zip(series, cseries)):
        before = ~s.inside_light_cone & s.defined
        peak = float(np.nanmax(np.abs(s.re_pw[before]))) if np.any(before) else 0.0
        floor = float(np.nanmax(np.abs(c.re_pw)))
        ratio = peak / floor if floor > 0 else math.inf
        tag = _probe_tag(s.probe.x)
        report.metrics[f"{tag}_peak_before_cone"] = peak
        report.metrics[f"{tag}_control_peak"] = floor
        report.check(f"signature at x={s.probe.x:g}", ratio > factor,
                     f"max |Re P_w| before t_c={s.probe.t_c:.6g} is {ratio:.3e} x the control maximum "
                     f"(required > {factor:g})")
        gap = np.abs(s.re_pw - c.re_pw)
        signal = float(np.nanmax(gap[before])) if np.any(before) else 0.0
        report.metrics[f"{tag}_difference_before_cone"] = signal
        text = f"x={s.probe.x:g}: max |Re P_w - Re P_w(control)| before t_c = {signal:.3e}"
        if exact is not None:
            err = float(np.nanmax(np.abs(c.re_pw - exact[i].re_pw)))
            report.metrics[f"{tag}_control_error"] = err
            text += f"; control error against exact fixed-wall evolution = {err:.3e}"
        report.note(text)
    return paths


def run_strong_check(cfg: ScenarioConfig, out: Path, report: Report) -> list[Path]:
    sc = cfg.strong_check
    traj = cfg.wall_trajectory()
    params = cfg.physical_params()
    g = cfg.gaussian()
    g.check_localized(traj.L0)
    xs = np.linspace(sc.x_min, sc.x_max, sc.x_samples)
    rows, worst, mismatch, nodes, first_bad = [], 0.0, 0.0, 0, None
    for t in np.linspace(0.0, sc.t_max, sc.t_samples):
        bound = float(np.max(ratio_tail_bound(g, traj, xs, t, params)))
        try:
            r = ratio_static_moving(g, traj, xs, t, params)
        except NodeError:
            nodes += 1
            rows.append((fmt(t), "nan", "nan", fmt(bound)))
            continue
        dev, mm = r.max_deviation(), r.route_mismatch
        worst, mismatch = max(worst, dev), max(mismatch, mm)
        if first_bad is None and dev >= sc.tolerance:
            first_bad = float(t)
        rows.append((fmt(t), fmt(dev), fmt(mm), fmt(bound)))
    path = write_table(out / "strong_check.csv", ("t", "max_deviation", "route_mismatch", "tail_bound"), rows)
    report.metrics.update(max_deviation=worst, route_mismatch=mismatch, node_times=nodes)
    report.check("max |ratio - 1|", worst < sc.tolerance and nodes == 0,
                 f"{worst:.3e} (limit {sc.tolerance:g}); times with a node: {nodes}")
    report.check("theta2 and theta4 routes agree", mismatch < 1e-10, f"{mismatch:.3e}")
    if first_bad is not None:
        report.note(f"deviation first reaches the limit at t = {first_bad:.6g}")
    return [path]


def _reference(cfg: ScenarioConfig, traj: WallTrajectory, t: float, grid: Grid) -> WaveField:
    params = cfg.physical_params()
    kind = cfg.initial_state.kind
    if kind == "gaussian":
        return gaussian_closed_form(cfg.gaussian(), traj, t, grid, params)
    if kind == "basis":
        return basis_physical(cfg.superposition()[0][0], traj, t, grid, params)
    psi0 = initial_field(cfg, traj, Grid.transformed(traj, grid.n_points))
    return propagate_spectral(expand_initial(psi0, traj, params=params), t, grid, params)


def run_oracle_compare(cfg: ScenarioConfig, out: Path, report: Report) -> list[Path]:
    oc = cfg.oracle_compare
    traj = cfg.wall_trajectory()
    times = cfg.time_list()
    fields, stats = _numeric_physical(cfg, traj, times)
    rows, worst = [], 0.0
    for f in fields:
        err = float(np.max(np.abs(f.samples - _reference(cfg, traj, f.t, f.grid).samples)))
        worst = max(worst, err)
        rows.append((fmt(f.t), fmt(err), fmt(f.norm_sq() - 1)))
    path = write_table(out / "oracle_compare.csv", ("t", "linf_error", "norm_minus_one"), rows)
    report.metrics.update(max_error=worst, norm_drift=stats.max_norm_drift, steps=stats.steps,
                          factorizations=stats.factorizations, dt=stats.dt_nominal)
    report.check("L-infinity error against the analytic solution", worst < oc.tolerance,
                 f"{worst:.3e} (limit {oc.tolerance:g})")
    report.check("norm drift", stats.max_norm_drift < oc.drift_tolerance,
                 f"{stats.max_norm_drift:.3e} (limit {oc.drift_tolerance:g})")
    return [path]


def run_theta_selftest(cfg: ScenarioConfig, out: Path, report: Report) -> list[Path]:
    th = cfg.theta_selftest
    rng = np.random.default_rng(th.seed)
    z, kappa = sample_arguments(rng, th.samples, (th.imag_kappa_min, th.imag_kappa_max))
    res = identity_residuals(z, kappa)
    rows = [(fmt(a.real), fmt(a.imag), fmt(b.real), fmt(b.imag), fmt(r)) for a, b, r in zip(z, kappa, res)]
    path = write_table(out / "theta_identity.csv", ("z_re", "z_im", "kappa_re", "kappa_im", "residual"), rows)
    worst = float(res.max())
    report.metrics.update(max_residual=worst, samples=th.samples)
    report.check("series against modular transformation", worst < th.tolerance,
                 f"max relative residual {worst:.3e} over {th.samples} samples (limit {th.tolerance:g})")
    return [path]


def run_reversal(cfg: ScenarioConfig, out: Path, report: Report) -> list[Path]:
    rv = cfg.reversal
    traj = cfg.wall_trajectory()
    params = cfg.physical_params()
    idx = cfg.superposition()[0][0]
    expanding = WallTrajectory.linear(traj.L0, traj.q) if traj.q else WallTrajectory.static(traj.L0)
    parity = idx.parity
    coeffs = np.zeros(idx.n + 1, dtype=complex)
    coeffs[idx.n] = 1.0
    start = SpectralCoefficients(coeffs, expanding, 0.0, parity)
    rebased = rebase_at_reversal(start, traj, rv.rebase_points, params=params)
    mags = np.abs(rebased.coeffs)
    rows = [(str(n), fmt(c.real), fmt(c.imag), fmt(abs(c))) for n, c in enumerate(rebased.coeffs)]
    path = write_table(out / "rebased_coefficients.csv", ("n", "re", "im", "abs"), rows)
    count = int(np.sum(mags > rv.coefficient_floor))
    norm_gap = abs(rebased.norm_sq() - 1)
    report.metrics.update(coefficients_above_floor=count, norm_gap=norm_gap,
                          half_period_length=float(wall_length(traj, traj.T / 2)))
    report.check("state spreads over several reversed basis states", count > 1,
                 f"{count} coefficients above {rv.coefficient_floor:g}")
    report.check("rebased norm", norm_gap < rv.norm_tolerance, f"|norm - 1| = {norm_gap:.3e}")
    return [path]


RUNNERS = {
    "weak-scan": run_weak_scan,
    "strong-check": run_strong_check,
    "oracle-compare": run_oracle_compare,
    "theta-selftest": run_theta_selftest,
    "reversal": run_reversal,
}


def _versions() -> dict:
    import numpy
    import scipy

    info = {"boxdyn": __version__, "numpy": numpy.__version__, "scipy": scipy.__version__,
            "backend": default_backend()}
    try:
        import numba
        info["numba"] = numba.__version__
    except ImportError:
        info["numba"] = None
    return info


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else repr(v)
    if isinstance(value, np.integer):
        return int(value)
    return value


def run_scenario(cfg: ScenarioConfig, out_dir=None) -> tuple[int, Report]:
    """Run one scenario, write data, report.txt and manifest.json; return (exit code, report)."""
    out = Path(out_dir or cfg.output_dir)
    report = Report(cfg.scenario)
    out.mkdir(parents=True, exist_ok=True)
    try:
        paths = RUNNERS[cfg.scenario](cfg, out, report)
    except (PropagationError, AnalyticError, ThetaConvergenceError, ConsistencyError, NodeError) as exc:
        report.check("engine", False, f"{type(exc).__name__}: {exc}")
        paths = []
    report_path = out / "report.txt"
    report_path.write_text(report.render())
    files = {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(paths + [report_path])}
    manifest = {
        "config": cfg.to_dict(),
        "engine": _versions(),
        "results": _jsonable(report.metrics),
        "checks": [{"name": n, "passed": ok, "detail": d} for n, ok, d in report.checks],
        "files": files,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return (EXIT_OK if report.passed else EXIT_ENGINE), report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="boxdyn", description="Moving-wall box dynamics scenarios.")
    parser.add_argument("scenario", choices=SCENARIOS)
    parser.add_argument("--config", required=True, help="YAML scenario file (a manifest.json also works)")
    parser.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    parser.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted-path override, e.g. trajectory.q=1e-3; repeatable")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, [f"scenario={args.scenario}", *args.override])
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SchemaError, ConfigError, ModelError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code, report = run_scenario(cfg, args.out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ModelError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(report.render(), end="")
    return code


if __name__ == "__main__":
    sys.exit(main())
