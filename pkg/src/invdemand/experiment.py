"""Experiment configuration, orchestration and CSV output."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from invdemand.dynamics import GridMismatch, make_grid, simulate_upwind
from invdemand.lower_level import (
    BadBreakpoints,
    assemble_lower_system,
    reduced_map,
    sample_demand_basis,
    solve_lower_level,
)
from invdemand.network import NetworkError, build_tree, demand_arcs
from invdemand.operators import KINDS, BadKappa, BadWindow, build_observation
from invdemand.upper_level import assemble_upper_qp, generate_observations, solve_block_simplex_qp

log = logging.getLogger(__name__)

BUNDLED_CONFIG = Path(__file__).parent / "data" / "reference_1x2.json"


class ParseError(ValueError):
    pass


class ValidationError(ValueError):
    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{path}: {msg}" for path, msg in errors))


@dataclass
class Setting:
    name: str
    kind: str
    kappa: list
    t_hat: float = 0.0
    reference: dict | None = None  # arc id -> weights to compare against


@dataclass
class ExperimentConfig:
    arcs: list  # (id, start, velocity)
    alpha: dict
    arc_length: float
    T: float
    dt: float
    sigma: float
    breakpoints: list
    levels: dict  # arc id -> (m, pieces) nested lists
    beta_rows: dict  # arc id -> (p, m) nested lists
    settings: list = field(default_factory=list)
    noise: float = 0.0
    seed: int = 0
    output_dir: str | None = None

    def network(self):
        return build_tree(self.arcs, self.alpha, self.arc_length)

    def weight_rows(self) -> np.ndarray:
        return np.hstack([np.asarray(self.beta_rows[a], float) for a in sorted(self.beta_rows)])

    def to_dict(self) -> dict:
        d = {
            "network": {
                "arcs": [{"id": i, "start": s, "velocity": v} for i, s, v in self.arcs],
                "alpha": {str(k): v for k, v in self.alpha.items()},
                "arc_length": self.arc_length,
            },
            "T": self.T,
            "dt": self.dt,
            "sigma": self.sigma,
            "demand": {
                "breakpoints": list(self.breakpoints),
                "levels": {str(k): v for k, v in self.levels.items()},
            },
            "beta_rows": {str(k): v for k, v in self.beta_rows.items()},
            "settings": [],
            "noise": {"amplitude": self.noise, "seed": self.seed},
        }
        for s in self.settings:
            sd: dict[str, Any] = {"name": s.name, "kind": s.kind, "kappa": list(s.kappa)}
            if s.kind == "C3":
                sd["t_hat"] = s.t_hat
            if s.reference is not None:
                sd["reference"] = {str(k): v for k, v in s.reference.items()}
            d["settings"].append(sd)
        if self.output_dir is not None:
            d["output_dir"] = self.output_dir
        return d


class _Collector:
    def __init__(self):
        self.errors: list[tuple[str, str]] = []

    def get(self, d: Any, key: str, path: str, kind=None, default=...):
        full = f"{path}.{key}" if path else key
        if not isinstance(d, dict) or key not in d:
            if default is ...:
                self.errors.append((full, "missing"))
            return None if default is ... else default
        val = d[key]
        if kind is float:
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                self.errors.append((full, f"expected a number, got {val!r}"))
                return None
            return float(val)
        if kind is not None and not isinstance(val, kind):
            self.errors.append((full, f"expected {kind.__name__}, got {type(val).__name__}"))
            return None
        return val


def _arc_keyed(raw: dict, path: str, col: _Collector) -> dict:
    out = {}
    for k, v in raw.items():
        try:
            out[int(k)] = v
        except ValueError:
            col.errors.append((f"{path}.{k}", "arc ids must be integers"))
    return out


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a decoded JSON config; all problems are reported together."""
    col = _Collector()
    net_raw = col.get(raw, "network", "", dict) or {}
    arcs = []
    for n, a in enumerate(col.get(net_raw, "arcs", "network", list) or []):
        p = f"network.arcs[{n}]"
        i, s, v = col.get(a, "id", p, int), col.get(a, "start", p, int), col.get(a, "velocity", p, float)
        if None not in (i, s, v):
            arcs.append((i, s, v))
    alpha = _arc_keyed(col.get(net_raw, "alpha", "network", dict, default={}), "network.alpha", col)
    arc_length = col.get(net_raw, "arc_length", "network", float)
    T = col.get(raw, "T", "", float)
    dt = col.get(raw, "dt", "", float)
    sigma = col.get(raw, "sigma", "", float)
    if sigma is not None and not sigma > 0:
        col.errors.append(("sigma", "must be positive"))

    demand = col.get(raw, "demand", "", dict) or {}
    breakpoints = col.get(demand, "breakpoints", "demand", list)
    levels = _arc_keyed(col.get(demand, "levels", "demand", dict) or {}, "demand.levels", col)
    beta_rows = _arc_keyed(col.get(raw, "beta_rows", "", dict) or {}, "beta_rows", col)

    settings = []
    for n, s in enumerate(col.get(raw, "settings", "", list, default=[])):
        p = f"settings[{n}]"
        kind = col.get(s, "kind", p, str)
        if kind is not None and kind not in KINDS:
            col.errors.append((f"{p}.kind", f"must be one of {KINDS}"))
        kappa = col.get(s, "kappa", p, list)
        t_hat = col.get(s, "t_hat", p, float, default=0.0)
        if kind == "C3" and isinstance(s, dict) and "t_hat" not in s:
            col.errors.append((f"{p}.t_hat", "missing (required for C3)"))
        name = col.get(s, "name", p, str, default=None) or f"{kind}_{n}"
        ref = col.get(s, "reference", p, dict, default=None)
        if ref is not None:
            ref = _arc_keyed(ref, f"{p}.reference", col)
        settings.append(Setting(name, kind, kappa, t_hat, ref))
    names = [s.name for s in settings]
    if len(set(names)) != len(names):
        col.errors.append(("settings", f"setting names must be unique, got {names}"))

    noise_raw = col.get(raw, "noise", "", dict, default={})
    noise = col.get(noise_raw, "amplitude", "noise", float, default=0.0)
    seed = col.get(noise_raw, "seed", "noise", int, default=0)
    if noise is not None and noise < 0:
        col.errors.append(("noise.amplitude", "must be nonnegative"))
    output_dir = col.get(raw, "output_dir", "", str, default=None)

    if col.errors:
        raise ValidationError(col.errors)
    cfg = ExperimentConfig(
        arcs, alpha, arc_length, T, dt, sigma, breakpoints, levels, beta_rows,
        settings, noise, seed, output_dir,
    )
    _check_semantics(cfg, col)
    if col.errors:
        raise ValidationError(col.errors)
    return cfg


def _check_semantics(cfg: ExperimentConfig, col: _Collector) -> None:
    try:
        net = cfg.network()
    except NetworkError as exc:
        col.errors.append(("network", str(exc)))
        return
    try:
        grid = make_grid(net, cfg.dt, cfg.T)
    except GridMismatch as exc:
        col.errors.append(("dt", str(exc)))
        return
    arcs = demand_arcs(net)
    if sorted(cfg.levels) != arcs:
        col.errors.append(("demand.levels", f"need profiles for exactly the demand arcs {arcs}"))
    else:
        try:
            basis = sample_demand_basis(cfg.breakpoints, cfg.levels, grid)
        except (BadBreakpoints, ValueError) as exc:
            col.errors.append(("demand", str(exc)))
            basis = None
        if basis is not None:
            if sorted(cfg.beta_rows) != arcs:
                col.errors.append(("beta_rows", f"need weight rows for exactly the demand arcs {arcs}"))
            else:
                p_counts = set()
                for a in arcs:
                    rows = np.asarray(cfg.beta_rows[a], dtype=float)
                    if rows.ndim != 2 or rows.shape[1] != basis.m:
                        col.errors.append((f"beta_rows.{a}", f"expected rows of length {basis.m}"))
                    else:
                        p_counts.add(rows.shape[0])
                if len(p_counts) > 1:
                    col.errors.append(("beta_rows", "every arc needs the same number of rows"))
                if 0 in p_counts:
                    col.errors.append(("beta_rows", "need at least one observation row"))
    for n, s in enumerate(cfg.settings):
        try:
            build_observation(net, grid, s.kind, s.kappa, s.t_hat)
        except (BadKappa, BadWindow, ValueError) as exc:
            col.errors.append((f"settings[{n}]", str(exc)))
        if s.reference is not None and sorted(s.reference) != arcs:
            col.errors.append((f"settings[{n}].reference", f"must name the demand arcs {arcs}"))


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: top level must be a JSON object")
    return parse_config(raw)


def save_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")


@dataclass
class SettingResult:
    name: str
    kind: str
    kappa: list
    t_hat: float
    beta: dict  # arc id -> weights
    objective: float
    kkt_residual: float
    converged: bool
    iterations: int
    min_feasible_eigenvalue: float
    objective_at_reference: float | None = None
    reference_max_deviation: float | None = None


@dataclass
class ExperimentReport:
    demand_arcs: list
    m: int
    results: list = field(default_factory=list)
    curves: dict = field(default_factory=dict)  # setting name -> {column: array}


def run_experiment(
    cfg: ExperimentConfig, tol: float = 1e-8, seed: int | None = None, max_iter: int = 200000
) -> ExperimentReport:
    """Generate observations, then reconstruct the weights for every observation setting.

    The first weight row is the benchmark: its optimal inflow, demand and
    supply are reported next to the reconstructed ones.
    """
    net = cfg.network()
    grid = make_grid(net, cfg.dt, cfg.T)
    basis = sample_demand_basis(cfg.breakpoints, cfg.levels, grid)
    system = assemble_lower_system(net, grid, basis, cfg.sigma)
    psi = reduced_map(system)
    rows = cfg.weight_rows()
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    obs = generate_observations(system, rows, noise=cfg.noise, rng=rng)

    bench = rows[0]
    u_bench = solve_lower_level(system, bench)
    state_bench = simulate_upwind(net, grid, u_bench)

    report = ExperimentReport(list(system.arcs), basis.m)
    for s in cfg.settings:
        obsop = build_observation(net, grid, s.kind, s.kappa, s.t_hat)
        qp = assemble_upper_qp(system, obs, obsop, psi)
        beta, diag = solve_block_simplex_qp(qp, tol=tol, max_iter=max_iter)
        res = SettingResult(
            s.name, s.kind, list(s.kappa), s.t_hat,
            system.split(beta), diag.objective, diag.kkt_residual, diag.converged,
            diag.iterations, diag.min_feasible_eigenvalue,
        )
        if s.reference is not None:
            ref = np.concatenate([np.asarray(s.reference[a], float) for a in system.arcs])
            res.objective_at_reference = qp.objective(ref)
            res.reference_max_deviation = float(np.abs(beta - ref).max())
        log.info("%s: objective %.6g, KKT residual %.2e", s.name, diag.objective, diag.kkt_residual)
        report.results.append(res)

        u_opt = solve_lower_level(system, beta)
        state_opt = simulate_upwind(net, grid, u_opt)
        cols = {"t": grid.times, "benchmark_inflow": u_bench, "optimal_inflow": u_opt}
        bench_w, opt_w = system.split(bench), system.split(beta)
        for a in system.arcs:
            cols[f"demand_{a}"] = basis.demand(a, opt_w[a])
            cols[f"supply_{a}"] = state_opt.end_trace(a)
            cols[f"benchmark_demand_{a}"] = basis.demand(a, bench_w[a])
            cols[f"benchmark_supply_{a}"] = state_bench.end_trace(a)
        report.curves[s.name] = cols
    return report


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def table_header(report: ExperimentReport) -> list[str]:
    head = ["setting", "kappa"]
    for a in report.demand_arcs:
        head += [f"beta{a}_{l + 1}" for l in range(report.m)]
    return head + ["objective", "kkt_residual", "min_feasible_eigenvalue"]


def emit_csv(report: ExperimentReport, out_dir: str | Path) -> list[Path]:
    """Write ``table1.csv`` and one ``curves_<setting>.csv`` per setting."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    table = out / "table1.csv"
    with table.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table_header(report))
        for r in report.results:
            row = [r.name, "[" + ",".join(_fmt(k) for k in r.kappa) + "]"]
            for a in report.demand_arcs:
                row += [_fmt(b) for b in r.beta[a]]
            row += [_fmt(r.objective), _fmt(r.kkt_residual), _fmt(r.min_feasible_eigenvalue)]
            w.writerow(row)
    written.append(table)
    for name, cols in report.curves.items():
        path = out / f"curves_{name}.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(list(cols))
            for vals in zip(*cols.values()):
                w.writerow([_fmt(v) for v in vals])
        written.append(path)
    return written
