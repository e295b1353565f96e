"""Monte-Carlo sweeps: rate-energy tradeoff, IR rate region and convergence traces.

Every sweep cell is one (E_th, weights, realization) triple. All requested
strategies run on the same channel draw inside a cell so warm starts can
pass solutions between them. Rows are sorted by a deterministic key before
anything is written, so worker count never changes the output bytes.
"""
from __future__ import annotations

import json
import logging
import math
import os
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._csv import write_rows
from .ao import ALL_STRATEGIES, Strategy, run_strategies
from .metrics import FEASIBILITY_TOL, TransmitDesign, check_feasibility
from .scenario import PhaseShifts, ScenarioConfig, config_hash, generate_channels

__all__ = [
    "EXPERIMENTS",
    "DEFAULT_ETH_GRID_UW",
    "MODE_REALIZATIONS",
    "SweepSpec",
    "ResultRow",
    "default_weight_grid",
    "pareto_frontier",
    "run_sweep",
    "run_rate_energy_sweep",
    "run_rate_region_sweep",
    "run_convergence_trace",
    "summarize_rows",
    "write_outputs",
    "verify_solutions",
]

log = logging.getLogger(__name__)

EXPERIMENTS = ("rate_energy", "rate_region", "convergence")
DEFAULT_ETH_GRID_UW = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0)
MODE_REALIZATIONS = {"repro": 100, "ci": 10}
RUNTIME_COLUMNS = ("runtime_s",)


def default_weight_grid(points: int = 13) -> tuple:
    """``u_1 = 1`` with ``u_2`` log-spaced over ``[1e-3, 1e3]``, plus every swapped pair."""
    grid = [(1.0, float(u)) for u in np.logspace(-3, 3, points)]
    grid += [(b, a) for a, b in grid]
    seen, out = set(), []
    for pair in grid:
        key = (round(pair[0], 12), round(pair[1], 12))
        if key not in seen:
            seen.add(key)
            out.append(pair)
    return tuple(sorted(out, key=lambda p: (p[1] / p[0])))


@dataclass(frozen=True)
class SweepSpec:
    experiment: str
    eth_grid: tuple = tuple(e / 1e6 for e in DEFAULT_ETH_GRID_UW)    # watts
    weight_grid: tuple = ((1.0, 1.0),)
    strategies: tuple = tuple(s.name for s in ALL_STRATEGIES)
    realizations: int = MODE_REALIZATIONS["ci"]
    seed: int = 0
    output: Path = None
    config: ScenarioConfig = field(default_factory=ScenarioConfig)
    workers: int = 1
    warm_start: bool = True

    def __post_init__(self):
        experiment = self.experiment.replace("-", "_")
        object.__setattr__(self, "experiment", experiment)
        if experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        object.__setattr__(self, "eth_grid", tuple(float(e) for e in self.eth_grid))
        object.__setattr__(self, "weight_grid", tuple(tuple(float(u) for u in w) for w in self.weight_grid))
        object.__setattr__(self, "strategies", tuple(Strategy.parse(s).name if isinstance(s, str) else s.name
                                                     for s in self.strategies))
        if not self.eth_grid or not self.weight_grid or not self.strategies:
            raise ValueError("sweep grids must be nonempty")
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")
        if any(e < 0 for e in self.eth_grid):
            raise ValueError("energy thresholds must be nonnegative")
        if any(len(w) != self.config.num_irs or min(w) <= 0 for w in self.weight_grid):
            raise ValueError("each weight vector needs one positive entry per IR")
        if experiment == "rate_region" and self.config.num_irs != 2:
            raise ValueError("the rate-region sweep needs exactly two IRs")
        if experiment == "convergence" and self.realizations != 1:
            raise ValueError("convergence traces use a single realization")
        if self.output is not None:
            object.__setattr__(self, "output", Path(self.output))

    def cell_config(self, e_th: float, weights) -> ScenarioConfig:
        if self.config.num_ers == 0:
            e_th = 0.0
        return self.config.replace(energy_threshold=e_th, ir_weights=tuple(weights), rng_seed=self.seed)

    def describe(self) -> dict:
        return {"experiment": self.experiment, "eth_grid_w": list(self.eth_grid),
                "weight_grid": [list(w) for w in self.weight_grid], "strategies": list(self.strategies),
                "realizations": self.realizations, "seed": self.seed, "warm_start": self.warm_start}


@dataclass
class ResultRow:
    experiment: str
    strategy: str
    e_th: float
    u1: float
    u2: float
    realization: int
    status: str
    wsr: float = math.nan
    rates: tuple = ()           # total rate C_k + R_k per IR
    common_rates: tuple = ()    # C_k
    sum_energy: float = math.nan
    power: float = math.nan
    outer_iterations: int = 0
    converged: bool = False
    feasible: bool = False
    warm_start: str = ""
    runtime_s: float = 0.0
    wsr_trace: tuple = ()
    solution: dict = None

    @property
    def key(self) -> tuple:
        return (self.e_th, self.u1, self.u2, self.realization, self.strategy)

    def record(self, num_irs: int) -> dict:
        rec = {k: getattr(self, k) for k in ("experiment", "strategy", "e_th", "u1", "u2", "realization", "status",
                                             "wsr", "sum_energy", "power", "outer_iterations", "converged",
                                             "feasible", "warm_start", "runtime_s")}
        for k in range(num_irs):
            rec[f"rate_{k + 1}"] = self.rates[k] if self.rates else math.nan
            rec[f"common_rate_{k + 1}"] = self.common_rates[k] if self.common_rates else math.nan
        return rec


def result_columns(num_irs: int) -> list:
    cols = ["experiment", "strategy", "e_th", "u1", "u2", "realization", "status", "wsr"]
    cols += [f"rate_{k + 1}" for k in range(num_irs)]
    cols += [f"common_rate_{k + 1}" for k in range(num_irs)]
    cols += ["sum_energy", "power", "outer_iterations", "converged", "feasible", "warm_start", "runtime_s"]
    return cols


def _run_cell(spec: SweepSpec, e_th: float, weights, realization: int) -> list:
    cfg = spec.cell_config(e_th, weights)
    ch = generate_channels(cfg, realization)
    u1, u2 = (weights[0], weights[1]) if len(weights) > 1 else (weights[0], math.nan)
    try:
        runs = run_strategies(cfg, ch, spec.strategies, warm_start=spec.warm_start)
    except Exception as exc:    # a failing cell must not abort the sweep
        log.warning("cell (E_th=%g, u=%s, r=%d) failed: %s", e_th, weights, realization, exc)
        runs, status = {}, f"error:{type(exc).__name__}"
    else:
        status = "infeasible"
    rows = []
    for name in spec.strategies:
        run = runs.get(name)
        if run is None:
            rows.append(ResultRow(spec.experiment, name, e_th, u1, u2, realization, status))
            continue
        sm = run.summary
        rows.append(ResultRow(
            experiment=spec.experiment, strategy=name, e_th=e_th, u1=u1, u2=u2, realization=realization,
            status="converged" if run.converged else "iteration_limit",
            wsr=float(sm.wsr), rates=tuple(float(r) for r in sm.total_rates),
            common_rates=tuple(float(c) for c in sm.design.common_rates),
            sum_energy=float(sm.sum_energy), power=float(sm.design.power),
            outer_iterations=int(run.iterations), converged=bool(run.converged),
            feasible=bool(run.feasibility.feasible), warm_start=run.warm_start, runtime_s=float(run.runtime),
            wsr_trace=tuple(float(w) for w in run.wsr_trace),
            solution={"design": sm.design.to_dict(), "theta": sm.phases.theta.tolist(), "ris": run.strategy.ris},
        ))
    return rows


def _cell_args(spec: SweepSpec):
    for e_th in spec.eth_grid:
        for weights in spec.weight_grid:
            for r in range(spec.realizations):
                yield spec, e_th, weights, r


def _star(args):
    return _run_cell(*args)


def run_sweep(spec: SweepSpec) -> list:
    """Run every cell of ``spec`` and return rows sorted by (E_th, u, realization, strategy)."""
    cells = list(_cell_args(spec))
    if spec.workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            chunks = list(pool.map(_star, cells, chunksize=max(1, len(cells) // (4 * spec.workers))))
    else:
        chunks = [_star(c) for c in cells]
    order = {name: i for i, name in enumerate(spec.strategies)}
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda r: (r.e_th, r.u1, r.u2, r.realization, order[r.strategy]))
    if spec.output is not None:
        write_outputs(spec, rows)
    return rows


def run_rate_energy_sweep(spec: SweepSpec) -> list:
    if spec.experiment != "rate_energy":
        raise ValueError("sweep is not a rate-energy sweep")
    return run_sweep(spec)


def run_rate_region_sweep(spec: SweepSpec) -> list:
    if spec.experiment != "rate_region":
        raise ValueError("sweep is not a rate-region sweep")
    return run_sweep(spec)


def run_convergence_trace(spec: SweepSpec) -> dict:
    """Outer-iteration WSR traces per strategy on one channel draw."""
    if spec.experiment != "convergence":
        raise ValueError("sweep is not a convergence experiment")
    rows = run_sweep(spec)
    return {row.strategy: list(row.wsr_trace) for row in rows if row.e_th == spec.eth_grid[0]}


def _mean_stderr(values) -> tuple:
    values = np.asarray(values, float)
    if values.size == 0:
        return math.nan, math.nan
    if values.size == 1:
        return float(values[0]), 0.0
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


def pareto_frontier(points) -> list:
    """Upper-right Pareto frontier of 2-D points, sorted by the first coordinate."""
    pts = sorted({(float(a), float(b)) for a, b in points if np.isfinite(a) and np.isfinite(b)},
                 key=lambda p: (-p[0], -p[1]))
    frontier, best = [], -math.inf
    for a, b in pts:
        if b > best:
            frontier.append((a, b))
            best = b
    return sorted(frontier)


def summarize_rows(rows, num_irs: int) -> dict:
    """Per-cell mean and standard error over converged rows, with failure counts."""
    cells: dict = {}
    for row in rows:
        cells.setdefault((row.strategy, row.e_th, row.u1, row.u2), []).append(row)
    out = []
    for (strategy, e_th, u1, u2), group in cells.items():
        ok = [r for r in group if r.converged and r.feasible]
        entry = {"strategy": strategy, "e_th": e_th, "u1": u1, "u2": u2, "runs": len(group), "converged": len(ok),
                 "not_converged": len(group) - len(ok)}
        entry["wsr_mean"], entry["wsr_stderr"] = _mean_stderr([r.wsr for r in ok])
        entry["sum_energy_mean"], entry["sum_energy_stderr"] = _mean_stderr([r.sum_energy for r in ok])
        for k in range(num_irs):
            entry[f"rate_{k + 1}_mean"], entry[f"rate_{k + 1}_stderr"] = _mean_stderr([r.rates[k] for r in ok])
        out.append(entry)
    summary = {"cells": out}
    if rows and rows[0].experiment == "rate_region" and num_irs == 2:
        summary["frontiers"] = {}
        for strategy in dict.fromkeys(r.strategy for r in rows):
            pts = [(c["rate_1_mean"], c["rate_2_mean"]) for c in out if c["strategy"] == strategy]
            summary["frontiers"][strategy] = [list(p) for p in pareto_frontier(pts)]
    return summary


def _versions() -> dict:
    import clarabel

    return {"artifact": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "clarabel": getattr(clarabel, "__version__", "unknown")}


def write_outputs(spec: SweepSpec, rows) -> Path:
    """Write results.csv, summary.json, trace_<strategy>.csv, solutions.jsonl and manifest.json."""
    out = Path(spec.output)
    out.mkdir(parents=True, exist_ok=True)
    K = spec.config.num_irs
    write_rows(out / "results.csv", [r.record(K) for r in rows], result_columns(K))
    with open(out / "summary.json", "w") as fh:
        json.dump(summarize_rows(rows, K), fh, indent=2, sort_keys=True)
    for strategy in spec.strategies:
        trace = [dict(e_th=r.e_th, u1=r.u1, u2=r.u2, realization=r.realization, iteration=p, wsr=w)
                 for r in rows if r.strategy == strategy for p, w in enumerate(r.wsr_trace)]
        safe = strategy.replace("+", "_")
        write_rows(out / f"trace_{safe}.csv", trace, ("e_th", "u1", "u2", "realization", "iteration", "wsr"))
    with open(out / "solutions.jsonl", "w") as fh:
        for r in rows:
            if r.solution is not None:
                fh.write(json.dumps({"key": [r.e_th, r.u1, r.u2, r.realization, r.strategy],
                                     "converged": r.converged, **r.solution}, sort_keys=True) + "\n")
    manifest = {"config_hash": config_hash(spec.cell_config(0.0, spec.weight_grid[0])), "seed": spec.seed,
                "config": spec.config.to_dict(), "spec": spec.describe(), "rows": len(rows),
                "versions": _versions()}
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
    return out


def verify_solutions(spec: SweepSpec, out_dir=None, tol: float = FEASIBILITY_TOL) -> list:
    """Re-evaluate every stored converged solution; return the keys that fail ``check_feasibility``."""
    out_dir = Path(out_dir or spec.output)
    failures = []
    with open(out_dir / "solutions.jsonl") as fh:
        for line in fh:
            item = json.loads(line)
            if not item["converged"]:
                continue
            e_th, u1, u2, realization, strategy = item["key"]
            weights = (u1, u2) if u2 == u2 else (u1,)
            cfg = spec.cell_config(e_th, weights)
            ch = generate_channels(cfg, realization)
            if not item["ris"]:
                ch = ch.without_ris()
            design = TransmitDesign.from_dict(item["design"])
            report = check_feasibility(cfg, ch, PhaseShifts(np.asarray(item["theta"], float)), design, tol)
            if not report.feasible:
                failures.append(tuple(item["key"]))
    return failures


def default_workers() -> int:
    return max(1, (os.cpu_count() or 1) - 1)


def rows_to_dicts(rows) -> list:
    return [{k: v for k, v in asdict(r).items() if k != "solution"} for r in rows]
