"""Experiment drivers: convergence, storage viability and runtime scaling.

Every driver returns an :class:`ExperimentReport` whose rows carry the hash
of the scenario they were computed from.
"""

from __future__ import annotations

import csv
import io
import json
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lp import solve_lp
from .opf import project_dispatch, run_fbs_opf
from .scenario import Scenario
from .storage import (
    amortized_capacity_cost,
    assemble_multiperiod,
    baseline_case,
    compute_revenue,
    decode_multiperiod,
    linear_model_for,
    placement_profile,
    simultaneous_operation,
    solve_multiperiod,
    solve_sizing,
)

#: capacities below this many pu-hours count as "no storage"
CAPACITY_TOL = 1e-6


@dataclass
class ExperimentReport:
    kind: str
    scenario_hash: str
    seed: int | None = None
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    #: in-memory objects behind the rows (not written to disk)
    details: dict = field(default_factory=dict, repr=False, compare=False)

    def add(self, **row):
        self.rows.append({"scenario_hash": self.scenario_hash, **row})

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def to_csv(self) -> str:
        names = []
        for r in self.rows:
            names += [k for k in r if k not in names]
        buf = io.StringIO()
        w = csv.DictWriter(buf, names, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})
        return buf.getvalue()

    def manifest(self) -> dict:
        import highspy
        import scipy

        return {
            "kind": self.kind,
            "scenario_hash": self.scenario_hash,
            "seed": self.seed,
            "summary": _jsonable(self.summary),
            "versions": {
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "highspy": getattr(highspy, "__version__", "unknown"),
            },
        }

    def write(self, out_dir) -> tuple:
        """Write ``<kind>.csv`` and ``<kind>.manifest.json`` into ``out_dir``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        table = out / f"{self.kind}.csv"
        table.write_text(self.to_csv())
        manifest = out / f"{self.kind}.manifest.json"
        manifest.write_text(json.dumps(self.manifest(), indent=2) + "\n")
        return table, manifest


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v) + 0.0)
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def _seed_of(scenario: Scenario):
    src = scenario.doc.get("series") or {}
    return src.get("synthetic", {}).get("seed", src.get("seed"))


# -- convergence ----------------------------------------------------------------


def run_convergence_study(scenario: Scenario, h_range=range(1, 5), period: int = 0, lp_options=None) -> ExperimentReport:
    """Objective and projected-voltage error after exactly ``h`` iterations.

    Each row re-runs the loop with ``h_max = h`` and a tolerance small
    enough that it never stops early, then projects the dispatch onto the
    exact power flow.
    """
    args = scenario.period(period)
    report = ExperimentReport("convergence", scenario.hash, _seed_of(scenario))
    prev = None
    for h in h_range:
        t0 = time.perf_counter()
        sol = run_fbs_opf(args["net"], args["gens"], args["limits"], args["p_d"], args["q_d"], args["v_s"], epsilon=1e-14, h_max=h, lp_options=lp_options)
        runtime = time.perf_counter() - t0
        proj = project_dispatch(args["net"], sol, args["limits"])
        report.add(
            h=h,
            iterations=sol.iterations,
            objective=sol.objective,
            voltage_mae=proj.voltage_mae,
            sweep_change=sol.mae,
            max_exact_minus_lp=float(np.max(proj.vm - proj.lp_voltage)),
            violations=len(proj.violations),
            rel_objective_change=np.nan if prev is None else abs(sol.objective - prev) / abs(sol.objective),
            runtime_s=runtime,
        )
        prev = sol.objective
    obj = report.column("objective")
    report.summary = {
        "mae_h1": float(report.rows[0]["voltage_mae"]),
        "mae_non_increasing": bool(np.all(np.diff(report.column("voltage_mae")) <= 0)),
        "objective_rel_error_first_vs_last": float(abs(obj[0] - obj[-1]) / abs(obj[-1])),
    }
    return report


# -- viability ----------------------------------------------------------------


def break_even(cost_points, capacities, tol=CAPACITY_TOL):
    """Largest cost point that still buys capacity (``nan`` if none)."""
    c = np.asarray(cost_points, dtype=float)
    z = np.asarray(capacities, dtype=float)
    hit = c[np.nan_to_num(z, nan=0.0) > tol]
    return float(hit.max()) if hit.size else float("nan")


def run_viability_study(
    scenario: Scenario,
    config: str,
    cost_points=None,
    lp_options=None,
    workers: int = 1,
    terminal_soc=None,
    n_steps=None,
) -> ExperimentReport:
    """Baseline, sizing sweep, revenue/profit, break-even and placement.

    ``revenue`` is the operational saving against the storage-free baseline;
    ``profit`` additionally subtracts the amortised capacity cost.
    """
    cost_points = scenario.cost_points() if cost_points is None else list(cost_points)
    if not cost_points:
        raise ValueError("no cost points given and none in the scenario")
    case = scenario.case(config, n_steps=n_steps, terminal_soc=terminal_soc)
    model = linear_model_for(case)
    t0 = time.perf_counter()
    base = solve_multiperiod(baseline_case(case), model, lp_options=lp_options)
    base_rt = time.perf_counter() - t0
    results = solve_sizing(case, cost_points, model, lp_options, workers=workers)

    net = scenario.net
    kwh = scenario.base_kw * 1.0  # pu-hours to kWh
    report = ExperimentReport(f"viability-{config}", scenario.hash, _seed_of(scenario))
    for res in results:
        money = compute_revenue(res, base.objective)
        row = {
            "config": config,
            "cost_per_kwh": res.cost_point,
            "status": res.status,
            "capacity_kwh": res.total_capacity * kwh,
            "objective": res.objective,
            "operational_cost": res.operational_cost,
            "storage_cost": res.storage_cost,
            "revenue": money["revenue"],
            "profit": money["profit"],
            "simultaneous_kw": simultaneous_operation(res.solution) * scenario.base_kw if res.solution else np.nan,
            "runtime_s": res.runtime,
        }
        for bus, z in zip(res.buses, res.z):
            row[f"z_{net.labels[bus]}_kwh"] = float(z) * kwh
        report.add(**row)

    z_tot = [r.total_capacity for r in results]
    summary = {
        "config": config,
        "baseline_objective": base.objective,
        "baseline_runtime_s": base_rt,
        "break_even_per_kwh": break_even(cost_points, z_tot),
        "failed_points": [r.cost_point for r in results if r.status != "optimal"],
        "horizon_steps": case.horizon.N,
        "capacity_cost_per_kwh_factor": amortized_capacity_cost(1.0, case.horizon, 10.0, 1e3),
    }
    positive = [r for r in results if r.status == "optimal" and r.total_capacity > CAPACITY_TOL]
    if positive:
        top = max(positive, key=lambda r: r.cost_point)
        summary["placement_cost_per_kwh"] = top.cost_point
        summary["placement"] = [dict(p, capacity_kwh=p["capacity"] * kwh) for p in placement_profile(top, net)]
    report.summary = summary
    report.details = {"case": case, "results": results, "baseline": base}
    return report


# -- runtime --------------------------------------------------------------------


def benchmark_runtime(scenario: Scenario, n_list=(24, 96, 384, 744), config="distributed", cost_per_kwh=100.0, lp_options=None) -> ExperimentReport:
    """Wall-clock assembly plus solve time of one sizing LP per horizon length,
    and the slope of log(runtime) against log(N)."""
    report = ExperimentReport("bench", scenario.hash, _seed_of(scenario))
    for N in n_list:
        t0 = time.perf_counter()
        case = scenario.case(config, n_steps=N)
        model = linear_model_for(case)
        lifes = np.array([s.calendar_life for s in case.fleet], dtype=float)
        c_s = amortized_capacity_cost(cost_per_kwh, case.horizon, lifes, case.net.base_power)
        prob = assemble_multiperiod(case, model, sizing=bool(case.fleet), storage_cost=c_s)
        t1 = time.perf_counter()
        sol = solve_lp(prob, lp_options)
        t2 = time.perf_counter()
        objective = decode_multiperiod(case, sol, sizing=bool(case.fleet)).objective if sol.ok else np.nan
        report.add(
            steps=N,
            variables=prob.n_var,
            rows=prob.n_ub + prob.n_eq,
            nonzeros=int(prob.A_ub.nnz + prob.A_eq.nnz),
            status=sol.status,
            objective=objective,
            assemble_s=t1 - t0,
            solve_s=t2 - t1,
            runtime_s=t2 - t0,
        )
    n = report.column("steps").astype(float)
    t = report.column("runtime_s").astype(float)
    report.summary = {"loglog_slope": float(np.polyfit(np.log(n), np.log(t), 1)[0]) if len(n) > 1 else float("nan")}
    return report
