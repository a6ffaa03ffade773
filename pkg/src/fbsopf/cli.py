"""Command-line entry point (``fbsopf``).

Exit codes: 0 success, 2 invalid input, 3 infeasible problem, 4 solver or
convergence failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .grid import NetworkError, build_bibc, incidence
from .linearize import LinearGridModel, supporting_currents
from .opf import ConvergenceError, InfeasibleError, project_dispatch, run_fbs_opf
from .powerflow import InjectionSet, PowerFlowError, slack_injection, solve_power_flow
from .scenario import ScenarioError, load_scenario
from .storage import amortized_capacity_cost, linear_model_for, solve_multiperiod, solve_sizing
from .studies import ExperimentReport, benchmark_runtime, run_convergence_study, run_viability_study

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_SOLVER = 0, 2, 3, 4

DISPATCH = "bundled:dispatch"
MONTH = "bundled:storage_month"


class SolverFailure(RuntimeError):
    pass


def _emit(args, text, default_name):
    """Print ``text`` or write it below ``--out`` (a directory or file)."""
    if args.out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    out = Path(args.out)
    if out.suffix:
        out.parent.mkdir(parents=True, exist_ok=True)
        target = out
    else:
        out.mkdir(parents=True, exist_ok=True)
        target = out / default_name
    target.write_text(text if text.endswith("\n") else text + "\n")
    print(f"wrote {target}", file=sys.stderr)


def _emit_report(args, report: ExperimentReport):
    if args.out is None:
        sys.stdout.write(report.to_csv())
        print(json.dumps(report.manifest()["summary"], indent=2), file=sys.stderr)
    else:
        for path in report.write(args.out):
            print(f"wrote {path}", file=sys.stderr)


def _json(obj) -> str:
    from .studies import _jsonable

    return json.dumps(_jsonable(obj), indent=2)


def _scenario(args, default):
    sc = load_scenario(args.scenario or default)
    if args.seed is not None:
        sc = sc.with_seed(args.seed)
    return sc


# -- subcommands ----------------------------------------------------------------


def cmd_validate(args):
    sc = _scenario(args, DISPATCH)
    print(
        _json(
            {
                "valid": True,
                "name": sc.name,
                "hash": sc.hash,
                "buses": sc.net.n_bus,
                "branches": sc.net.n_branch,
                "generators": len(sc.generators()),
                "steps": sc.n_steps,
                "step_hours": sc.step_hours,
                "series": sorted(sc.series),
                "storage_configs": sc.storage_configs,
            }
        )
    )


def cmd_powerflow(args):
    sc = _scenario(args, DISPATCH)
    kw = sc.period(args.period)
    net = kw["net"]
    p = -kw["p_d"]
    q = -kw["q_d"]
    if args.gen_at_max:
        for g in kw["gens"]:
            if g.bus != net.slack:
                p[g.bus] += g.p_max
    pf = solve_power_flow(net, InjectionSet(p, q), kw["v_s"], tol=args.tol)
    out = {
        "iterations": pf.iterations,
        "buses": [{"bus": lab, "vm": float(abs(v)), "va_deg": float(np.degrees(np.angle(v)))} for lab, v in zip(net.labels, pf.voltage)],
        "branches": [
            {"branch": br.label, "current": float(abs(i)), "current_a": float(abs(i)) * net.base_current, "loss": float(l)}
            for br, i, l in zip(net.branches, pf.branch_current, pf.branch_loss)
        ],
        "total_loss": pf.loss,
    }
    _emit(args, _json(out), "powerflow.json")


def cmd_linearize(args):
    sc = _scenario(args, DISPATCH)
    kw = sc.period(args.period)
    net, gens = kw["net"], kw["gens"]
    bibc = build_bibc(net)
    cg = incidence(net.n_bus, [g.bus for g in gens])
    i0, i1 = supporting_currents(bibc, cg, [g.p_max for g in gens])
    model = LinearGridModel.build(net, bibc, np.full(net.n_bus, abs(kw["v_s"])), i0, i1)
    out = {"bus_labels": net.labels, "branch_labels": [b.label for b in net.branches], "bibc": bibc.full}
    if args.dump:
        out.update({"Bv": model.Bv, "Br": model.Br, "L0": model.L0, "L1": model.L1, "b": model.b, "i0": model.i0, "i1": model.i1})
    else:
        out.update({"shapes": {k: list(getattr(model, k).shape) for k in ("Bv", "Br", "L0", "L1", "b")}})
    _emit(args, _json(out), "linearize.json")


def cmd_opf(args):
    sc = _scenario(args, DISPATCH)
    kw = sc.period(args.period)
    sol = run_fbs_opf(kw["net"], kw["gens"], kw["limits"], kw["p_d"], kw["q_d"], kw["v_s"], epsilon=args.epsilon, h_max=args.h_max)
    proj = project_dispatch(kw["net"], sol, kw["limits"])
    net = kw["net"]
    s_slack = slack_injection(net, proj, kw["v_s"]) * sc.base_kw
    out = {
        "scenario_hash": sc.hash,
        "objective": sol.objective,
        "iterations": sol.iterations,
        "converged": sol.converged,
        "sweep_change": sol.mae,
        "generators": [
            {"name": g.name, "bus": net.labels[g.bus], "p_kw": p * sc.base_kw, "q_kvar": q * sc.base_kw}
            for g, p, q in zip(kw["gens"], sol.p_gen, sol.q_gen)
        ],
        # the LP balances active power only; the slack's reactive output is set by the power flow
        "slack_exact": {"p_kw": s_slack.real, "q_kvar": s_slack.imag},
        "lp_voltage": dict(zip(net.labels, sol.lp_voltage(net.slack))),
        "exact_voltage": dict(zip(net.labels, proj.vm)),
        "voltage_mae": proj.voltage_mae,
        "lp_loss_kw": float(sol.losses.sum()) * sc.base_kw,
        "exact_loss_kw": proj.loss * sc.base_kw,
        "violations": [{"kind": v.kind, "element": v.element, "value": v.value, "limit": v.limit} for v in proj.violations],
        "trace": [{"h": e["h"], "objective": e["objective"], "sweep_change": e["mae"]} for e in sol.history],
    }
    _emit(args, _json(out), "opf.json")


def cmd_mpopf(args):
    sc = _scenario(args, MONTH)
    case = sc.case(args.config, n_steps=args.steps, terminal_soc=args.terminal_soc or None)
    if args.capacity_kwh is not None:
        from dataclasses import replace

        e_max = args.capacity_kwh / sc.base_kw
        case.fleet = [replace(s, e_max=e_max, e0=min(s.e0, e_max)) for s in case.fleet]
    if any(s.e_max is None for s in case.fleet):
        raise ValueError("storage without e_max_kwh; pass --capacity-kwh or use `size`")
    sol = solve_multiperiod(case, linear_model_for(case))
    base = sc.base_kw
    lines = ["timestamp,feeder_kw,pv_kw,curtailed_kw,load_kw,loss_kw,storage_dis_kw,storage_ch_kw,storage_kwh,price"]
    pv_avail = case.p_max[:, 1:].sum(axis=1)
    price = case.cost[:, 0] / base
    for k in range(case.horizon.N):
        lines.append(
            ",".join(
                [sc.timestamps[k]]
                + [
                    repr(float(x))
                    for x in (
                        sol.p_gen[k, 0] * base,
                        sol.p_gen[k, 1:].sum() * base,
                        (pv_avail[k] - sol.p_gen[k, 1:].sum()) * base,
                        case.p_d[k].sum() * base,
                        sol.losses[k].sum() * base,
                        sol.p_dis[k].sum() * base,
                        sol.p_ch[k].sum() * base,
                        sol.energy[k].sum() * base if sol.energy.size else 0.0,
                        price[k],
                    )
                ]
            )
        )
    _emit(args, "\n".join(lines), "mpopf.csv")
    print(_json({"scenario_hash": sc.hash, "objective": sol.objective}), file=sys.stderr)


def cmd_size(args):
    sc = _scenario(args, MONTH)
    case = sc.case(args.config, n_steps=args.steps, terminal_soc=args.terminal_soc or None)
    res = solve_sizing(case, [args.cost], linear_model_for(case))[0]
    if res.status != "optimal":
        raise InfeasibleError(f"sizing LP {res.status}") if res.status == "infeasible" else SolverFailure(res.status)
    days = case.horizon.hours / 24
    lines = ["bus,capacity_kwh"] + [f"{sc.net.labels[b]},{float(z) * sc.base_kw!r}" for b, z in zip(res.buses, res.z)]
    _emit(args, "\n".join(lines), "size.csv")
    summary = {
        "scenario_hash": sc.hash,
        "cost_per_kwh": args.cost,
        "amortized_per_kwh": amortized_capacity_cost(args.cost, case.horizon, 10.0, 1e3),
        "amortization": f"cost * {days:g} days / (calendar_life_years * 365)",
        "objective": res.objective,
        "operational_cost": res.operational_cost,
        "storage_cost": res.storage_cost,
        "total_capacity_kwh": res.total_capacity * sc.base_kw,
    }
    print(_json(summary), file=sys.stderr)


def cmd_sweep(args):
    sc = _scenario(args, MONTH)
    configs = sc.storage_configs if args.config is None else [args.config]
    for cfg in configs:
        rep = run_viability_study(sc, cfg, args.costs, workers=args.workers, terminal_soc=args.terminal_soc or None, n_steps=args.steps)
        _emit_report(args, rep)


def cmd_convergence(args):
    sc = _scenario(args, DISPATCH)
    _emit_report(args, run_convergence_study(sc, range(1, args.h_max + 1), args.period))


def cmd_bench(args):
    sc = _scenario(args, MONTH)
    _emit_report(args, benchmark_runtime(sc, args.steps_list, args.config or "distributed", args.cost))


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="scenario file, or bundled:<name> (dispatch, storage_month)")
    common.add_argument("--seed", type=int, help="regenerate the synthetic series with this seed")
    common.add_argument("--out", help="output directory (or file for single outputs); default stdout")
    common.add_argument("--epsilon", type=float, default=1e-4, help="voltage-change tolerance of the iteration")
    common.add_argument("--h-max", type=int, default=4, help="maximum number of LP solves")
    common.add_argument("--terminal-soc", action="store_true", help="require final storage energy >= initial")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="fbsopf", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", parents=[common], help="validate a scenario and its grid")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("powerflow", parents=[common], help="exact power flow of one period")
    s.add_argument("--period", type=int, default=0)
    s.add_argument("--gen-at-max", action="store_true", help="inject every non-slack generator at its cap")
    s.add_argument("--tol", type=float, default=1e-10)
    s.set_defaults(func=cmd_powerflow)

    s = sub.add_parser("linearize", parents=[common], help="linear sensitivities at flat voltage")
    s.add_argument("--period", type=int, default=0)
    s.add_argument("--dump", action="store_true", help="emit the full matrices")
    s.set_defaults(func=cmd_linearize)

    s = sub.add_parser("opf", parents=[common], help="iterative single-period OPF with projection")
    s.add_argument("--period", type=int, default=0)
    s.set_defaults(func=cmd_opf)

    for name, func, text in (("mpopf", cmd_mpopf, "multiperiod dispatch with fixed storage"), ("size", cmd_size, "storage sizing at one capacity cost")):
        s = sub.add_parser(name, parents=[common], help=text)
        s.add_argument("--config", help="storage configuration of the scenario")
        s.add_argument("--steps", type=int, help="use only the first N periods")
        if name == "mpopf":
            s.add_argument("--capacity-kwh", type=float, help="fixed capacity for every storage")
        else:
            s.add_argument("--cost", type=float, default=100.0, help="capacity cost per kWh over the calendar life")
        s.set_defaults(func=func)

    s = sub.add_parser("sweep", parents=[common], help="capacity-cost sweep with revenue and break-even")
    s.add_argument("--config", help="storage configuration (default: all)")
    s.add_argument("--costs", type=float, nargs="+", help="cost points per kWh (default: scenario)")
    s.add_argument("--steps", type=int, help="use only the first N periods")
    s.add_argument("--workers", type=int, default=1, help="solve cost points cold in parallel")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("convergence-study", parents=[common], help="objective and voltage error per iteration count")
    s.add_argument("--period", type=int, default=0)
    s.set_defaults(func=cmd_convergence)

    s = sub.add_parser("bench", parents=[common], help="runtime against horizon length")
    s.add_argument("--steps-list", type=int, nargs="+", default=[24, 96, 384, 744])
    s.add_argument("--config")
    s.add_argument("--cost", type=float, default=100.0)
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ScenarioError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    except (NetworkError, ValueError, KeyError, IndexError, MemoryError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConvergenceError, PowerFlowError, SolverFailure, ZeroDivisionError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
