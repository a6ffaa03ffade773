"""Single-period FBS-OPF: LP assembly, the iterative loop, and projection
onto the exact power flow.

Variable blocks in every assembled problem::

    p_gen (N, ng)   q_gen (N, ng)   pl_p (N, l)   pl_q (N, l)   v (N, n-1)

Constraint families are named ``balance``, ``voltage``, ``loss_p``,
``loss_q`` and ``branch``; multiperiod problems stack the N periods inside
each family.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .grid import BibcMatrix, RadialNetwork, build_bibc, incidence
from .linearize import LinearGridModel, supporting_currents
from .lp import LpBuilder, LpProblem, LpSolution, solve_lp
from .powerflow import InjectionSet, backward_voltage_update, nodal_currents, solve_power_flow

log = logging.getLogger(__name__)

VIOLATION_TOL = 1e-6


class InfeasibleError(RuntimeError):
    def __init__(self, message, families=()):
        super().__init__(message)
        self.families = tuple(families)


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class GeneratorSpec:
    """Dispatchable unit; powers in pu, ``cost`` in currency per pu-hour."""

    bus: int
    p_min: float
    p_max: float
    q_min: float = 0.0
    q_max: float = 0.0
    cost: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.p_min > self.p_max or self.q_min > self.q_max:
            raise ValueError(f"generator {self.name or self.bus}: lower bound above upper bound")
        if not np.isfinite(self.cost) or self.cost < 0:
            raise ValueError(f"generator {self.name or self.bus}: cost must be finite and non-negative")


@dataclass(frozen=True)
class OperatingLimits:
    v_min: np.ndarray
    v_max: np.ndarray
    i_max: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.v_min) <= 0) or np.any(np.asarray(self.v_min) >= np.asarray(self.v_max)):
            raise ValueError("voltage limits must satisfy 0 < v_min < v_max")
        if np.any(np.asarray(self.i_max) <= 0):
            raise ValueError("branch current limits must be positive")

    @classmethod
    def uniform(cls, net: RadialNetwork, v_min=0.9, v_max=1.1, i_max=None):
        """Same voltage band at every bus; branch limits from the network."""
        n = net.n_bus
        return cls(
            np.full(n, float(v_min)),
            np.full(n, float(v_max)),
            net.current_limit if i_max is None else np.broadcast_to(np.asarray(i_max, dtype=float), (net.n_branch,)),
        )


@dataclass
class DispatchSolution:
    p_gen: np.ndarray
    q_gen: np.ndarray
    pl_p: np.ndarray
    pl_q: np.ndarray
    v: np.ndarray
    objective: float
    iterations: int = 1
    mae: float = np.nan
    p_inj: np.ndarray | None = None
    q_inj: np.ndarray | None = None
    v_s: complex = 1.0
    converged: bool = True
    voltage_state: np.ndarray | None = None
    history: list = field(default_factory=list)
    lp: LpSolution | None = field(default=None, repr=False)

    @property
    def losses(self) -> np.ndarray:
        return self.pl_p + self.pl_q

    def lp_voltage(self, slack=0) -> np.ndarray:
        """LP voltage magnitudes at every bus (slack entry is ``|v_s|``)."""
        return np.insert(self.v, slack, abs(self.v_s))


# -- assembly -----------------------------------------------------------------


def _series(values, n_period, width, name):
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = np.broadcast_to(arr, (n_period, width))
    if arr.shape != (n_period, width):
        raise ValueError(f"{name} has shape {arr.shape}, expected {(n_period, width)}")
    return np.asarray(arr)


def add_rows_from(builder: LpBuilder, family, terms, rhs, sense):
    """Add rows ``sum_i M_i x[idx_i] (sense) rhs`` for sparse ``M_i``."""
    rows, cols, vals = [], [], []
    for idx, mat in terms:
        m = sp.coo_matrix(mat)
        rows.append(m.row)
        cols.append(np.asarray(idx).ravel()[m.col])
        vals.append(m.data)
    builder.add_rows(family, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), rhs, sense)


def add_network_rows(
    builder: LpBuilder,
    model: LinearGridModel,
    cg: np.ndarray,
    limits: OperatingLimits,
    p_d: np.ndarray,
    q_d: np.ndarray,
    v_s: float,
    p_bounds,
    q_bounds,
    cost,
    slack: int = 0,
    relax=(),
):
    """Allocate the per-period variables and constraints (a)-(n) for N periods.

    ``p_d``/``q_d`` are (N, n) load arrays; ``p_bounds``/``q_bounds`` are
    pairs of (N, ng) arrays; ``cost`` is (N, ng). ``relax`` may contain
    ``"voltage"`` and/or ``"branch"`` to drop those limits (infeasibility
    diagnosis). Returns the dict of index blocks.
    """
    N, n = p_d.shape
    ng = cg.shape[1]
    l = model.Br.shape[0]
    keep = np.arange(n) != slack
    p_lo, p_hi = p_bounds
    q_lo, q_hi = q_bounds

    idx = {
        "p_gen": builder.add_vars("p_gen", (N, ng), p_lo, p_hi, cost),
        "q_gen": builder.add_vars("q_gen", (N, ng), q_lo, q_hi),
        "pl_p": builder.add_vars("pl_p", (N, l), 0.0),
        "pl_q": builder.add_vars("pl_q", (N, l), 0.0),
    }
    vlo, vhi = limits.v_min[keep], limits.v_max[keep]
    if "voltage" in relax:
        vlo, vhi = np.zeros(n - 1), np.full(n - 1, np.inf)
    idx["v"] = builder.add_vars("v", (N, n - 1), np.broadcast_to(vlo, (N, n - 1)), np.broadcast_to(vhi, (N, n - 1)))

    eye = sp.identity(N, format="csr")
    kron = lambda m: sp.kron(eye, sp.csr_matrix(m), format="csr")  # noqa: E731

    # (a) power balance
    add_rows_from(
        builder,
        "balance",
        [(idx["p_gen"], kron(np.ones((1, ng)))), (idx["pl_p"], kron(-np.ones((1, l)))), (idx["pl_q"], kron(-np.ones((1, l))))],
        p_d.sum(axis=1),
        "eq",
    )

    # (b) voltages
    bv_p, bv_q = model.Bv[:, :n], model.Bv[:, n:]
    rhs_v = p_d @ bv_p.T + q_d @ bv_q.T - v_s
    add_rows_from(
        builder,
        "voltage",
        [(idx["p_gen"], kron(bv_p @ cg)), (idx["q_gen"], kron(bv_q @ cg)), (idx["v"], kron(-np.eye(n - 1)))],
        rhs_v.ravel(),
        "eq",
    )

    # (c)-(j) loss epigraphs, rows ordered [period][plane][branch]
    ones_l = np.eye(l)
    for kind, gen_var, load in (("p", "p_gen", p_d), ("q", "q_gen", q_d)):
        planes_g, planes_rhs = [], []
        for L, off in ((model.L0, 0.0), (model.L1, model.b)):
            for sign in (-1.0, 1.0):
                planes_g.append(sign * (L @ cg))
                planes_rhs.append(sign * (load @ L.T) + off)
        g_block = np.vstack(planes_g)
        rhs = np.stack(planes_rhs, axis=1).reshape(N, -1)
        add_rows_from(
            builder,
            f"loss_{kind}",
            [(idx[f"pl_{kind}"], kron(np.vstack([ones_l] * 4))), (idx[gen_var], kron(g_block))],
            rhs.ravel(),
            "lb",
        )

    # (k) branch currents
    if "branch" not in relax:
        brg = model.Br @ cg
        flow_d = p_d @ model.Br.T
        imax = np.asarray(limits.i_max, dtype=float)
        rhs = np.hstack([imax + flow_d, imax - flow_d])
        add_rows_from(builder, "branch", [(idx["p_gen"], kron(np.vstack([brg, -brg])))], rhs.ravel(), "ub")
    return idx


def assemble_single_period(
    net: RadialNetwork,
    model: LinearGridModel,
    gens,
    limits: OperatingLimits,
    p_d,
    q_d,
    v_s: float = 1.0,
    relax=(),
) -> LpProblem:
    """LP of one period: minimise generation cost subject to (a)-(n)."""
    n = net.n_bus
    p_d = np.asarray(p_d, dtype=float)
    q_d = np.asarray(q_d, dtype=float)
    if p_d.shape != (n,) or q_d.shape != (n,):
        raise ValueError(f"loads must have length {n}")
    if model.n_bus != n:
        raise ValueError("linear model does not match the network")
    cg = incidence(n, [g.bus for g in gens])
    row = lambda attr: np.array([[getattr(g, attr) for g in gens]], dtype=float)  # noqa: E731
    builder = LpBuilder()
    add_network_rows(
        builder,
        model,
        cg,
        limits,
        p_d[None, :],
        q_d[None, :],
        abs(v_s),
        (row("p_min"), row("p_max")),
        (row("q_min"), row("q_max")),
        row("cost"),
        slack=net.slack,
        relax=relax,
    )
    return builder.build()


def diagnose_infeasibility(build) -> list:
    """Constraint families whose removal restores feasibility.

    ``build(relax)`` must return the LP with the given families relaxed.
    """
    for fams in (("voltage",), ("branch",)):
        if solve_lp(build(fams)).ok:
            return list(fams)
    if solve_lp(build(("voltage", "branch"))).ok:
        return ["voltage", "branch"]
    return ["balance"]


# -- the iterative loop ---------------------------------------------------------


def _decode(sol: LpSolution, cg, p_d, q_d, v_s):
    p_gen = sol.value("p_gen")[0]
    q_gen = sol.value("q_gen")[0]
    return DispatchSolution(
        p_gen=p_gen,
        q_gen=q_gen,
        pl_p=sol.value("pl_p")[0],
        pl_q=sol.value("pl_q")[0],
        v=sol.value("v")[0],
        objective=sol.objective,
        p_inj=cg @ p_gen - p_d,
        q_inj=cg @ q_gen - q_d,
        v_s=v_s,
        lp=sol,
    )


def run_fbs_opf(
    net: RadialNetwork,
    gens,
    limits: OperatingLimits,
    p_d,
    q_d,
    v_s: complex = 1.0,
    epsilon: float = 1e-4,
    h_max: int = 4,
    lp_options=None,
    bibc: BibcMatrix | None = None,
) -> DispatchSolution:
    """Iterate LP solve, forward current sweep and backward voltage update.

    Stops when the mean absolute change of the complex voltages falls to
    ``epsilon`` or after ``h_max`` LP solves. ``history`` holds one entry per
    LP solve with its objective, LP voltages and the voltage state used.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if bibc is None:
        bibc = build_bibc(net)
    n = net.n_bus
    p_d = np.asarray(p_d, dtype=float)
    q_d = np.asarray(q_d, dtype=float)
    cg = incidence(n, [g.bus for g in gens])
    i0, i1 = supporting_currents(bibc, cg, [g.p_max for g in gens])
    v = np.full(n, v_s, dtype=complex)
    history = []
    result = None
    for h in range(1, h_max + 1):
        model = LinearGridModel.build(net, bibc, np.abs(v), i0, i1)
        build = lambda relax=(): assemble_single_period(net, model, gens, limits, p_d, q_d, abs(v_s), relax)  # noqa: E731
        sol = solve_lp(build(), lp_options)
        if not sol.ok:
            fams = diagnose_infeasibility(build) if sol.status == "infeasible" else []
            raise InfeasibleError(f"LP {sol.status} at iteration {h}; relaxing {fams} restores feasibility", fams)
        result = _decode(sol, cg, p_d, q_d, v_s)
        currents = nodal_currents(v, InjectionSet(result.p_inj, result.q_inj))
        v_new = backward_voltage_update(net, bibc, currents, v_s)
        mae = float(np.mean(np.abs(np.delete(v_new - v, net.slack))))
        history.append({"h": h, "objective": sol.objective, "v_lp": result.lp_voltage(net.slack), "vm_used": np.abs(v), "mae": mae})
        log.debug("fbs-opf h=%d J=%.6g mae=%.3g", h, sol.objective, mae)
        result.voltage_state = np.abs(v)
        v = v_new
        if mae <= epsilon:
            break
    result.iterations = h
    result.mae = mae
    result.converged = mae <= epsilon
    result.history = history
    maes = [e["mae"] for e in history]
    if not result.converged and len(maes) > 1 and all(b >= a for a, b in zip(maes, maes[1:])):
        raise ConvergenceError(f"voltage change did not decrease over {h} iterations: {maes}")
    return result


# -- projection ---------------------------------------------------------------


@dataclass
class Violation:
    kind: str
    element: int
    value: float
    limit: float

    @property
    def magnitude(self):
        return abs(self.value - self.limit)


@dataclass
class ProjectionReport:
    voltage: np.ndarray
    branch_current: np.ndarray
    branch_loss: np.ndarray
    violations: list
    voltage_mae: float
    lp_voltage: np.ndarray

    @property
    def loss(self):
        return float(self.branch_loss.sum())

    @property
    def vm(self):
        return np.abs(self.voltage)

    @property
    def ok(self):
        return not self.violations


def check_limits(net: RadialNetwork, vm, ib, limits: OperatingLimits, tol=VIOLATION_TOL) -> list:
    out = []
    for j in range(net.n_bus):
        if j == net.slack:
            continue
        if vm[j] > limits.v_max[j] + tol:
            out.append(Violation("v_max", j, float(vm[j]), float(limits.v_max[j])))
        if vm[j] < limits.v_min[j] - tol:
            out.append(Violation("v_min", j, float(vm[j]), float(limits.v_min[j])))
    for k, cur in enumerate(np.abs(ib)):
        if cur > limits.i_max[k] + tol:
            out.append(Violation("i_max", k, float(cur), float(limits.i_max[k])))
    return out


def project_dispatch(
    net: RadialNetwork,
    solution: DispatchSolution,
    limits: OperatingLimits | None = None,
    bibc: BibcMatrix | None = None,
    tol: float = 1e-10,
) -> ProjectionReport:
    """Exact power flow at the LP generator set-points, with limit checks."""
    if limits is None:
        limits = OperatingLimits.uniform(net)
    pf = solve_power_flow(net, InjectionSet(solution.p_inj, solution.q_inj), solution.v_s, tol=tol, max_iter=200, bibc=bibc)
    v_lp = solution.lp_voltage(net.slack)
    keep = np.arange(net.n_bus) != net.slack
    mae = float(np.mean(np.abs(v_lp[keep] - pf.vm[keep])))
    return ProjectionReport(pf.voltage, pf.branch_current, pf.branch_loss, check_limits(net, pf.vm, pf.branch_current, limits), mae, v_lp)
