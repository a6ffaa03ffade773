"""Multiperiod FBS-OPF with battery storage and joint sizing/placement.

Each storage enters the network LP as two generators at its bus: a
discharging unit with ``p in [0, p_rated]`` and a charging unit with
``p in [-p_rated, 0]`` (generation convention). Energy levels are kept as
explicit variables ``e`` linked to the power trajectory by
``e(k+1) = e(k) + B u(k)``; this is the recursive form of
``E = S_x e0 + S_u U`` and avoids the dense lower-triangular ``S_u`` in the
LP. :func:`build_storage_dynamics` returns the stacked operators for
verification and reporting.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .grid import BibcMatrix, RadialNetwork, build_bibc, incidence
from .linearize import LinearGridModel, supporting_currents
from .lp import LpBuilder, LpProblem, LpSolution, solve_lp, warm_start
from .opf import GeneratorSpec, InfeasibleError, OperatingLimits, _series, add_network_rows, add_rows_from

log = logging.getLogger(__name__)

#: cap on the number of LP variables an assembly may create
MAX_VARIABLES = 5_000_000


@dataclass(frozen=True)
class StorageSpec:
    """Battery at ``bus``; powers in pu, energies in pu-hours.

    ``e_max=None`` marks the capacity as a sizing variable. ``cost`` is the
    capacity price in currency per pu-hour over the calendar life.
    """

    bus: int
    p_rated: float
    eta_ch: float = 1.0
    eta_dis: float = 1.0
    e0: float = 0.0
    e_min: float = 0.0
    e_max: float | None = None
    cost: float = 0.0
    calendar_life: float = 10.0
    name: str = ""

    def __post_init__(self):
        if not (0 < self.eta_ch <= 1 and 0 < self.eta_dis <= 1):
            raise ValueError("efficiencies must lie in (0, 1]")
        if self.p_rated <= 0:
            raise ValueError("p_rated must be positive")
        if self.e_max is not None and not (self.e_min <= self.e0 <= self.e_max):
            raise ValueError("need e_min <= e0 <= e_max")
        if self.e_max is None and self.e_min != 0:
            raise ValueError("sizing mode requires e_min = 0")


@dataclass(frozen=True)
class Horizon:
    N: int
    T: float = 1.0

    def __post_init__(self):
        if self.N < 1 or self.T <= 0:
            raise ValueError("horizon needs N >= 1 and T > 0")

    @property
    def hours(self):
        return self.N * self.T


@dataclass(frozen=True)
class StorageDynamics:
    B: np.ndarray
    S_x: sp.csr_matrix
    S_u: sp.csr_matrix

    def energy(self, e0, U):
        """Energy trajectory ``[e(1), ..., e(N)]`` for stacked inputs ``U``."""
        return self.S_x @ np.asarray(e0, dtype=float) + self.S_u @ np.asarray(U, dtype=float).ravel()


def build_storage_dynamics(fleet, horizon: Horizon) -> StorageDynamics:
    """Input matrix ``B = T[-diag(1/eta_dis), -diag(eta_ch)]`` and the stacked
    ``S_x`` (N identities) and block lower-triangular ``S_u``.

    ``U`` stacks ``[p_dis(k); p_ch(k)]`` for ``k = 0..N-1``.
    """
    ns = len(fleet)
    eta_dis = np.array([s.eta_dis for s in fleet], dtype=float)
    eta_ch = np.array([s.eta_ch for s in fleet], dtype=float)
    B = horizon.T * np.hstack([-np.diag(1.0 / eta_dis), -np.diag(eta_ch)]) if ns else np.zeros((0, 0))
    N = horizon.N
    S_x = sp.kron(np.ones((N, 1)), sp.identity(ns), format="csr")
    S_u = sp.kron(sp.csr_matrix(np.tril(np.ones((N, N)))), sp.csr_matrix(B), format="csr")
    return StorageDynamics(B, S_x, S_u)


def amortized_capacity_cost(cost_per_kwh, horizon: Horizon, calendar_life_years, base_power_va):
    """Capacity cost charged to a horizon, in currency per pu-hour.

    ``cost_per_kwh * horizon_days / (calendar_life_years * 365)`` scaled to
    the per-unit energy base.
    """
    days = horizon.hours / 24.0
    return cost_per_kwh * (base_power_va / 1e3) * days / (calendar_life_years * 365.0)


@dataclass
class MultiperiodSolution:
    status: str
    objective: float
    operational_cost: float
    storage_cost: float
    p_gen: np.ndarray
    q_gen: np.ndarray
    pl_p: np.ndarray
    pl_q: np.ndarray
    v: np.ndarray
    p_dis: np.ndarray
    p_ch: np.ndarray
    q_sto: np.ndarray
    energy: np.ndarray
    z: np.ndarray
    gen_names: list = field(default_factory=list)
    lp: LpSolution | None = field(default=None, repr=False)

    @property
    def losses(self):
        return self.pl_p + self.pl_q


@dataclass
class SizingResult:
    cost_point: float
    status: str
    z: np.ndarray
    objective: float
    operational_cost: float
    storage_cost: float
    solution: MultiperiodSolution | None = field(default=None, repr=False)
    runtime: float = 0.0
    buses: tuple = ()

    @property
    def total_capacity(self):
        return float(np.sum(self.z))


@dataclass
class MultiperiodCase:
    """Inputs of a multiperiod problem in per-unit.

    ``p_d``/``q_d`` are (N, n); ``p_max`` overrides generator upper bounds
    per period (N, ng), e.g. PV availability; ``cost`` is (N, ng) in currency
    per pu-hour.
    """

    net: RadialNetwork
    gens: list
    fleet: list
    limits: OperatingLimits
    p_d: np.ndarray
    q_d: np.ndarray
    horizon: Horizon
    cost: np.ndarray | None = None
    p_max: np.ndarray | None = None
    v_s: float = 1.0
    terminal_soc: bool = False
    throughput_cost: float = 1e-4

    def __post_init__(self):
        N, n, ng = self.horizon.N, self.net.n_bus, len(self.gens)
        self.p_d = _series(self.p_d, N, n, "p_d")
        self.q_d = _series(self.q_d, N, n, "q_d")
        self.cost = _series([g.cost for g in self.gens] if self.cost is None else self.cost, N, ng, "cost")
        self.p_max = _series([g.p_max for g in self.gens] if self.p_max is None else self.p_max, N, ng, "p_max")
        buses = [g.bus for g in self.gens] + [s.bus for s in self.fleet]
        if any(b < 0 or b >= n for b in buses):
            raise ValueError("generator or storage at a missing bus")


def _gen_bounds(case: MultiperiodCase):
    N = case.horizon.N
    ns = len(case.fleet)
    pr = np.array([s.p_rated for s in case.fleet], dtype=float)
    p_lo = np.hstack([np.broadcast_to([g.p_min for g in case.gens], (N, len(case.gens))), np.zeros((N, ns)), np.broadcast_to(-pr, (N, ns))])
    p_hi = np.hstack([np.minimum(case.p_max, [g.p_max for g in case.gens]), np.broadcast_to(pr, (N, ns)), np.zeros((N, ns))])
    # p_min may exceed a reduced availability cap
    p_lo[:, : len(case.gens)] = np.minimum(p_lo[:, : len(case.gens)], p_hi[:, : len(case.gens)])
    q_lo = np.hstack([np.broadcast_to([g.q_min for g in case.gens], (N, len(case.gens))), np.broadcast_to(-pr, (N, ns)), np.zeros((N, ns))])
    q_hi = np.hstack([np.broadcast_to([g.q_max for g in case.gens], (N, len(case.gens))), np.broadcast_to(pr, (N, ns)), np.zeros((N, ns))])
    return (p_lo, p_hi), (q_lo, q_hi)


def linear_model_for(case: MultiperiodCase, bibc: BibcMatrix | None = None, vm=None) -> LinearGridModel:
    """Linear model at ``vm`` (flat ``v_s`` by default).

    Supporting currents come from the peak availability of the ordinary
    generators only, so a case and its storage-free baseline share the same
    loss planes.
    """
    net = case.net
    bibc = bibc or build_bibc(net)
    cg = incidence(net.n_bus, [g.bus for g in case.gens])
    i0, i1 = supporting_currents(bibc, cg, np.maximum(case.p_max.max(axis=0), 0.0))
    vm = np.full(net.n_bus, abs(case.v_s)) if vm is None else vm
    return LinearGridModel.build(net, bibc, vm, i0, i1)


def assemble_multiperiod(
    case: MultiperiodCase,
    model: LinearGridModel | None = None,
    sizing: bool = False,
    storage_cost=None,
    relax=(),
) -> LpProblem:
    """Stack N copies of the single-period LP and add storage dynamics.

    With ``sizing`` the storage capacities become variables ``z`` with
    ``0 <= e(k) <= z`` and cost ``storage_cost`` (currency per pu-hour per
    storage, already amortised to the horizon) in the objective.
    """
    net, N, T = case.net, case.horizon.N, case.horizon.T
    fleet = case.fleet
    ns = len(fleet)
    ng_all = len(case.gens) + 2 * ns
    per_period = 2 * ng_all + 2 * net.n_branch + net.n_bus - 1 + ns
    if N * per_period > MAX_VARIABLES:
        raise MemoryError(f"problem would need {N * per_period} variables (cap {MAX_VARIABLES})")
    if model is None:
        model = linear_model_for(case)
    cg = incidence(net.n_bus, [g.bus for g in case.gens] + [s.bus for s in fleet] * 2)
    p_bounds, q_bounds = _gen_bounds(case)
    cost = T * np.hstack([case.cost, np.full((N, ns), case.throughput_cost), np.full((N, ns), -case.throughput_cost)])

    builder = LpBuilder()
    idx = add_network_rows(builder, model, cg, case.limits, case.p_d, case.q_d, abs(case.v_s), p_bounds, q_bounds, cost, net.slack, relax)
    if not ns:
        return builder.build()

    e0 = np.array([s.e0 for s in fleet], dtype=float)
    if sizing:
        e_lo, e_hi = np.zeros(ns), np.full(ns, np.inf)
    else:
        if any(s.e_max is None for s in fleet):
            raise ValueError("fixed-capacity run needs e_max on every storage")
        e_lo = np.array([s.e_min for s in fleet], dtype=float)
        e_hi = np.array([s.e_max for s in fleet], dtype=float)
    if case.terminal_soc:
        e_lo_t = np.broadcast_to(e_lo, (N, ns)).copy()
        e_lo_t[-1] = np.maximum(e_lo_t[-1], e0)
    else:
        e_lo_t = np.broadcast_to(e_lo, (N, ns))
    e = builder.add_vars("e", (N, ns), e_lo_t, np.broadcast_to(e_hi, (N, ns)))

    dyn = build_storage_dynamics(fleet, case.horizon)
    g0 = len(case.gens)
    u_idx = idx["p_gen"][:, g0:]  # (N, 2 ns): dis then ch
    shift = sp.eye(N, k=-1, format="csr")
    add_rows_from(
        builder,
        "energy",
        [(e, sp.kron(sp.identity(N) - shift, sp.identity(ns))), (u_idx, sp.kron(sp.identity(N), -sp.csr_matrix(dyn.B)))],
        np.concatenate([e0, np.zeros((N - 1) * ns)]),
        "eq",
    )
    if sizing:
        c_s = np.zeros(ns) if storage_cost is None else np.broadcast_to(np.asarray(storage_cost, dtype=float), (ns,))
        z = builder.add_vars("z", (ns,), 0.0, np.inf, c_s)
        add_rows_from(
            builder,
            "capacity",
            [(e, sp.identity(N * ns)), (z, -sp.kron(np.ones((N, 1)), sp.identity(ns)))],
            np.zeros(N * ns),
            "ub",
        )
    return builder.build()


def decode_multiperiod(case: MultiperiodCase, sol: LpSolution, sizing=False) -> MultiperiodSolution:
    ns, g0 = len(case.fleet), len(case.gens)
    N = case.horizon.N
    p = sol.value("p_gen")
    q = sol.value("q_gen")
    if ns:
        energy = sol.value("e")
        z = sol.value("z") if sizing else np.array([s.e_max for s in case.fleet], dtype=float)
    else:
        energy, z = np.zeros((N, 0)), np.zeros(0)
    storage_cost = float(sol.problem.c[sol.problem.blocks["z"].index] @ z) if sizing and ns else 0.0
    return MultiperiodSolution(
        status=sol.status,
        objective=sol.objective,
        operational_cost=sol.objective - storage_cost,
        storage_cost=storage_cost,
        p_gen=p[:, :g0],
        q_gen=q[:, :g0],
        pl_p=sol.value("pl_p"),
        pl_q=sol.value("pl_q"),
        v=sol.value("v"),
        p_dis=p[:, g0 : g0 + ns],
        p_ch=p[:, g0 + ns :],
        q_sto=q[:, g0 : g0 + ns],
        energy=energy,
        z=z,
        gen_names=[g.name for g in case.gens],
        lp=sol,
    )


def solve_multiperiod(case: MultiperiodCase, model=None, sizing=False, storage_cost=None, lp_options=None) -> MultiperiodSolution:
    prob = assemble_multiperiod(case, model, sizing, storage_cost)
    sol = solve_lp(prob, lp_options)
    if not sol.ok:
        raise InfeasibleError(f"multiperiod LP {sol.status}")
    return decode_multiperiod(case, sol, sizing)


def _sizing_point(case, model, c, lp_options, previous=None):
    lifes = np.array([s.calendar_life for s in case.fleet], dtype=float)
    c_s = amortized_capacity_cost(float(c), case.horizon, lifes, case.net.base_power)
    prob = assemble_multiperiod(case, model, sizing=True, storage_cost=c_s)
    t0 = time.perf_counter()
    sol = warm_start(prob, previous, lp_options) if (previous is not None and previous.ok) else solve_lp(prob, lp_options)
    rt = time.perf_counter() - t0
    buses = tuple(s.bus for s in case.fleet)
    if not sol.ok:
        log.warning("sizing point %s: %s", c, sol.status)
        nan = np.full(len(case.fleet), np.nan)
        return SizingResult(float(c), sol.status, nan, np.nan, np.nan, np.nan, None, rt, buses), sol
    mp = decode_multiperiod(case, sol, sizing=True)
    return SizingResult(float(c), sol.status, mp.z, mp.objective, mp.operational_cost, mp.storage_cost, mp, rt, buses), sol


def _cold_point(args):
    return _sizing_point(*args)[0]


def solve_sizing(case: MultiperiodCase, cost_points, model=None, lp_options=None, warm=True, workers=1) -> list:
    """Size every storage of ``case`` at each capacity price in ``cost_points``.

    Prices are in currency per kWh of capacity over the storage calendar
    life; they are amortised to the horizon before entering the objective.
    Sequentially, successive points reuse the previous optimal basis when
    ``warm``; with ``workers > 1`` the points are solved cold in separate
    processes. A failed point is recorded with its status and the sweep
    continues.
    """
    if model is None:
        model = linear_model_for(case)
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_cold_point, [(case, model, c, lp_options) for c in cost_points]))
    results, prev = [], None
    for c in cost_points:
        res, sol = _sizing_point(case, model, c, lp_options, prev if warm else None)
        results.append(res)
        if sol.ok:
            prev = sol
    return results


def baseline_case(case: MultiperiodCase) -> MultiperiodCase:
    """The same case with every storage removed."""
    return replace(case, fleet=[])


def compute_revenue(with_storage: SizingResult, baseline_objective: float) -> dict:
    """Operational saving of a storage configuration and its profit.

    ``revenue = J_baseline - J_operational``; ``profit`` subtracts the
    amortised capacity cost.
    """
    if with_storage.status != "optimal":
        return {"revenue": np.nan, "profit": np.nan}
    revenue = baseline_objective - with_storage.operational_cost
    return {"revenue": revenue, "profit": revenue - with_storage.storage_cost}


def placement_profile(result: SizingResult, net: RadialNetwork | None = None, tol: float = 1e-6) -> list:
    """Capacity per storage bus, largest first; zero-capacity buses flagged."""
    rows = []
    for bus, z in zip(result.buses, result.z):
        label = net.labels[bus] if net is not None else str(bus)
        rows.append({"bus": int(bus), "label": label, "capacity": float(z), "zero": bool(z <= tol)})
    return sorted(rows, key=lambda r: (-r["capacity"], r["bus"]))


def simultaneous_operation(sol: MultiperiodSolution) -> float:
    """Largest ``min(p_dis, -p_ch)`` over storages and periods."""
    if sol.p_dis.size == 0:
        return 0.0
    return float(np.max(np.minimum(sol.p_dis, -sol.p_ch)))
