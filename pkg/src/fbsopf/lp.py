"""Solver-agnostic LP container and the HiGHS backend.

Problems are assembled with :class:`LpBuilder`, which allocates named
variable blocks and collects constraint triplets. The resulting
:class:`LpProblem` is the only thing a backend sees.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import highspy
import numpy as np
import scipy.sparse as sp

FEAS_TOL = 1e-6

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"
ERROR = "error"


@dataclass(frozen=True)
class Block:
    start: int
    shape: tuple

    @property
    def size(self):
        return int(np.prod(self.shape, dtype=int))

    @property
    def index(self):
        return np.arange(self.start, self.start + self.size).reshape(self.shape)


@dataclass
class LpProblem:
    """``min c'x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lb <= x <= ub``.

    ``blocks`` maps a variable kind to its contiguous index block;
    ``row_blocks`` maps a constraint family to ``(sense, start, count)``
    where ``sense`` is ``"eq"`` or ``"ub"``.
    """

    c: np.ndarray
    A_ub: sp.csr_matrix
    b_ub: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    blocks: dict = field(default_factory=dict)
    row_blocks: dict = field(default_factory=dict)

    @property
    def n_var(self):
        return len(self.c)

    @property
    def n_ub(self):
        return self.A_ub.shape[0]

    @property
    def n_eq(self):
        return self.A_eq.shape[0]

    @property
    def names(self) -> list:
        out = [None] * self.n_var
        for kind, blk in self.blocks.items():
            for pos, j in np.ndenumerate(blk.index):
                out[j] = kind + "".join(f".{p}" for p in pos)
        return out

    def validate(self):
        n = self.n_var
        problems = []
        if self.A_ub.shape != (len(self.b_ub), n):
            problems.append("inequality matrix shape mismatch")
        if self.A_eq.shape != (len(self.b_eq), n):
            problems.append("equality matrix shape mismatch")
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            problems.append("bound vector length mismatch")
        elif np.any(self.lb > self.ub):
            problems.append(f"lower bound above upper bound for {int(np.sum(self.lb > self.ub))} variables")
        for name, arr in (("c", self.c), ("b_ub", self.b_ub), ("b_eq", self.b_eq)):
            if not np.all(np.isfinite(arr)):
                problems.append(f"non-finite entries in {name}")
        for name, m in (("A_ub", self.A_ub), ("A_eq", self.A_eq)):
            if m.nnz and not np.all(np.isfinite(m.data)):
                problems.append(f"non-finite entries in {name}")
        covered = np.zeros(n, dtype=int)
        for blk in self.blocks.values():
            covered[blk.start : blk.start + blk.size] += 1
        if self.blocks and not np.all(covered == 1):
            problems.append("variable registry does not name every variable exactly once")
        if problems:
            raise ValueError("malformed LP: " + "; ".join(problems))

    def row_count(self, family) -> int:
        return self.row_blocks[family][2]

    def signature(self):
        """Shape fingerprint used to check warm-start compatibility."""
        return (
            self.n_var,
            self.n_ub,
            self.n_eq,
            tuple((k, b.start, b.shape) for k, b in self.blocks.items()),
        )


class LpBuilder:
    """Incremental assembly of an :class:`LpProblem` from triplets."""

    def __init__(self):
        self._n = 0
        self._blocks = {}
        self._lb, self._ub, self._c = [], [], []
        self._rows = {"eq": [], "ub": []}
        self._nrows = {"eq": 0, "ub": 0}
        self._rhs = {"eq": [], "ub": []}
        self._families = {}

    def add_vars(self, kind, shape, lb=-np.inf, ub=np.inf, cost=0.0) -> np.ndarray:
        if kind in self._blocks:
            raise ValueError(f"variable block {kind!r} already exists")
        shape = tuple(np.atleast_1d(shape).tolist()) if not isinstance(shape, tuple) else shape
        blk = Block(self._n, shape)
        self._blocks[kind] = blk
        size = blk.size
        self._n += size
        self._lb.append(np.broadcast_to(np.asarray(lb, dtype=float), shape).ravel())
        self._ub.append(np.broadcast_to(np.asarray(ub, dtype=float), shape).ravel())
        self._c.append(np.broadcast_to(np.asarray(cost, dtype=float), shape).ravel())
        return blk.index

    def add_rows(self, family, rows, cols, vals, rhs, sense="ub"):
        """Add ``len(rhs)`` rows; ``rows`` are local (0-based) row numbers.

        ``sense`` is ``"eq"``, ``"ub"`` (``<=``) or ``"lb"`` (``>=``, stored
        negated as ``<=``).
        """
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        vals = np.asarray(vals, dtype=float).ravel()
        if sense == "lb":
            vals, rhs, sense = -vals, -rhs, "ub"
        if sense not in ("eq", "ub"):
            raise ValueError(f"unknown sense {sense!r}")
        start = self._nrows[sense]
        rows = np.asarray(rows, dtype=np.int64).ravel() + start
        cols = np.asarray(cols, dtype=np.int64).ravel()
        self._rows[sense].append((rows, cols, vals))
        self._rhs[sense].append(rhs)
        self._nrows[sense] += len(rhs)
        if family in self._families:
            raise ValueError(f"row family {family!r} already exists")
        self._families[family] = (sense, start, len(rhs))

    def build(self) -> LpProblem:
        mats = {}
        for sense in ("eq", "ub"):
            trip = self._rows[sense]
            if trip:
                r = np.concatenate([t[0] for t in trip])
                cc = np.concatenate([t[1] for t in trip])
                v = np.concatenate([t[2] for t in trip])
            else:
                r = cc = np.zeros(0, dtype=np.int64)
                v = np.zeros(0)
            keep = v != 0
            mats[sense] = sp.csr_matrix((v[keep], (r[keep], cc[keep])), shape=(self._nrows[sense], self._n))
        cat = lambda xs: np.concatenate(xs) if xs else np.zeros(0)  # noqa: E731
        prob = LpProblem(
            c=cat(self._c),
            A_ub=mats["ub"],
            b_ub=cat(self._rhs["ub"]),
            A_eq=mats["eq"],
            b_eq=cat(self._rhs["eq"]),
            lb=cat(self._lb),
            ub=cat(self._ub),
            blocks=dict(self._blocks),
            row_blocks=dict(self._families),
        )
        prob.validate()
        return prob


@dataclass
class LpSolution:
    status: str
    objective: float = np.nan
    x: np.ndarray | None = None
    row_dual: np.ndarray | None = None
    basis: tuple | None = None
    iterations: int = 0
    runtime: float = 0.0
    max_violation: float = np.nan
    problem: LpProblem | None = field(default=None, repr=False)

    @property
    def ok(self):
        return self.status == OPTIMAL

    def value(self, kind) -> np.ndarray:
        blk = self.problem.blocks[kind]
        return self.x[blk.start : blk.start + blk.size].reshape(blk.shape)

    @property
    def primal(self) -> dict:
        if self.x is None:
            return {}
        return dict(zip(self.problem.names, self.x.tolist()))


def primal_violation(problem: LpProblem, x) -> float:
    """Largest row or bound violation, rows scaled by their max coefficient."""
    worst = 0.0
    for A, b, eq in ((problem.A_ub, problem.b_ub, False), (problem.A_eq, problem.b_eq, True)):
        if A.shape[0] == 0:
            continue
        res = A @ x - b
        res = np.abs(res) if eq else np.maximum(res, 0.0)
        scale = np.maximum(abs(A).max(axis=1).toarray().ravel(), 1.0)
        worst = max(worst, float(np.max(res / scale)))
    worst = max(worst, float(np.max(np.maximum(problem.lb - x, 0.0), initial=0.0)))
    worst = max(worst, float(np.max(np.maximum(x - problem.ub, 0.0), initial=0.0)))
    return worst


def _to_highs(problem: LpProblem) -> highspy.HighsLp:
    inf = highspy.kHighsInf
    A = sp.vstack([problem.A_eq, problem.A_ub], format="csc")
    A.sort_indices()
    lp = highspy.HighsLp()
    lp.num_col_ = problem.n_var
    lp.num_row_ = A.shape[0]
    lp.col_cost_ = problem.c
    lp.col_lower_ = np.where(np.isinf(problem.lb), -inf, problem.lb)
    lp.col_upper_ = np.where(np.isinf(problem.ub), inf, problem.ub)
    lp.row_lower_ = np.concatenate([problem.b_eq, np.full(problem.n_ub, -inf)])
    lp.row_upper_ = np.concatenate([problem.b_eq, problem.b_ub])
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = A.indptr
    lp.a_matrix_.index_ = A.indices
    lp.a_matrix_.value_ = A.data
    lp.a_matrix_.num_col_ = problem.n_var
    lp.a_matrix_.num_row_ = A.shape[0]
    return lp


_STATUS = {
    highspy.HighsModelStatus.kOptimal: OPTIMAL,
    highspy.HighsModelStatus.kInfeasible: INFEASIBLE,
    highspy.HighsModelStatus.kUnbounded: UNBOUNDED,
    highspy.HighsModelStatus.kIterationLimit: ITERATION_LIMIT,
    highspy.HighsModelStatus.kTimeLimit: ITERATION_LIMIT,
}


def _highs(options):
    h = highspy.Highs()
    h.setOptionValue("output_flag", bool(options.get("verbose", False)))
    h.setOptionValue("threads", 1)
    h.setOptionValue("random_seed", 0)
    h.setOptionValue("solver", options.get("method", "choose"))
    h.setOptionValue("primal_feasibility_tolerance", options.get("feasibility_tol", 1e-9))
    h.setOptionValue("dual_feasibility_tolerance", options.get("optimality_tol", 1e-9))
    if "time_limit" in options:
        h.setOptionValue("time_limit", float(options["time_limit"]))
    if "iteration_limit" in options:
        h.setOptionValue("simplex_iteration_limit", int(options["iteration_limit"]))
    return h


def solve_lp(problem: LpProblem, options: dict | None = None, basis=None) -> LpSolution:
    """Solve ``problem`` with HiGHS.

    ``options`` keys: ``method`` ("choose", "simplex", "ipm"), ``time_limit``
    (s), ``iteration_limit``, ``presolve`` (bool), ``verbose``. Infeasible
    or unbounded problems come back as a status, never as an exception.
    """
    options = dict(options or {})
    problem.validate()
    t0 = time.perf_counter()
    h = _highs(options)
    h.setOptionValue("presolve", "on" if options.get("presolve", basis is None) else "off")
    h.passModel(_to_highs(problem))
    if basis is not None:
        hb = h.getBasis()
        hb.col_status = [highspy.HighsBasisStatus(int(s)) for s in basis[0]]
        hb.row_status = [highspy.HighsBasisStatus(int(s)) for s in basis[1]]
        hb.valid = True
        h.setBasis(hb)
        h.setOptionValue("solver", "simplex")
    h.run()
    model_status = h.getModelStatus()
    status = _STATUS.get(model_status)
    if model_status == highspy.HighsModelStatus.kUnboundedOrInfeasible:
        # presolve cannot tell which; rerun without it
        h.setOptionValue("presolve", "off")
        h.setOptionValue("solver", "simplex")
        h.run()
        status = _STATUS.get(h.getModelStatus(), ERROR)
    if status is None:
        status = ERROR
    info = h.getInfo()
    sol = LpSolution(status, runtime=time.perf_counter() - t0, problem=problem)
    sol.iterations = int(info.simplex_iteration_count + max(info.ipm_iteration_count, 0))
    if status == OPTIMAL:
        hs = h.getSolution()
        x = np.asarray(hs.col_value, dtype=float)
        sol.x = x
        sol.objective = float(problem.c @ x)
        sol.row_dual = np.asarray(hs.row_dual, dtype=float)
        sol.max_violation = primal_violation(problem, x)
        hb = h.getBasis()
        if hb.valid:
            sol.basis = (
                np.array([int(s) for s in hb.col_status], dtype=np.int8),
                np.array([int(s) for s in hb.row_status], dtype=np.int8),
            )
    return sol


def warm_start(problem: LpProblem, previous: LpSolution, options: dict | None = None) -> LpSolution:
    """Re-solve ``problem`` starting from the basis of ``previous``.

    ``problem`` must have the same variable/row layout as the problem that
    produced ``previous``; costs, bounds and right-hand sides may differ.
    """
    if previous.problem is None or previous.problem.signature() != problem.signature():
        raise ValueError("warm start requires an identically shaped problem")
    if previous.basis is None:
        return solve_lp(problem, options)
    return solve_lp(problem, options, basis=previous.basis)


def duality_gap(problem: LpProblem, sol: LpSolution) -> float:
    """Relative gap between primal and dual objectives (HiGHS sign conventions)."""
    if not sol.ok:
        return np.nan
    y_eq = sol.row_dual[: problem.n_eq]
    y_ub = sol.row_dual[problem.n_eq :]
    # reduced costs give the bound multipliers
    d = problem.c - problem.A_eq.T @ y_eq - problem.A_ub.T @ y_ub
    x = sol.x
    bound_term = np.where(d > 0, d * np.where(np.isfinite(problem.lb), problem.lb, 0.0), 0.0) + np.where(
        d < 0, d * np.where(np.isfinite(problem.ub), problem.ub, 0.0), 0.0
    )
    dual_obj = problem.b_eq @ y_eq + problem.b_ub @ y_ub + bound_term.sum()
    primal_obj = problem.c @ x
    return abs(primal_obj - dual_obj) / max(1.0, abs(primal_obj))


def write_lp(problem: LpProblem, path) -> None:
    """Dump ``problem`` in CPLEX LP format (via HiGHS) for external solvers."""
    h = _highs({})
    lp = _to_highs(problem)
    lp.col_names_ = problem.names
    names = [f"r{i}" for i in range(problem.n_eq + problem.n_ub)]
    for fam, (sense, start, count) in problem.row_blocks.items():
        offset = start if sense == "eq" else problem.n_eq + start
        names[offset : offset + count] = [f"{fam}.{i}" for i in range(count)]
    lp.row_names_ = names
    h.passModel(lp)
    h.writeModel(str(path))
