import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fbsopf.grid import build_bibc, incidence
from fbsopf.linearize import LinearGridModel, pwl_loss_eval, supporting_currents
from fbsopf.lp import solve_lp
from fbsopf.opf import (
    DispatchSolution,
    GeneratorSpec,
    InfeasibleError,
    OperatingLimits,
    assemble_single_period,
    project_dispatch,
    run_fbs_opf,
)

from .conftest import chain, two_bus

TABLE_LOAD_P = np.r_[0.0, np.full(18, 0.05)]
TABLE_LOAD_Q = np.r_[0.0, np.full(18, 0.01)]


def table_gens(pv_max=0.3):
    return [GeneratorSpec(0, -10, 10, -10, 10, 3000.0, "feeder")] + [GeneratorSpec(j, 0, pv_max, -0.1, 0.1, 2000.0, f"pv{j}") for j in range(1, 19)]


def _model(net, gens, vm=1.0):
    bibc = build_bibc(net)
    cg = incidence(net.n_bus, [g.bus for g in gens])
    i0, i1 = supporting_currents(bibc, cg, [g.p_max for g in gens])
    return LinearGridModel.build(net, bibc, vm, i0, i1)


def test_generator_spec_checks():
    with pytest.raises(ValueError):
        GeneratorSpec(0, 1.0, 0.0)
    with pytest.raises(ValueError):
        GeneratorSpec(0, 0.0, 1.0, cost=-1.0)
    with pytest.raises(ValueError):
        OperatingLimits(np.array([1.1]), np.array([0.9]), np.array([1.0]))


def test_two_bus_constraint_counts():
    net = two_bus()
    gens = [GeneratorSpec(0, -1, 1, -1, 1, 1.0)]
    prob = assemble_single_period(net, _model(net, gens), gens, OperatingLimits.uniform(net), [0, 0.05], [0, 0.01])
    assert prob.row_count("balance") == 1
    assert prob.row_count("voltage") == 1
    assert prob.row_count("loss_p") + prob.row_count("loss_q") == 8
    assert prob.row_count("branch") == 2
    assert prob.n_var == 5
    assert prob.n_eq == 2 and prob.n_ub == 10


def test_zero_load_costs_nothing():
    net = two_bus()
    gens = [GeneratorSpec(0, -1, 1, -1, 1, 1.0)]
    sol = run_fbs_opf(net, gens, OperatingLimits.uniform(net), [0, 0], [0, 0])
    assert sol.objective == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(sol.p_gen, 0.0)


def test_cheap_local_pv_serves_load():
    net = two_bus(0.1, 0.05)
    # the feeder cannot take exports here, otherwise the cheap PV would sell upstream
    gens = [GeneratorSpec(0, 0, 1, -1, 1, 30.0, "feeder"), GeneratorSpec(1, 0, 0.3, -0.1, 0.1, 20.0, "pv")]
    sol = run_fbs_opf(net, gens, OperatingLimits.uniform(net), [0, 0.05], [0, 0.01], h_max=1)
    # local supply: no branch flow, no loss, the feeder idles
    assert sol.p_gen[1] == pytest.approx(0.05, abs=1e-9)
    assert sol.p_gen[0] == pytest.approx(0.0, abs=1e-9)
    assert sol.objective == pytest.approx(20.0 * 0.05, abs=1e-9)


def test_capped_pv_and_loss_accounting():
    """PV capped below the load: the feeder covers the rest plus the
    piecewise-linear loss of the implied branch flow."""
    net = two_bus(0.1, 0.05)
    gens = [GeneratorSpec(0, -1, 1, -1, 1, 30.0, "feeder"), GeneratorSpec(1, 0, 0.03, -0.1, 0.1, 20.0, "pv")]
    sol = run_fbs_opf(net, gens, OperatingLimits.uniform(net), [0, 0.05], [0, 0.01], h_max=1)
    model = _model(net, gens)
    assert sol.p_gen[1] == pytest.approx(0.03, abs=1e-9)
    loss = pwl_loss_eval(model, sol.p_inj).sum() + pwl_loss_eval(model, sol.q_inj).sum()
    assert sol.p_gen[0] == pytest.approx(0.02 + loss, abs=1e-9)
    assert sol.losses.sum() == pytest.approx(loss, abs=1e-9)


def test_table_scenario_maximises_pv(cigre):
    gens = table_gens()
    lim = OperatingLimits.uniform(cigre)
    sol = run_fbs_opf(cigre, gens, lim, TABLE_LOAD_P, TABLE_LOAD_Q, h_max=1)
    pv = sol.p_gen[1:]
    assert pv.sum() < 5.4 - 1e-6  # curtailed
    # a branch-current row binds
    model = _model(cigre, gens)
    flows = model.Br @ sol.p_inj
    assert np.any(np.abs(np.abs(flows) - lim.i_max) < 1e-7)
    # a cheaper objective exists only by violating limits: relaxing them raises the infeed
    relaxed = run_fbs_opf(cigre, gens, OperatingLimits.uniform(cigre, 0.5, 2.0, i_max=100.0), TABLE_LOAD_P, TABLE_LOAD_Q, h_max=1)
    assert relaxed.p_gen[1:].sum() == pytest.approx(5.4)


def test_generous_limits_self_consistent(cigre):
    lim = OperatingLimits.uniform(cigre, 0.5, 1.5, i_max=100.0)
    gens = table_gens(0.03)
    a = run_fbs_opf(cigre, gens, lim, TABLE_LOAD_P, TABLE_LOAD_Q, epsilon=1e-14, h_max=1).objective
    b = run_fbs_opf(cigre, gens, lim, TABLE_LOAD_P, TABLE_LOAD_Q, epsilon=1e-14, h_max=4).objective
    assert abs(a - b) / abs(b) <= 1e-4


def test_iteration_history(cigre):
    sol = run_fbs_opf(cigre, table_gens(), OperatingLimits.uniform(cigre), TABLE_LOAD_P, TABLE_LOAD_Q, epsilon=1e-4, h_max=10)
    assert sol.converged and sol.mae <= 1e-4
    assert len(sol.history) == sol.iterations
    np.testing.assert_allclose(sol.history[0]["vm_used"], 1.0)
    with pytest.raises(ValueError):
        run_fbs_opf(cigre, table_gens(), OperatingLimits.uniform(cigre), TABLE_LOAD_P, TABLE_LOAD_Q, epsilon=0.0)


def test_infeasibility_diagnosis(cigre):
    with pytest.raises(InfeasibleError) as exc:
        run_fbs_opf(cigre, [GeneratorSpec(0, -0.1, 0.1, -1, 1, 1.0)], OperatingLimits.uniform(cigre), TABLE_LOAD_P, TABLE_LOAD_Q)
    assert exc.value.families == ("balance",)
    with pytest.raises(InfeasibleError) as exc:
        run_fbs_opf(cigre, [GeneratorSpec(0, -10, 10, -1, 1, 1.0)], OperatingLimits.uniform(cigre, 0.99, 1.1), TABLE_LOAD_P, TABLE_LOAD_Q)
    assert exc.value.families == ("voltage",)
    with pytest.raises(InfeasibleError) as exc:
        run_fbs_opf(cigre, [GeneratorSpec(0, -10, 10, -1, 1, 1.0)], OperatingLimits.uniform(cigre, 0.5, 1.5), TABLE_LOAD_P * 4, TABLE_LOAD_Q)
    assert exc.value.families == ("branch",)


def test_projection_reports():
    net = two_bus(0.1, 0.05, i_max=0.5)
    lim = OperatingLimits.uniform(net)
    zero = DispatchSolution(np.zeros(1), np.zeros(1), np.zeros(1), np.zeros(1), np.ones(1), 0.0, p_inj=np.zeros(2), q_inj=np.zeros(2))
    assert project_dispatch(net, zero, lim).ok
    over = DispatchSolution(np.zeros(1), np.zeros(1), np.zeros(1), np.zeros(1), np.ones(1), 0.0, p_inj=np.array([0.0, 0.8]), q_inj=np.zeros(2))
    rep = project_dispatch(net, over, lim)
    kinds = {(v.kind, v.element) for v in rep.violations}
    assert ("i_max", 0) in kinds
    assert all(v.magnitude > 0 for v in rep.violations)


def test_conservative_projection(cigre):
    lim = OperatingLimits.uniform(cigre)
    sol = run_fbs_opf(cigre, table_gens(), lim, TABLE_LOAD_P, TABLE_LOAD_Q, h_max=1)
    rep = project_dispatch(cigre, sol, lim)
    assert np.all(rep.vm <= rep.lp_voltage + 1e-6)
    assert np.all(rep.vm <= lim.v_max + 1e-9)


@given(
    st.integers(2, 8),
    st.lists(st.floats(0.0, 0.1), min_size=8, max_size=8),
    st.lists(st.floats(0.0, 0.2), min_size=8, max_size=8),
)
def test_lp_solution_invariants(n, loads, pv):
    """Balance holds with the LP losses, LP voltages follow the linear model,
    and the loss variables sit on the loss epigraph."""
    net = chain(n, 0.02, 0.01, i_max=5.0)
    gens = [GeneratorSpec(0, -10, 10, -10, 10, 3.0)] + [GeneratorSpec(j, 0, pv[j], -0.05, 0.05, 1.0) for j in range(1, n)]
    p_d = np.r_[0.0, loads[: n - 1]]
    q_d = 0.2 * p_d
    model = _model(net, gens)
    lim = OperatingLimits.uniform(net, 0.8, 1.2)
    sol = solve_lp(assemble_single_period(net, model, gens, lim, p_d, q_d))
    assert sol.ok
    p = sol.value("p_gen")[0]
    q = sol.value("q_gen")[0]
    pl = sol.value("pl_p")[0] + sol.value("pl_q")[0]
    assert p.sum() == pytest.approx(p_d.sum() + pl.sum(), abs=1e-8)
    cg = incidence(n, [g.bus for g in gens])
    x_p, x_q = cg @ p - p_d, cg @ q - q_d
    np.testing.assert_allclose(sol.value("v")[0], model.voltage(x_p, x_q), atol=1e-8)
    assert np.all(sol.value("pl_p")[0] >= pwl_loss_eval(model, x_p) - 1e-8)
    assert np.all(sol.value("pl_q")[0] >= pwl_loss_eval(model, x_q) - 1e-8)
    assert sol.max_violation < 1e-7
