import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fbsopf.grid import build_bibc, incidence
from fbsopf.linearize import (
    LinearGridModel,
    build_branch_sensitivity,
    build_loss_planes,
    build_voltage_sensitivity,
    pwl_loss_eval,
    supporting_currents,
)
from fbsopf.powerflow import InjectionSet, solve_power_flow

from .conftest import chain, two_bus


def test_two_bus_voltage_sensitivity():
    net = two_bus(0.1, 0.05)
    bv = build_voltage_sensitivity(net, build_bibc(net), np.ones(2))
    np.testing.assert_allclose(bv, [[0.0, 0.1, 0.0, 0.05]])


def test_voltage_scaling(cigre):
    bibc = build_bibc(cigre)
    one = build_voltage_sensitivity(cigre, bibc, 1.0)
    low = build_voltage_sensitivity(cigre, bibc, 0.9)
    np.testing.assert_allclose(low, one / 0.9, rtol=1e-14)
    with pytest.raises(ValueError):
        build_voltage_sensitivity(cigre, bibc, 0.0)


def test_predicted_voltage_close_to_exact(cigre):
    p = np.r_[0.0, np.full(18, -0.05)]
    q = np.r_[0.0, np.full(18, -0.01)]
    bibc = build_bibc(cigre)
    model = LinearGridModel.build(cigre, bibc, 1.0, np.full(18, 0.1), np.full(18, 0.3))
    pf = solve_power_flow(cigre, InjectionSet(p, q))
    assert np.max(np.abs(model.voltage(p, q) - pf.vm[1:])) <= 5e-3


def test_branch_sensitivity_examples(cigre):
    net = chain(3)
    bibc = build_bibc(net)
    np.testing.assert_array_equal(build_branch_sensitivity(bibc, 1.0), bibc.full)
    np.testing.assert_allclose(build_branch_sensitivity(bibc, 1.0) @ [0, 0, 0.2], [0.2, 0.2])

def test_branch_currents_against_exact(cigre):
    """30 kW PV less 5 kW / 1 kvar load per house, sensitivities at the
    operating voltages; the flat-voltage model overestimates by the rise."""
    bibc = build_bibc(cigre)
    p = np.r_[0.0, np.full(18, 0.25)]
    q = np.r_[0.0, np.full(18, -0.01)]
    pf = solve_power_flow(cigre, InjectionSet(p, q))
    exact = np.abs(pf.branch_current)
    lin = np.abs(build_branch_sensitivity(bibc, pf.vm) @ p)
    assert np.max(np.abs(lin - exact) / exact) <= 0.05
    flat = np.abs(build_branch_sensitivity(bibc, 1.0) @ p)
    assert np.all(flat >= exact)


def test_loss_plane_hand_values():
    net = two_bus(0.1, 0.0)
    L0, L1, b = build_loss_planes(net, build_bibc(net), 1.0, [0.25], [0.75])
    assert L0[0, 1] == pytest.approx(0.025)
    assert L1[0, 1] == pytest.approx(0.1)
    assert b[0] == pytest.approx(-0.01875)


def _model(net, i0, i1, vm=1.0):
    return LinearGridModel.build(net, build_bibc(net), vm, i0, i1)


def test_loss_hand_evaluation():
    m = _model(two_bus(0.1, 0.0), [0.25], [0.75])
    assert pwl_loss_eval(m, [0, 0])[0] == 0.0
    assert pwl_loss_eval(m, [0, 0.5])[0] == pytest.approx(0.03125)
    assert pwl_loss_eval(m, [0, 1.0])[0] == pytest.approx(0.08125)
    assert pwl_loss_eval(m, [0, 0.25])[0] == pytest.approx(0.1 * 0.25**2)
    assert pwl_loss_eval(m, [0, -0.75])[0] == pytest.approx(0.1 * 0.75**2)


def test_supporting_currents(cigre):
    bibc = build_bibc(cigre)
    cg = incidence(19, range(1, 19))
    i0, i1 = supporting_currents(bibc, cg, np.full(18, 0.3))
    assert i0[0] == pytest.approx(0.25 * 18 * 0.3)
    assert i1[0] == pytest.approx(0.75 * 18 * 0.3)
    # no generation anywhere: the floor keeps planes well defined
    i0, i1 = supporting_currents(bibc, cg, np.zeros(18))
    assert np.all(i0 > 0) and np.all(i1 > 0)
    with pytest.raises(ValueError):
        build_loss_planes(cigre, bibc, 1.0, np.zeros(18), i1)


@given(st.floats(1e-3, 1.0), st.floats(0.01, 2.0), st.floats(1.1, 5.0), st.floats(-1.0, 1.0))
def test_pwl_secant_geometry(r, i0, ratio, u):
    """Exact at the breakpoints, above r i^2 inside (0, i1), below past i0 + i1."""
    i1 = ratio * i0
    m = _model(two_bus(r, 0.0), [i0], [i1])
    exact = lambda i: r * i * i  # noqa: E731
    for i in (0.0, i0, -i0, i1, -i1):
        assert pwl_loss_eval(m, [0, i])[0] == pytest.approx(exact(i), abs=1e-12)
    inside = abs(u) * i1 * (1 - 1e-9) + 1e-12
    assert pwl_loss_eval(m, [0, inside])[0] >= exact(inside) - 1e-12
    beyond = (i0 + i1) * (1.0 + abs(u))
    assert pwl_loss_eval(m, [0, beyond])[0] <= exact(beyond) + 1e-12


@given(st.lists(st.floats(-0.3, 0.3), min_size=19, max_size=19))
def test_pwl_loss_nonnegative_and_even(cigre, x):
    bibc = build_bibc(cigre)
    i0, i1 = supporting_currents(bibc, incidence(19, range(1, 19)), np.full(18, 0.3))
    m = LinearGridModel.build(cigre, bibc, 1.0, i0, i1)
    x = np.asarray(x)
    loss = pwl_loss_eval(m, x)
    assert np.all(loss >= -1e-15)
    np.testing.assert_allclose(loss, pwl_loss_eval(m, -x), atol=1e-15)
