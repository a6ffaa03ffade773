import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fbsopf.lp import LpBuilder, duality_gap, primal_violation, solve_lp, warm_start, write_lp


def single(lb=-np.inf, ub=np.inf, cost=1.0, rows=()):
    b = LpBuilder()
    b.add_vars("x", (1,), lb, ub, cost)
    for fam, val, rhs, sense in rows:
        b.add_rows(fam, [0], [0], [val], [rhs], sense)
    return b.build()


def test_min_x_at_least_three():
    sol = solve_lp(single(rows=[("low", 1.0, 3.0, "lb")]))
    assert sol.ok
    assert sol.x[0] == pytest.approx(3.0) and sol.objective == pytest.approx(3.0)


def test_max_x_capped():
    sol = solve_lp(single(lb=0.0, cost=-1.0, rows=[("cap", 1.0, 5.0, "ub")]))
    assert sol.x[0] == pytest.approx(5.0)


def test_status_reporting():
    assert solve_lp(single(cost=-1.0)).status == "unbounded"
    bad = single(rows=[("a", 1.0, 3.0, "lb"), ("b", 1.0, 1.0, "ub")])
    assert solve_lp(bad).status == "infeasible"


def test_malformed_rejected():
    b = LpBuilder()
    b.add_vars("x", (2,), [0, 5], [1, 4])
    with pytest.raises(ValueError, match="malformed"):
        b.build()
    b = LpBuilder()
    b.add_vars("x", (1,))
    with pytest.raises(ValueError):
        b.add_vars("x", (1,))
    b.add_rows("r", [0], [0], [1.0], [1.0])
    with pytest.raises(ValueError):
        b.add_rows("r", [0], [0], [1.0], [1.0])
    with pytest.raises(ValueError):
        b.add_rows("s", [0], [0], [1.0], [1.0], sense="ge")


def test_names_and_families():
    b = LpBuilder()
    b.add_vars("p", (2, 2))
    b.add_vars("v", (3,))
    b.add_rows("bal", [0, 0], [0, 1], [1.0, 1.0], [1.0], "eq")
    prob = b.build()
    assert prob.names[:2] == ["p.0.0", "p.0.1"] and prob.names[4] == "v.0"
    assert prob.row_count("bal") == 1


def _transport(rhs_shift=0.0, cost_shift=0.0):
    b = LpBuilder()
    x = b.add_vars("x", (3,), 0.0, 10.0, np.array([1.0, 2.0, 3.0]) + cost_shift)
    b.add_rows("demand", [0, 0, 0], x, [1.0, 1.0, 1.0], [12.0 + rhs_shift], "eq")
    b.add_rows("pair", [0, 0], x[:2], [1.0, 1.0], [11.0], "ub")
    return b.build()


def test_idempotent_and_warm_start():
    prob = _transport()
    a, b = solve_lp(prob), solve_lp(prob)
    np.testing.assert_array_equal(a.x, b.x)
    again = warm_start(prob, a)
    assert again.iterations == 0
    assert again.objective == pytest.approx(a.objective)
    shifted = _transport(1e-9)
    assert warm_start(shifted, a).objective == pytest.approx(solve_lp(shifted).objective, abs=1e-6)
    costlier = _transport(cost_shift=0.05)
    assert warm_start(costlier, a).objective == pytest.approx(solve_lp(costlier).objective, rel=1e-12)
    b2 = LpBuilder()
    b2.add_vars("y", (2,))
    with pytest.raises(ValueError):
        warm_start(b2.build(), a)


def test_duality_gap_and_violation():
    prob = _transport()
    sol = solve_lp(prob)
    assert duality_gap(prob, sol) < 1e-9
    assert primal_violation(prob, sol.x) < 1e-9
    assert primal_violation(prob, np.zeros(3)) == pytest.approx(12.0)


def test_write_lp(tmp_path):
    path = tmp_path / "m.lp"
    write_lp(_transport(), path)
    lines = path.read_text().splitlines()
    assert "min" in lines
    assert any(line.strip().startswith("demand.0:") and "x.2" in line for line in lines)
    assert any(line.strip().startswith("pair.0:") for line in lines)


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.floats(0.5, 20))
def test_box_lp_oracle(c, cap):
    """min c'x on a box with sum x <= cap: compare against vertex enumeration."""
    import itertools

    b = LpBuilder()
    x = b.add_vars("x", (3,), 0.0, 4.0, c)
    b.add_rows("sum", [0, 0, 0], x, [1.0] * 3, [cap], "ub")
    sol = solve_lp(b.build())
    best = np.inf
    # the optimum sits at a vertex of box + cut; greedy in cost order is exact here
    for order in itertools.permutations(range(3)):
        left = cap
        val = np.zeros(3)
        for j in order:
            if c[j] < 0:
                val[j] = min(4.0, left)
                left -= val[j]
        best = min(best, float(np.dot(c, val)))
    assert sol.objective == pytest.approx(best, abs=1e-7)
