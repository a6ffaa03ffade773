"""
Exact power flow on the CIGRE residential feeder
================================================

Solve the feeder twice: once with only the household loads, once with every
rooftop PV unit at its 30 kW cap. The second case pushes power back towards
the transformer and lifts the voltages along the feeder.
"""

import numpy as np

from fbsopf import InjectionSet, load_scenario, solve_power_flow

sc = load_scenario("bundled:dispatch")
kw = sc.period(0)
net = kw["net"]

# net injections: generation minus demand
loads_only = InjectionSet(-kw["p_d"], -kw["q_d"])
pv = np.zeros(net.n_bus)
for g in kw["gens"]:
    if g.bus != net.slack:
        pv[g.bus] = g.p_max
with_pv = InjectionSet(pv - kw["p_d"], -kw["q_d"])

a = solve_power_flow(net, loads_only, kw["v_s"])
b = solve_power_flow(net, with_pv, kw["v_s"])

print(f"{'bus':>5} {'|v| loads':>10} {'|v| + PV':>10}")
for label, va, vb in zip(net.labels, a.vm, b.vm):
    print(f"{label:>5} {va:10.4f} {vb:10.4f}")

print(f"\nsweeps: {a.iterations} and {b.iterations}")
print(f"losses: {a.loss * net.base_power / 1e3:.2f} kW and {b.loss * net.base_power / 1e3:.2f} kW")
worst = np.argmax(np.abs(b.branch_current) / [br.current_limit for br in net.branches])
print(f"most loaded branch with PV: {net.branches[worst].label}, "
      f"{abs(b.branch_current[worst]) * net.base_current:.0f} A of {net.branches[worst].current_limit * net.base_current:.0f} A")
