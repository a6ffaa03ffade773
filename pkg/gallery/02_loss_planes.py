"""
Piecewise-linear branch losses
==============================

Each branch loss r*i**2 is replaced by the maximum of four planes that are
exact at 0, +-i0 and +-i1. Between the supporting currents the planes sit
above the parabola; past i1 they fall below it.
"""

import numpy as np

from fbsopf import LinearGridModel, build_bibc, incidence, load_scenario, pwl_loss_eval, supporting_currents

sc = load_scenario("bundled:dispatch")
kw = sc.period(0)
net, gens = kw["net"], kw["gens"]
bibc = build_bibc(net)
i0, i1 = supporting_currents(bibc, incidence(net.n_bus, [g.bus for g in gens]), [g.p_max for g in gens])
model = LinearGridModel.build(net, bibc, np.ones(net.n_bus), i0, i1)

l = 1  # the first cable after the transformer
br = net.branches[l]
print(f"{br.label}: r = {br.resistance:.4g} pu, i0 = {i0[l]:.3f}, i1 = {i1[l]:.3f}")


def loss_at(i):
    # inject at the receiving end so that branch l carries exactly i
    x = np.zeros(net.n_bus)
    x[br.to_bus] = i
    return pwl_loss_eval(model, x)[l]


print(f"{'i':>7} {'r i^2':>10} {'planes':>10} {'planes - exact':>15}")
for i in np.linspace(0, 1.3 * (i0[l] + i1[l]), 12):
    exact = br.resistance * i * i
    approx = loss_at(i) + 0.0
    print(f"{i:7.3f} {exact:10.5f} {approx:10.5f} {approx - exact:15.2e}")
