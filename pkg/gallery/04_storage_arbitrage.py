"""
When does a battery pay for itself?
===================================

A single battery behind a 2-bus feeder sees a cheap and an expensive hour.
With charge and discharge efficiencies of 0.88 it only cycles once the
price ratio beats 1 / 0.88**2, about 1.29.
"""

import numpy as np

from fbsopf import GeneratorSpec, Horizon, MultiperiodCase, OperatingLimits, StorageSpec, solve_sizing
from fbsopf.grid import Branch, Bus, RadialNetwork

net = RadialNetwork((Bus(0, "slack"), Bus(1, "load")), (Branch(0, 1, 1e-4, 1e-4, 100.0),))
battery = StorageSpec(1, p_rated=1.0, eta_ch=0.88, eta_dis=0.88)
feeder = GeneratorSpec(0, -10, 10, -10, 10, 0.0, "feeder")

print(f"{'ratio':>6} {'charged':>8} {'discharged':>11} {'capacity':>9}")
for ratio in np.linspace(1.1, 1.5, 9):
    case = MultiperiodCase(
        net, [feeder], [battery], OperatingLimits.uniform(net),
        np.array([[0, 0.5], [0, 0.5]]), np.zeros((2, 2)), Horizon(2),
        cost=np.array([[1.0], [ratio]]),
    )
    res = solve_sizing(case, [0.0])[0]
    sol = res.solution
    print(f"{ratio:6.3f} {-sol.p_ch.sum() + 0.0:8.3f} {sol.p_dis.sum() + 0.0:11.3f} {res.z[0]:9.3f}")
print(f"threshold 1/0.88^2 = {1 / 0.88**2:.4f}")
