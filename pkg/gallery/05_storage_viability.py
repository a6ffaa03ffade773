"""
Centralised or distributed storage?
===================================

Size storage for one week of the bundled July scenario across a range of
capacity costs. The household batteries sit next to the PV they absorb, so
they keep earning at costs where the single feeder battery no longer does.
The full 744-step study is ``fbsopf sweep``; it takes a few minutes.
"""

import numpy as np

from fbsopf import load_scenario, run_viability_study

sc = load_scenario("bundled:storage_month")
costs = np.linspace(25, 300, 8)
reports = {cfg: run_viability_study(sc, cfg, costs, n_steps=168) for cfg in ("centralized", "distributed")}

print(f"{'cost/kWh':>9} | {'central kWh':>11} {'revenue':>8} | {'distrib kWh':>11} {'revenue':>8}")
for k, c in enumerate(costs):
    rc, rd = reports["centralized"].rows[k], reports["distributed"].rows[k]
    # round away solver noise so an unused battery prints as 0.00, not -0.00
    rev_c, rev_d = round(rc["revenue"], 6) + 0.0, round(rd["revenue"], 6) + 0.0
    print(f"{c:9.1f} | {rc['capacity_kwh']:11.1f} {rev_c:8.2f} | {rd['capacity_kwh']:11.1f} {rev_d:8.2f}")

for cfg, rep in reports.items():
    print(f"{cfg}: break-even at {rep.summary['break_even_per_kwh']:.1f} per kWh")

top = reports["distributed"].summary.get("placement", [])
print("distributed placement at the highest viable cost:")
for p in top:
    if not p["zero"]:
        print(f"  {sc.net.labels[p['bus']]}: {p['capacity_kwh']:.1f} kWh")
