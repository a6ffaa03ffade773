"""Regenerate the bundled scenario documents and the synthetic series file.

Run from the repository root: ``python tools/build_bundled_scenarios.py``.
"""

import json
from pathlib import Path

from fbsopf.grid import cigre_lv
from fbsopf.scenario import synthetic_columns, write_series

DATA = Path(__file__).resolve().parents[1] / "src" / "fbsopf" / "data"
SERIES_SEED = 7
COST_POINTS = [25.0 + 275.0 * i / 19 for i in range(20)]


def pv_unit(lab, **extra):
    return {"name": f"pv_{lab}", "bus": lab, "p_min_kw": 0.0, "p_max_kw": 30.0, "q_min_kvar": -10.0, "q_max_kvar": 10.0, **extra}


def storage(lab, kva):
    return {"name": f"bat_{lab}", "bus": lab, "p_rated_kva": kva, "eta_ch": 0.88, "eta_dis": 0.88, "e0_kwh": 0.0, "e_min_kwh": 0.0, "e_max_kwh": None, "calendar_life_years": 10.0}


def main():
    net = cigre_lv()
    houses = net.labels[1:]
    feeder = {"name": "feeder", "bus": "R0", "p_min_kw": -1000.0, "p_max_kw": 1000.0, "q_min_kvar": -1000.0, "q_max_kvar": 1000.0}

    dispatch = {
        "schema_version": 1,
        "name": "cigre-lv-dispatch",
        "description": "Single-period dispatch: 5 kW / 1 kvar per household, 30 kW PV per household at 20/kWh, feeder at 30/kWh.",
        "grid": "bundled:cigre_lv",
        "horizon": {"steps": 1, "step_hours": 1.0},
        "v_slack": 1.0,
        "limits": {"v_min": 0.9, "v_max": 1.1},
        "generators": [dict(feeder, cost_per_kwh=30.0)] + [pv_unit(lab, cost_per_kwh=20.0) for lab in houses],
        "loads": [{"bus": lab, "p_kw": 5.0, "q_kvar": 1.0} for lab in houses],
    }
    (DATA / "dispatch.scenario.json").write_text(json.dumps(dispatch, indent=2) + "\n")

    stamps, cols = synthetic_columns(net, seed=SERIES_SEED, days=31, resolution_h=1.0, start="2016-07-01T00:00", pv_peak_kw=30.0)
    cols = {k: [round(float(x), 6) for x in v] for k, v in cols.items()}
    (DATA / "july_series.csv").write_text(write_series(stamps, cols))
    month = {
        "schema_version": 1,
        "name": "cigre-lv-storage-month",
        "description": f"31 days at 1 h, synthetic series (seed {SERIES_SEED}, rounded to 6 decimals); own PV is free, the feeder buys and sells at the spot price.",
        "grid": "bundled:cigre_lv",
        "horizon": {"steps": 744, "step_hours": 1.0},
        "v_slack": 1.0,
        "limits": {"v_min": 0.9, "v_max": 1.1},
        "series": {"file": "bundled:july_series.csv", "seed": SERIES_SEED},
        "generators": [dict(feeder, cost_per_kwh="price")] + [pv_unit(lab, cost_per_kwh=0.0, availability=f"pv:{lab}") for lab in houses],
        "loads": [{"bus": lab, "p_kw": f"load_p:{lab}", "q_kvar": f"load_q:{lab}"} for lab in houses],
        "storage": [],
        "storage_configs": {
            "centralized": [storage("R0", 180.0)],
            "distributed": [storage(lab, 10.0) for lab in houses],
        },
        "study": {"cost_points_per_kwh": COST_POINTS},
        "options": {"terminal_soc": False},
    }
    (DATA / "storage_month.scenario.json").write_text(json.dumps(month, indent=2) + "\n")


if __name__ == "__main__":
    main()
