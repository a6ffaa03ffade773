import copy
import json
from importlib import resources

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fbsopf.profiles import clear_sky, synth_profiles
from fbsopf.scenario import ScenarioError, load_scenario, read_series, save_scenario, scenario_from_dict, write_series


def bundled_doc(name):
    return json.loads(resources.files("fbsopf.data").joinpath(f"{name}.scenario.json").read_text())


def small_doc(steps=24, seed=3):
    doc = bundled_doc("storage_month")
    doc["horizon"]["steps"] = steps
    doc["series"] = {"synthetic": {"seed": seed, "days": max(1, -(-steps // 24))}}
    return doc


# -- profiles -------------------------------------------------------------------


def test_profiles_deterministic():
    a, b = synth_profiles(11, days=3), synth_profiles(11, days=3)
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])
    c = synth_profiles(12, days=3)
    assert not np.array_equal(a["pv"], c["pv"])


def test_profiles_shapes_and_envelopes():
    prof = synth_profiles(0)
    assert prof["load_p"].shape == (744, 18)
    assert prof["pv"].shape == prof["price"].shape == (744,)
    h = np.mod(prof["hours"], 24)
    assert np.all(prof["pv"][(h < 5.5) | (h > 20.5)] == 0.0)
    assert prof["pv"].max() <= 0.85 and prof["pv"].min() >= 0.0
    assert 0.015 <= prof["price"].min() and prof["price"].max() <= 0.09
    assert np.all((prof["load_p"] >= 0.1) & (prof["load_p"] <= 3.0))
    np.testing.assert_allclose(prof["load_q"], 0.2 * prof["load_p"])


def test_profiles_resolution():
    prof = synth_profiles(0, days=2, resolution=0.25)
    assert prof["pv"].shape == (192,)
    assert clear_sky(0.0) == 0.0 and clear_sky(13.0) == pytest.approx(0.85)


@pytest.mark.parametrize("kw", [{"days": 0}, {"resolution": 5.0}, {"resolution": -1.0}])
def test_profiles_errors(kw):
    with pytest.raises(ValueError):
        synth_profiles(0, **kw)


# -- series files ---------------------------------------------------------------


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=20))
@settings(max_examples=30)
def test_series_round_trip(values):
    stamps = [f"2016-07-01T{k:02d}:00" for k in range(len(values))]
    text = write_series(stamps, {"price": values})
    ts, cols, errs = read_series(text)
    assert not errs and ts == stamps and cols["price"] == [float(v) for v in values]


def test_series_errors():
    _, _, errs = read_series("time,a\n")
    assert errs and "timestamp" in errs[0]
    _, _, errs = read_series("timestamp,a,b\nx,1,\ny,2,3\n")
    assert any("gap" in e and "column 2" in e for e in errs)
    _, _, errs = read_series("timestamp,a\nx,abc\n")
    assert any("non-numeric" in e for e in errs)


# -- scenarios ------------------------------------------------------------------


def test_bundled_dispatch():
    sc = load_scenario("bundled:dispatch")
    assert sc.net.n_bus == 19 and sc.net.n_branch == 18
    gens = sc.generators()
    pv = [g for g in gens if g.bus != sc.net.slack]
    assert len(pv) == 18
    assert all(g.p_max == pytest.approx(0.3) and g.q_max == pytest.approx(0.1) for g in pv)
    p_d, q_d = sc.loads()
    assert p_d[0, 1] == pytest.approx(0.05) and q_d[0, 1] == pytest.approx(0.01)


def test_bundled_month():
    sc = load_scenario("bundled:storage_month")
    assert sc.n_steps == 744 and len(sc.cost_points()) == 20
    assert len(sc.fleet("centralized")) == 1 and len(sc.fleet("distributed")) == 18
    assert sc.cost_matrix().shape == (744, 19)
    pmax = sc.p_max_matrix()
    assert np.all(pmax[:, 1:] <= 0.3 * 0.85 + 1e-9)
    with pytest.raises((KeyError, ValueError)):
        sc.fleet("nowhere")


def test_short_series_rejected(tmp_path):
    sc = load_scenario("bundled:storage_month")
    cols = {k: v[:743] for k, v in sc.series.items()}
    text = write_series(sc.timestamps[:743], cols)
    lines = text.splitlines()
    # keep 744 timestamps but blank the last value of one column
    idx = 1 + list(cols).index("load_p:R3")
    header = lines[0].split(",")
    last = [sc.timestamps[743]] + ["1.0"] * (len(header) - 1)
    last[idx] = ""
    (tmp_path / "s.csv").write_text(text + ",".join(last) + "\n")
    doc = bundled_doc("storage_month")
    doc["series"] = {"file": "s.csv"}
    with pytest.raises(ScenarioError) as err:
        scenario_from_dict(doc, tmp_path)
    msg = str(err.value)
    assert f"series column {idx}" in msg and "743 values, expected 744" in msg


def test_unknown_bus_rejected():
    doc = bundled_doc("dispatch")
    doc["generators"][3]["bus"] = "R99"
    doc["loads"][0]["bus"] = "X1"
    with pytest.raises(ScenarioError) as err:
        scenario_from_dict(doc)
    assert "'R99'" in str(err.value) and "'X1'" in str(err.value)
    assert len(err.value.errors) == 2


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.update(schema_version=7),
        lambda d: d["horizon"].update(steps=0),
        lambda d: d["limits"].update(v_min=1.2),
        lambda d: d.update(grid="bundled:nope"),
        lambda d: d["generators"][0].update(p_min_kw=5000.0),
        lambda d: d.update(generators=[]),
    ],
)
def test_invalid_documents(mutate):
    doc = bundled_doc("dispatch")
    mutate(doc)
    with pytest.raises(ScenarioError):
        scenario_from_dict(doc)


def test_storage_validation():
    doc = small_doc()
    doc["storage_configs"]["centralized"][0]["eta_ch"] = 1.5
    doc["storage_configs"]["distributed"][2]["e_min_kwh"] = 1.0
    doc["storage_configs"]["distributed"][3]["bus"] = "R40"
    with pytest.raises(ScenarioError) as err:
        scenario_from_dict(doc)
    msg = str(err.value)
    assert "eta_ch" in msg and "e_min_kwh" in msg and "'R40'" in msg


def test_missing_files():
    with pytest.raises(ScenarioError):
        load_scenario("/nonexistent/file.json")
    with pytest.raises(ScenarioError):
        load_scenario("bundled:nothing")


@pytest.mark.parametrize("name", ["dispatch", "storage_month"])
def test_save_round_trip(tmp_path, name):
    sc = load_scenario(f"bundled:{name}")
    path = save_scenario(sc, tmp_path / "copy.json")
    back = load_scenario(path)
    assert back.hash == sc.hash
    assert (tmp_path / "copy.grid.json").exists()


def test_hash_sensitivity():
    doc = bundled_doc("dispatch")
    h0 = scenario_from_dict(doc).hash
    assert scenario_from_dict(copy.deepcopy(doc)).hash == h0
    doc["loads"][0]["p_kw"] = 5.5
    assert scenario_from_dict(doc).hash != h0


def test_with_seed():
    sc = scenario_from_dict(small_doc())
    a, b, c = sc.with_seed(4), sc.with_seed(4), sc.with_seed(5)
    assert a.hash == b.hash != c.hash
    np.testing.assert_array_equal(a.series["price"], b.series["price"])


def test_case_and_period():
    sc = scenario_from_dict(small_doc(steps=6))
    case = sc.case("distributed")
    assert case.horizon.N == 6 and len(case.fleet) == 18
    assert sc.case("centralized", n_steps=3).horizon.N == 3
    kw = sc.period(2)
    assert set(kw) == {"net", "gens", "limits", "p_d", "q_d", "v_s"}
    p_d, _ = sc.loads()
    np.testing.assert_allclose(kw["p_d"], p_d[2])
