"""Scenario files: grid reference, generators, storage, loads and time series.

A scenario is a JSON document (SI units and currency) plus an optional
series file; see ``docs/formats.md`` for the exact layout. Everything is
validated in one pass and all problems are reported together.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from importlib import resources
from pathlib import Path

import numpy as np

from .grid import RadialNetwork, network_from_dict, network_to_dict, validate_network
from .opf import GeneratorSpec, OperatingLimits
from .profiles import synth_profiles
from .storage import Horizon, MultiperiodCase, StorageSpec

SCENARIO_SCHEMA_VERSION = 1
TIME_FORMAT = "%Y-%m-%dT%H:%M"
SERIES_KINDS = ("price", "load_p", "load_q", "pv")


class ScenarioError(ValueError):
    """All validation problems of a scenario document."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.errors))


# -- series files -------------------------------------------------------------


def read_series(text: str):
    """Parse a series file. Returns ``(timestamps, columns, errors)``.

    ``columns`` maps the header name to the list of parsed values; a column
    stops at its first empty cell, so a short column is reported by length.
    """
    errors = []
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or not rows[0] or rows[0][0] != "timestamp":
        return [], {}, ["series file: first header field must be 'timestamp'"]
    header = rows[0]
    if len(set(header)) != len(header):
        errors.append("series file: duplicate column names")
    stamps = []
    cols = {name: [] for name in header[1:]}
    ended = {name: False for name in header[1:]}
    for r, row in enumerate(rows[1:], start=1):
        if not row:
            continue
        stamps.append(row[0])
        for c, name in enumerate(header[1:], start=1):
            cell = row[c].strip() if c < len(row) else ""
            if cell == "":
                ended[name] = True
                continue
            if ended[name]:
                errors.append(f"series column {c} ({name!r}): gap before row {r}")
                continue
            try:
                cols[name].append(float(cell))
            except ValueError:
                errors.append(f"series column {c} ({name!r}): non-numeric value {cell!r} at row {r}")
    return stamps, cols, errors


def write_series(timestamps, columns: dict) -> str:
    """Serialise series columns; floats use the shortest exact repr."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = list(columns)
    w.writerow(["timestamp"] + names)
    for k, ts in enumerate(timestamps):
        w.writerow([ts] + [repr(float(columns[name][k])) for name in names])
    return buf.getvalue()


def synthetic_columns(net: RadialNetwork, seed=0, days=31, resolution_h=1.0, start="2016-07-01T00:00", pv_peak_kw=30.0):
    """Series columns for every non-slack bus from :func:`synth_profiles`."""
    t0 = datetime.strptime(start, TIME_FORMAT)
    buses = [lab for i, lab in enumerate(net.labels) if i != net.slack]
    prof = synth_profiles(seed, days, resolution_h, len(buses), weekday0=t0.weekday())
    N = len(prof["price"])
    stamps = [(t0 + timedelta(hours=k * resolution_h)).strftime(TIME_FORMAT) for k in range(N)]
    cols = {"price": prof["price"]}
    for j, lab in enumerate(buses):
        cols[f"load_p:{lab}"] = prof["load_p"][:, j]
    for j, lab in enumerate(buses):
        cols[f"load_q:{lab}"] = prof["load_q"][:, j]
    for lab in buses:
        cols[f"pv:{lab}"] = pv_peak_kw * prof["pv"]
    return stamps, cols


def _canonical(obj):
    """Round floats to 12 significant digits so unit round-trips hash equal."""
    if isinstance(obj, float):
        return float(f"{obj:.12g}")
    if isinstance(obj, dict):
        return {k: _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    return obj


# -- the scenario -------------------------------------------------------------


@dataclass
class Scenario:
    """A validated scenario. ``doc`` keeps the SI document; numeric access
    goes through the per-unit helpers."""

    doc: dict
    net: RadialNetwork
    timestamps: list
    series: dict = field(default_factory=dict)
    base_dir: Path | None = None

    # -- basic facts
    @property
    def name(self) -> str:
        return self.doc.get("name", "")

    @property
    def n_steps(self) -> int:
        return int(self.doc["horizon"]["steps"])

    @property
    def step_hours(self) -> float:
        return float(self.doc["horizon"].get("step_hours", 1.0))

    @property
    def horizon(self) -> Horizon:
        return Horizon(self.n_steps, self.step_hours)

    @property
    def v_slack(self) -> float:
        return float(self.doc.get("v_slack", 1.0))

    @property
    def base_kw(self) -> float:
        return self.net.base_power / 1e3

    @property
    def hash(self) -> str:
        """SHA-256 over the grid, the document (minus the series source)
        and the series data."""
        doc = {k: v for k, v in self.doc.items() if k not in ("series", "grid")}
        h = hashlib.sha256()
        h.update(json.dumps(_canonical(network_to_dict(self.net)), sort_keys=True).encode())
        h.update(json.dumps(doc, sort_keys=True).encode())
        h.update("\n".join(self.timestamps).encode())
        for name in sorted(self.series):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.series[name], dtype="<f8").tobytes())
        return h.hexdigest()

    # -- per-unit views
    def _value(self, spec, n_steps):
        """Constant or series-referenced value as an (N,) array in SI."""
        if isinstance(spec, str):
            return np.asarray(self.series[spec][:n_steps], dtype=float)
        return np.full(n_steps, float(spec))

    def loads(self, n_steps=None):
        """``(p_d, q_d)`` of shape (N, n) in pu."""
        N = self.n_steps if n_steps is None else n_steps
        p = np.zeros((N, self.net.n_bus))
        q = np.zeros((N, self.net.n_bus))
        for ld in self.doc.get("loads", []):
            j = self.net.bus_index(ld["bus"])
            p[:, j] += self._value(ld.get("p_kw", 0.0), N) / self.base_kw
            q[:, j] += self._value(ld.get("q_kvar", 0.0), N) / self.base_kw
        return p, q

    def generators(self, k=None):
        """Generator specs in pu. With ``k`` the cost and availability of
        period ``k`` are folded into the spec."""
        out = []
        for g in self.doc.get("generators", []):
            p_max = float(g["p_max_kw"])
            cost = g.get("cost_per_kwh", 0.0)
            if k is not None:
                if g.get("availability"):
                    p_max = min(p_max, float(self.series[g["availability"]][k]))
                cost = self._value(cost, k + 1)[k]
            elif isinstance(cost, str):
                cost = 0.0
            p_min = min(float(g.get("p_min_kw", 0.0)), p_max)
            out.append(
                GeneratorSpec(
                    self.net.bus_index(g["bus"]),
                    p_min / self.base_kw,
                    p_max / self.base_kw,
                    float(g.get("q_min_kvar", 0.0)) / self.base_kw,
                    float(g.get("q_max_kvar", 0.0)) / self.base_kw,
                    float(cost) * self.base_kw,
                    g.get("name", ""),
                )
            )
        return out

    def cost_matrix(self, n_steps=None):
        """(N, ng) generation cost in currency per pu-hour."""
        N = self.n_steps if n_steps is None else n_steps
        gens = self.doc.get("generators", [])
        return np.column_stack([self._value(g.get("cost_per_kwh", 0.0), N) for g in gens]) * self.base_kw

    def p_max_matrix(self, n_steps=None):
        """(N, ng) generator upper bounds in pu (availability applied)."""
        N = self.n_steps if n_steps is None else n_steps
        cols = []
        for g in self.doc.get("generators", []):
            cap = np.full(N, float(g["p_max_kw"]))
            if g.get("availability"):
                cap = np.minimum(cap, self._value(g["availability"], N))
            cols.append(cap)
        return np.column_stack(cols) / self.base_kw

    def limits(self) -> OperatingLimits:
        lim = self.doc.get("limits", {})
        return OperatingLimits.uniform(self.net, lim.get("v_min", 0.9), lim.get("v_max", 1.1))

    @property
    def storage_configs(self) -> list:
        return sorted(self.doc.get("storage_configs", {}))

    def fleet(self, config=None) -> list:
        """Storage specs in pu; ``config`` picks a named candidate set."""
        if config is None:
            entries = self.doc.get("storage", [])
        else:
            configs = self.doc.get("storage_configs", {})
            if config not in configs:
                raise KeyError(f"unknown storage configuration {config!r}; have {sorted(configs)}")
            entries = configs[config]
        out = []
        for s in entries:
            e_max = s.get("e_max_kwh")
            out.append(
                StorageSpec(
                    self.net.bus_index(s["bus"]),
                    float(s["p_rated_kva"]) / self.base_kw,
                    float(s.get("eta_ch", 1.0)),
                    float(s.get("eta_dis", 1.0)),
                    float(s.get("e0_kwh", 0.0)) / self.base_kw,
                    float(s.get("e_min_kwh", 0.0)) / self.base_kw,
                    None if e_max is None else float(e_max) / self.base_kw,
                    0.0,
                    float(s.get("calendar_life_years", 10.0)),
                    s.get("name", ""),
                )
            )
        return out

    def case(self, config=None, n_steps=None, terminal_soc=None) -> MultiperiodCase:
        """Multiperiod case over the first ``n_steps`` periods."""
        N = self.n_steps if n_steps is None else int(n_steps)
        if not 1 <= N <= self.n_steps:
            raise ValueError(f"n_steps must lie in [1, {self.n_steps}]")
        p_d, q_d = self.loads(N)
        opts = self.doc.get("options", {})
        return MultiperiodCase(
            self.net,
            self.generators(),
            self.fleet(config),
            self.limits(),
            p_d,
            q_d,
            Horizon(N, self.step_hours),
            cost=self.cost_matrix(N),
            p_max=self.p_max_matrix(N),
            v_s=self.v_slack,
            terminal_soc=bool(opts.get("terminal_soc", False)) if terminal_soc is None else terminal_soc,
        )

    def period(self, k=0) -> dict:
        """Keyword arguments of the single-period OPF for period ``k``."""
        p_d, q_d = self.loads(k + 1)
        return {"net": self.net, "gens": self.generators(k), "limits": self.limits(), "p_d": p_d[k], "q_d": q_d[k], "v_s": self.v_slack}

    def cost_points(self):
        return list(self.doc.get("study", {}).get("cost_points_per_kwh", []))

    def with_seed(self, seed: int) -> "Scenario":
        """Copy with synthetic series regenerated from ``seed``."""
        doc = copy.deepcopy(self.doc)
        syn = dict(doc.get("series", {}).get("synthetic") or {})
        if not syn:
            syn = {"days": int(round(self.n_steps * self.step_hours / 24)), "resolution_h": self.step_hours}
        syn["seed"] = int(seed)
        doc["series"] = {"synthetic": syn}
        return scenario_from_dict(doc, self.base_dir)


# -- loading and saving -------------------------------------------------------


def _num(errors, where, value, positive=False, nonneg=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not np.isfinite(value):
        errors.append(f"{where}: expected a finite number, got {value!r}")
        return False
    if positive and value <= 0:
        errors.append(f"{where}: must be positive")
        return False
    if nonneg and value < 0:
        errors.append(f"{where}: must be non-negative")
        return False
    return True


def _resolve_grid(ref, base_dir):
    if not isinstance(ref, str):
        raise ValueError(f"grid: expected a string reference, got {ref!r}")
    if ref.startswith("bundled:"):
        name = ref.split(":", 1)[1]
        try:
            text = resources.files("fbsopf.data").joinpath(f"{name}.json").read_text()
        except FileNotFoundError:
            raise ValueError(f"grid: no bundled grid {name!r}") from None
        return json.loads(text)
    path = Path(ref) if base_dir is None else Path(base_dir) / ref
    if not path.exists():
        raise ValueError(f"grid: file {str(path)!r} not found")
    return json.loads(path.read_text())


def _read_series_ref(ref, base_dir):
    if ref.startswith("bundled:"):
        return resources.files("fbsopf.data").joinpath(ref.split(":", 1)[1]).read_text()
    path = Path(ref) if base_dir is None else Path(base_dir) / ref
    return path.read_text()


def scenario_from_dict(doc: dict, base_dir=None) -> Scenario:
    """Validate ``doc`` and build the scenario; raises :class:`ScenarioError`."""
    errors = []
    if doc.get("schema_version") != SCENARIO_SCHEMA_VERSION:
        raise ScenarioError([f"schema_version: expected {SCENARIO_SCHEMA_VERSION}, got {doc.get('schema_version')!r}"])
    try:
        net = network_from_dict(_resolve_grid(doc.get("grid"), base_dir))
        report = validate_network(net)
        errors.extend(f"grid: {v}" for v in report.violations)
    except (ValueError, KeyError) as exc:
        raise ScenarioError([str(exc)]) from None
    labels = set(net.labels)

    hz = doc.get("horizon", {})
    N = hz.get("steps")
    if not isinstance(N, int) or isinstance(N, bool) or N < 1:
        errors.append(f"horizon.steps: expected an integer >= 1, got {N!r}")
        N = None
    _num(errors, "horizon.step_hours", hz.get("step_hours", 1.0), positive=True)
    _num(errors, "v_slack", doc.get("v_slack", 1.0), positive=True)
    lim = doc.get("limits", {})
    if _num(errors, "limits.v_min", lim.get("v_min", 0.9), positive=True) and _num(errors, "limits.v_max", lim.get("v_max", 1.1), positive=True):
        if lim.get("v_min", 0.9) >= lim.get("v_max", 1.1):
            errors.append("limits: v_min must be below v_max")

    # series
    stamps, series = [], {}
    src = doc.get("series")
    if src:
        if "file" in src:
            try:
                text = _read_series_ref(src["file"], base_dir)
            except OSError as exc:
                errors.append(f"series.file: {exc}")
                text = None
            if text is not None:
                stamps, cols, errs = read_series(text)
                errors.extend(errs)
                series = {k: np.asarray(v, dtype=float) for k, v in cols.items()}
        elif "synthetic" in src:
            syn = src["synthetic"]
            try:
                stamps, series = synthetic_columns(
                    net,
                    int(syn.get("seed", 0)),
                    int(syn.get("days", 31)),
                    float(syn.get("resolution_h", 1.0)),
                    syn.get("start", "2016-07-01T00:00"),
                    float(syn.get("pv_peak_kw", 30.0)),
                )
            except ValueError as exc:
                errors.append(f"series.synthetic: {exc}")
        else:
            errors.append("series: expected a 'file' or 'synthetic' entry")
    if N is not None and series:
        for c, (name, values) in enumerate(series.items(), start=1):
            if len(values) < N:
                errors.append(f"series column {c} ({name!r}): {len(values)} values, expected {N}")
        if len(stamps) < N:
            errors.append(f"series timestamps: {len(stamps)} rows, expected {N}")
    for name in series:
        kind, _, bus = name.partition(":")
        if kind not in SERIES_KINDS:
            errors.append(f"series column {name!r}: unknown kind {kind!r}")
        elif kind != "price" and bus not in labels:
            errors.append(f"series column {name!r}: unknown bus {bus!r}")
    parsed = []
    for r, ts in enumerate(stamps[: N or 0], start=1):
        try:
            parsed.append(datetime.strptime(ts, TIME_FORMAT))
        except ValueError:
            errors.append(f"series timestamp at row {r}: {ts!r} is not YYYY-MM-DDTHH:MM")
            break
    else:
        step = timedelta(hours=float(hz.get("step_hours", 1.0)))
        bad = [r for r in range(1, len(parsed)) if parsed[r] - parsed[r - 1] != step]
        if bad:
            errors.append(f"series timestamps: spacing differs from the step length at row {bad[0] + 1}")

    def check_ref(where, value, kinds, nonneg=False):
        if isinstance(value, str):
            if value not in series:
                errors.append(f"{where}: unknown series column {value!r}")
            elif value.partition(":")[0] not in kinds:
                errors.append(f"{where}: column {value!r} has the wrong kind")
            elif nonneg and np.any(series[value] < 0):
                errors.append(f"{where}: column {value!r} has negative values")
        else:
            _num(errors, where, value, nonneg=nonneg)

    def check_bus(where, bus):
        if bus not in labels:
            errors.append(f"{where}: unknown bus {bus!r}")

    gens = doc.get("generators", [])
    if not gens:
        errors.append("generators: at least one generator is required")
    for i, g in enumerate(gens):
        where = f"generators[{i}] ({g.get('name', '')})"
        check_bus(where, g.get("bus"))
        ok = [_num(errors, f"{where}.{key}", g.get(key, 0.0)) for key in ("p_min_kw", "q_min_kvar", "q_max_kvar")]
        ok.append(_num(errors, f"{where}.p_max_kw", g.get("p_max_kw")))
        if all(ok):
            if g.get("p_min_kw", 0.0) > g["p_max_kw"] or g.get("q_min_kvar", 0.0) > g.get("q_max_kvar", 0.0):
                errors.append(f"{where}: lower bound above upper bound")
        check_ref(f"{where}.cost_per_kwh", g.get("cost_per_kwh", 0.0), ("price",), nonneg=True)
        if g.get("availability") is not None:
            check_ref(f"{where}.availability", g["availability"], ("pv",), nonneg=True)
    for i, ld in enumerate(doc.get("loads", [])):
        where = f"loads[{i}]"
        check_bus(where, ld.get("bus"))
        check_ref(f"{where}.p_kw", ld.get("p_kw", 0.0), ("load_p",))
        check_ref(f"{where}.q_kvar", ld.get("q_kvar", 0.0), ("load_q",))

    fleets = {"storage": doc.get("storage", [])}
    fleets.update({f"storage_configs.{k}": v for k, v in doc.get("storage_configs", {}).items()})
    for key, entries in fleets.items():
        for i, s in enumerate(entries):
            where = f"{key}[{i}] ({s.get('name', '')})"
            check_bus(where, s.get("bus"))
            _num(errors, f"{where}.p_rated_kva", s.get("p_rated_kva"), positive=True)
            for eta in ("eta_ch", "eta_dis"):
                val = s.get(eta, 1.0)
                if _num(errors, f"{where}.{eta}", val) and not 0 < val <= 1:
                    errors.append(f"{where}.{eta}: must lie in (0, 1]")
            for e in ("e0_kwh", "e_min_kwh"):
                _num(errors, f"{where}.{e}", s.get(e, 0.0), nonneg=True)
            if s.get("e_max_kwh") is None and s.get("e_min_kwh", 0.0) != 0:
                errors.append(f"{where}.e_min_kwh: must be 0 when e_max_kwh is null (sizing)")
            if s.get("e_max_kwh") is not None and _num(errors, f"{where}.e_max_kwh", s["e_max_kwh"], nonneg=True):
                if not s.get("e_min_kwh", 0.0) <= s.get("e0_kwh", 0.0) <= s["e_max_kwh"]:
                    errors.append(f"{where}: need e_min_kwh <= e0_kwh <= e_max_kwh")
            _num(errors, f"{where}.calendar_life_years", s.get("calendar_life_years", 10.0), positive=True)
    for i, c in enumerate(doc.get("study", {}).get("cost_points_per_kwh", [])):
        _num(errors, f"study.cost_points_per_kwh[{i}]", c, nonneg=True)

    if errors:
        raise ScenarioError(errors)
    series = {k: v[:N] for k, v in series.items()}
    if not stamps:
        stamps = [f"step-{k}" for k in range(N)]
    return Scenario(copy.deepcopy(doc), net, list(stamps[:N]), series, None if base_dir is None else Path(base_dir))


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file (``bundled:<name>`` for shipped ones)."""
    if str(path).startswith("bundled:"):
        name = str(path).split(":", 1)[1]
        try:
            text = resources.files("fbsopf.data").joinpath(f"{name}.scenario.json").read_text()
        except FileNotFoundError:
            raise ScenarioError([f"no bundled scenario {name!r}"]) from None
        return scenario_from_dict(json.loads(text), None)
    path = Path(path)
    if not path.exists():
        raise ScenarioError([f"scenario file {str(path)!r} not found"])
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{path}: not valid JSON ({exc})"]) from None
    return scenario_from_dict(doc, path.parent)


def save_scenario(scenario: Scenario, path) -> Path:
    """Write the scenario with its grid and series next to it.

    Produces ``<stem>.json``, ``<stem>.grid.json`` and, when the scenario has
    series, ``<stem>.series.csv``; reloading gives the same :attr:`Scenario.hash`.
    """
    path = Path(path)
    stem = path.name[: -len(".json")] if path.name.endswith(".json") else path.name
    doc = copy.deepcopy(scenario.doc)
    grid_path = path.with_name(f"{stem}.grid.json")
    grid_path.write_text(json.dumps(network_to_dict(scenario.net), indent=2))
    doc["grid"] = grid_path.name
    if scenario.series:
        series_path = path.with_name(f"{stem}.series.csv")
        series_path.write_text(write_series(scenario.timestamps, scenario.series))
        doc["series"] = {"file": series_path.name}
    else:
        doc.pop("series", None)
    path.write_text(json.dumps(doc, indent=2))
    return path
