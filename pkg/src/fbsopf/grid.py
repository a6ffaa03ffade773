"""Radial network data model, per-unit conversion and the BIBC matrix.

Networks are stored with the slack bus at index 0 and every branch oriented
away from the slack. Grid files may use arbitrary bus labels; they are
remapped when the file is loaded.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

GRID_SCHEMA_VERSION = 1

BUS_KINDS = ("slack", "load", "generator-capable")


class NetworkError(ValueError):
    """Raised when a network is not a valid radial tree."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str = "load"
    base_voltage: float = 400.0
    label: str = ""


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    resistance: float
    reactance: float
    current_limit: float
    label: str = ""


@dataclass(frozen=True)
class RadialNetwork:
    """Buses, branches and per-unit bases of a radial grid.

    Impedances and current limits of the branches are per-unit on
    ``base_power`` (three-phase VA) and ``base_voltage`` (line-to-line V);
    the current base is ``base_power / (sqrt(3) * base_voltage)``.
    """

    buses: tuple
    branches: tuple
    base_power: float = 100e3
    base_voltage: float = 400.0
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    @property
    def slack(self) -> int:
        return next(b.id for b in self.buses if b.kind == "slack")

    @property
    def resistance(self) -> np.ndarray:
        return np.array([br.resistance for br in self.branches], dtype=float)

    @property
    def reactance(self) -> np.ndarray:
        return np.array([br.reactance for br in self.branches], dtype=float)

    @property
    def current_limit(self) -> np.ndarray:
        return np.array([br.current_limit for br in self.branches], dtype=float)

    @property
    def impedance(self) -> np.ndarray:
        return self.resistance + 1j * self.reactance

    @property
    def labels(self) -> list:
        return [b.label or str(b.id) for b in self.buses]

    def bus_index(self, label) -> int:
        """Map a bus label (or integer id) to its index."""
        if isinstance(label, (int, np.integer)):
            if 0 <= label < self.n_bus:
                return int(label)
            raise KeyError(f"bus id {label} out of range")
        for b in self.buses:
            if b.label == label:
                return b.id
        raise KeyError(f"unknown bus {label!r}")

    @property
    def base_current(self) -> float:
        return self.base_power / (np.sqrt(3.0) * self.base_voltage)

    @property
    def base_impedance(self) -> float:
        return self.base_voltage**2 / self.base_power

    def depth(self) -> np.ndarray:
        """Number of branches between the slack and each bus."""
        adj = _adjacency(self.n_bus, self.branches)
        depth = np.full(self.n_bus, -1, dtype=int)
        depth[self.slack] = 0
        queue = deque([self.slack])
        while queue:
            u = queue.popleft()
            for v, _ in adj[u]:
                if depth[v] < 0:
                    depth[v] = depth[u] + 1
                    queue.append(v)
        return depth


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def _adjacency(n, branches):
    adj = [[] for _ in range(n)]
    for k, br in enumerate(branches):
        if 0 <= br.from_bus < n and 0 <= br.to_bus < n:
            adj[br.from_bus].append((br.to_bus, k))
            adj[br.to_bus].append((br.from_bus, k))
    return adj


def validate_network(net: RadialNetwork) -> ValidationReport:
    """Check radiality, connectivity, the single slack and branch data."""
    report = ValidationReport()
    v = report.violations
    n = net.n_bus
    if n < 1:
        v.append("network has no buses")
        return report

    ids = sorted(b.id for b in net.buses)
    if ids != list(range(n)):
        v.append("bus ids are not contiguous 0..n-1")
    slacks = [b.id for b in net.buses if b.kind == "slack"]
    if len(slacks) != 1:
        v.append(f"expected exactly one slack bus, found {len(slacks)}")
    for b in net.buses:
        if b.kind not in BUS_KINDS:
            v.append(f"bus {b.id} has unknown kind {b.kind!r}")
    if net.base_power <= 0 or net.base_voltage <= 0:
        v.append("per-unit bases must be positive")

    for k, br in enumerate(net.branches):
        name = br.label or f"branch {k}"
        if not (0 <= br.from_bus < n and 0 <= br.to_bus < n):
            v.append(f"{name} references a missing bus")
            continue
        if br.from_bus == br.to_bus:
            v.append(f"{name} is a self-loop")
        if br.resistance < 0 or br.reactance < 0:
            v.append(f"{name} has negative impedance")
        if br.resistance == 0 and br.reactance == 0:
            v.append(f"{name} has zero impedance")
        if not br.current_limit > 0:
            v.append(f"{name} has non-positive current limit")

    if net.n_branch != n - 1:
        v.append(
            f"cycle detected: {net.n_branch} branches for {n} buses (a tree needs {n - 1})"
            if net.n_branch > n - 1
            else f"network disconnected: {net.n_branch} branches for {n} buses"
        )

    # independent of the edge count check: find cycles / unreachable buses
    root = slacks[0] if len(slacks) == 1 else 0
    adj = _adjacency(n, net.branches)
    seen = {root}
    used_edges = set()
    queue = deque([root])
    cycle = False
    while queue:
        u = queue.popleft()
        for w, k in adj[u]:
            if k in used_edges:
                continue
            used_edges.add(k)
            if w in seen:
                cycle = True
            else:
                seen.add(w)
                queue.append(w)
    if cycle and not any(s.startswith("cycle") for s in v):
        v.append("cycle detected")
    missing = sorted(set(range(n)) - seen)
    if missing:
        v.append(f"buses not connected to the slack: {missing}")
    return report


def orient_branches(net: RadialNetwork) -> RadialNetwork:
    """Return a copy with every branch pointing away from the slack bus.

    Branch order is kept. Raises :class:`NetworkError` when ``net`` is
    invalid.
    """
    report = validate_network(net)
    if not report.ok:
        raise NetworkError(report.violations)
    adj = _adjacency(net.n_bus, net.branches)
    branches = list(net.branches)
    seen = {net.slack}
    queue = deque([net.slack])
    while queue:
        u = queue.popleft()
        for w, k in adj[u]:
            if w in seen:
                continue
            seen.add(w)
            br = branches[k]
            if br.from_bus != u:
                branches[k] = Branch(u, w, br.resistance, br.reactance, br.current_limit, br.label)
            queue.append(w)
    return RadialNetwork(
        tuple(net.buses), tuple(branches), net.base_power, net.base_voltage, net.name, net.meta
    )


@dataclass(frozen=True)
class BibcMatrix:
    """Bus-injection to branch-current matrix.

    ``full[b, j]`` is 1 iff branch ``b`` lies on the path from the slack to
    bus ``j``; ``reduced`` drops the slack column.
    """

    full: np.ndarray
    slack: int = 0

    @property
    def reduced(self) -> np.ndarray:
        return np.delete(self.full, self.slack, axis=1)


def build_bibc(net: RadialNetwork) -> BibcMatrix:
    report = validate_network(net)
    if not report.ok:
        raise NetworkError(report.violations)
    n, l = net.n_bus, net.n_branch
    parent_branch = np.full(n, -1, dtype=int)
    parent = np.full(n, -1, dtype=int)
    adj = _adjacency(n, net.branches)
    queue = deque([net.slack])
    order = [net.slack]
    seen = {net.slack}
    while queue:
        u = queue.popleft()
        for w, k in adj[u]:
            if w not in seen:
                seen.add(w)
                parent[w] = u
                parent_branch[w] = k
                order.append(w)
                queue.append(w)
    mf = np.zeros((l, n))
    for j in order[1:]:
        # column of a bus = column of its parent plus its own feeding branch
        mf[:, j] = mf[:, parent[j]]
        mf[parent_branch[j], j] = 1.0
    return BibcMatrix(mf, net.slack)


def incidence(n_bus: int, gen_buses) -> np.ndarray:
    """Generator-to-bus mapping ``C_g`` (one unit entry per column)."""
    gen_buses = np.asarray(gen_buses, dtype=int)
    cg = np.zeros((n_bus, len(gen_buses)))
    if len(gen_buses):
        if gen_buses.min() < 0 or gen_buses.max() >= n_bus:
            raise ValueError("generator mapped to a missing bus")
        cg[gen_buses, np.arange(len(gen_buses))] = 1.0
    return cg


# -- per-unit ---------------------------------------------------------------

_PREFIX = {"": 1.0, "k": 1e3, "M": 1e6}
_POWER_UNITS = ("W", "var", "VA")
_ENERGY_UNITS = ("Wh",)


def _unit_base(net: RadialNetwork, unit: str, bus=None):
    base_v = net.base_voltage if bus is None else net.buses[bus].base_voltage
    base_s = net.base_power
    if base_s <= 0 or base_v <= 0:
        raise ValueError("per-unit bases must be positive")
    for stem in _POWER_UNITS + _ENERGY_UNITS + ("V", "A", "ohm"):
        for prefix, scale in _PREFIX.items():
            if unit == prefix + stem:
                if stem in _POWER_UNITS:
                    return scale / base_s
                if stem in _ENERGY_UNITS:
                    # energy per-unit is pu power times hours
                    return scale / base_s
                if stem == "V":
                    return scale / base_v
                if stem == "A":
                    return scale / (base_s / (np.sqrt(3.0) * base_v))
                return scale / (base_v**2 / base_s)
    raise ValueError(f"unknown unit {unit!r}")


def to_per_unit(net: RadialNetwork, value, unit: str, bus=None):
    """Convert a physical quantity (SI with optional k/M prefix) to per-unit.

    Energies (``Wh``/``kWh``/``MWh``) become pu-hours.

    >>> to_per_unit(cigre_lv(), 30.0, "kW")
    0.3
    """
    scale = _unit_base(net, unit, bus)
    if np.ndim(value):
        return np.asarray(value, dtype=float) * scale
    return float(value) * scale


def from_per_unit(net: RadialNetwork, value, unit: str, bus=None):
    scale = _unit_base(net, unit, bus)
    if np.ndim(value):
        return np.asarray(value, dtype=float) / scale
    return float(value) / scale


# -- grid files ---------------------------------------------------------------


def network_from_dict(data: dict) -> RadialNetwork:
    """Build a network from the grid-file document (SI units).

    The slack bus is moved to index 0, the remaining buses keep file order,
    and branches are oriented away from the slack.
    """
    if data.get("schema_version") != GRID_SCHEMA_VERSION:
        raise ValueError(f"unsupported grid schema version {data.get('schema_version')!r}")
    base_s = float(data["base_power_va"])
    base_v = float(data["base_voltage_v"])
    if base_s <= 0 or base_v <= 0:
        raise ValueError("per-unit bases must be positive")
    raw_buses = data["buses"]
    labels = [str(b["label"]) for b in raw_buses]
    if len(set(labels)) != len(labels):
        raise ValueError("duplicate bus labels")
    slack_labels = [str(b["label"]) for b in raw_buses if b.get("kind") == "slack"]
    if len(slack_labels) != 1:
        raise NetworkError([f"expected exactly one slack bus, found {len(slack_labels)}"])
    ordered = slack_labels + [lab for lab in labels if lab != slack_labels[0]]
    index = {lab: i for i, lab in enumerate(ordered)}
    by_label = {str(b["label"]): b for b in raw_buses}
    buses = tuple(
        Bus(i, by_label[lab].get("kind", "load"), float(by_label[lab].get("base_voltage_v", base_v)), lab)
        for i, lab in enumerate(ordered)
    )
    z_base = base_v**2 / base_s
    i_base = base_s / (np.sqrt(3.0) * base_v)
    branches = []
    for k, br in enumerate(data["branches"]):
        for end in ("from", "to"):
            if str(br[end]) not in index:
                raise KeyError(f"branch {k} references unknown bus {br[end]!r}")
        branches.append(
            Branch(
                index[str(br["from"])],
                index[str(br["to"])],
                float(br["r_ohm"]) / z_base,
                float(br["x_ohm"]) / z_base,
                float(br["i_max_a"]) / i_base,
                str(br.get("label", f"{br['from']}-{br['to']}")),
            )
        )
    net = RadialNetwork(buses, tuple(branches), base_s, base_v, data.get("name", ""), data.get("meta", {}))
    return orient_branches(net)


def network_to_dict(net: RadialNetwork) -> dict:
    z_base, i_base = net.base_impedance, net.base_current
    return {
        "schema_version": GRID_SCHEMA_VERSION,
        "name": net.name,
        "base_power_va": net.base_power,
        "base_voltage_v": net.base_voltage,
        "meta": net.meta,
        "buses": [{"label": lab, "kind": b.kind, "base_voltage_v": b.base_voltage} for lab, b in zip(net.labels, net.buses)],
        "branches": [
            {
                "label": br.label,
                "from": net.labels[br.from_bus],
                "to": net.labels[br.to_bus],
                "r_ohm": br.resistance * z_base,
                "x_ohm": br.reactance * z_base,
                "i_max_a": br.current_limit * i_base,
            }
            for br in net.branches
        ],
    }


def load_grid(path) -> RadialNetwork:
    with open(path) as fh:
        return network_from_dict(json.load(fh))


def save_grid(net: RadialNetwork, path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net), indent=2))


def cigre_lv() -> RadialNetwork:
    """The residential feeder of the CIGRE European LV benchmark (R0..R18)."""
    text = resources.files("fbsopf.data").joinpath("cigre_lv.json").read_text()
    return network_from_dict(json.loads(text))
