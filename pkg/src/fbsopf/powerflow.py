"""Exact forward-backward sweep load flow for radial networks.

Injections follow the generation-positive convention: loads are negative
entries of ``p``/``q``. Currents are per-unit nodal injection currents, so a
positive current raises the voltage downstream of the slack.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import BibcMatrix, RadialNetwork, build_bibc


class PowerFlowError(RuntimeError):
    """The sweep did not converge within the iteration limit."""


@dataclass(frozen=True)
class InjectionSet:
    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float).ravel()
        q = np.asarray(self.q, dtype=float).ravel()
        if p.shape != q.shape:
            raise ValueError("p and q must have the same length")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n))

    @property
    def complex(self) -> np.ndarray:
        return self.p + 1j * self.q


@dataclass
class PowerFlowResult:
    voltage: np.ndarray
    branch_current: np.ndarray
    branch_loss: np.ndarray
    iterations: int
    mae_trace: list = field(default_factory=list)

    @property
    def loss(self) -> float:
        return float(self.branch_loss.sum())

    @property
    def vm(self) -> np.ndarray:
        return np.abs(self.voltage)


def nodal_currents(v, inj: InjectionSet) -> np.ndarray:
    """Per-bus injection current ``conj((p + jq) / v)``."""
    v = np.asarray(v, dtype=complex)
    if np.any(np.abs(v) == 0):
        raise ZeroDivisionError("zero voltage magnitude")
    return np.conj(inj.complex / v)


def backward_voltage_update(net: RadialNetwork, bibc: BibcMatrix, i, v_s=1.0) -> np.ndarray:
    """Voltages ``v_s + M^T Z M_f i`` with the slack entry pinned to ``v_s``."""
    i = np.asarray(i, dtype=complex)
    if i.shape != (net.n_bus,):
        raise ValueError(f"expected {net.n_bus} currents, got {i.shape}")
    drop = bibc.full.T @ (net.impedance * (bibc.full @ i))
    v = v_s + drop
    v[bibc.slack] = v_s
    return v


def solve_power_flow(
    net: RadialNetwork,
    inj: InjectionSet,
    v_s: complex = 1.0,
    tol: float = 1e-8,
    max_iter: int = 50,
    bibc: BibcMatrix | None = None,
    v0=None,
) -> PowerFlowResult:
    """Iterate current and voltage sweeps to a fixed point.

    Stops when the mean absolute voltage change drops below ``tol``; raises
    :class:`PowerFlowError` after ``max_iter`` sweeps.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if bibc is None:
        bibc = build_bibc(net)
    if len(inj.p) != net.n_bus:
        raise ValueError("injection vector length does not match the bus count")
    v = np.full(net.n_bus, v_s, dtype=complex) if v0 is None else np.array(v0, dtype=complex)
    trace = []
    for it in range(1, max_iter + 1):
        i = nodal_currents(v, inj)
        v_new = backward_voltage_update(net, bibc, i, v_s)
        if not np.all(np.isfinite(v_new)):
            break
        mae = float(np.mean(np.abs(v_new - v)))
        trace.append(mae)
        v = v_new
        if mae < tol:
            i = nodal_currents(v, inj)
            ib = bibc.full @ i
            return PowerFlowResult(v, ib, net.resistance * np.abs(ib) ** 2, it, trace)
    raise PowerFlowError(f"power flow did not converge in {max_iter} iterations")


def slack_injection(net: RadialNetwork, result: PowerFlowResult, v_s: complex = 1.0) -> complex:
    """Complex power delivered by the slack bus, from the currents leaving it."""
    out = sum(result.branch_current[k] for k, br in enumerate(net.branches) if br.from_bus == net.slack)
    return -v_s * np.conj(out)
