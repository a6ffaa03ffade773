"""Linear voltage, branch-current and piecewise-linear loss operators.

All operators depend on the nodal voltage magnitudes only through
``diag(1/|v|)``; they are rebuilt whenever the voltage state changes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import BibcMatrix, RadialNetwork

#: supporting currents below this value are lifted to it (pu)
SUPPORT_FLOOR = 1e-6


def _inv_vm(vm, n):
    vm = np.broadcast_to(np.asarray(vm, dtype=float), (n,))
    if np.any(vm <= 0):
        raise ValueError("voltage magnitudes must be positive")
    return 1.0 / vm


def build_voltage_sensitivity(net: RadialNetwork, bibc: BibcMatrix, vm) -> np.ndarray:
    """``B_v`` of shape (n-1, 2n): voltage rise at non-slack buses per unit
    of active (left block) and reactive (right block) injection."""
    scale = _inv_vm(vm, net.n_bus)
    mf = bibc.full * scale
    m = bibc.reduced
    return np.hstack([m.T @ (net.resistance[:, None] * mf), m.T @ (net.reactance[:, None] * mf)])


def build_branch_sensitivity(bibc: BibcMatrix, vm) -> np.ndarray:
    """``B_r = M_f diag(1/|v|)``, branch current per unit active injection."""
    return bibc.full * _inv_vm(vm, bibc.full.shape[1])


def supporting_currents(bibc: BibcMatrix, cg: np.ndarray, p_max, floor: float = SUPPORT_FLOOR):
    """Currents ``(i0, i1)`` at 25 % and 75 % of the largest expected branch
    current ``M_f C_g p_max``."""
    i_peak = np.abs(bibc.full @ cg @ np.asarray(p_max, dtype=float))
    return np.maximum(0.25 * i_peak, floor), np.maximum(0.75 * i_peak, floor)


def build_loss_planes(net: RadialNetwork, bibc: BibcMatrix, vm, i0, i1):
    """Slopes ``L0``, ``L1`` and offsets ``b`` of the four loss planes.

    Per branch the planes are the secants of ``r i^2`` through 0 and ``i0``
    (slopes ``+-r i0``) and through ``i0`` and ``i1`` (slopes
    ``+-r (i0 + i1)``, offset ``-r i0 i1``).
    """
    i0 = np.asarray(i0, dtype=float)
    i1 = np.asarray(i1, dtype=float)
    if np.any(i0 <= 0) or np.any(i1 <= 0):
        raise ValueError("supporting currents must be positive")
    r = net.resistance
    br = build_branch_sensitivity(bibc, vm)
    L0 = (i0 * r)[:, None] * br
    L1 = ((i0 + i1) * r)[:, None] * br
    b = -r * i0 * i1
    return L0, L1, b


@dataclass(frozen=True)
class LinearGridModel:
    Bv: np.ndarray
    Br: np.ndarray
    L0: np.ndarray
    L1: np.ndarray
    b: np.ndarray
    i0: np.ndarray
    i1: np.ndarray
    vm: np.ndarray

    @classmethod
    def build(cls, net: RadialNetwork, bibc: BibcMatrix, vm, i0, i1) -> "LinearGridModel":
        vm = np.broadcast_to(np.asarray(vm, dtype=float), (net.n_bus,)).copy()
        L0, L1, b = build_loss_planes(net, bibc, vm, i0, i1)
        return cls(
            build_voltage_sensitivity(net, bibc, vm),
            build_branch_sensitivity(bibc, vm),
            L0,
            L1,
            b,
            np.asarray(i0, dtype=float),
            np.asarray(i1, dtype=float),
            vm,
        )

    @property
    def n_bus(self):
        return self.Br.shape[1]

    def voltage(self, p, q, v_s=1.0):
        """Linear voltage magnitude prediction at the non-slack buses."""
        return v_s + self.Bv @ np.concatenate([p, q])


def pwl_loss_eval(model: LinearGridModel, x) -> np.ndarray:
    """Per-branch piecewise-linear loss for a nodal injection vector ``x``."""
    x = np.asarray(x, dtype=float)
    a0 = model.L0 @ x
    a1 = model.L1 @ x
    return np.max(np.stack([a0, -a0, a1 + model.b, -a1 + model.b]), axis=0)
