"""Conditional wavefunctions and an effective-wavefunction monitor.

The monitor takes the normalized conditional at the start of a window,
evolves it alone under ``V_E1(x) + V_I(x - Y(t))`` and compares it with the
actual normalized conditional at the end of the window.  The comparison is
modulo a global phase: ``min_phi ||a - e^{i phi} b|| = sqrt(2 - 2|<a, b>|)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import Grid1D, Wavefunction2P
from .pde import Evolution, evolve_1d

SLICE_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class ConditionalWavefunction:
    y: float
    raw: np.ndarray
    norm: float
    normalized: np.ndarray | None

    @property
    def defined(self) -> bool:
        return self.normalized is not None


def slice_at(values: np.ndarray, grid: Grid1D, y: float) -> np.ndarray:
    """``psi(x1, y)`` by linear interpolation between grid columns."""
    lo, hi = grid.x[0], grid.x[-1]
    if not lo <= y <= hi:
        raise ValueError(f"Y={y} outside the grid [{lo}, {hi}]")
    f = (y - lo) / grid.dx
    i = min(int(math.floor(f)), grid.n_points - 2)
    w = f - i
    return (1 - w) * values[:, i] + w * values[:, i + 1]


def conditional_wavefunction(psi: Wavefunction2P, y: float) -> ConditionalWavefunction:
    return _conditional(psi.values, psi.grid, y)


def _conditional(values, grid, y) -> ConditionalWavefunction:
    raw = slice_at(values, grid, y)
    norm = math.sqrt(float(np.sum(np.abs(raw) ** 2)) * grid.dx)
    normalized = raw / norm if norm >= SLICE_FLOOR else None
    return ConditionalWavefunction(float(y), raw, norm, normalized)


def phase_free_distance(a: np.ndarray, b: np.ndarray, dx: float) -> float:
    overlap = abs(np.vdot(a, b)) * dx
    return math.sqrt(max(0.0, 2.0 - 2.0 * overlap))


def fidelity(a: np.ndarray, b: np.ndarray, dx: float) -> float:
    return float(abs(np.vdot(a, b) * dx) ** 2)


@dataclass(frozen=True)
class EffectiveReport:
    status: str  # "effective", "not effective" or "indeterminate"
    deviation: float | None
    tol: float
    t_start: float
    t_end: float
    min_slice_norm: float

    @property
    def effective(self) -> bool | None:
        if self.status == "indeterminate":
            return None
        return self.status == "effective"

    def as_dict(self) -> dict:
        return {**self.__dict__, "effective": self.effective}


def effective_wavefunction_monitor(
    evo: Evolution,
    trajectory: Callable[[float], float] | tuple[np.ndarray, np.ndarray],
    t_start: float,
    window: float,
    tol: float = 1e-3,
) -> EffectiveReport:
    """``trajectory`` is ``Y(t)`` as a callable or as sampled ``(times, Y)``."""
    if window <= 0:
        raise ValueError("window must be positive")
    if callable(trajectory):
        y_of = trajectory
    else:
        ty, yy = (np.asarray(a, dtype=float) for a in trajectory)
        y_of = lambda t: float(np.interp(t, ty, yy))  # noqa: E731
    k0 = evo.index_of(t_start)
    k1 = evo.index_of(t_start + window)
    grid = evo.grid

    conds = [_conditional(evo.snapshots[k], grid, y_of(evo.times[k])) for k in range(k0, k1 + 1)]
    min_norm = min(c.norm for c in conds)
    t_end = float(evo.times[k1])
    if not all(c.defined for c in conds):
        return EffectiveReport("indeterminate", None, tol, float(t_start), t_end, min_norm)

    pot, mass = evo.potential, evo.mass

    def v(x, t):
        return pot.external_1(x, mass) + pot.interaction(x - y_of(t))

    steps = (k1 - k0) * evo.stride
    phi = evolve_1d(conds[0].normalized, grid, v, evo.dt, steps, evo.times[k0], evo.hbar, mass)
    dev = phase_free_distance(phi, conds[-1].normalized, grid.dx)
    status = "effective" if dev < tol else "not effective"
    return EffectiveReport(status, dev, tol, float(t_start), t_end, min_norm)
