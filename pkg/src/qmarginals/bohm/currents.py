"""Probability currents, marginal density/current and continuity diagnostics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid1D, Wavefunction2P
from .pde import Evolution


@dataclass(frozen=True, eq=False)
class CurrentField:
    j1: np.ndarray
    j2: np.ndarray


def current_arrays(values: np.ndarray, dx: float, hbar: float = 1.0, mass: float = 1.0):
    """``(hbar/m) Im(conj(psi) d_i psi)`` with centered differences."""
    d1 = np.gradient(values, dx, axis=0)
    d2 = np.gradient(values, dx, axis=1)
    c = np.conj(values)
    return hbar / mass * np.imag(c * d1), hbar / mass * np.imag(c * d2)


def current(psi: Wavefunction2P) -> CurrentField:
    j1, j2 = current_arrays(psi.values, psi.grid.dx, psi.hbar, psi.mass)
    return CurrentField(j1, j2)


def _marginal_arrays(values, dx, hbar, mass, axis=1):
    rho = np.abs(values) ** 2
    j1, j2 = current_arrays(values, dx, hbar, mass)
    j = j1 if axis == 1 else j2
    return np.trapezoid(rho, dx=dx, axis=axis), np.trapezoid(j, dx=dx, axis=axis)


def marginal_density_current(psi: Wavefunction2P, particle: int = 0):
    """Density and current of one particle with the other integrated out."""
    if particle not in (0, 1):
        raise ValueError("particle must be 0 or 1")
    return _marginal_arrays(psi.values, psi.grid.dx, psi.hbar, psi.mass, axis=1 - particle)


@dataclass(frozen=True, eq=False)
class MarginalSeries:
    grid: Grid1D
    times: np.ndarray
    density: np.ndarray  # (K, N)
    current: np.ndarray  # (K, N)


def marginal_series(evo: Evolution, particle: int = 0) -> MarginalSeries:
    axis = 1 - particle
    rho, cur = [], []
    for snap in evo.snapshots:
        r, j = _marginal_arrays(snap, evo.grid.dx, evo.hbar, evo.mass, axis=axis)
        rho.append(r)
        cur.append(j)
    return MarginalSeries(evo.grid, evo.times.copy(), np.array(rho), np.array(cur))


def marginal_continuity_residual(series: MarginalSeries, k: int) -> float:
    """L2 norm of ``d_t rho_1 + d_x J_1`` at snapshot ``k`` (centered in time)."""
    if not 0 < k < len(series.times) - 1:
        raise ValueError("residual needs snapshots on both sides of k")
    dt = series.times[k + 1] - series.times[k - 1]
    drho = (series.density[k + 1] - series.density[k - 1]) / dt
    div = np.gradient(series.current[k], series.grid.dx)
    r = drho + div
    return float(np.sqrt(np.sum(r**2) * series.grid.dx))


def continuity_residual_2d(evo: Evolution, k: int) -> float:
    """Same check on the full configuration-space density."""
    if not 0 < k < len(evo.times) - 1:
        raise ValueError("residual needs snapshots on both sides of k")
    dx = evo.grid.dx
    dt = evo.times[k + 1] - evo.times[k - 1]
    drho = (np.abs(evo.snapshots[k + 1]) ** 2 - np.abs(evo.snapshots[k - 1]) ** 2) / dt
    j1, j2 = current_arrays(evo.snapshots[k], dx, evo.hbar, evo.mass)
    r = drho + np.gradient(j1, dx, axis=0) + np.gradient(j2, dx, axis=1)
    return float(np.sqrt(np.sum(r**2)) * dx)


def boundary_flux(psi: Wavefunction2P) -> float:
    """max over x1 of |int d_2 j_2 dx2|; vanishes when the density is confined."""
    _, j2 = current_arrays(psi.values, psi.grid.dx, psi.hbar, psi.mass)
    div = np.gradient(j2, psi.grid.dx, axis=1)
    return float(np.max(np.abs(np.trapezoid(div, dx=psi.grid.dx, axis=1))))


def width(density: np.ndarray, grid: Grid1D) -> float:
    x = grid.x
    m = np.trapezoid(density, x)
    mean = np.trapezoid(x * density, x) / m
    return float(np.sqrt(np.trapezoid((x - mean) ** 2 * density, x) / m))


def centroid(density: np.ndarray, grid: Grid1D) -> float:
    x = grid.x
    return float(np.trapezoid(x * density, x) / np.trapezoid(density, x))
