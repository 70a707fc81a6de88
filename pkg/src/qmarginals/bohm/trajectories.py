"""Guidance-equation trajectories and equivariance statistics.

Velocity fields are stored per snapshot and interpolated linearly in space
and in time.  Where the density drops below ``DENSITY_FLOOR * max(rho)`` the
velocity is set to zero and any sample that touches such a cell is flagged.
A sample that would leave the grid is frozen at its last position.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .currents import MarginalSeries, current_arrays
from .grid import Grid1D
from .pde import Evolution

DENSITY_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class TrajectoryEnsemble:
    kind: str  # "marginal" or "full"
    times: np.ndarray
    positions: np.ndarray  # (T, M) for marginal, (T, M, 2) for full
    flagged: np.ndarray  # touched a density node
    exited: np.ndarray  # tried to leave the grid, frozen since

    @property
    def final(self) -> np.ndarray:
        return self.positions[-1]

    @property
    def size(self) -> int:
        return self.positions.shape[1]


def _velocity(rho: np.ndarray, j: np.ndarray):
    floor = DENSITY_FLOOR * np.max(rho, axis=tuple(range(1, rho.ndim)), keepdims=True)
    low = rho < floor
    v = np.where(low, 0.0, j / np.where(low, 1.0, rho))
    return v, low.astype(float)


class _Interp:
    """Linear interpolation over uniform time and space grids, clamped."""

    def __init__(self, grid: Grid1D, times: np.ndarray, fields: list[np.ndarray]):
        self.x0 = grid.x[0]
        self.dx = grid.dx
        self.n = grid.n_points
        self.t0 = times[0]
        self.dt = times[1] - times[0] if len(times) > 1 else 1.0
        self.k = len(times)
        self.fields = fields

    def _tw(self, t):
        s = (t - self.t0) / self.dt
        k = int(np.clip(np.floor(s), 0, max(self.k - 2, 0)))
        a = float(np.clip(s - k, 0.0, 1.0)) if self.k > 1 else 0.0
        return k, min(k + 1, self.k - 1), a

    def _xw(self, x):
        f = (x - self.x0) / self.dx
        i = np.clip(np.floor(f).astype(int), 0, self.n - 2)
        return i, np.clip(f - i, 0.0, 1.0)

    def at(self, t, pos):
        k0, k1, a = self._tw(t)
        if pos.ndim == 1:
            i, w = self._xw(pos)
            out = []
            for f in self.fields:
                lo = (1 - w) * f[k0, i] + w * f[k0, i + 1]
                hi = (1 - w) * f[k1, i] + w * f[k1, i + 1]
                out.append((1 - a) * lo + a * hi)
            return out
        i, wi = self._xw(pos[:, 0])
        j, wj = self._xw(pos[:, 1])
        out = []
        for f in self.fields:
            vals = []
            for kk in (k0, k1):
                g = f[kk]
                vals.append(
                    (1 - wi) * (1 - wj) * g[i, j]
                    + wi * (1 - wj) * g[i + 1, j]
                    + (1 - wi) * wj * g[i, j + 1]
                    + wi * wj * g[i + 1, j + 1]
                )
            out.append((1 - a) * vals[0] + a * vals[1])
        return out


def _integrate(kind, grid, times, velocity, pos0, dt):
    """RK4 from times[0] to times[-1]; ``velocity(t, pos) -> (v, low)``."""
    t_end = times[-1]
    if dt is None:
        dt = times[1] - times[0] if len(times) > 1 else 1.0
    n_steps = int(round((t_end - times[0]) / dt)) if t_end > times[0] else 0
    if n_steps and abs(n_steps * dt - (t_end - times[0])) > 1e-9 * max(1.0, t_end):
        raise ValueError("dt must divide the snapshot time span")
    lo, hi = grid.x[0], grid.x[-1]
    pos = np.array(pos0, dtype=float)
    flagged = np.zeros(pos.shape[0], dtype=bool)
    exited = np.zeros(pos.shape[0], dtype=bool)
    out_t, out_p = [times[0]], [pos.copy()]

    def f(t, p):
        v, low = velocity(t, p)
        nonlocal flagged
        flagged |= low > 0 if low.ndim == 1 else np.any(low > 0, axis=1)
        return v

    for s in range(n_steps):
        t = times[0] + s * dt
        k1 = f(t, pos)
        k2 = f(t + dt / 2, pos + dt / 2 * k1)
        k3 = f(t + dt / 2, pos + dt / 2 * k2)
        k4 = f(t + dt, pos + dt * k3)
        new = pos + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        outside = (new < lo) | (new > hi)
        if outside.ndim > 1:
            outside = np.any(outside, axis=1)
        exited |= outside
        new[exited] = pos[exited]
        pos = new
        out_t.append(t + dt)
        out_p.append(pos.copy())
    return TrajectoryEnsemble(kind, np.array(out_t), np.array(out_p), flagged, exited)


def marginal_velocity(series: MarginalSeries):
    return _velocity(series.density, series.current)


def guide_marginal_trajectories(
    series: MarginalSeries, x0: np.ndarray, dt: float | None = None
) -> TrajectoryEnsemble:
    """Integrate ``dX/dt = J_1(X,t) / rho_1(X,t)``."""
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim != 1:
        raise ValueError("marginal ensemble expects a 1-D array of positions")
    v, low = marginal_velocity(series)
    interp = _Interp(series.grid, series.times, [v, low])

    def vel(t, p):
        vv, ll = interp.at(t, p)
        return vv, ll

    return _integrate("marginal", series.grid, series.times, vel, x0, dt)


def full_velocity(evo: Evolution):
    rho = np.abs(evo.snapshots) ** 2
    j1 = np.empty_like(rho)
    j2 = np.empty_like(rho)
    for k, snap in enumerate(evo.snapshots):
        j1[k], j2[k] = current_arrays(snap, evo.grid.dx, evo.hbar, evo.mass)
    v1, low = _velocity(rho, j1)
    v2, _ = _velocity(rho, j2)
    return v1, v2, low


def guide_full_trajectories(
    evo: Evolution, xy0: np.ndarray, dt: float | None = None
) -> TrajectoryEnsemble:
    """Integrate ``(dX/dt, dY/dt) = (j_1, j_2) / |psi|^2`` at ``(X, Y)``."""
    xy0 = np.asarray(xy0, dtype=float)
    if xy0.ndim != 2 or xy0.shape[1] != 2:
        raise ValueError("full ensemble expects an (M, 2) array of positions")
    v1, v2, low = full_velocity(evo)
    interp = _Interp(evo.grid, evo.times, [v1, v2, low])

    def vel(t, p):
        a, b, ll = interp.at(t, p)
        return np.stack([a, b], axis=1), ll

    return _integrate("full", evo.grid, evo.times, vel, xy0, dt)


def sample_density(density: np.ndarray, grid: Grid1D, size: int, rng: np.random.Generator):
    """Draw iid samples from a gridded density (1-D or 2-D), uniform within
    each grid cell ``[x_i - dx/2, x_i + dx/2]``."""
    p = np.clip(np.asarray(density, dtype=float), 0, None).ravel()
    if p.sum() <= 0:
        raise ValueError("density has no mass")
    idx = rng.choice(p.size, size=size, p=p / p.sum())
    cells = np.unravel_index(idx, density.shape)
    jitter = rng.uniform(-0.5, 0.5, size=(size, density.ndim))
    pts = np.stack([grid.x[c] for c in cells], axis=1) + jitter * grid.dx
    pts = np.clip(pts, grid.x[0], grid.x[-1])
    return pts[:, 0] if density.ndim == 1 else pts


def _edge_weights(grid: Grid1D, edges: np.ndarray) -> np.ndarray:
    """Linear interpolation matrix from cell-boundary CDF values to ``edges``."""
    n = grid.n_points
    f = np.clip((edges - (grid.x[0] - grid.dx / 2)) / grid.dx, 0, n)
    i = np.clip(np.floor(f).astype(int), 0, n - 1)
    w = f - i
    a = np.zeros((len(edges), n + 1))
    a[np.arange(len(edges)), i] = 1 - w
    a[np.arange(len(edges)), i + 1] += w
    return a


def bin_edges(grid: Grid1D, bins: int) -> np.ndarray:
    """Histogram edges spanning the whole grid box."""
    return np.linspace(grid.x[0] - grid.dx / 2, grid.x[-1] + grid.dx / 2, bins + 1)


def binned_density(density: np.ndarray, grid: Grid1D, bins: int) -> np.ndarray:
    """Probability per histogram bin of the piecewise-constant density."""
    edges = bin_edges(grid, bins)
    a = _edge_weights(grid, edges)
    if density.ndim == 1:
        cdf = np.concatenate([[0.0], np.cumsum(density)])
        mass = np.diff(a @ cdf)
    else:
        cdf = np.zeros((grid.n_points + 1,) * 2)
        cdf[1:, 1:] = np.cumsum(np.cumsum(density, axis=0), axis=1)
        mass = np.diff(np.diff(a @ cdf @ a.T, axis=0), axis=1)
    return mass / mass.sum()


@dataclass(frozen=True)
class EquivarianceResult:
    tv_distance: float
    threshold: float
    bins: int
    samples: int
    exited: int
    flagged: int

    @property
    def passed(self) -> bool:
        return self.tv_distance < self.threshold

    def as_dict(self) -> dict:
        return {**self.__dict__, "pass": self.passed}


def equivariance_test(
    ensemble: TrajectoryEnsemble,
    density: np.ndarray,
    grid: Grid1D,
    bins: int = 64,
    threshold: float | None = None,
) -> EquivarianceResult:
    """Total-variation distance between the final positions' histogram and
    the density (marginal: 1-D, full: 2-D joint)."""
    if ensemble.size < 1000:
        raise ValueError("equivariance test needs at least 1000 samples")
    edges = bin_edges(grid, bins)
    pts = ensemble.final
    if ensemble.kind == "marginal":
        counts, _ = np.histogram(pts, bins=edges)
        threshold = 0.05 if threshold is None else threshold
    else:
        counts, _, _ = np.histogram2d(pts[:, 0], pts[:, 1], bins=[edges, edges])
        threshold = 0.08 if threshold is None else threshold
    emp = counts / ensemble.size
    ref = binned_density(density, grid, bins)
    tv = 0.5 * float(np.sum(np.abs(emp - ref))) + 0.5 * float(1.0 - emp.sum())
    return EquivarianceResult(
        tv, threshold, bins, ensemble.size, int(ensemble.exited.sum()), int(ensemble.flagged.sum())
    )
