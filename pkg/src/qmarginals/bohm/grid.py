"""Grids, two-particle wavefunctions, initial states and potentials.

Axis 0 of every two-particle field is ``x1`` (the subsystem particle), axis 1
is ``x2``.  Grids are periodic FFT grids: ``x_i = x_min + i*dx`` with
``dx = (x_max - x_min) / n_points``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

NORM_TOL = 1e-8


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 16:
            raise ValueError(f"grid needs at least 16 points, got {self.n_points}")
        if not self.x_max > self.x_min:
            raise ValueError("grid requires x_max > x_min")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_points

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    @property
    def k(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.n_points, self.dx)


@dataclass(frozen=True, eq=False)
class Wavefunction2P:
    grid: Grid1D
    values: np.ndarray
    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        n = self.grid.n_points
        if v.shape != (n, n):
            raise ValueError(f"expected a {n}x{n} field, got {v.shape}")
        if self.hbar <= 0 or self.mass <= 0:
            raise ValueError("hbar and mass must be positive")
        object.__setattr__(self, "values", v)
        if abs(self.norm() - 1.0) > NORM_TOL:
            raise ValueError(f"wavefunction not normalized (norm {self.norm()!r})")

    def norm(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.dx**2)

    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2


def gaussian_1d(grid: Grid1D, x0: float, k0: float, sigma: float) -> np.ndarray:
    """Normalized packet whose density has standard deviation ``sigma``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    x = grid.x
    g = np.exp(-((x - x0) ** 2) / (4 * sigma**2) + 1j * k0 * x)
    return g / math.sqrt(np.sum(np.abs(g) ** 2) * grid.dx)


def normalize_2d(values: np.ndarray, grid: Grid1D) -> np.ndarray:
    norm = math.sqrt(float(np.sum(np.abs(values) ** 2)) * grid.dx**2)
    if norm == 0:
        raise ValueError("zero wavefunction")
    return values / norm


def product_state(grid: Grid1D, phi1: np.ndarray, phi2: np.ndarray, hbar=1.0, mass=1.0) -> Wavefunction2P:
    return Wavefunction2P(grid, normalize_2d(np.outer(phi1, phi2), grid), hbar, mass)


def two_branch_state(
    grid: Grid1D,
    branches: list[tuple[np.ndarray, np.ndarray]],
    weights: list[complex] | None = None,
    hbar=1.0,
    mass=1.0,
) -> Wavefunction2P:
    """``sum_b w_b g_b(x1) h_b(x2)``, normalized as a whole."""
    weights = weights or [1.0] * len(branches)
    psi = sum(w * np.outer(g, h) for w, (g, h) in zip(weights, branches))
    return Wavefunction2P(grid, normalize_2d(psi, grid), hbar, mass)


@dataclass(frozen=True)
class ExternalPotential:
    """Single-coordinate potential: ``zero``, ``harmonic`` or ``barrier``."""

    kind: str = "zero"
    omega: float = 1.0
    center: float = 0.0
    height: float = 0.0
    x_left: float = 0.0
    x_right: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "harmonic", "barrier"):
            raise ValueError(f"unknown external potential {self.kind!r}")
        vals = (self.omega, self.center, self.height, self.x_left, self.x_right)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("potential parameters must be finite")
        if self.kind == "barrier" and not self.x_right > self.x_left:
            raise ValueError("barrier needs x_right > x_left")

    def __call__(self, x: np.ndarray, mass: float = 1.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "harmonic":
            return 0.5 * mass * self.omega**2 * (x - self.center) ** 2
        if self.kind == "barrier":
            return np.where((x >= self.x_left) & (x <= self.x_right), self.height, 0.0)
        return np.zeros_like(x)


@dataclass(frozen=True)
class InteractionPotential:
    """Pair potential in ``x1 - x2``: ``zero`` or soft Coulomb
    ``q1q2 / sqrt(r^2 + a^2)``."""

    kind: str = "zero"
    charge_product: float = 1.0
    softening: float = 1.0

    def __post_init__(self):
        if self.kind not in ("zero", "soft_coulomb"):
            raise ValueError(f"unknown interaction {self.kind!r}")
        if not (math.isfinite(self.charge_product) and math.isfinite(self.softening)):
            raise ValueError("interaction parameters must be finite")
        if self.kind == "soft_coulomb" and self.softening <= 0:
            raise ValueError("soft Coulomb needs a positive softening length")

    def __call__(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.kind == "soft_coulomb":
            return self.charge_product / np.sqrt(r**2 + self.softening**2)
        return np.zeros_like(r)


@dataclass(frozen=True)
class PotentialSpec:
    external_1: ExternalPotential = field(default_factory=ExternalPotential)
    external_2: ExternalPotential = field(default_factory=ExternalPotential)
    interaction: InteractionPotential = field(default_factory=InteractionPotential)

    def on_grid(self, grid: Grid1D, mass: float = 1.0) -> np.ndarray:
        x = grid.x
        x1, x2 = x[:, None], x[None, :]
        return self.external_1(x1, mass) + self.external_2(x2, mass) + self.interaction(x1 - x2)

    @property
    def separable(self) -> bool:
        return self.interaction.kind == "zero"
