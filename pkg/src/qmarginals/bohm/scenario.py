"""JSON scenario documents for the continuum module and their runner.

Document layout::

    {"schema": "qmarginals.bohm/1",
     "grid": {"x_min": -20, "x_max": 20, "n_points": 256},
     "hbar": 1, "mass": 1,
     "potentials": {"external_1": {"kind": "harmonic", "omega": 0.5},
                    "external_2": {"kind": "zero"},
                    "interaction": {"kind": "soft_coulomb", "charge_product": 1, "softening": 1}},
     "initial": {"kind": "product",
                 "particle_1": {"x0": -3, "k0": 1, "sigma": 1},
                 "particle_2": {"x0": 3, "k0": -1, "sigma": 1}},
     "dt": 0.01, "steps": 300, "stride": 5,
     "ensemble": {"size": 10000, "bins": 64},
     "seed": 0,
     "monitor": {"t_start": 0, "window": 2, "tol": 1e-3, "y0": [-4, -6]}}

A two-branch initial state is ``{"kind": "two_branch", "branches": [{"particle_1":
..., "particle_2": ..., "weight": 1}, ...]}``; weights may be ``[re, im]``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .conditional import effective_wavefunction_monitor
from .currents import (
    boundary_flux,
    centroid,
    marginal_continuity_residual,
    marginal_series,
    width,
)
from .grid import (
    ExternalPotential,
    Grid1D,
    InteractionPotential,
    PotentialSpec,
    Wavefunction2P,
    gaussian_1d,
    product_state,
    two_branch_state,
)
from .pde import Evolution, evolve_pde
from .trajectories import equivariance_test, guide_full_trajectories, guide_marginal_trajectories, sample_density

SCHEMA = "qmarginals.bohm/1"


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Packet:
    x0: float
    k0: float
    sigma: float


@dataclass(frozen=True)
class Scenario:
    grid: Grid1D
    potential: PotentialSpec
    initial: dict
    dt: float
    steps: int
    stride: int = 1
    hbar: float = 1.0
    mass: float = 1.0
    ensemble_size: int = 10000
    bins: int = 64
    seed: int = 0
    monitor: dict | None = None
    name: str = "scenario"
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def t_final(self) -> float:
        return self.dt * (self.steps - self.steps % self.stride)

    def initial_state(self) -> Wavefunction2P:
        g = self.grid
        init = self.initial

        def packet(d):
            return gaussian_1d(g, d.x0, d.k0, d.sigma)

        if init["kind"] == "product":
            return product_state(g, packet(init["particle_1"]), packet(init["particle_2"]), self.hbar, self.mass)
        branches = [(packet(b["particle_1"]), packet(b["particle_2"])) for b in init["branches"]]
        return two_branch_state(g, branches, [b["weight"] for b in init["branches"]], self.hbar, self.mass)

    def refined(self, factor: int) -> "Scenario":
        """Grid spacing and time step both divided by ``factor``."""
        g = Grid1D(self.grid.x_min, self.grid.x_max, self.grid.n_points * factor)
        return Scenario(
            g, self.potential, self.initial, self.dt / factor, self.steps * factor, self.stride,
            self.hbar, self.mass, self.ensemble_size, self.bins, self.seed, self.monitor, self.name, self.raw,
        )

    def with_grid(self, n_points: int) -> "Scenario":
        g = Grid1D(self.grid.x_min, self.grid.x_max, n_points)
        return Scenario(
            g, self.potential, self.initial, self.dt, self.steps, self.stride,
            self.hbar, self.mass, self.ensemble_size, self.bins, self.seed, self.monitor, self.name, self.raw,
        )

    @property
    def free_product(self) -> bool:
        p = self.potential
        return (
            self.initial["kind"] == "product"
            and p.external_1.kind == p.external_2.kind == "zero"
            and p.interaction.kind == "zero"
        )


def _num(d: dict, key: str, where: str, default=None, positive=False) -> float:
    if key not in d:
        if default is None:
            raise ScenarioError(f"{where}: missing '{key}'")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ScenarioError(f"{where}.{key}: expected a finite number, got {v!r}")
    if positive and v <= 0:
        raise ScenarioError(f"{where}.{key}: must be positive")
    return float(v)


def _int(d: dict, key: str, where: str, default=None, minimum=0) -> int:
    if key not in d:
        if default is None:
            raise ScenarioError(f"{where}: missing '{key}'")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ScenarioError(f"{where}.{key}: expected an integer >= {minimum}, got {v!r}")
    return v


def _packet(d, where) -> Packet:
    if not isinstance(d, dict):
        raise ScenarioError(f"{where}: expected an object")
    return Packet(_num(d, "x0", where), _num(d, "k0", where, 0.0), _num(d, "sigma", where, positive=True))


def _weight(w, where) -> complex:
    if isinstance(w, list) and len(w) == 2 and all(isinstance(v, (int, float)) for v in w):
        return complex(w[0], w[1])
    if isinstance(w, (int, float)) and not isinstance(w, bool):
        return complex(w)
    raise ScenarioError(f"{where}.weight: expected a number or [re, im]")


def _build(cls, d, where, fields):
    if not isinstance(d, dict):
        raise ScenarioError(f"{where}: expected an object")
    unknown = set(d) - {"kind", *fields}
    if unknown:
        raise ScenarioError(f"{where}: unknown field(s) {sorted(unknown)}")
    kwargs = {"kind": d.get("kind", "zero")}
    for f in fields:
        if f in d:
            kwargs[f] = _num(d, f, where)
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def parse_scenario(doc: dict, name: str = "scenario") -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a JSON object")
    if doc.get("schema", SCHEMA) != SCHEMA:
        raise ScenarioError(f"unsupported schema {doc.get('schema')!r}")
    g = doc.get("grid")
    if not isinstance(g, dict):
        raise ScenarioError("missing 'grid' object")
    try:
        grid = Grid1D(_num(g, "x_min", "grid"), _num(g, "x_max", "grid"), _int(g, "n_points", "grid"))
    except ValueError as exc:
        raise ScenarioError(f"grid: {exc}") from None

    pots = doc.get("potentials", {})
    if not isinstance(pots, dict):
        raise ScenarioError("'potentials' must be an object")
    ext = ("omega", "center", "height", "x_left", "x_right")
    pot = PotentialSpec(
        _build(ExternalPotential, pots.get("external_1", {}), "potentials.external_1", ext),
        _build(ExternalPotential, pots.get("external_2", {}), "potentials.external_2", ext),
        _build(InteractionPotential, pots.get("interaction", {}), "potentials.interaction",
               ("charge_product", "softening")),
    )

    init = doc.get("initial")
    if not isinstance(init, dict):
        raise ScenarioError("missing 'initial' object")
    kind = init.get("kind")
    if kind == "product":
        initial = {
            "kind": "product",
            "particle_1": _packet(init.get("particle_1"), "initial.particle_1"),
            "particle_2": _packet(init.get("particle_2"), "initial.particle_2"),
        }
    elif kind == "two_branch":
        bs = init.get("branches")
        if not isinstance(bs, list) or not bs:
            raise ScenarioError("initial.branches: expected a non-empty list")
        initial = {
            "kind": "two_branch",
            "branches": [
                {
                    "particle_1": _packet(b.get("particle_1"), f"initial.branches[{i}].particle_1"),
                    "particle_2": _packet(b.get("particle_2"), f"initial.branches[{i}].particle_2"),
                    "weight": _weight(b.get("weight", 1), f"initial.branches[{i}]"),
                }
                for i, b in enumerate(bs)
            ],
        }
    else:
        raise ScenarioError(f"initial.kind: expected 'product' or 'two_branch', got {kind!r}")

    ens = doc.get("ensemble", {})
    monitor = doc.get("monitor")
    if monitor is not None:
        if not isinstance(monitor, dict):
            raise ScenarioError("'monitor' must be an object")
        y0 = monitor.get("y0")
        if not (isinstance(y0, list) and len(y0) == 2):
            raise ScenarioError("monitor.y0: expected [x, y]")
        monitor = {
            "t_start": _num(monitor, "t_start", "monitor", 0.0),
            "window": _num(monitor, "window", "monitor", positive=True),
            "tol": _num(monitor, "tol", "monitor", 1e-3, positive=True),
            "y0": [float(v) for v in y0],
        }
    return Scenario(
        grid=grid,
        potential=pot,
        initial=initial,
        dt=_num(doc, "dt", "scenario", positive=True),
        steps=_int(doc, "steps", "scenario", minimum=1),
        stride=_int(doc, "stride", "scenario", 1, minimum=1),
        hbar=_num(doc, "hbar", "scenario", 1.0, positive=True),
        mass=_num(doc, "mass", "scenario", 1.0, positive=True),
        ensemble_size=_int(ens, "size", "ensemble", 10000, minimum=1000),
        bins=_int(ens, "bins", "ensemble", 64, minimum=2),
        seed=_int(doc, "seed", "scenario", 0),
        monitor=monitor,
        name=name,
        raw=doc,
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_scenario(doc, path.stem)


def free_gaussian_width(sigma0: float, t: float, hbar: float = 1.0, mass: float = 1.0) -> float:
    return sigma0 * math.sqrt(1 + (hbar * t / (2 * mass * sigma0**2)) ** 2)


def simulate(scn: Scenario) -> Evolution:
    return evolve_pde(scn.initial_state(), scn.potential, scn.dt, scn.steps, scn.stride)


def run_scenario(scn: Scenario, seed: int | None = None, out_dir: str | Path | None = None) -> dict:
    seed = scn.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    evo = simulate(scn)
    grid = scn.grid
    series = marginal_series(evo)
    k_mid = len(evo.times) // 2

    x0 = sample_density(series.density[0], grid, scn.ensemble_size, rng)
    marg = guide_marginal_trajectories(series, x0)
    meq = equivariance_test(marg, series.density[-1], grid, scn.bins)
    xy0 = sample_density(np.abs(evo.snapshots[0]) ** 2, grid, scn.ensemble_size, rng)
    full = guide_full_trajectories(evo, xy0)
    feq = equivariance_test(full, np.abs(evo.snapshots[-1]) ** 2, grid, scn.bins)

    drift = evo.max_norm_drift()
    report = {
        "scenario": scn.name,
        "grid": {"x_min": grid.x_min, "x_max": grid.x_max, "n_points": grid.n_points},
        "dt": scn.dt,
        "steps": scn.steps,
        "t_final": float(evo.times[-1]),
        "norm": {"max_drift": drift, "drift_per_1000_steps": drift * 1000 / scn.steps},
        "marginal_equivariance": meq.as_dict(),
        "full_equivariance": feq.as_dict(),
        "continuity": {
            "t": float(evo.times[k_mid]),
            "marginal_residual": marginal_continuity_residual(series, k_mid) if 0 < k_mid < len(evo.times) - 1 else None,
        },
        "boundary_flux": boundary_flux(evo.wavefunction(len(evo.times) - 1)),
        "centroid": {
            "initial": centroid(series.density[0], grid),
            "final": centroid(series.density[-1], grid),
        },
    }
    if scn.free_product:
        s0 = scn.initial["particle_1"].sigma
        expected = free_gaussian_width(s0, evo.times[-1], scn.hbar, scn.mass)
        measured = width(series.density[-1], grid)
        report["width_law"] = {
            "expected": expected,
            "measured": measured,
            "relative_error": abs(measured / expected - 1),
        }
    if scn.monitor is not None:
        m = scn.monitor
        guide = guide_full_trajectories(evo, np.array([m["y0"]]))
        rep = effective_wavefunction_monitor(
            evo, (guide.times, guide.positions[:, 0, 1]), m["t_start"], m["window"], m["tol"]
        )
        report["monitor"] = rep.as_dict()
    if out_dir is not None:
        report["dumps"] = write_dumps(evo, series, Path(out_dir))
    return report


def write_dumps(evo: Evolution, series, out: Path) -> dict:
    """Marginal density table as CSV and the final joint density as raw
    little-endian float64 (row-major, axis 0 = x1)."""
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "marginal_density.csv"
    header = "t," + ",".join(f"{x:.6g}" for x in evo.grid.x)
    rows = np.column_stack([series.times, series.density])
    np.savetxt(csv_path, rows, delimiter=",", header=header, comments="", fmt="%.10e")
    bin_path = out / "density_final.bin"
    (np.abs(evo.snapshots[-1]) ** 2).astype("<f8").tofile(bin_path)
    n = evo.grid.n_points
    return {"csv": csv_path.name, "binary": bin_path.name, "binary_shape": [n, n], "dtype": "<f8"}
