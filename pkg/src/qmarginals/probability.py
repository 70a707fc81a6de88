"""Born-rule joint distributions, subsystem marginals and no-signaling checks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .state_core import (
    Circuit,
    CircuitError,
    ControlledPhaseGate,
    SingleParticleGate,
    StateVector,
    all_basis_states,
    basis_index,
    evolve,
    final_state,
    haar_unitary,
)

PROB_TOL = 1e-10

Subsystem = tuple[int, ...]


def as_subsystem(sub: int | Iterable[int], n_particles: int) -> Subsystem:
    """Normalize ``sub`` to a tuple of distinct, valid particle indices."""
    idx = (int(sub),) if isinstance(sub, (int, np.integer)) else tuple(int(i) for i in sub)
    if not idx:
        raise CircuitError("subsystem must contain at least one particle")
    if len(set(idx)) != len(idx):
        raise CircuitError(f"subsystem has repeated particles: {idx}")
    bad = [i for i in idx if not 0 <= i < n_particles]
    if bad:
        raise CircuitError(f"subsystem particle(s) {bad} out of range for {n_particles} particles")
    return idx


@dataclass(frozen=True, eq=False)
class Distribution:
    """Probabilities over the outcomes of ``particles``.

    ``probs[k]`` is the probability of the outcome tuple whose bits (first
    listed particle most significant) spell ``k``.
    """

    particles: Subsystem
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).reshape(-1)
        if p.size != 2 ** len(self.particles):
            raise ValueError("distribution size does not match its subsystem")
        if np.any(p < -PROB_TOL) or abs(p.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"not a probability distribution (sum={p.sum()!r}, min={p.min()!r})")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def __getitem__(self, outcome: int | Sequence[int]) -> float:
        if isinstance(outcome, (int, np.integer)):
            outcome = (int(outcome),)
        if len(outcome) != len(self.particles):
            raise KeyError(outcome)
        return float(self.probs[basis_index(outcome)])

    def outcomes(self) -> list[tuple[int, ...]]:
        return all_basis_states(len(self.particles))

    def as_dict(self) -> dict[str, float]:
        return {"".join(map(str, o)): float(self.probs[i]) for i, o in enumerate(self.outcomes())}

    def max_abs_diff(self, other: "Distribution") -> float:
        if other.particles != self.particles:
            raise ValueError("distributions are over different subsystems")
        return float(np.max(np.abs(self.probs - other.probs)))

    def total_variation(self, other: "Distribution") -> float:
        if other.particles != self.particles:
            raise ValueError("distributions are over different subsystems")
        return 0.5 * float(np.sum(np.abs(self.probs - other.probs)))


def joint_distribution(state: StateVector) -> Distribution:
    return Distribution(tuple(range(state.n_particles)), np.abs(state.amplitudes) ** 2)


def marginal_probs(state: StateVector, sub: Subsystem) -> np.ndarray:
    """Flat marginal probabilities for an already validated subsystem."""
    n = state.n_particles
    p = (np.abs(state.amplitudes) ** 2).reshape((2,) * n)
    rest = tuple(i for i in range(n) if i not in sub)
    p = p.sum(axis=rest) if rest else p
    # summed array keeps the kept axes in ascending order; reorder to `sub`
    kept = sorted(sub)
    p = np.transpose(p, [kept.index(i) for i in sub])
    return p.reshape(-1)


def marginal(state: StateVector, sub: int | Iterable[int]) -> Distribution:
    sub = as_subsystem(sub, state.n_particles)
    return Distribution(sub, marginal_probs(state, sub))


def last_coupling_layer(circuit: Circuit, sub: Subsystem) -> int | None:
    """Index of the last controlled-phase layer linking ``sub`` with an outside particle."""
    last = None
    for i, layer in enumerate(circuit.layers):
        if isinstance(layer, ControlledPhaseGate):
            inside = [p in sub for p in layer.particles]
            if any(inside) and not all(inside):
                last = i
    return last


def external_particles(circuit: Circuit, sub: Subsystem) -> list[int]:
    return [p for p in range(circuit.n_particles) if p not in sub]


def random_external_layer(circuit: Circuit, sub: Subsystem, rng: np.random.Generator):
    return tuple(
        SingleParticleGate(p, haar_unitary(rng), owner="ext") for p in external_particles(circuit, sub)
    )


@dataclass(frozen=True)
class NoSignalingReport:
    subsystem: Subsystem
    insert_at: int
    trials: int
    seed: int
    max_deviation: float
    max_total_variation: float
    tol: float
    coupling_layer: int | None

    @property
    def passed(self) -> bool:
        return self.max_deviation < self.tol

    def as_dict(self) -> dict:
        return {
            "subsystem": list(self.subsystem),
            "insert_at": self.insert_at,
            "coupling_layer": self.coupling_layer,
            "trials": self.trials,
            "seed": self.seed,
            "max_deviation": self.max_deviation,
            "max_total_variation": self.max_total_variation,
            "tol": self.tol,
            "passed": self.passed,
        }


def default_insertion_point(circuit: Circuit, sub: Subsystem) -> tuple[int, int | None]:
    last = last_coupling_layer(circuit, sub)
    # no coupling at all: perturb the whole circuit from the start
    return (0 if last is None else last + 1), last


def no_signaling_check(
    circuit: Circuit,
    sub: int | Iterable[int],
    trials: int = 1000,
    seed: int = 0,
    insert_at: int | None = None,
    tol: float = 1e-12,
) -> NoSignalingReport:
    """Insert random unitaries on all external particles and watch the
    subsystem marginal.

    By default the random layer goes right after the last layer coupling
    ``sub`` to the outside, where no-signaling forbids any change.  Passing
    ``insert_at`` places it elsewhere (e.g. before a later interaction) to show
    the check can tell the difference.  Trial ``k`` draws from
    ``default_rng(seed + k)``.
    """
    sub = as_subsystem(sub, circuit.n_particles)
    if not external_particles(circuit, sub):
        raise CircuitError("subsystem covers every particle; nothing external to perturb")
    default_at, last = default_insertion_point(circuit, sub)
    at = default_at if insert_at is None else int(insert_at)
    if not 0 <= at <= len(circuit.layers):
        raise CircuitError(f"insertion point {at} outside 0..{len(circuit.layers)}")
    reference = marginal_probs(final_state(circuit), sub)
    max_dev = 0.0
    max_tv = 0.0
    for k in range(trials):
        rng = np.random.default_rng(seed + k)
        perturbed = circuit.insert_layer(at, random_external_layer(circuit, sub, rng))
        probs = marginal_probs(final_state(perturbed), sub)
        diff = np.abs(probs - reference)
        max_dev = max(max_dev, float(diff.max()))
        max_tv = max(max_tv, 0.5 * float(diff.sum()))
    return NoSignalingReport(sub, at, trials, seed, max_dev, max_tv, tol, last)


def marginals_by_layer(circuit: Circuit, sub: int | Iterable[int]) -> list[Distribution]:
    sub = as_subsystem(sub, circuit.n_particles)
    return [Distribution(sub, marginal_probs(s, sub)) for s in evolve(circuit)]
