"""Information available to a subsystem at its interactions, and a local
search for parameter changes the subsystem should not be able to see but does.

A subsystem is "licensed" to know two things: the parameters its own owner
chose, and the amplitudes of the joint basis components that actually pass
through each controlled-phase gate touching it (read just before the gate).
``hypothesis_violation_search`` moves external parameters along directions
that leave every licensed amplitude fixed to first order and reports whether
the subsystem marginal still moves.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .probability import as_subsystem, marginal_probs
from .state_core import (
    BasisState,
    Circuit,
    ControlledPhaseGate,
    Param,
    all_basis_states,
    basis_index,
    evolve,
    final_state,
    particle_label,
)
from .circuits import bell_circuit

FD_STEP = 1e-5
NULL_TOL = 1e-9
DRIFT_TOL = 1e-8
SHIFT_TOL = 1e-6


@dataclass(frozen=True)
class LicensedEntry:
    layer: int
    basis: BasisState
    amplitude: complex


@dataclass(frozen=True)
class LicensedSet:
    entries: tuple[LicensedEntry, ...]
    local_params: dict[str, float]

    def amplitudes(self) -> np.ndarray:
        return np.array([e.amplitude for e in self.entries], dtype=complex)

    def as_dict(self) -> dict:
        return {
            "entries": [
                {
                    "layer": e.layer,
                    "basis": list(e.basis),
                    "amplitude": [e.amplitude.real, e.amplitude.imag],
                }
                for e in self.entries
            ],
            "local_params": dict(self.local_params),
        }


def owner_labels(sub: Sequence[int]) -> set[str]:
    return {particle_label(i) for i in sub}


def visible_to(param: Param, sub: Sequence[int]) -> bool:
    """A parameter is the subsystem's own if any '+'-separated owner matches."""
    return bool(set(param.owner.split("+")) & owner_labels(sub))


def licensed_coefficients(circuit: Circuit, sub: int | Iterable[int]) -> LicensedSet:
    sub = as_subsystem(sub, circuit.n_particles)
    n = circuit.n_particles
    states = evolve(circuit)
    entries = []
    for i, layer in enumerate(circuit.layers):
        if not isinstance(layer, ControlledPhaseGate):
            continue
        if not any(p in sub for p in layer.particles):
            continue
        (p, q), (mp, mq) = layer.particles, layer.modes
        for b in all_basis_states(n):
            if b[p] == mp and b[q] == mq:
                entries.append(LicensedEntry(i, b, complex(states[i].amplitudes[basis_index(b)])))
    local = {name: p.value for name, p in circuit.params().items() if visible_to(p, sub)}
    return LicensedSet(tuple(entries), local)


def _marginal_at(circuit: Circuit, sub, values: dict[str, float]) -> np.ndarray:
    return marginal_probs(final_state(circuit.with_params(values)), sub)


def marginal_sensitivity(
    circuit: Circuit, sub: int | Iterable[int], param: str, eps: float = FD_STEP
) -> np.ndarray:
    """Central-difference derivative of every marginal probability."""
    sub = as_subsystem(sub, circuit.n_particles)
    if eps <= 0:
        raise ValueError("finite-difference step must be positive")
    params = circuit.params()
    if param not in params:
        raise KeyError(f"unknown parameter {param!r}")
    x = params[param].value
    plus = _marginal_at(circuit, sub, {param: x + eps})
    minus = _marginal_at(circuit, sub, {param: x - eps})
    return (plus - minus) / (2 * eps)


def _licensed_vector(circuit: Circuit, sub, values: dict[str, float]) -> np.ndarray:
    amps = licensed_coefficients(circuit.with_params(values), sub).amplitudes()
    return np.concatenate([amps.real, amps.imag])


def licensed_jacobian(
    circuit: Circuit, sub, params: Sequence[str], eps: float = FD_STEP
) -> np.ndarray:
    """Rows: real then imaginary parts of each licensed amplitude."""
    sub = as_subsystem(sub, circuit.n_particles)
    base = circuit.params()
    cols = []
    for name in params:
        x = base[name].value
        plus = _licensed_vector(circuit, sub, {name: x + eps})
        minus = _licensed_vector(circuit, sub, {name: x - eps})
        cols.append((plus - minus) / (2 * eps))
    return np.array(cols).T.reshape(-1, len(params))


def null_space(matrix: np.ndarray, tol: float = NULL_TOL) -> np.ndarray:
    """Orthonormal basis (columns) of the numerical null space via SVD."""
    k = matrix.shape[1]
    if matrix.shape[0] == 0:
        return np.eye(k)
    _, s, vh = np.linalg.svd(matrix)
    rank = int(np.sum(s > tol))
    return vh[rank:].conj().T


@dataclass(frozen=True, eq=False)
class ViolationReport:
    params: tuple[str, ...]
    direction: np.ndarray
    licensed_drift: float
    marginal_shift: float
    null_basis: np.ndarray
    jacobian: np.ndarray
    gradient: np.ndarray  # outcomes x params

    @property
    def verdict(self) -> str:
        if self.licensed_drift < DRIFT_TOL and self.marginal_shift > SHIFT_TOL:
            return "violated"
        return "not found"

    def as_dict(self) -> dict:
        return {
            "params": list(self.params),
            "direction": dict(zip(self.params, self.direction.tolist())),
            "licensed_drift": self.licensed_drift,
            "marginal_shift": self.marginal_shift,
            "null_dimension": int(self.null_basis.shape[1]),
            "verdict": self.verdict,
        }


def external_params(circuit: Circuit, sub: Sequence[int]) -> list[str]:
    return [name for name, p in circuit.params().items() if not visible_to(p, sub)]


def hypothesis_violation_search(
    circuit: Circuit,
    sub: int | Iterable[int],
    params: Sequence[str] | None = None,
    eps: float = FD_STEP,
) -> ViolationReport:
    sub = as_subsystem(sub, circuit.n_particles)
    names = tuple(params) if params is not None else tuple(external_params(circuit, sub))
    if not names:
        raise ValueError("need at least one external parameter to search over")
    known = circuit.params()
    missing = [p for p in names if p not in known]
    if missing:
        raise KeyError(f"unknown parameter(s): {', '.join(missing)}")

    jac = licensed_jacobian(circuit, sub, names, eps)
    grad = np.array([marginal_sensitivity(circuit, sub, p, eps) for p in names]).T
    basis = null_space(jac)
    if basis.shape[1] == 0:
        direction = np.zeros(len(names))
    else:
        restricted = grad @ basis
        _, _, vh = np.linalg.svd(restricted)
        direction = basis @ vh[0]
        # sign convention: largest component positive
        if direction[np.argmax(np.abs(direction))] < 0:
            direction = -direction
    drift = float(np.max(np.abs(jac @ direction))) if jac.size else 0.0
    shift = float(np.max(np.abs(grad @ direction)))
    return ViolationReport(names, direction, drift, shift, basis, jac, grad)


def bell_closed_form(beta1: float, beta2: float, theta1: float) -> float:
    """P(A=0) for the Bell-state circuit, from direct expansion."""
    return 0.5 + 0.25 * (math.cos(beta2 - beta1) - math.cos(theta1 + beta2 - beta1))


def bell_printed_form(beta1: float, beta2: float, theta1: float) -> float:
    """The same quantity with the factor 1/2 on the Re{} term dropped:
    1/2 [1 - Re{e^{i(b2 - b1)} (e^{i theta1} - 1)}]."""
    z = np.exp(1j * (beta2 - beta1)) * (np.exp(1j * theta1) - 1)
    return float(0.5 * (1 - z.real))


def bell_scenario(beta1: float, beta2: float, theta1: float) -> dict:
    sim = marginal_probs(final_state(bell_circuit(beta1, beta2, theta1)), (0,))
    closed = bell_closed_form(beta1, beta2, theta1)
    printed = bell_printed_form(beta1, beta2, theta1)
    return {
        "beta1": beta1,
        "beta2": beta2,
        "theta1": theta1,
        "closed_form": {"P(A=0)": closed, "P(A=1)": 1.0 - closed},
        "simulation": {"P(A=0)": float(sim[0]), "P(A=1)": float(sim[1])},
        "max_abs_diff": float(max(abs(closed - sim[0]), abs(1.0 - closed - sim[1]))),
        "printed_form": {
            "P(A=0)": printed,
            "agrees_at_this_point": bool(abs(printed - closed) < 1e-12),
            "formula_consistent": False,
            "note": "printed expression omits the factor 1/2 in B10* B11 = -1/2 e^{i(b2-b1)}",
        },
    }
