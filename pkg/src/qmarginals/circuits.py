"""Reference circuits: one controlled gate, two controlled gates, and the
Bell-state information-flow circuit."""
from __future__ import annotations

import math

import numpy as np

from .state_core import (
    Circuit,
    ControlledPhaseGate,
    SingleParticleGate,
    StateVector,
    haar_unitary,
)

# layer positions inside two_gate_circuit
TWO_GATE_LAYERS = {"A1B1": 0, "AB1": 1, "A2": 2, "B2": 3, "AB2": 4, "A3": 5}


def _gate(target: int, matrix, owner: str | None = None) -> SingleParticleGate:
    if isinstance(matrix, SingleParticleGate):
        return matrix
    return SingleParticleGate(target, np.asarray(matrix, dtype=complex), owner=owner or "")


def one_gate_circuit(a1, b1, theta1: float, a2) -> Circuit:
    """|0,0> -> (A1 x B1) -> AB1(theta1) -> (A2 x I)."""
    return Circuit(
        2,
        (
            (_gate(0, a1), _gate(1, b1)),
            ControlledPhaseGate.make(0, 1, theta1, name="theta1"),
            (_gate(0, a2),),
        ),
    )


def two_gate_circuit(a1, b1, theta1: float, a2, b2, theta2: float, a3) -> Circuit:
    """Extends the one-gate circuit with B2, AB2(theta2) and A3."""
    return Circuit(
        2,
        (
            (_gate(0, a1), _gate(1, b1)),
            ControlledPhaseGate.make(0, 1, theta1, name="theta1"),
            (_gate(0, a2),),
            (_gate(1, b2),),
            ControlledPhaseGate.make(0, 1, theta2, name="theta2"),
            (_gate(0, a3),),
        ),
    )


def bell_circuit(beta1: float, beta2: float, theta1: float) -> Circuit:
    """Bell state -> (I x bs(beta1, beta2)) -> AB1(theta1) -> (H x I)."""
    return Circuit(
        2,
        (
            (SingleParticleGate.of_kind("bs", 1, (beta1, beta2), names=("beta1", "beta2")),),
            ControlledPhaseGate.make(0, 1, theta1, name="theta1"),
            (SingleParticleGate.of_kind("H", 0),),
        ),
        StateVector.bell(),
    )


def random_one_gate_circuit(rng: np.random.Generator, phase_range=(0.0, 2 * math.pi)) -> Circuit:
    return one_gate_circuit(
        haar_unitary(rng), haar_unitary(rng), rng.uniform(*phase_range), haar_unitary(rng)
    )


def random_two_gate_circuit(rng: np.random.Generator, phase_range=(0.3, math.pi - 0.3)) -> Circuit:
    a1, b1 = haar_unitary(rng), haar_unitary(rng)
    t1 = rng.uniform(*phase_range)
    a2, b2 = haar_unitary(rng), haar_unitary(rng)
    t2 = rng.uniform(*phase_range)
    return two_gate_circuit(a1, b1, t1, a2, b2, t2, haar_unitary(rng))
