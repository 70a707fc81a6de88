"""Dual-rail state vectors and layered circuits.

Each particle carries two spatial modes, so a system of ``n`` particles lives
in a ``2**n`` dimensional space.  Basis states are ordered with particle 0
(Alice, "A") as the most significant bit, i.e. ``|a, b> -> 2*a + b`` for two
particles, which makes ``A (x) I`` the left Kronecker factor.
"""
from __future__ import annotations

import math
import string
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

NORM_TOL = 1e-10
UNITARY_TOL = 1e-10
MAX_PARTICLES = 20

BasisState = tuple[int, ...]


class CircuitError(ValueError):
    """Raised for malformed gates, circuits or states."""


def particle_label(index: int) -> str:
    """Default owner label of a particle: 0 -> "A", 1 -> "B", ..."""
    return string.ascii_uppercase[index]


def basis_index(modes: Sequence[int]) -> int:
    idx = 0
    for m in modes:
        if m not in (0, 1):
            raise CircuitError(f"mode indices must be 0 or 1, got {m!r}")
        idx = (idx << 1) | int(m)
    return idx


def basis_state(index: int, n_particles: int) -> BasisState:
    return tuple((index >> (n_particles - 1 - p)) & 1 for p in range(n_particles))


def all_basis_states(n_particles: int) -> list[BasisState]:
    return [basis_state(i, n_particles) for i in range(2**n_particles)]


def is_unitary(matrix: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or not np.all(np.isfinite(m)):
        return False
    return float(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0])))) < tol


def haar_unitary(rng: np.random.Generator) -> np.ndarray:
    """Haar-random 2x2 unitary: two complex Gaussian columns, Gram-Schmidt."""
    z = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


# ---------------------------------------------------------------------------
# gate constructors


def _hadamard() -> np.ndarray:
    return np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)


def _pauli_x() -> np.ndarray:
    return np.array([[0, 1], [1, 0]], dtype=complex)


def _pauli_z() -> np.ndarray:
    return np.array([[1, 0], [0, -1]], dtype=complex)


def _phase(theta: float) -> np.ndarray:
    return np.array([[1, 0], [0, np.exp(1j * theta)]], dtype=complex)


def _u(theta: float, phi: float, lam: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array(
        [
            [c, -np.exp(1j * lam) * s],
            [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c],
        ],
        dtype=complex,
    )


def _bs(beta1: float, beta2: float) -> np.ndarray:
    # balanced splitter with two free phases: (1/sqrt2)[[e^{ib1}, e^{ib2}], [e^{-ib2}, -e^{-ib1}]]
    return np.array(
        [
            [np.exp(1j * beta1), np.exp(1j * beta2)],
            [np.exp(-1j * beta2), -np.exp(-1j * beta1)],
        ],
        dtype=complex,
    ) / math.sqrt(2)


# kind -> (argument names, builder)
GATE_KINDS: dict[str, tuple[tuple[str, ...], object]] = {
    "H": ((), _hadamard),
    "X": ((), _pauli_x),
    "Z": ((), _pauli_z),
    "phase": (("theta",), _phase),
    "u": (("theta", "phi", "lam"), _u),
    "bs": (("beta1", "beta2"), _bs),
}


@dataclass(frozen=True)
class Param:
    """A named real gate parameter (radians) and the party that chose it."""

    name: str
    value: float
    owner: str

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise CircuitError(f"parameter {self.name!r} is not finite")


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SingleParticleGate:
    target: int
    matrix: np.ndarray
    kind: str = "mat"
    params: tuple[Param, ...] = ()
    owner: str = ""

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (2, 2):
            raise CircuitError(f"single-particle gate must be 2x2, got shape {m.shape}")
        if not is_unitary(m):
            raise CircuitError(f"gate on particle {self.target} is not unitary")
        if self.target < 0:
            raise CircuitError(f"negative target {self.target}")
        object.__setattr__(self, "matrix", _readonly(m))
        if not self.owner:
            object.__setattr__(self, "owner", particle_label(self.target))

    @classmethod
    def of_kind(
        cls,
        kind: str,
        target: int,
        values: Sequence[float] = (),
        names: Sequence[str] | None = None,
        owner: str | None = None,
    ) -> "SingleParticleGate":
        if kind not in GATE_KINDS:
            raise CircuitError(f"unknown gate kind {kind!r}")
        arg_names, builder = GATE_KINDS[kind]
        if len(values) != len(arg_names):
            raise CircuitError(f"{kind} takes {len(arg_names)} parameter(s), got {len(values)}")
        owner = owner or particle_label(target)
        # unnamed parameters get positional names from the owning Circuit
        names = list(names) if names is not None else [""] * len(arg_names)
        params = tuple(Param(nm, float(v), owner) for nm, v in zip(names, values))
        return cls(target, builder(*[p.value for p in params]), kind, params, owner)

    def named(self, prefix: str) -> "SingleParticleGate":
        if all(p.name for p in self.params):
            return self
        arg_names = GATE_KINDS[self.kind][0]
        params = tuple(
            p if p.name else Param(f"{prefix}.{self.target}.{a}", p.value, p.owner)
            for p, a in zip(self.params, arg_names)
        )
        return SingleParticleGate(self.target, self.matrix, self.kind, params, self.owner)

    def with_values(self, values: Mapping[str, float]) -> "SingleParticleGate":
        if not any(p.name in values for p in self.params):
            return self
        params = tuple(
            Param(p.name, float(values[p.name]), p.owner) if p.name in values else p
            for p in self.params
        )
        builder = GATE_KINDS[self.kind][1]
        return SingleParticleGate(
            self.target, builder(*[p.value for p in params]), self.kind, params, self.owner
        )

    def __eq__(self, other):
        if not isinstance(other, SingleParticleGate):
            return NotImplemented
        return (
            self.target == other.target
            and self.kind == other.kind
            and self.params == other.params
            and self.owner == other.owner
            and np.array_equal(self.matrix, other.matrix)
        )

    __hash__ = None


@dataclass(frozen=True)
class ControlledPhaseGate:
    """diag phase e^{i theta} on the basis states where both particles sit in
    their controlled modes."""

    particles: tuple[int, int]
    theta: Param
    modes: tuple[int, int] = (1, 1)

    def __post_init__(self):
        p, q = self.particles
        if p == q:
            raise CircuitError("controlled-phase particles must be distinct")
        if p < 0 or q < 0:
            raise CircuitError("negative particle index")
        if any(m not in (0, 1) for m in self.modes):
            raise CircuitError(f"controlled modes must be 0 or 1, got {self.modes}")
        object.__setattr__(self, "particles", (int(p), int(q)))
        object.__setattr__(self, "modes", (int(self.modes[0]), int(self.modes[1])))

    @classmethod
    def make(
        cls,
        p: int,
        q: int,
        theta: float,
        name: str | None = None,
        owner: str | None = None,
        modes: tuple[int, int] = (1, 1),
    ) -> "ControlledPhaseGate":
        owner = owner or f"{particle_label(p)}+{particle_label(q)}"
        return cls((p, q), Param(name or "", float(theta), owner), modes)

    @property
    def params(self) -> tuple[Param, ...]:
        return (self.theta,)

    @property
    def phase(self) -> complex:
        return complex(np.exp(1j * self.theta.value))

    def named(self, prefix: str) -> "ControlledPhaseGate":
        if self.theta.name:
            return self
        return ControlledPhaseGate(self.particles, Param(f"{prefix}.theta", self.theta.value, self.theta.owner), self.modes)

    def with_values(self, values: Mapping[str, float]) -> "ControlledPhaseGate":
        if self.theta.name not in values:
            return self
        theta = Param(self.theta.name, float(values[self.theta.name]), self.theta.owner)
        return ControlledPhaseGate(self.particles, theta, self.modes)


Gate = Union[SingleParticleGate, ControlledPhaseGate]
Layer = Union[tuple[SingleParticleGate, ...], ControlledPhaseGate]


# ---------------------------------------------------------------------------
# states


@dataclass(frozen=True, eq=False)
class StateVector:
    n_particles: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if not 1 <= self.n_particles <= MAX_PARTICLES:
            raise CircuitError(f"particle count must be in 1..{MAX_PARTICLES}")
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != 2**self.n_particles:
            raise CircuitError(
                f"expected {2 ** self.n_particles} amplitudes for {self.n_particles} particles, got {amps.size}"
            )
        if not np.all(np.isfinite(amps)):
            raise CircuitError("amplitudes must be finite")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise CircuitError(f"state is not normalized (|psi|^2 = {norm!r})")
        object.__setattr__(self, "amplitudes", _readonly(amps))

    @classmethod
    def basis(cls, modes: Sequence[int]) -> "StateVector":
        amps = np.zeros(2 ** len(modes), dtype=complex)
        amps[basis_index(modes)] = 1.0
        return cls(len(modes), amps)

    @classmethod
    def bell(cls) -> "StateVector":
        return cls(2, np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2))

    @classmethod
    def from_unnormalized(cls, amplitudes: Iterable[complex]) -> "StateVector":
        amps = np.asarray(list(amplitudes), dtype=complex)
        n = int(round(math.log2(max(amps.size, 1))))
        if amps.size < 2 or 2**n != amps.size:
            raise CircuitError(f"amplitude count {amps.size} is not a power of two >= 2")
        if not np.all(np.isfinite(amps)):
            raise CircuitError("amplitudes must be finite")
        norm = math.sqrt(float(np.vdot(amps, amps).real))
        if norm == 0.0 or not math.isfinite(norm):
            raise CircuitError("state has zero norm")
        return cls(n, amps / norm)

    def amplitude(self, modes: Sequence[int]) -> complex:
        if len(modes) != self.n_particles:
            raise CircuitError(f"basis state {tuple(modes)} has wrong length")
        return complex(self.amplitudes[basis_index(modes)])

    def tensor(self) -> np.ndarray:
        """Amplitudes as an ``n``-axis array of shape (2, 2, ..., 2)."""
        return self.amplitudes.reshape((2,) * self.n_particles)

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def __eq__(self, other):
        if not isinstance(other, StateVector):
            return NotImplemented
        return self.n_particles == other.n_particles and np.array_equal(self.amplitudes, other.amplitudes)

    __hash__ = None


# ---------------------------------------------------------------------------
# circuits


def _check_layer(layer: Layer, n: int, position: int) -> Layer:
    prefix = f"L{position}"
    if isinstance(layer, ControlledPhaseGate):
        if max(layer.particles) >= n:
            raise CircuitError(f"controlled-phase particle index out of range for {n} particles")
        return layer.named(prefix)
    gates = tuple(layer)
    if not gates:
        raise CircuitError("empty layer")
    targets = [g.target for g in gates]
    for g in gates:
        if not isinstance(g, SingleParticleGate):
            raise CircuitError(f"layer entries must be single-particle gates, got {type(g).__name__}")
    if len(set(targets)) != len(targets):
        raise CircuitError(f"layer has repeated targets {targets}")
    if max(targets) >= n:
        raise CircuitError(f"gate target out of range for {n} particles")
    return tuple(g.named(prefix) for g in gates)


@dataclass(frozen=True, eq=False)
class Circuit:
    n_particles: int
    layers: tuple[Layer, ...] = ()
    initial: StateVector | None = None

    def __post_init__(self):
        if not 1 <= self.n_particles <= MAX_PARTICLES:
            raise CircuitError(f"particle count must be in 1..{MAX_PARTICLES}")
        layers = tuple(_check_layer(layer, self.n_particles, i) for i, layer in enumerate(self.layers))
        object.__setattr__(self, "layers", layers)
        init = self.initial
        if init is None:
            init = StateVector.basis((0,) * self.n_particles)
        if init.n_particles != self.n_particles:
            raise CircuitError("initial state has the wrong particle count")
        object.__setattr__(self, "initial", init)
        self.params()  # validates tied parameters

    def params(self) -> dict[str, Param]:
        """All named parameters; repeated names must agree in value and owner."""
        out: dict[str, Param] = {}
        for layer in self.layers:
            gates = (layer,) if isinstance(layer, ControlledPhaseGate) else layer
            for g in gates:
                for p in g.params:
                    if p.name in out and out[p.name] != p:
                        raise CircuitError(f"parameter {p.name!r} is used with conflicting values")
                    out[p.name] = p
        return out

    def with_params(self, values: Mapping[str, float]) -> "Circuit":
        known = self.params()
        missing = [k for k in values if k not in known]
        if missing:
            raise KeyError(f"unknown parameter(s): {', '.join(missing)}")
        layers = []
        for layer in self.layers:
            if isinstance(layer, ControlledPhaseGate):
                layers.append(layer.with_values(values))
            else:
                layers.append(tuple(g.with_values(values) for g in layer))
        return Circuit(self.n_particles, tuple(layers), self.initial)

    def insert_layer(self, index: int, layer: Layer) -> "Circuit":
        layers = list(self.layers)
        layers.insert(index, layer)
        return Circuit(self.n_particles, tuple(layers), self.initial)

    def remove_layer(self, index: int) -> "Circuit":
        layers = list(self.layers)
        del layers[index]
        return Circuit(self.n_particles, tuple(layers), self.initial)

    def controlled_layers(self) -> list[int]:
        return [i for i, layer in enumerate(self.layers) if isinstance(layer, ControlledPhaseGate)]

    def __len__(self) -> int:
        return len(self.layers)

    def __eq__(self, other):
        if not isinstance(other, Circuit):
            return NotImplemented
        return (
            self.n_particles == other.n_particles
            and self.initial == other.initial
            and len(self.layers) == len(other.layers)
            and all(a == b for a, b in zip(self.layers, other.layers))
        )

    __hash__ = None


# ---------------------------------------------------------------------------
# evolution


def kron_embed(gate: SingleParticleGate, n_particles: int) -> np.ndarray:
    """Dense ``2**n x 2**n`` matrix ``I (x) ... (x) U (x) ... (x) I``."""
    if not 0 <= gate.target < n_particles:
        raise CircuitError(f"target {gate.target} out of range for {n_particles} particles")
    out = np.ones((1, 1), dtype=complex)
    for p in range(n_particles):
        out = np.kron(out, gate.matrix if p == gate.target else np.eye(2, dtype=complex))
    return out


def _apply_single(amps: np.ndarray, n: int, matrix: np.ndarray, target: int) -> np.ndarray:
    psi = amps.reshape((2,) * n)
    psi = np.tensordot(matrix, psi, axes=([1], [target]))
    return np.moveaxis(psi, 0, target).reshape(-1)


def _controlled_index(n: int, gate: ControlledPhaseGate) -> tuple:
    idx: list = [slice(None)] * n
    idx[gate.particles[0]] = gate.modes[0]
    idx[gate.particles[1]] = gate.modes[1]
    return tuple(idx)


def _apply_cphase(amps: np.ndarray, n: int, gate: ControlledPhaseGate) -> np.ndarray:
    psi = amps.reshape((2,) * n).copy()
    psi[_controlled_index(n, gate)] *= gate.phase
    return psi.reshape(-1)


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    n = state.n_particles
    if isinstance(gate, ControlledPhaseGate):
        if max(gate.particles) >= n:
            raise CircuitError("controlled-phase gate does not fit the state")
        return StateVector(n, _apply_cphase(state.amplitudes, n, gate))
    if not 0 <= gate.target < n:
        raise CircuitError(f"target {gate.target} out of range for {n} particles")
    return StateVector(n, _apply_single(state.amplitudes, n, gate.matrix, gate.target))


def propagate(amps: np.ndarray, n: int, layers: Iterable[Layer]) -> np.ndarray:
    """Apply layers to a raw (possibly unnormalized) amplitude vector."""
    amps = np.asarray(amps, dtype=complex).reshape(-1)
    for layer in layers:
        if isinstance(layer, ControlledPhaseGate):
            amps = _apply_cphase(amps, n, layer)
        else:
            for g in layer:
                amps = _apply_single(amps, n, g.matrix, g.target)
    return amps


def controlled_mask(n: int, gate: ControlledPhaseGate) -> np.ndarray:
    """Boolean mask over flat amplitudes picking the controlled basis states."""
    mask = np.zeros((2,) * n, dtype=bool)
    mask[_controlled_index(n, gate)] = True
    return mask.reshape(-1)


def apply_layer(state: StateVector, layer: Layer) -> StateVector:
    if isinstance(layer, ControlledPhaseGate):
        return apply_gate(state, layer)
    n = state.n_particles
    amps = state.amplitudes
    for g in layer:
        if not 0 <= g.target < n:
            raise CircuitError(f"target {g.target} out of range for {n} particles")
        amps = _apply_single(amps, n, g.matrix, g.target)
    return StateVector(n, amps)


def evolve(circuit: Circuit) -> list[StateVector]:
    """States at every layer boundary, starting with the initial state."""
    states = [circuit.initial]
    for layer in circuit.layers:
        states.append(apply_layer(states[-1], layer))
    return states


def final_state(circuit: Circuit) -> StateVector:
    return evolve(circuit)[-1]


def layer_matrix(layer: Layer, n_particles: int) -> np.ndarray:
    """Dense unitary of one layer (reference path for small systems)."""
    if isinstance(layer, ControlledPhaseGate):
        diag = np.ones(2**n_particles, dtype=complex).reshape((2,) * n_particles)
        diag[_controlled_index(n_particles, layer)] = layer.phase
        return np.diag(diag.reshape(-1))
    out = np.eye(2**n_particles, dtype=complex)
    for g in layer:
        out = kron_embed(g, n_particles) @ out
    return out


def random_circuit(
    rng: np.random.Generator,
    n_particles: int,
    n_layers: int,
    p_cphase: float = 0.35,
    initial: StateVector | None = None,
) -> Circuit:
    """Random layered circuit with Haar gates and uniform phases."""
    layers: list[Layer] = []
    for k in range(n_layers):
        if n_particles >= 2 and rng.random() < p_cphase:
            p, q = rng.choice(n_particles, size=2, replace=False)
            layers.append(ControlledPhaseGate.make(int(p), int(q), rng.uniform(0, 2 * np.pi)))
        else:
            size = int(rng.integers(1, n_particles + 1))
            targets = sorted(int(t) for t in rng.choice(n_particles, size=size, replace=False))
            layers.append(tuple(SingleParticleGate(t, haar_unitary(rng)) for t in targets))
    return Circuit(n_particles, tuple(layers), initial)

