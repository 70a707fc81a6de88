"""Discrete sum over configuration-space paths.

A path assigns a mode to every particle at every layer boundary.  Paths only
branch at single-particle (mode-mixing) layers; controlled-phase layers are
diagonal and multiply the amplitude by ``e^{i theta}`` when both particles sit
in their controlled modes.  A superposed initial state contributes one family
of paths per nonzero basis component, each carrying that component's
amplitude.

Internally the paths of one root are stored as a product: per-particle mode
histories (``S_p x (L+1)`` integer arrays) plus an ``n``-axis amplitude array
of shape ``(S_0, ..., S_{n-1})``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .probability import (
    as_subsystem,
    external_particles,
    default_insertion_point,
    marginal_probs,
    random_external_layer,
)
from .state_core import (
    BasisState,
    Circuit,
    CircuitError,
    ControlledPhaseGate,
    all_basis_states,
    basis_index,
    basis_state,
    final_state,
)

MAX_PATHS = 10**7


class PathLimitError(RuntimeError):
    """Raised when enumeration would exceed ``MAX_PATHS``."""


@dataclass(frozen=True)
class PathAmplitude:
    path: tuple[tuple[int, ...], ...]  # per particle, one mode per layer boundary
    amplitude: complex

    @property
    def endpoint(self) -> BasisState:
        return tuple(h[-1] for h in self.path)


@dataclass(frozen=True, eq=False)
class _Block:
    root: BasisState
    histories: list[np.ndarray]
    amplitudes: np.ndarray

    def __len__(self) -> int:
        return int(self.amplitudes.size)


def _gate_on(layer, p: int):
    if isinstance(layer, ControlledPhaseGate):
        return None
    for g in layer:
        if g.target == p:
            return g.matrix
    return None


def _histories(circuit: Circuit, p: int, root_mode: int, end_mode: int | None):
    seqs = np.array([[root_mode]], dtype=np.int8)
    amps = np.ones(1, dtype=complex)
    for layer in circuit.layers:
        u = _gate_on(layer, p)
        last = seqs[:, -1]
        if u is None:
            seqs = np.column_stack([seqs, last])
            continue
        new_seqs, new_amps = [], []
        for i in (0, 1):
            w = u[i, last]
            keep = w != 0
            if np.any(keep):
                s = seqs[keep]
                new_seqs.append(np.column_stack([s, np.full(len(s), i, dtype=np.int8)]))
                new_amps.append(amps[keep] * w[keep])
        seqs = np.concatenate(new_seqs)
        amps = np.concatenate(new_amps)
    if end_mode is not None:
        keep = seqs[:, -1] == end_mode
        seqs, amps = seqs[keep], amps[keep]
    return seqs, amps


def _count_histories(circuit: Circuit, p: int, root_mode: int) -> np.ndarray:
    """Number of structurally allowed histories ending in mode 0 / 1."""
    counts = np.zeros(2, dtype=object)
    counts[root_mode] = 1
    for layer in circuit.layers:
        u = _gate_on(layer, p)
        if u is not None:
            support = (u != 0).astype(object)
            counts = support.dot(counts)
    return counts


def path_count(circuit: Circuit, endpoint: Sequence[int] | None = None) -> int:
    """Exact number of paths (optionally only those ending at ``endpoint``)."""
    n = circuit.n_particles
    total = 0
    for idx in np.flatnonzero(circuit.initial.amplitudes):
        root = basis_state(int(idx), n)
        prod = 1
        for p in range(n):
            c = _count_histories(circuit, p, root[p])
            prod *= int(c.sum() if endpoint is None else c[endpoint[p]])
        total += prod
    return total


def mixing_layer_count(circuit: Circuit, p: int) -> int:
    """Layers whose gate on ``p`` has all four entries nonzero."""
    return sum(
        1
        for layer in circuit.layers
        if (u := _gate_on(layer, p)) is not None and np.all(u != 0)
    )


def _blocks(circuit: Circuit, endpoint: Sequence[int] | None) -> Iterator[_Block]:
    n = circuit.n_particles
    if endpoint is not None and len(endpoint) != n:
        raise CircuitError(f"endpoint {tuple(endpoint)} does not match {n} particles")
    count = path_count(circuit, endpoint)
    if count > MAX_PATHS:
        raise PathLimitError(f"{count} paths exceed the enumeration limit of {MAX_PATHS}")
    cphases = [
        (k, layer) for k, layer in enumerate(circuit.layers) if isinstance(layer, ControlledPhaseGate)
    ]
    for idx in np.flatnonzero(circuit.initial.amplitudes):
        root = basis_state(int(idx), n)
        hists, amp = [], np.asarray(circuit.initial.amplitudes[idx], dtype=complex).reshape((1,) * n)
        for p in range(n):
            seqs, a = _histories(circuit, p, root[p], None if endpoint is None else endpoint[p])
            hists.append(seqs)
            shape = [1] * n
            shape[p] = len(a)
            amp = amp * a.reshape(shape)
        if amp.size == 0:
            continue
        for k, gate in cphases:
            (p, q), (mp, mq) = gate.particles, gate.modes
            sp = [1] * n
            sp[p] = len(hists[p])
            sq = [1] * n
            sq[q] = len(hists[q])
            hit = (hists[p][:, k] == mp).reshape(sp) & (hists[q][:, k] == mq).reshape(sq)
            amp = amp * np.where(hit, gate.phase, 1.0)
        yield _Block(root, hists, amp)


def enumerate_paths(circuit: Circuit, endpoint: Sequence[int]) -> list[PathAmplitude]:
    out = []
    for block in _blocks(circuit, endpoint):
        for multi in np.ndindex(block.amplitudes.shape):
            path = tuple(tuple(int(m) for m in block.histories[p][i]) for p, i in enumerate(multi))
            out.append(PathAmplitude(path, complex(block.amplitudes[multi])))
    return out


def path_amplitude(circuit: Circuit, path: Sequence[Sequence[int]]) -> complex:
    """Amplitude of one path, recomputed directly from its definition."""
    n = circuit.n_particles
    root = tuple(h[0] for h in path)
    amp = complex(circuit.initial.amplitudes[basis_index(root)])
    for k, layer in enumerate(circuit.layers):
        if isinstance(layer, ControlledPhaseGate):
            (p, q), (mp, mq) = layer.particles, layer.modes
            if path[p][k] == mp and path[q][k] == mq:
                amp *= layer.phase
        else:
            for g in layer:
                amp *= complex(g.matrix[path[g.target][k + 1], path[g.target][k]])
        for p in range(n):
            if _gate_on(layer, p) is None and path[p][k + 1] != path[p][k]:
                return 0j
    return amp


def sum_paths_amplitude(circuit: Circuit, endpoint: Sequence[int]) -> complex:
    """Coherent sum of all path amplitudes ending at ``endpoint``."""
    total = 0j
    for block in _blocks(circuit, endpoint):
        total += complex(np.sum(block.amplitudes))
    return total


def path_sum_all(circuit: Circuit) -> np.ndarray:
    """Path-sum amplitude for every endpoint, from a single enumeration."""
    n = circuit.n_particles
    out = np.zeros(2**n, dtype=complex)
    for block in _blocks(circuit, None):
        ends = [h[:, -1] for h in block.histories]
        for e in all_basis_states(n):
            sel = np.ix_(*[np.flatnonzero(ends[p] == e[p]) for p in range(n)])
            out[basis_index(e)] += np.sum(block.amplitudes[sel])
    return out


def marginal_via_paths(
    circuit: Circuit, sub: int | Iterable[int], outcome: Sequence[int] | None = None
):
    """Marginal of ``sub`` by summing coherently per full endpoint, squaring,
    then summing classically over the external endpoints.

    Returns the probability of ``outcome``, or the whole flat distribution
    when ``outcome`` is None.
    """
    sub = as_subsystem(sub, circuit.n_particles)
    n = circuit.n_particles
    amps = path_sum_all(circuit)
    probs = np.zeros(2 ** len(sub))
    for e in all_basis_states(n):
        a = tuple(e[i] for i in sub)
        probs[basis_index(a)] += abs(amps[basis_index(e)]) ** 2
    if outcome is None:
        return probs
    if isinstance(outcome, (int, np.integer)):
        outcome = (int(outcome),)
    return float(probs[basis_index(outcome)])


def incoherent_marginal(circuit: Circuit, sub: int | Iterable[int]) -> np.ndarray:
    """Wrong-order variant: classical sum of per-path squared moduli."""
    sub = as_subsystem(sub, circuit.n_particles)
    probs = np.zeros(2 ** len(sub))
    for block in _blocks(circuit, None):
        w = np.abs(block.amplitudes) ** 2
        n = circuit.n_particles
        ends = [h[:, -1] for h in block.histories]
        for e in all_basis_states(n):
            sel = np.ix_(*[np.flatnonzero(ends[p] == e[p]) for p in range(n)])
            probs[basis_index(tuple(e[i] for i in sub))] += np.sum(w[sel])
    return probs


@dataclass(frozen=True, eq=False)
class InterferenceReport:
    subsystem: tuple[int, ...]
    paths: list[PathAmplitude]
    groups: dict[BasisState, list[int]]  # full endpoint -> path indices
    non_interfering: dict[tuple[int, ...], list[tuple[int, int]]] = field(default_factory=dict)
    pair_counts: dict[tuple[int, ...], int] = field(default_factory=dict)

    def groups_for(self, outcome: Sequence[int]) -> list[BasisState]:
        return [e for e in self.groups if tuple(e[i] for i in self.subsystem) == tuple(outcome)]

    def interferes(self, i: int, j: int) -> bool:
        return self.paths[i].endpoint == self.paths[j].endpoint

    def as_dict(self) -> dict:
        return {
            "subsystem": list(self.subsystem),
            "n_paths": len(self.paths),
            "groups": {"".join(map(str, e)): len(ix) for e, ix in self.groups.items()},
            "non_interfering_pairs": {"".join(map(str, o)): c for o, c in self.pair_counts.items()},
        }


def classify_interference(
    circuit: Circuit, sub: int | Iterable[int], max_pairs: int = 10_000
) -> InterferenceReport:
    """Group paths by full endpoint; pairs sharing the subsystem endpoint but
    not the external one are listed as non-interfering (up to ``max_pairs``
    per outcome; the full count is always reported)."""
    sub = as_subsystem(sub, circuit.n_particles)
    n = circuit.n_particles
    paths: list[PathAmplitude] = []
    for e in all_basis_states(n):
        paths.extend(p for p in enumerate_paths(circuit, e) if p.amplitude != 0)
    groups: dict[BasisState, list[int]] = {}
    for i, p in enumerate(paths):
        groups.setdefault(p.endpoint, []).append(i)
    pairs: dict[tuple[int, ...], list[tuple[int, int]]] = {}
    counts: dict[tuple[int, ...], int] = {}
    for outcome in all_basis_states(len(sub)):
        ends = [e for e in groups if tuple(e[i] for i in sub) == outcome]
        listed: list[tuple[int, int]] = []
        total = 0
        for a in range(len(ends)):
            for b in range(a + 1, len(ends)):
                ga, gb = groups[ends[a]], groups[ends[b]]
                total += len(ga) * len(gb)
                for i in ga:
                    for j in gb:
                        if len(listed) >= max_pairs:
                            break
                        listed.append((i, j))
        pairs[outcome] = listed
        counts[outcome] = total
    return InterferenceReport(sub, paths, groups, pairs, counts)


@dataclass(frozen=True)
class RemnantReport:
    insert_at: int
    trials: int
    seed: int
    max_marginal_deviation: float
    min_amplitude_shift: float
    max_amplitude_shift: float
    tol: float

    @property
    def marginal_invariant(self) -> bool:
        return self.max_marginal_deviation < self.tol

    def as_dict(self) -> dict:
        return {**self.__dict__, "marginal_invariant": self.marginal_invariant}


def remnant_invariance_check(
    circuit: Circuit,
    sub: int | Iterable[int],
    trials: int = 100,
    seed: int = 0,
    insert_at: int | None = None,
    tol: float = 1e-12,
) -> RemnantReport:
    """Append random external gates after the last coupling layer (or at
    ``insert_at``) and compare the path-route marginal and the per-endpoint
    path sums before and after."""
    sub = as_subsystem(sub, circuit.n_particles)
    if not external_particles(circuit, sub):
        raise CircuitError("subsystem covers every particle; nothing external to perturb")
    at = default_insertion_point(circuit, sub)[0] if insert_at is None else int(insert_at)
    base_marg = marginal_via_paths(circuit, sub)
    base_amps = path_sum_all(circuit)
    max_dev, shifts = 0.0, []
    for k in range(trials):
        rng = np.random.default_rng(seed + k)
        pert = circuit.insert_layer(at, random_external_layer(circuit, sub, rng))
        max_dev = max(max_dev, float(np.max(np.abs(marginal_via_paths(pert, sub) - base_marg))))
        shifts.append(float(np.max(np.abs(path_sum_all(pert) - base_amps))))
    return RemnantReport(at, trials, seed, max_dev, min(shifts, default=0.0), max(shifts, default=0.0), tol)


def verify_against_state_vector(circuit: Circuit) -> float:
    """Max |path-sum amplitude - state-vector amplitude| over all endpoints."""
    return float(np.max(np.abs(path_sum_all(circuit) - final_state(circuit).amplitudes)))


def verify_marginal(circuit: Circuit, sub) -> float:
    sub = as_subsystem(sub, circuit.n_particles)
    return float(np.max(np.abs(marginal_via_paths(circuit, sub) - marginal_probs(final_state(circuit), sub))))
