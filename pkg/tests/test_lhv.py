import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qmarginals.circuits import (
    bell_circuit,
    one_gate_circuit,
    random_one_gate_circuit,
    random_two_gate_circuit,
    two_gate_circuit,
)
from qmarginals.lhv import (
    entanglement_entropy,
    miss_split,
    partial_collapse_model,
    schmidt_rank,
)
from qmarginals.state_core import CircuitError, StateVector, final_state, haar_unitary

H = np.array([[1, 1], [1, -1]]) / math.sqrt(2)


def test_hand_computed_one_gate_case():
    # alpha = (1,1)/sqrt2, p(B in 1) = 1/2; branch "absent" -> H alpha = |0>,
    # branch "present" -> H (1,-1)/sqrt2 = |1>, so P(A=0) = 1/2 exactly
    dec = partial_collapse_model(one_gate_circuit(H, H, math.pi, H), 0)
    assert dec.reconstructed[0] == pytest.approx(0.5, abs=1e-15)
    assert dec.exact[0] == pytest.approx(0.5, abs=1e-15)
    assert [b.weight for b in dec.branches] == pytest.approx([0.5, 0.5])
    assert dec.verdict == "local-interpretable"
    assert not dec.heuristic


@given(st.integers(0, 100_000))
def test_one_gate_reconstruction_is_exact(seed):
    c = random_one_gate_circuit(np.random.default_rng(seed))
    dec = partial_collapse_model(c, 0)
    assert dec.residual < 1e-12
    assert np.allclose(dec.recompute(), dec.reconstructed.probs, atol=1e-15)


def test_subsystem_b_also_works(rng):
    c = random_one_gate_circuit(rng)
    assert partial_collapse_model(c, 1).residual < 1e-12


def test_two_gate_breakdown_on_fixed_circuit():
    a = np.random.default_rng(7)
    c = two_gate_circuit(*(haar_unitary(a) for _ in range(2)), 1.2, haar_unitary(a), haar_unitary(a), 2.0, haar_unitary(a))
    dec = partial_collapse_model(c, 0)
    assert dec.residual > 1e-3
    assert dec.verdict == "configuration-space"
    assert dec.heuristic
    assert len(dec.branches) == 4


def test_two_gate_residual_has_zeros_inside_phase_window():
    # The residual is |f| for a real smooth f; along theta2 it changes sign
    # inside [0.3, pi - 0.3], so some circuits in that window reconstruct
    # exactly.  This is why no fixed fraction of random draws can exceed 1e-3.
    c = random_two_gate_circuit(np.random.default_rng(3))

    def f(t2):
        d = partial_collapse_model(c.with_params({"theta2": t2}), 0)
        return d.reconstructed[0] - d.exact[0]

    lo, hi = 0.3, math.pi - 0.3
    assert f(lo) * f(hi) < 0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if f(lo) * f(mid) > 0 else (lo, mid)
    assert abs(f(lo)) < 1e-10


def test_entangled_initial_state_rejected():
    with pytest.raises(CircuitError):
        partial_collapse_model(bell_circuit(0, 0, 1.0), 0)


def test_gate_not_touching_subsystem_rejected():
    from qmarginals.state_core import Circuit, ControlledPhaseGate

    c = Circuit(3, (ControlledPhaseGate.make(1, 2, 1.0),))
    with pytest.raises(CircuitError):
        partial_collapse_model(c, 0)


@given(st.integers(0, 100_000), st.sampled_from([1, 4]))
def test_miss_split_identity(seed, gate):
    c = random_two_gate_circuit(np.random.default_rng(seed))
    split = miss_split(c, gate, 0)
    assert split.identity_violation < 1e-12


def test_miss_split_zero_phase_has_no_interference(rng):
    c = random_two_gate_circuit(rng).with_params({"theta2": 0.0})
    split = miss_split(c, 4, 0)
    assert np.allclose(split.interference, 0, atol=1e-15)


def test_miss_split_requires_controlled_layer(rng):
    with pytest.raises(CircuitError):
        miss_split(random_two_gate_circuit(rng), 0, 0)


@pytest.mark.parametrize(
    "state, bits",
    [(StateVector.bell(), 1.0), (StateVector.basis((0, 1)), 0.0), (StateVector.from_unnormalized([1, 1, 1, 1]), 0.0)],
)
def test_entropy_oracles(state, bits):
    assert entanglement_entropy(state, 0) == pytest.approx(bits, abs=1e-12)


@given(st.integers(0, 10_000))
def test_entropy_symmetric_and_bounded(seed):
    s = final_state(random_two_gate_circuit(np.random.default_rng(seed)))
    e0, e1 = entanglement_entropy(s, 0), entanglement_entropy(s, 1)
    assert e0 == pytest.approx(e1, abs=1e-10)
    assert -1e-12 <= e0 <= 1 + 1e-12
    assert schmidt_rank(s, 0) in (1, 2)
