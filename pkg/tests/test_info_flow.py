import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qmarginals.circuits import bell_circuit, one_gate_circuit
from qmarginals.info_flow import (
    bell_closed_form,
    bell_printed_form,
    bell_scenario,
    hypothesis_violation_search,
    licensed_coefficients,
    licensed_jacobian,
    marginal_sensitivity,
    null_space,
    visible_to,
)
from qmarginals.state_core import Param, SingleParticleGate, haar_unitary

angles = st.floats(-math.pi, math.pi, allow_nan=False)


@given(angles, angles, angles)
def test_closed_form_matches_simulation(b1, b2, t):
    rep = bell_scenario(b1, b2, t)
    assert rep["max_abs_diff"] < 1e-12


def test_printed_form_is_not_a_probability():
    assert bell_printed_form(0, 0, math.pi) == pytest.approx(1.5)
    assert bell_closed_form(0, 0, math.pi) == pytest.approx(1.0)
    assert bell_scenario(0, 0, math.pi / 2)["printed_form"]["formula_consistent"] is False


def test_licensed_amplitude_at_reference_point():
    lic = licensed_coefficients(bell_circuit(0, 0, math.pi / 2), 0)
    (entry,) = lic.entries
    assert entry.layer == 1 and entry.basis == (1, 1)
    # B11 / sqrt2 with B11 = -1/sqrt2
    assert entry.amplitude == pytest.approx(-0.5, abs=1e-15)
    assert lic.local_params == {"theta1": pytest.approx(math.pi / 2)}


def test_marginal_gradient_oracle():
    g = marginal_sensitivity(bell_circuit(0, 0, math.pi / 2), 0, "beta2")
    assert g[0] == pytest.approx(0.25, abs=1e-8)
    assert g[1] == pytest.approx(-0.25, abs=1e-8)


def test_violation_found_along_beta2():
    rep = hypothesis_violation_search(bell_circuit(0, 0, math.pi / 2), 0)
    assert rep.params == ("beta1", "beta2")
    assert rep.verdict == "violated"
    assert rep.licensed_drift < 1e-8
    assert rep.marginal_shift == pytest.approx(0.25, abs=1e-4)
    assert np.allclose(rep.direction, [0, 1], atol=1e-8)


def test_beta2_alone_leaves_licensed_amplitude_fixed():
    jac = licensed_jacobian(bell_circuit(0, 0, math.pi / 2), (0,), ["beta2"])
    assert np.max(np.abs(jac)) < 1e-8


@given(st.integers(0, 10_000))
def test_one_gate_circuit_has_no_violation(seed):
    # with one interaction the subsystem marginal depends on external
    # parameters only through the licensed amplitudes
    r = np.random.default_rng(seed)
    b1 = SingleParticleGate.of_kind("u", 1, r.uniform(-math.pi, math.pi, 3))
    c = one_gate_circuit(haar_unitary(r), b1, r.uniform(0, 2 * math.pi), haar_unitary(r))
    rep = hypothesis_violation_search(c, 0)
    assert rep.params == ("L0.1.theta", "L0.1.phi", "L0.1.lam")
    assert rep.verdict == "not found"


@pytest.mark.parametrize(
    "m, dim",
    [(np.zeros((0, 3)), 3), (np.eye(2), 0), (np.array([[1.0, 1.0]]), 1), (np.zeros((4, 2)), 2)],
)
def test_null_space_dimension(m, dim):
    basis = null_space(m)
    assert basis.shape[1] == dim
    if dim and m.size:
        assert np.allclose(m @ basis, 0)


@pytest.mark.parametrize(
    "owner, sub, visible",
    [("A", (0,), True), ("B", (0,), False), ("A+B", (1,), True), ("ext", (0,), False)],
)
def test_visibility(owner, sub, visible):
    assert visible_to(Param("x", 0.0, owner), sub) is visible


def test_unknown_parameter_rejected():
    with pytest.raises(KeyError):
        hypothesis_violation_search(bell_circuit(0, 0, 1.0), 0, ["nope"])
