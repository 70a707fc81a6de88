import math
import random
from importlib.resources import files

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qmarginals.circuits import TWO_GATE_LAYERS, bell_circuit
from qmarginals.dsl import DslError, eval_real, format_circuit, parse_circuit
from qmarginals.state_core import ControlledPhaseGate, StateVector, random_circuit


def _bundled(name):
    return (files("qmarginals") / "data" / name).read_text()


def test_fig2_layer_sequence():
    c = parse_circuit(_bundled("fig2.qc"))
    kinds = ["AB" if isinstance(layer, ControlledPhaseGate) else "".join("AB"[g.target] for g in layer) for layer in c.layers]
    assert kinds == ["AB", "AB", "A", "B", "AB", "A"]
    assert isinstance(c.layers[TWO_GATE_LAYERS["AB1"]], ControlledPhaseGate)
    assert isinstance(c.layers[TWO_GATE_LAYERS["AB2"]], ControlledPhaseGate)
    assert len(c.layers[TWO_GATE_LAYERS["A1B1"]]) == 2


def test_fig3_is_the_bell_circuit():
    assert parse_circuit(_bundled("fig3.qc")) == bell_circuit(0.0, 0.0, math.pi / 2)


def test_init_bell():
    c = parse_circuit("particles 2\ninit bell\n")
    assert c.initial == StateVector.bell()


def test_init_state_is_normalized():
    c = parse_circuit("particles 1\ninit state 1 1j\n")
    assert np.allclose(c.initial.amplitudes, [1 / math.sqrt(2), 1j / math.sqrt(2)])


def test_non_unitary_mat_rejected_with_position():
    with pytest.raises(DslError) as exc:
        parse_circuit("particles 2\ngate 0 mat(1 0 0 0 0 0 0.9 0)\n")
    assert (exc.value.line, exc.value.column) == (2, 8)
    assert "unitary" in exc.value.message


@pytest.mark.parametrize(
    "text, line, col",
    [
        ("gate 0 H", 1, 1),
        ("particles 2\ngate 2 H", 2, 6),
        ("particles 2\ngate 0 Y", 2, 8),
        ("particles 2\ngate 0 phase(pi**2)", 2, 14),
        ("particles 2\ncphase 0 0 1.0", 2, 10),
        ("particles 2\ncphase 0 1 1.0 modes 2 1", 2, 22),
        ("particles 2\ngate 0 H ; gate 0 X", 2, 12),
        ("particles 2\ngate 0 H ; cphase 0 1 1", 2, 12),
        ("particles 2\ngate 0 phase(t=1)\ngate 0 phase(t=2)", 3, 14),
        ("particles 2\ninit 0", 2, 6),
        ("particles 2\ninit bell\ninit 00", 3, 1),
        ("particles 99", 1, 11),
        ("particles 2\ngate 0 u(1, 2", 2, 8),
        ("particles 2\ngate 0 H tag", 2, 10),
        ("particles 2\nfoo", 2, 1),
    ],
)
def test_diagnostics_are_positioned(text, line, col):
    with pytest.raises(DslError) as exc:
        parse_circuit(text)
    assert (exc.value.line, exc.value.column) == (line, col)


def test_comments_and_blank_lines():
    c = parse_circuit("# header\n\nparticles 1   # one\n  gate 0 X  # flip\n")
    assert len(c.layers) == 1


def test_named_and_tied_parameters():
    c = parse_circuit("particles 2\ngate 0 phase(t=0.5)\ngate 0 phase(t=0.5)\ncphase 0 1 th=pi/4 tag B\n")
    params = c.params()
    assert params["t"].value == 0.5 and params["th"].owner == "B"
    assert c.with_params({"t": 1.0}).params()["t"].value == 1.0


@pytest.mark.parametrize(
    "expr, value",
    [("pi/2", math.pi / 2), ("-(1+2)*3", -9.0), ("2*pi - 1e-3", 2 * math.pi - 1e-3), ("+4/8", 0.5)],
)
def test_expressions(expr, value):
    assert eval_real(expr) == pytest.approx(value)


@pytest.mark.parametrize("expr", ["__import__('os')", "2**3", "1/0", "x", "", "1e999", "[1]"])
def test_bad_expressions(expr):
    with pytest.raises(ValueError):
        eval_real(expr)


@pytest.mark.parametrize("name", ["fig1.qc", "fig2.qc", "fig3.qc"])
def test_bundled_round_trip(name):
    c = parse_circuit(_bundled(name))
    assert parse_circuit(format_circuit(c)) == c


@given(st.integers(0, 100_000), st.integers(1, 4), st.integers(0, 6))
def test_random_round_trip(seed, n, depth):
    rng = np.random.default_rng(seed)
    init = StateVector.from_unnormalized(rng.normal(size=2**n) + 1j * rng.normal(size=2**n))
    c = random_circuit(rng, n, depth, initial=init)
    text = format_circuit(c)
    again = parse_circuit(text)
    assert again == c
    assert format_circuit(again) == text


def test_fuzzed_inputs_never_crash():
    seeds = [_bundled(f"fig{i}.qc") for i in (1, 2, 3)]
    alphabet = "0123456789()=,;#+-*/. \n\tabpiHXZ_\x00é"
    words = ["gate", "cphase", "init", "state", "bell", "tag", "modes", "mat(", "u(", "**", "1e400", "((((", ";"]
    r = random.Random(7)
    for _ in range(2000):
        s = list(r.choice(seeds))
        for _ in range(r.randint(1, 5)):
            i = r.randrange(len(s) + 1)
            op = r.random()
            if op < 0.4:
                s.insert(i, r.choice(alphabet))
            elif op < 0.7 and s:
                del s[min(i, len(s) - 1)]
            else:
                s[i:i] = list(" " + r.choice(words) + " ")
        try:
            parse_circuit("".join(s))
        except DslError:
            pass
