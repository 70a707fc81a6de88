"""Marginal probabilities of entangled subsystems: circuit evolution,
partial-collapse reconstruction, information-flow checks, path sums and
Bohmian marginal guidance."""
from .circuits import bell_circuit, one_gate_circuit, two_gate_circuit
from .dsl import DslError, format_circuit, parse_circuit
from .info_flow import bell_scenario, hypothesis_violation_search, licensed_coefficients
from .lhv import entanglement_entropy, miss_split, partial_collapse_model
from .paths import marginal_via_paths, path_count, path_sum_all, sum_paths_amplitude
from .probability import Distribution, joint_distribution, marginal, no_signaling_check
from .state_core import (
    Circuit,
    CircuitError,
    ControlledPhaseGate,
    SingleParticleGate,
    StateVector,
    evolve,
    final_state,
)

__version__ = "0.1.0"
