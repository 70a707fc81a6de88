"""Two-particle 1-D continuum: Schrodinger evolution, currents, guidance
trajectories, conditional and effective wavefunctions."""
from .conditional import (
    ConditionalWavefunction,
    EffectiveReport,
    conditional_wavefunction,
    effective_wavefunction_monitor,
    phase_free_distance,
)
from .currents import (
    CurrentField,
    MarginalSeries,
    boundary_flux,
    continuity_residual_2d,
    current,
    marginal_continuity_residual,
    marginal_density_current,
    marginal_series,
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
from .pde import Evolution, InstabilityError, evolve_1d, evolve_pde
from .scenario import Scenario, ScenarioError, load_scenario, parse_scenario, run_scenario
from .trajectories import (
    EquivarianceResult,
    TrajectoryEnsemble,
    equivariance_test,
    guide_full_trajectories,
    guide_marginal_trajectories,
    sample_density,
)
