"""Potential-based online learning games: potentials, regret measures,
lattice games and the numerical studies built on them."""

from .analysis import (
    StudyReport,
    bound_value,
    bound_verification,
    convergence_study,
    monotonicity_study,
    tail_potential_study,
    variance_clock,
)
from .errors import (
    ArgumentError,
    DegeneratePotentialError,
    DomainError,
    GameRuleViolation,
    PotentialGamesError,
    PreconditionError,
    ResourceError,
)
from .games import GameConfig, GameTrace, run_game
from .lattice import LatticeTable, backward_table, closed_form_potential, integer_table
from .measure import (
    LossMap,
    RegretState,
    apb_score,
    binomial_dist,
    convolve_step,
    epsilon_regret,
    score,
    srb_check,
)
from .potential import (
    FinalPotential,
    Potential,
    divided_difference_g,
    evaluate,
    exp_final,
    exp_mixture_final,
    gaussian_convolve,
    kolmogorov_residual,
    parse_final,
    parse_potential,
    partial_r,
    poly_final,
    strict_positivity_report,
)

__version__ = "0.1.0"
