"""Doubly nonlinear operators ``A_phi = dE o phi`` on finite weighted graphs."""

from .audit import run_full_audit
from .domain import DiscreteDomain, build_grid2d, build_path_grid, integrate, norm
from .energy import GraphPDirichlet, LerayLions1D, LerayLionsSpec
from .errors import ConfigError, DimensionError, NonConvergenceError, NumericalError, SingularGradientError
from .experiments import density_sweep, flambda_convergence, run_experiment_suite
from .nonlinearity import Identity, PiecewiseLinear, PowerLaw
from .resolvent import ResolventProblem, ResolventSolution, solve
from .semigroup import evolve, step

__version__ = "0.1.0"
