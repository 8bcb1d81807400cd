"""measureflow: particle-level calculus along flows of probability measures.

Library layout:

* measures, polynomials, functionals: empirical measures and exact
  derivatives of cylindrical functionals;
* simulate: seeded interacting-particle dynamics (jump diffusion and mixed
  regular-singular);
* verify, fokker_planck: term-by-term identity checks along simulated flows;
* lq: linear-quadratic mean-field control (backward coefficient system,
  optimal feedback, cost probes);
* mv: mean-variance singular control in closed form with reflected
  simulation;
* cli: batch front end writing JSON/CSV reports and figures.
"""

__version__ = "0.1.0"

from . import fokker_planck, lq, mv
from .coefficients import (
    AffineCoefficient,
    AffineControl,
    ConstantControl,
    FeatureSpec,
    InitialSampler,
    JumpCoefficient,
    MarkFunction,
    MarkLaw,
)
from .functionals import (
    CylindricalFunctional,
    DerivativeBundle,
    check_lift_gradient,
    check_linear_derivative_identity,
    evaluate,
    linear_derivative_diff,
    lions_derivative,
    lions_x_derivative,
)
from .measures import (
    EmpiricalMeasure,
    empirical_from_samples,
    mean_and_variance,
    polynomial_moment,
    wasserstein2_1d,
)
from .polynomials import Polynomial
from .simulate import (
    DeterministicEtaSchedule,
    IdiosyncraticEta,
    JumpDiffusionSpec,
    PathBundle,
    ReflectionEta,
    SimulationError,
    SingularSpec,
    marginal,
    simulate_jump_diffusion,
    simulate_singular,
)
from .timegrid import TimeGrid
from .verify import (
    ItoReport,
    convergence_sweep,
    verify_general,
    verify_jump_corollary,
    verify_singular_corollary,
)

__all__ = [name for name in dir() if not name.startswith("_")]
