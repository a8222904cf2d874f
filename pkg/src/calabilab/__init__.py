"""calabilab: Calabi flow and modified Calabi flow on desk-scale Kähler testbeds.

Two testbeds are provided: the flat complex 1-torus (Fourier spectral) and
toric manifolds described by a momentum polytope (Gauss-Legendre nodal
grids).  Normalizations are fixed in ``CONVENTIONS.md`` inside the package.
"""

__version__ = "0.1.0"

from .errors import (CalabiLabError, ConfigurationError, ConvergenceError, DomainError,  # noqa: E402
                     FlowStalled, PolytopeError, PositivityError, PreconditionError,
                     StepRejected, UnsupportedTestbed)
from .fields import (PeriodicField, PolytopeField, PolytopeGrid, QuadratureRule,  # noqa: E402
                     integrate_boundary, integrate_polytope, integrate_torus,
                     spectral_derivative)
from .polytope import Polytope, hirzebruch_trapezoid, interval, unit_square  # noqa: E402
from .torus import (MetricState, TorusModel, density_from_potential,  # noqa: E402
                    lichnerowicz_apply, ricci_identity_residual, scalar_curvature)
from .toric import (AffineFunction, SymplecticPotential, ToricModel,  # noqa: E402
                    abreu_scalar_curvature, admissible_perturbation, extremal_affine_function,
                    guillemin_potential, holomorphy_potential, toric_model)
from .functionals import (bilinear_B, calabi_energy, futaki, lemma_DE_bound,  # noqa: E402
                          mabuchi_path_length, modified_calabi_energy, modified_futaki)
from .flow import (FlowConfig, FlowTrace, calabi_rhs, energy_decay_identity_check,  # noqa: E402
                   modified_rhs, run, step)
from .spectral_gap import (fit_decay_rate, min_eigenvalue, project_At,  # noqa: E402
                           sobolev_decay_check)

__all__ = [name for name in dir() if not name.startswith("_")]
