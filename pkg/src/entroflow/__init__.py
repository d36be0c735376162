"""Heat flow and logarithmic entropy functionals on discrete model manifolds."""
from .errors import *  # noqa: F401,F403
from .manifold import (CurvatureModel, DiscreteManifold, ScalarField, attach_weight,
                       build_flat_torus, build_sphere, integrate)
from .operators import (HessianData, LaplacianOperator, SpectralData, assemble_laplacian,
                        bakry_emery_form, gradient, gradient_sq, hessian, low_spectrum, ricci_form)
from .flow import HeatState, HeatStepper, KernelSpec, compute_f, heat_kernel, sqrt_state, step
from .entropy import (EntropyParams, EntropyValue, adjusted_dissipation, adjusted_Ya, b_const,
                      c_const, entropy_lower_bound, h_min, log_entropy_Y0, log_entropy_Ya,
                      ni_dissipation, ni_entropy, omega, rigidity_gap, weighted_dissipation,
                      weighted_Ha)
from .config import ScenarioConfig, parse_config, registry_config
from .diagnostics import (EntropyTrace, Verdict, classify_rigidity, euclidean_oracle,
                          euclidean_quadrature, run_trace, verify_dissipation, verify_monotone)

__version__ = "0.1.0"
