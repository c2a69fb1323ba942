"""Square-root-type diffusion toolkit.

Coefficient models, the explicit density-bound constant calculus, the
analytic CIR transition oracle, zero-boundary classification,
positivity-preserving Monte Carlo, density estimation, and a
verification harness for the tail and zero asymptotics.
"""

__version__ = "0.1.0"

from .bounds import (BoundContext, BoundValues, CappedExp, TailEnvelope,
                     density_upper_bound, eval_combinatorial, eval_exponentials,
                     eval_K_m, eval_lambda, eval_local_polys, eval_theta,
                     lambda_growth_regime, markov_tail_bound, tail_envelope)
from .boundary import (BoundaryReport, ScaleFunction, classify_zero_boundary,
                       estimate_l_star, lamperti, scale_function)
from .cir import (CIRParams, DensityPoint, cir_density, cir_exact_sample,
                  cir_mean_var, cir_params, cir_pdf, ncx2_pdf)
from .density import (DensityEstimate, empirical_localized_cf,
                      fourier_local_density, invert_cf, kde, smooth_bump)
from .mc import (PathEnsemble, PathFunctionalResult, derive_path_seed,
                 estimate_ball_prob, euler_weak_error_curve, simulate_paths,
                 sup_moment, terminal_samples)
from .model import (CoefficientSet, GrowthProfile, GrowthReport, NormTable,
                    check_growth, diffusion_derivative, drift_derivative,
                    eval_coefficients, local_norms)
from .verify import (VerificationReport, cross_validate, exact_cir_samples,
                     fit_loglinear, verify_polydecay, verify_tail, verify_zero)
