"""Range-relaxed nonstationary iterated Tikhonov regularization."""

from .iteration import (IterationRecord, RunTrace, SolverConfig, VerificationReport,
                        run_gnit, run_rrnit, run_sit, solve, verify_trace)
from .linop import (ConvolutionOperator, DenseOperator, DimensionError, LinearOperator,
                    apply, apply_adjoint, gaussian_psf, hilbert_operator,
                    operator_norm_estimate)
from .multiplier import (MultiplierError, MultiplierResult, RangeTarget, initial_guess,
                         lambda_lower_bound, solve_range)
from .problems import (Problem, add_noise, build_problem, make_deblur_problem,
                       make_hilbert_problem, read_pgm, synthetic_image)
from .tikhonov import (ConvergenceError, SolveStats, StepResult, g_derivative, g_value,
                       spd_solve, tikhonov_step)

__version__ = "0.1.0"
