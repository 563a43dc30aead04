"""Learning curves of sequential ridge-less NTK regression, with a Monte Carlo check."""

__version__ = "0.1.0"

from .errors import (ConditioningError, ConfigError, InvariantFailure, KernelDomainError,
                     ModeDeficitError, NTKTransferError, NumericalError, SpectralResolutionError)
from .kernel import DotProductKernel, KernelParams, gram_matrix, ntk_eval, relu_ntk
from .spectral import QuadratureRule, Spectrum, build_quadrature, decompose, degeneracy
from .theory import (critical_similarity, e_average, e_backward, e_single, e_transfer,
                     learning_curve, transfer_cost, solve_kappa)
