"""Risk-averse optimal design of porous thermal-insulation components.

Coupled thermo-mechanical forward model on 2D triangular meshes, a Matern
(SPDE) random-field model for the uncertain porosity perturbation, Taylor
mean/variance risk measures driven by a randomized eigensolver, discrete
adjoint sensitivities, projected L-BFGS optimization, and sparsity-promoting
continuation regularization.
"""

from .exceptions import (
    CoefficientRangeError,
    ConfigError,
    ConstraintError,
    MeshResourceError,
    PorosityRangeError,
    SolverError,
    StaleEvaluationError,
)

__all__ = [
    "CoefficientRangeError",
    "ConfigError",
    "ConstraintError",
    "MeshResourceError",
    "PorosityRangeError",
    "SolverError",
    "StaleEvaluationError",
]

__version__ = "0.1.0"
