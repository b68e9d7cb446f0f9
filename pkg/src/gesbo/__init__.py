"""Gradient-enhanced surrogate optimization of frequency responses.

A global surrogate blends first-order Taylor models of every evaluated design;
Expected Improvement on that surrogate proposes exploratory designs while a
shrinking trust region refines the incumbent.
"""

from .design_space import ParameterSpace, denormalize, distance, full_factorial, latin_hypercube, normalize
from .driver import DoeSpec, OptimizationAborted, OptimizerConfig, RunHistory, RunResult, run
from .external import ExternalSolver
from .global_model import (
    GlobalSurrogate,
    expected_improvement,
    global_objective,
    global_predict,
    propose_global_candidate,
    sigma_estimate,
)
from .local_model import (
    DesignEvaluation,
    SolverError,
    TaylorModel,
    TrustRegion,
    evaluate,
    local_objective,
    run_local,
    taylor_predict,
)
from .spectrum import ComplexSpectrum, FrequencyGrid, ObjectiveSpec, objective, sample_db, to_db
from .testbed import ResonatorModel, fd_check, instance, solve

__version__ = "0.1.0"
