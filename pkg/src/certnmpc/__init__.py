"""Execution-time-certified RTI nonlinear MPC.

The per-sample controller work is split into a preparation phase
(RK4 sensitivities and condensing along a shifted guess) and a feedback
phase (a box-constrained QP solved by a path-following interior-point
method whose iteration count is fixed in advance by the problem size).
Newton systems are solved with a factorized Riccati recursion, and
:mod:`certnmpc.certify` turns the resulting flop counts into an
execution-time bound.
"""

from .certify import Certificate, ProblemDims, certify
from .condense import Weights
from .ipm import DenseBackend, iteration_count, solve_box_qp, solve_dense_box_qp
from .models import ModelDynamics, double_integrator, get_model, lorenz
from .riccati import RiccatiBackend, riccati_solve
from .rti import RTIController, feedback, prepare, shift
from .sensitivity import IntegratorSpec, horizon_sensitivities, rk4_step, stage_sensitivities

__all__ = [
    "Certificate",
    "DenseBackend",
    "IntegratorSpec",
    "ModelDynamics",
    "ProblemDims",
    "RTIController",
    "RiccatiBackend",
    "Weights",
    "certify",
    "double_integrator",
    "feedback",
    "get_model",
    "horizon_sensitivities",
    "iteration_count",
    "lorenz",
    "prepare",
    "riccati_solve",
    "rk4_step",
    "shift",
    "solve_box_qp",
    "solve_dense_box_qp",
    "stage_sensitivities",
]
