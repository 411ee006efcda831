"""Real-time-iteration NMPC with a certified interior-point QP solve.

Each sampling instant is split in two:

* :func:`prepare` runs before the state measurement is available. It
  linearizes the model along the shifted guess trajectory and builds all
  condensed-QP data that does not depend on the measurement.
* :func:`feedback` takes the measured state, completes the QP gradient,
  solves the box QP in a fixed number of iterations and applies one full
  Newton step to the guess.

:class:`RTIController` wires the two phases together and keeps the previous
solution for the shifting initialization.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_trajectory, as_vector
from .certify import ProblemDims, certify
from .condense import (
    CondensedProblem,
    InputScaling,
    ScaledStages,
    Weights,
    build_g1,
    build_g2,
    build_h,
    build_H_oracle,
    build_S,
    build_scaling,
    scale_dynamics,
)
from .exceptions import CertifiedInvariantViolation
from .ipm import DenseBackend, IpmDiagnostics, iteration_count, solve_box_qp
from .riccati import RiccatiBackend
from .sensitivity import horizon_sensitivities, rk4_map, rollout

logger = logging.getLogger(__name__)

BACKENDS = ("riccati", "dense")
BOUND_SLACK = 1e-9


@dataclass(frozen=True)
class GuessTrajectory:
    x: np.ndarray  # (N+1, n_x)
    u: np.ndarray  # (N, n_u)

    def __post_init__(self):
        if self.x.shape[0] != self.u.shape[0] + 1:
            raise ValueError(
                f"guess has {self.x.shape[0]} states for {self.u.shape[0]} inputs; need N+1 and N"
            )

    @property
    def N(self):
        return self.u.shape[0]


@dataclass
class SolveDiagnostics:
    iterations: int
    gap: float
    h_inf: float
    prep_flops: int | None = None
    feedback_flops: int | None = None


@dataclass(frozen=True)
class ControlSolution:
    x: np.ndarray
    u: np.ndarray
    diagnostics: SolveDiagnostics | None = None


@dataclass(frozen=True)
class PreparedData:
    """Everything computable before the measurement arrives."""

    guess: GuessTrajectory
    scaling: InputScaling
    stages: ScaledStages
    S: np.ndarray
    g1: np.ndarray
    weights: Weights
    x_ref: np.ndarray
    u_ref: np.ndarray
    u_lo: np.ndarray
    u_hi: np.ndarray


def shift(previous, model, spec):
    """Shift the previous solution one sample forward.

    The last input is repeated and the terminal state extended by one
    sample of the discrete-time model.
    """
    x_prev = np.asarray(previous.x)
    u_prev = np.asarray(previous.u)
    u = np.empty_like(u_prev)
    u[:-1] = u_prev[1:]
    u[-1] = u_prev[-1]
    x = np.empty_like(x_prev)
    x[:-1] = x_prev[1:]
    x[-1] = rk4_map(model, x[-2], u[-1], spec)
    return GuessTrajectory(x=x, u=u)


def cold_start(model, x0, u_ref, u_lo, u_hi, spec):
    """Dynamics-consistent first guess: roll out the clipped input reference."""
    u = np.clip(np.asarray(u_ref, dtype=np.float64), u_lo, u_hi)
    return GuessTrajectory(x=rollout(model, x0, u, spec), u=u)


def prepare(model, guess, x_ref, u_ref, u_lo, u_hi, weights, spec):
    """Preparation phase: sensitivities, scaling and the measurement-free QP data."""
    N = guess.N
    x_ref = as_trajectory(x_ref, "x_ref", N + 1, model.n_x)
    u_ref = as_trajectory(u_ref, "u_ref", N, model.n_u)
    u_lo = as_vector(u_lo, "u_lo", model.n_u)
    u_hi = as_vector(u_hi, "u_hi", model.n_u)

    triples = horizon_sensitivities(model, guess.x, guess.u, spec)
    scaling = build_scaling(u_lo, u_hi, guess.u)
    stages = scale_dynamics(triples, scaling)
    S = build_S(stages)
    g1 = build_g1(stages, guess.x, x_ref)
    return PreparedData(
        guess=guess, scaling=scaling, stages=stages, S=S, g1=g1, weights=weights,
        x_ref=x_ref, u_ref=u_ref, u_lo=u_lo, u_hi=u_hi,
    )


def make_backend(name, prepared):
    if name == "riccati":
        return RiccatiBackend(prepared.stages, prepared.weights, prepared.scaling)
    if name == "dense":
        return DenseBackend(build_H_oracle(prepared.S, prepared.weights, prepared.scaling))
    raise ValueError(f"unknown backend {name!r}; choose from {BACKENDS}")


def condensed_problem(prepared, x_hat):
    """Complete the QP with the measured state (gradient part of the feedback phase)."""
    g2 = build_g2(prepared.stages, x_hat, prepared.guess.x[0])
    h, h_inf = build_h(
        prepared.S, prepared.g1, g2, prepared.weights, prepared.scaling,
        prepared.u_ref, prepared.u_lo, prepared.u_hi,
    )
    return CondensedProblem(
        S=prepared.S, g1=prepared.g1, g2=g2, h=h, h_inf=h_inf,
        stages=prepared.stages, weights=prepared.weights, scaling=prepared.scaling,
    )


def recover_trajectory(prepared, x_hat, z):
    """Map the unit-box solution back to a full input/state step."""
    st = prepared.stages
    sc = prepared.scaling
    N, n_u = st.N, st.n_u
    zk = z.reshape(N, n_u)
    du = zk @ sc.D.T + sc.d
    dx = np.empty((N + 1, st.n_x))
    dx[0] = x_hat - prepared.guess.x[0]
    for k in range(N):
        dx[k + 1] = st.A[k] @ dx[k] + st.B_bar[k] @ zk[k] + st.r_bar[k]
    return prepared.guess.x + dx, prepared.guess.u + du


def feedback(prepared, x_hat, eps=1e-6, backend="riccati"):
    """Feedback phase: certified QP solve and full Newton step on the guess.

    ``backend`` is a name from :data:`BACKENDS` or an object implementing
    the :class:`~certnmpc.ipm.NewtonBackend` protocol.
    """
    x_hat = as_vector(x_hat, "x_hat", prepared.stages.n_x)
    problem = condensed_problem(prepared, x_hat)
    if problem.h_inf == 0.0:
        z = np.zeros(problem.n)
        info = IpmDiagnostics(iterations=0, gap=0.0, h_inf=0.0)
    else:
        if isinstance(backend, str):
            backend = make_backend(backend, prepared)
        z, info = solve_box_qp(problem.h, backend, eps=eps, h_inf=problem.h_inf)

    x, u = recover_trajectory(prepared, x_hat, z)
    if np.any(u < prepared.u_lo - BOUND_SLACK) or np.any(u > prepared.u_hi + BOUND_SLACK):
        raise CertifiedInvariantViolation("recovered input leaves the admissible box")
    diag = SolveDiagnostics(iterations=info.iterations, gap=info.gap, h_inf=info.h_inf)
    return ControlSolution(x=x, u=u, diagnostics=diag)


@dataclass
class RTIController:
    """Stateful RTI-NMPC controller.

    Parameters
    ----------
    model : ModelDynamics
    spec : IntegratorSpec
        Sampling time and RK4 sub-steps, shared by the prediction model.
    N : int
        Prediction horizon (number of samples).
    u_lo, u_hi : array_like
        Input bounds.
    weights : Weights
    x_ref, u_ref : array_like
        Constant vectors or ``(N+1, n_x)`` / ``(N, n_u)`` trajectories;
        can be replaced between samples with :meth:`set_reference`.
    eps : float
        IPM duality-gap tolerance; fixes the iteration count.
    backend : str
        ``"riccati"`` (default) or ``"dense"``.
    """

    model: object
    spec: object
    N: int
    u_lo: np.ndarray
    u_hi: np.ndarray
    weights: Weights
    x_ref: np.ndarray
    u_ref: np.ndarray
    eps: float = 1e-6
    backend: str = "riccati"
    previous: ControlSolution | None = field(default=None, init=False)
    prepared: PreparedData | None = field(default=None, init=False)

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}; choose from {BACKENDS}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")
        self.u_lo = as_vector(self.u_lo, "u_lo", self.model.n_u)
        self.u_hi = as_vector(self.u_hi, "u_hi", self.model.n_u)
        build_scaling(self.u_lo, self.u_hi, np.zeros(self.model.n_u))
        self.set_reference(self.x_ref, self.u_ref)
        self.dims = ProblemDims.for_model(self.model, self.N, self.spec.n_steps, self.eps)
        self.certificate = certify(self.dims)
        self.iterations = iteration_count(self.dims.n, self.eps)

    def set_reference(self, x_ref, u_ref):
        self.x_ref = as_trajectory(x_ref, "x_ref", self.N + 1, self.model.n_x)
        self.u_ref = as_trajectory(u_ref, "u_ref", self.N, self.model.n_u)

    def reset(self):
        self.previous = None
        self.prepared = None

    def prepare(self, x_estimate=None):
        """Preparation phase for the next sample.

        Without a previous solution, ``x_estimate`` seeds the cold-start
        rollout; it is never used once a previous solution exists.
        """
        if self.previous is None:
            if x_estimate is None:
                raise ValueError("first call to prepare needs an initial state estimate")
            guess = cold_start(self.model, x_estimate, self.u_ref, self.u_lo, self.u_hi, self.spec)
        else:
            guess = shift(self.previous, self.model, self.spec)
        self.prepared = prepare(
            self.model, guess, self.x_ref, self.u_ref, self.u_lo, self.u_hi, self.weights, self.spec
        )
        return self.prepared

    def feedback(self, x_hat):
        if self.prepared is None:
            raise RuntimeError("call prepare() before feedback()")
        sol = feedback(self.prepared, x_hat, eps=self.eps, backend=self.backend)
        sol.diagnostics.prep_flops = self.certificate.prep_flops
        sol.diagnostics.feedback_flops = self.certificate.feedback_flops
        self.previous = sol
        self.prepared = None
        return sol

    def step(self, x_hat):
        """Both phases back to back; returns the input to apply now."""
        self.prepare(x_hat if self.previous is None else None)
        return self.feedback(x_hat).u[0]
