"""RK4 integration with simultaneous propagation of state/input sensitivities."""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import IntegrationDivergedError


@dataclass(frozen=True)
class IntegratorSpec:
    """Sampling time ``dt`` split into ``n_steps`` equal RK4 steps."""

    dt: float
    n_steps: int = 1
    step: float = field(init=False)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "step", self.dt / self.n_steps)


@dataclass(frozen=True)
class StageTriple:
    """Linearization ``F(x + dx, u + du) ~ x_next + A dx + B du + r``."""

    A: np.ndarray
    B: np.ndarray
    r: np.ndarray


def _check_finite(arr, what, stage=None):
    if not np.all(np.isfinite(arr)):
        raise IntegrationDivergedError(f"non-finite {what}", stage=stage)


def rk4_step(model, x, u, t_i):
    """One classical RK4 step of length ``t_i`` with ``u`` held constant."""
    if not t_i > 0:
        raise ValueError("t_i must be positive")
    f = model.f
    k1 = f(x, u)
    k2 = f(x + 0.5 * t_i * k1, u)
    k3 = f(x + 0.5 * t_i * k2, u)
    k4 = f(x + t_i * k3, u)
    x_next = x + (t_i / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    _check_finite(x_next, "state")
    return x_next


def rk4_map(model, x, u, spec):
    """Discrete-time map ``F``: ``spec.n_steps`` RK4 steps over ``spec.dt``."""
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    for _ in range(spec.n_steps):
        x = rk4_step(model, x, u, spec.step)
    return x


def rollout(model, x0, inputs, spec):
    """Simulate ``F`` from ``x0`` under each row of ``inputs``; returns ``(len+1, n_x)``."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    traj = np.empty((inputs.shape[0] + 1, model.n_x))
    traj[0] = x0
    for k, u in enumerate(inputs):
        traj[k + 1] = rk4_map(model, traj[k], u, spec)
    return traj


def stage_sensitivities(model, x_guess, u_guess, x_guess_next, spec):
    """Sensitivities ``(A, B, r)`` of ``F`` at one stage of the guess trajectory.

    The state and the stacked Jacobian ``[A, B]`` are advanced together
    through each RK4 stage, differentiating the stage formulas by the chain
    rule; the input is held constant across all stages and sub-steps.
    """
    n_x, n_u = model.n_x, model.n_u
    t = spec.step
    x = np.array(x_guess, dtype=np.float64)
    u = np.asarray(u_guess, dtype=np.float64)
    AB = np.zeros((n_x, n_x + n_u))
    AB[:, :n_x] = np.eye(n_x)

    def stage(xs, ABs):
        k = model.f(xs, u)
        kAB = model.f_x(xs, u) @ ABs
        kAB[:, n_x:] += model.f_u(xs, u)
        return k, kAB

    for _ in range(spec.n_steps):
        k1, K1 = stage(x, AB)
        k2, K2 = stage(x + 0.5 * t * k1, AB + 0.5 * t * K1)
        k3, K3 = stage(x + 0.5 * t * k2, AB + 0.5 * t * K2)
        k4, K4 = stage(x + t * k3, AB + t * K3)
        x = x + (t / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        AB = AB + (t / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)

    _check_finite(x, "state")
    _check_finite(AB, "sensitivity")
    return StageTriple(A=AB[:, :n_x], B=AB[:, n_x:], r=x - np.asarray(x_guess_next))


def horizon_sensitivities(model, x_guess, u_guess, spec):
    """Stage triples for every stage ``k = 0..N-1`` of a guess trajectory."""
    x_guess = np.asarray(x_guess, dtype=np.float64)
    u_guess = np.asarray(u_guess, dtype=np.float64)
    N = u_guess.shape[0]
    if x_guess.shape[0] != N + 1:
        raise ValueError(
            f"x_guess must have N+1={N + 1} rows to match u_guess, got {x_guess.shape[0]}"
        )
    stages = []
    for k in range(N):
        try:
            stages.append(
                stage_sensitivities(model, x_guess[k], u_guess[k], x_guess[k + 1], spec)
            )
        except IntegrationDivergedError as exc:
            raise IntegrationDivergedError(str(exc), stage=k) from exc
    return stages
