"""Continuous-time dynamics models ``xdot = f(x, u)``.

Every model carries its analytic Jacobians and the flop counts charged for
one evaluation of ``f``, ``f_x`` and ``f_u`` by the certifier.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class ModelDynamics:
    """Continuous-time model with analytic Jacobians.

    Attributes
    ----------
    name : str
        Registry name.
    n_x, n_u : int
        State and input dimensions.
    f : callable
        ``f(x, u) -> (n_x,)`` state derivative.
    f_x, f_u : callable
        ``(x, u) -> (n_x, n_x)`` and ``(x, u) -> (n_x, n_u)`` Jacobians.
    m_f, m_fx, m_fu : int
        Flops per evaluation of ``f``, ``f_x``, ``f_u``. Constants chosen by
        the model author; they do not depend on the evaluation point.
    """

    name: str
    n_x: int
    n_u: int
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    f_x: Callable[[np.ndarray, np.ndarray], np.ndarray]
    f_u: Callable[[np.ndarray, np.ndarray], np.ndarray]
    m_f: int = 0
    m_fx: int = 0
    m_fu: int = 0

    def __post_init__(self):
        if self.n_x < 1 or self.n_u < 1:
            raise ValueError("model dimensions must be positive")
        if min(self.m_f, self.m_fx, self.m_fu) < 0:
            raise ValueError("flop counts must be nonnegative")


@dataclass(frozen=True)
class LorenzParams:
    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0

    def attractor(self, sign=1):
        """Nontrivial equilibrium ``(±c, ±c, rho - 1)`` with ``c = sqrt(beta (rho - 1))``."""
        c = np.sqrt(self.beta * (self.rho - 1.0))
        return np.array([sign * c, sign * c, self.rho - 1.0])


def lorenz_f(state, inp, params=LorenzParams()):
    x, y, z = state
    return np.array(
        [
            params.sigma * (y - x) + inp[0],
            x * (params.rho - z) - y + inp[1],
            x * y - params.beta * z + inp[2],
        ]
    )


def lorenz_jacobians(state, params=LorenzParams()):
    x, y, z = state
    fx = np.array(
        [
            [-params.sigma, params.sigma, 0.0],
            [params.rho - z, -1.0, -x],
            [y, x, -params.beta],
        ]
    )
    return fx, np.eye(3)


def lorenz(sigma=10.0, rho=28.0, beta=8.0 / 3.0):
    """Lorenz system with an additive control input on each coordinate."""
    params = LorenzParams(float(sigma), float(rho), float(beta))
    eye = np.eye(3)
    eye.setflags(write=False)
    return ModelDynamics(
        name="lorenz",
        n_x=3,
        n_u=3,
        f=lambda x, u: lorenz_f(x, u, params),
        f_x=lambda x, u: lorenz_jacobians(x, params)[0],
        f_u=lambda x, u: eye,
        # only 4 entries of f_x depend on the state; f_u is constant
        m_f=10,
        m_fx=4,
        m_fu=0,
    )


def double_integrator():
    """``p' = v, v' = u``: linear, so RK4 sensitivities have closed forms."""
    fx = np.array([[0.0, 1.0], [0.0, 0.0]])
    fu = np.array([[0.0], [1.0]])
    fx.setflags(write=False)
    fu.setflags(write=False)
    return ModelDynamics(
        name="double_integrator",
        n_x=2,
        n_u=1,
        f=lambda x, u: np.array([x[1], u[0]]),
        f_x=lambda x, u: fx,
        f_u=lambda x, u: fu,
        m_f=0,
        m_fx=0,
        m_fu=0,
    )


MODELS = {
    "lorenz": lorenz,
    "double_integrator": double_integrator,
}


def get_model(name, params=None):
    """Instantiate a registered model by name with keyword parameters."""
    try:
        factory = MODELS[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return factory(**(params or {}))
