import numpy as np
import pytest

from certnmpc.condense import InputScaling, ScaledStages, Weights, build_scaling, condense
from certnmpc.models import ModelDynamics


def central_jacobian(fun, x0, step=1e-6):
    """Central finite-difference Jacobian of ``fun`` at ``x0``."""
    x0 = np.asarray(x0, dtype=np.float64)
    f0 = np.asarray(fun(x0))
    J = np.empty((f0.shape[0], x0.shape[0]))
    for j in range(x0.shape[0]):
        e = np.zeros_like(x0)
        e[j] = step
        J[:, j] = (np.asarray(fun(x0 + e)) - np.asarray(fun(x0 - e))) / (2 * step)
    return J


def rel_err(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(np.linalg.norm(b), 1e-300)


def random_spd(rng, n, lo=0.1, hi=3.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    M = Q @ np.diag(rng.uniform(lo, hi, n)) @ Q.T
    return 0.5 * (M + M.T)


def random_stages(rng, N, n_x, n_u):
    A = np.eye(n_x) + 0.3 * rng.standard_normal((N, n_x, n_x))
    B = rng.standard_normal((N, n_x, n_u))
    D = np.diag(rng.uniform(0.5, 2.0, n_u))
    return ScaledStages(A=A, B=B, B_bar=B @ D, r_bar=0.1 * rng.standard_normal((N, n_x))), D


def random_condensed(rng, N, n_x, n_u):
    """A random but well-formed condensed MPC problem."""
    A = np.eye(n_x) + 0.3 * rng.standard_normal((N, n_x, n_x))
    B = rng.standard_normal((N, n_x, n_u))
    r = 0.1 * rng.standard_normal((N, n_x))
    u_lo = -rng.uniform(0.5, 2.0, n_u)
    u_hi = rng.uniform(0.5, 2.0, n_u)
    u_guess = rng.uniform(u_lo, u_hi, (N, n_u))
    scaling = build_scaling(u_lo, u_hi, u_guess)
    stages = ScaledStages(
        A=A, B=B, B_bar=B @ scaling.D, r_bar=r + np.einsum("kij,kj->ki", B, scaling.d)
    )
    weights = Weights(random_spd(rng, n_x), random_spd(rng, n_x), random_spd(rng, n_u))
    x_guess = rng.standard_normal((N + 1, n_x))
    x_ref = rng.standard_normal((N + 1, n_x))
    u_ref = rng.standard_normal((N, n_u))
    x_hat = x_guess[0] + 0.5 * rng.standard_normal(n_x)
    return condense(stages, weights, scaling, x_guess, x_ref, u_ref, u_lo, u_hi, x_hat)


def scalar_model(rhs, name="scalar"):
    """1-state, 1-input model ``xdot = rhs(x, u)`` with FD-free Jacobians supplied by caller."""
    f, fx, fu = rhs
    return ModelDynamics(
        name=name, n_x=1, n_u=1,
        f=lambda x, u: np.array([f(x[0], u[0])]),
        f_x=lambda x, u: np.array([[fx(x[0], u[0])]]),
        f_u=lambda x, u: np.array([[fu(x[0], u[0])]]),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def integrator_model():
    """``xdot = u``."""
    return scalar_model((lambda x, u: u, lambda x, u: 0.0, lambda x, u: 1.0), "integrator")


@pytest.fixture
def decay_model():
    """``xdot = -x``."""
    return scalar_model((lambda x, u: -x, lambda x, u: -1.0, lambda x, u: 0.0), "decay")


@pytest.fixture
def unit_scaling():
    return InputScaling(D=np.eye(1), d=np.zeros((1, 1)))


def projected_gradient_box_qp(H, h, tol=1e-13, max_iter=200000):
    """Reference solver for ``min 1/2 z'Hz + h'z`` on ``[-1, 1]^n`` (accelerated projected gradient)."""
    H = np.asarray(H, float)
    h = np.asarray(h, float)
    step = 1.0 / np.linalg.eigvalsh(H).max()
    z = np.zeros(h.shape[0])
    y, t = z.copy(), 1.0
    for _ in range(max_iter):
        z_new = np.clip(y - step * (H @ y + h), -1.0, 1.0)
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        y = z_new + (t - 1) / t_new * (z_new - z)
        if np.max(np.abs(z_new - z)) < tol:
            return z_new
        z, t = z_new, t_new
    return z


def box_kkt_residual(H, h, z):
    """Natural residual ``||z - clip(z - (Hz + h))||_inf``; zero exactly at the box-QP optimum."""
    return float(np.max(np.abs(z - np.clip(z - (H @ z + h), -1.0, 1.0))))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
