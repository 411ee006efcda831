"""Feasible full-Newton path-following IPM for unit-box QPs.

Solves ``min 1/2 z^T H z + h^T z  s.t. -1 <= z <= 1`` with a number of
iterations that depends only on ``n`` and the tolerance ``eps``. The
objective is scaled by ``2 lam / ||h||_inf`` so that a strictly feasible
point in the proximity neighbourhood is available in closed form; every
iteration then takes the full Newton step with no line search.

The Newton system ``(2 lam H/||h||_inf + diag(gamma/phi + theta/psi)) dz = rhs``
is delegated to a backend. ``DenseBackend`` factors it directly; the
structured Riccati backend lives in :mod:`certnmpc.riccati`.
"""

import logging
import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np
import scipy.linalg

from .exceptions import CertifiedInvariantViolation, SolverFailureError

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)


def iteration_count(n, eps):
    """Exact number of IPM iterations needed to reach ``v^T s <= eps``.

    The ceiling term is clamped at zero, so the count is at least one even
    for ``eps >= 2n``.
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    if not eps > 0:
        raise ValueError("eps must be positive")
    root = math.sqrt(2.0 * n)
    rate = -2.0 * math.log(root / (root + SQRT2 - 1.0))
    return max(math.ceil(math.log(2.0 * n / eps) / rate), 0) + 1


def step_size_eta(n):
    root = math.sqrt(2.0 * n)
    return (SQRT2 - 1.0) / (root + SQRT2 - 1.0)


@dataclass
class IpmIterate:
    """Interior-point state for the scaled problem.

    Multipliers and slacks are stored stacked: ``v = (gamma, theta)`` and
    ``s = (phi, psi)``, where ``phi = 1 - z`` and ``psi = z + 1`` are the
    slacks of the upper and lower bounds. The named attributes are views.
    """

    z: np.ndarray
    v: np.ndarray
    s: np.ndarray
    tau: float
    lam: float
    eta: float

    @property
    def n(self):
        return self.z.shape[0]

    @property
    def gamma(self):
        return self.v[: self.n]

    @property
    def theta(self):
        return self.v[self.n :]

    @property
    def phi(self):
        return self.s[: self.n]

    @property
    def psi(self):
        return self.s[self.n :]

    def gap(self):
        """Duality gap ``v^T s``."""
        return float(self.v @ self.s)

    def min_positive(self):
        return float(min(self.v.min(), self.s.min()))


def initialize(h, h_inf):
    """Closed-form strictly feasible starting point.

    Returns ``None`` when ``h_inf == 0``: the solution is then ``z = 0`` and
    the caller must skip the iterations.
    """
    h = np.asarray(h, dtype=np.float64)
    if h_inf == 0.0:
        return None
    n = h.shape[0]
    lam = 1.0 / math.sqrt(n + 1.0)
    eta = step_size_eta(n)
    h_tilde = h / h_inf
    return IpmIterate(
        z=np.zeros(n),
        v=np.concatenate([1.0 - lam * h_tilde, 1.0 + lam * h_tilde]),
        s=np.ones(2 * n),
        tau=1.0 / (1.0 - eta),
        lam=lam,
        eta=eta,
    )


def newton_rhs(it):
    return 2.0 * (
        np.sqrt(it.theta / it.psi) * it.tau
        - np.sqrt(it.gamma / it.phi) * it.tau
        + it.gamma
        - it.theta
    )


def newton_diagonal(it):
    """Diagonal ``gamma/phi + theta/psi`` added to the scaled Hessian."""
    return it.gamma / it.phi + it.theta / it.psi


def dual_updates(it, dz):
    gp = it.gamma / it.phi
    tp = it.theta / it.psi
    dgamma = gp * dz + 2.0 * (np.sqrt(gp) * it.tau - it.gamma)
    dtheta = -tp * dz + 2.0 * (np.sqrt(tp) * it.tau - it.theta)
    return dgamma, dtheta, -dz, dz.copy()


def proximity(it):
    """Distance ``||tau e - sqrt(v s)|| / tau`` from the central path."""
    beta = np.sqrt(np.concatenate([it.gamma * it.phi, it.theta * it.psi]))
    return float(np.linalg.norm(it.tau - beta) / it.tau)


class NewtonBackend(Protocol):
    """Solves ``(scale * H + diag(weights)) dz = rhs``.

    ``set_scale`` is called once per solve with ``2 lam / ||h||_inf``;
    ``solve`` once per iteration.
    """

    def set_scale(self, scale: float) -> None: ...

    def solve(self, weights: np.ndarray, rhs: np.ndarray) -> np.ndarray: ...


class DenseBackend:
    """Cholesky factorization of the explicitly formed Newton matrix."""

    def __init__(self, H):
        H = np.asarray(H, dtype=np.float64)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValueError(f"H must be square, got shape {H.shape}")
        self.H = H
        self._scaled = H.copy()
        self._work = np.empty_like(H)

    def set_scale(self, scale):
        np.multiply(self.H, scale, out=self._scaled)

    def solve(self, weights, rhs):
        np.copyto(self._work, self._scaled)
        self._work.flat[:: self._work.shape[0] + 1] += weights
        try:
            factor = scipy.linalg.cho_factor(self._work, lower=True, overwrite_a=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise SolverFailureError(f"Newton matrix not positive definite ({exc})") from exc
        return scipy.linalg.cho_solve(factor, rhs, check_finite=False)

    def matvec(self, z):
        return self.H @ z


@dataclass
class IpmDiagnostics:
    iterations: int
    gap: float
    h_inf: float
    min_positive: float = float("nan")


def solve_box_qp(h, backend, eps=1e-6, h_inf=None, monitor=None):
    """Run the certified IPM on ``min 1/2 z^T H z + h^T z, -1 <= z <= 1``.

    ``H`` is only known to ``backend``. Exactly ``iteration_count(n, eps)``
    iterations are executed unless ``h == 0``, in which case ``z = 0`` is
    returned immediately.

    ``monitor(i, iterate, dz)``, if given, is called after every full step
    with the updated iterate; used by tests to check per-iteration
    invariants.

    Returns
    -------
    z : ndarray
    diagnostics : IpmDiagnostics
    """
    h = np.asarray(h, dtype=np.float64)
    if not np.all(np.isfinite(h)):
        raise SolverFailureError("h contains non-finite entries")
    if h_inf is None:
        h_inf = float(np.max(np.abs(h))) if h.size else 0.0
    n = h.shape[0]

    it = initialize(h, h_inf)
    if it is None:
        return np.zeros(n), IpmDiagnostics(iterations=0, gap=0.0, h_inf=0.0)

    backend.set_scale(2.0 * it.lam / h_inf)
    n_iter = iteration_count(n, eps)
    shrink = 1.0 - it.eta
    z, v, s = it.z, it.v, it.s
    ds = np.empty(2 * n)

    for i in range(1, n_iter + 1):
        it.tau *= shrink
        tau = it.tau
        ratio = v / s
        root = np.sqrt(ratio)
        rhs = 2.0 * ((root[n:] - root[:n]) * tau + v[:n] - v[n:])

        try:
            dz = backend.solve(ratio[:n] + ratio[n:], rhs)
        except SolverFailureError as exc:
            raise SolverFailureError(str(exc), iteration=i, stage=exc.stage) from exc

        # ds = (-dz, dz);  v + dv = 2 tau sqrt(v/s) - v - (v/s) ds
        np.negative(dz, out=ds[:n])
        ds[n:] = dz
        ratio *= ds
        root *= 2.0 * tau
        root -= v
        root -= ratio
        v[:] = root
        s += ds
        z += dz

        if not min(v.min(), s.min()) > 0.0:
            if not np.all(np.isfinite(dz)):
                raise SolverFailureError("non-finite Newton direction", iteration=i)
            raise CertifiedInvariantViolation(
                f"iteration {i}: iterate left the positive orthant (min {it.min_positive():.3g})"
            )
        if monitor is not None:
            monitor(i, it, dz)

    gap = it.gap()
    logger.debug("IPM finished: n=%d iterations=%d gap=%.3e", n, n_iter, gap)
    return z.copy(), IpmDiagnostics(
        iterations=n_iter, gap=gap, h_inf=h_inf, min_positive=it.min_positive()
    )


def solve_dense_box_qp(H, h, eps=1e-6, monitor=None):
    """Convenience wrapper: certified IPM with the dense backend."""
    return solve_box_qp(h, DenseBackend(H), eps=eps, monitor=monitor)
