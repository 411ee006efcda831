"""Factorized Riccati recursion as a structured Newton backend.

The condensed Newton system is the optimality condition of an
unconstrained LQR over the prediction horizon::

    min  sum_k 1/2 du_k^T R_k du_k + g_k^T du_k + 1/2 dx_{k+1}^T Q_{k+1} dx_{k+1}
    s.t. dx_0 = 0,  dx_{k+1} = A_k dx_k + B_k du_k

The backward sweep propagates the Cholesky factor ``L_k`` of the
cost-to-go Hessian instead of the Hessian itself: at every stage the
``(n_u + n_x)`` Gram block ``[B_k, A_k]^T L_{k+1} L_{k+1}^T [B_k, A_k] +
blockdiag(R_k, Q_k)`` is factored as ``[[Lam_k, 0], [M_k, L_k]]``. Work is
linear in ``N`` and the dense Hessian is never formed.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

from .exceptions import SolverFailureError


@njit(cache=True, error_model="numpy")
def _chol_lower(a, n):
    """In-place lower Cholesky of the leading n x n block; False if not SPD."""
    for j in range(n):
        s = a[j, j]
        for k in range(j):
            s -= a[j, k] * a[j, k]
        if not s > 0.0:
            return False
        d = np.sqrt(s)
        a[j, j] = d
        for i in range(j + 1, n):
            s = a[i, j]
            for k in range(j):
                s -= a[i, k] * a[j, k]
            a[i, j] = s / d
        for i in range(j):
            a[i, j] = 0.0
    return True


@njit(cache=True, error_model="numpy")
def _riccati_kernel(A, B, Q, R, rdiag, g, gsign, Lam, M, L, p, q, gram, W, du, dx):
    """Backward factorization and forward substitution.

    The input weight of stage ``k`` is ``R[k] + diag(rdiag[k])`` and its
    linear term ``gsign * g[k]``.

    Returns -1 on success, otherwise the index of the stage whose block was
    not positive definite (``N`` for the terminal weight).
    """
    N = A.shape[0]
    nx = A.shape[1]
    nu = B.shape[2]
    m = nu + nx

    # terminal factor
    for i in range(nx):
        for j in range(nx):
            L[N, i, j] = Q[N, i, j]
    if not _chol_lower(L[N], nx):
        return N
    for i in range(nx):
        p[N, i] = 0.0

    for k in range(N - 1, -1, -1):
        Lk1 = L[k + 1]
        # W = L_{k+1}^T [B_k, A_k]; L^T is upper triangular
        for i in range(nx):
            for j in range(nu):
                s = 0.0
                for l in range(i, nx):
                    s += Lk1[l, i] * B[k, l, j]
                W[i, j] = s
            for j in range(nx):
                s = 0.0
                for l in range(i, nx):
                    s += Lk1[l, i] * A[k, l, j]
                W[i, nu + j] = s
        # gram = W^T W + blockdiag(R_k, Q_k), lower triangle only
        for i in range(m):
            for j in range(i + 1):
                s = 0.0
                for l in range(nx):
                    s += W[l, i] * W[l, j]
                if i < nu:
                    s += R[k, i, j]
                    if i == j:
                        s += rdiag[k, i]
                elif j >= nu:
                    s += Q[k, i - nu, j - nu]
                gram[i, j] = s
        if not _chol_lower(gram, m):
            return k
        for i in range(nu):
            for j in range(nu):
                Lam[k, i, j] = gram[i, j]
        for i in range(nx):
            for j in range(nu):
                M[k, i, j] = gram[nu + i, j]
            for j in range(nx):
                L[k, i, j] = gram[nu + i, nu + j]

        # y = Lam^{-1} (B^T p_{k+1} + g_k); q_k = Lam^{-T} y
        y = q[k]
        for i in range(nu):
            s = gsign * g[k, i]
            for l in range(nx):
                s += B[k, l, i] * p[k + 1, l]
            for j in range(i):
                s -= Lam[k, i, j] * y[j]
            y[i] = s / Lam[k, i, i]
        # p_k = A^T p_{k+1} - M y   (M Lam^T q = M y)
        for i in range(nx):
            s = 0.0
            for l in range(nx):
                s += A[k, l, i] * p[k + 1, l]
            for j in range(nu):
                s -= M[k, i, j] * y[j]
            p[k, i] = s
        for i in range(nu - 1, -1, -1):
            s = y[i]
            for j in range(i + 1, nu):
                s -= Lam[k, j, i] * y[j]
            y[i] = s / Lam[k, i, i]

    for i in range(nx):
        dx[0, i] = 0.0
    for k in range(N):
        # du_k = -Lam^{-T} M^T dx_k - q_k
        for i in range(nu):
            s = 0.0
            for l in range(nx):
                s += M[k, l, i] * dx[k, l]
            du[k, i] = s
        for i in range(nu - 1, -1, -1):
            s = du[k, i]
            for j in range(i + 1, nu):
                s -= Lam[k, j, i] * du[k, j]
            du[k, i] = s / Lam[k, i, i]
        for i in range(nu):
            du[k, i] = -du[k, i] - q[k, i]
        for i in range(nx):
            s = 0.0
            for l in range(nx):
                s += A[k, i, l] * dx[k, l]
            for l in range(nu):
                s += B[k, i, l] * du[k, l]
            dx[k + 1, i] = s
    return -1


@dataclass(frozen=True)
class LqrStage:
    """One stage of the Newton-step LQR: ``Q`` weights ``dx_k``, ``R``/``g`` weight ``du_k``."""

    A: np.ndarray
    B_bar: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    g: np.ndarray


class RiccatiWorkspace:
    """Preallocated factors and scratch for horizon ``N``; reused across solves."""

    def __init__(self, N, n_x, n_u):
        self.N, self.n_x, self.n_u = N, n_x, n_u
        self.Lam = np.zeros((N, n_u, n_u))
        self.M = np.zeros((N, n_x, n_u))
        self.L = np.zeros((N + 1, n_x, n_x))
        self.p = np.zeros((N + 1, n_x))
        self.q = np.zeros((N, n_u))
        self.gram = np.zeros((n_u + n_x, n_u + n_x))
        self.W = np.zeros((n_x, n_u + n_x))
        self.du = np.zeros((N, n_u))
        self.dx = np.zeros((N + 1, n_x))

    def run(self, A, B, Q, R, g, rdiag=None, gsign=1.0):
        if rdiag is None:
            rdiag = np.zeros((self.N, self.n_u))
        status = _riccati_kernel(
            A, B, Q, R, rdiag, g, gsign,
            self.Lam, self.M, self.L, self.p, self.q, self.gram, self.W, self.du, self.dx,
        )
        if status >= 0:
            raise SolverFailureError("Riccati block not positive definite", stage=int(status))
        return self.du, self.dx


def riccati_solve(stages, Q_terminal, workspace=None):
    """Solve the LQR defined by ``stages`` and the terminal weight.

    Returns ``(du, dx)`` with shapes ``(N, n_u)`` and ``(N + 1, n_x)``;
    ``dx[0] == 0``.
    """
    A = np.ascontiguousarray(np.stack([s.A for s in stages]), dtype=np.float64)
    B = np.ascontiguousarray(np.stack([s.B_bar for s in stages]), dtype=np.float64)
    Q = np.ascontiguousarray(
        np.concatenate([np.stack([s.Q for s in stages]), np.asarray(Q_terminal)[None]]),
        dtype=np.float64,
    )
    R = np.ascontiguousarray(np.stack([s.R for s in stages]), dtype=np.float64)
    g = np.ascontiguousarray(np.stack([np.atleast_1d(s.g) for s in stages]), dtype=np.float64)
    N, n_x, n_u = B.shape
    if workspace is None:
        workspace = RiccatiWorkspace(N, n_x, n_u)
    du, dx = workspace.run(A, B, Q, R, g)
    return du.copy(), dx.copy()


def assemble_stages(condensed, iterate, rhs):
    """LQR stages for one Newton step of the IPM on ``condensed``.

    Returns ``(stages, Q_terminal)``. The state weight on ``dx_0`` is a
    filler (scaled ``W_x``) that keeps the first Gram block positive
    definite; it has no effect because ``dx_0 = 0``.
    """
    st = condensed.stages
    N, n_u = st.N, st.n_u
    c = 2.0 * iterate.lam / condensed.h_inf
    w = condensed.weights
    D = condensed.scaling.D
    R_base = c * (D @ w.W_u @ D)
    diag = (iterate.gamma / iterate.phi + iterate.theta / iterate.psi).reshape(N, n_u)
    g = -np.asarray(rhs).reshape(N, n_u)
    stages = [
        LqrStage(
            A=st.A[k],
            B_bar=st.B_bar[k],
            Q=c * w.W_x,
            R=R_base + np.diag(diag[k]),
            g=g[k],
        )
        for k in range(N)
    ]
    return stages, c * w.W_N


class RiccatiBackend:
    """Newton backend for condensed MPC problems via the factorized Riccati recursion.

    Problem data (dynamics, weights, scaling) is fixed at construction; each
    ``solve`` only rewrites the input-weight diagonals and the gradient.
    """

    def __init__(self, stages, weights, scaling):
        self.N, self.n_x, self.n_u = stages.N, stages.n_x, stages.n_u
        self.A = np.ascontiguousarray(stages.A)
        self.B = np.ascontiguousarray(stages.B_bar)
        D = scaling.D
        self._Wq = np.concatenate(
            [np.broadcast_to(weights.W_x, (self.N, self.n_x, self.n_x)), weights.W_N[None]]
        )
        self._DWuD = D @ weights.W_u @ D
        self.Q = np.empty_like(self._Wq)
        self._R_base = np.empty((self.N, self.n_u, self.n_u))
        self.workspace = RiccatiWorkspace(self.N, self.n_x, self.n_u)
        self.set_scale(1.0)

    @classmethod
    def from_condensed(cls, condensed):
        return cls(condensed.stages, condensed.weights, condensed.scaling)

    def set_scale(self, scale):
        np.multiply(self._Wq, scale, out=self.Q)
        self._R_base[:] = scale * self._DWuD

    def solve(self, weights, rhs):
        shape = (self.N, self.n_u)
        du, _ = self.workspace.run(
            self.A, self.B, self.Q, self._R_base,
            np.ascontiguousarray(rhs).reshape(shape), np.ascontiguousarray(weights).reshape(shape), -1.0,
        )
        return du.ravel().copy()
