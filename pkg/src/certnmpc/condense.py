"""Condensed, unit-box-scaled QP data for one RTI sampling instant.

Inputs are rescaled as ``du_k = D z_k + d_k`` so that ``z in [-1, 1]^n``
covers exactly the admissible input box. States are eliminated through the
block lower-triangular matrix ``S`` that maps the stacked ``z`` to the
stacked state deviations ``dx_1..dx_N``. The dense Hessian
``H = Rbar + S^T Qbar S`` is provided only as a reference for testing and
for the dense Newton backend; the controller path never forms it.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import as_matrix, check_spd
from .exceptions import InvalidBoundsError


@dataclass(frozen=True)
class Weights:
    """Tracking weights on stage states, terminal state and inputs (all SPD)."""

    W_x: np.ndarray
    W_N: np.ndarray
    W_u: np.ndarray

    @classmethod
    def from_arrays(cls, W_x, W_N, W_u, n_x=None, n_u=None):
        mats = []
        for name, w, n in (("W_x", W_x, n_x), ("W_N", W_N, n_x), ("W_u", W_u, n_u)):
            w = np.asarray(w, dtype=np.float64)
            if w.ndim == 1:
                w = np.diag(w)
            w = as_matrix(w, name, None if n is None else (n, n))
            mats.append(check_spd(w, name))
        return cls(*mats)


@dataclass(frozen=True)
class InputScaling:
    D: np.ndarray  # (n_u, n_u) diagonal
    d: np.ndarray  # (N, n_u)

    @property
    def scale(self):
        return np.diag(self.D)


@dataclass(frozen=True)
class ScaledStages:
    """Stacked per-stage dynamics after input scaling.

    ``dx_{k+1} = A[k] dx_k + B_bar[k] z_k + r_bar[k]``.
    """

    A: np.ndarray  # (N, n_x, n_x)
    B: np.ndarray  # (N, n_x, n_u), unscaled
    B_bar: np.ndarray  # (N, n_x, n_u)
    r_bar: np.ndarray  # (N, n_x)

    @property
    def N(self):
        return self.A.shape[0]

    @property
    def n_x(self):
        return self.A.shape[1]

    @property
    def n_u(self):
        return self.B_bar.shape[2]


@dataclass(frozen=True)
class CondensedProblem:
    """Unit-box QP ``min 1/2 z^T H z + h^T z, -1 <= z <= 1`` in factored form."""

    S: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    h: np.ndarray
    h_inf: float
    stages: ScaledStages
    weights: Weights
    scaling: InputScaling

    @property
    def n(self):
        return self.h.shape[0]


def build_scaling(u_lo, u_hi, u_guess):
    u_lo = np.asarray(u_lo, dtype=np.float64)
    u_hi = np.asarray(u_hi, dtype=np.float64)
    if u_lo.shape != u_hi.shape or u_lo.ndim != 1:
        raise InvalidBoundsError("u_lo and u_hi must be vectors of equal length")
    if not np.all(u_hi > u_lo):
        raise InvalidBoundsError(f"need u_hi > u_lo componentwise, got {u_lo} and {u_hi}")
    u_guess = np.asarray(u_guess, dtype=np.float64).reshape(-1, u_lo.shape[0])
    D = np.diag(0.5 * (u_hi - u_lo))
    d = 0.5 * (u_hi + u_lo) - u_guess
    return InputScaling(D=D, d=d)


def scale_dynamics(stages, scaling):
    """Apply ``B_bar = B D`` and ``r_bar = r + B d_k`` to a sequence of stage triples."""
    A = np.stack([s.A for s in stages])
    B = np.stack([s.B for s in stages])
    r = np.stack([s.r for s in stages])
    B_bar = B @ scaling.D
    r_bar = r + np.einsum("kij,kj->ki", B, scaling.d)
    return ScaledStages(A=A, B=B, B_bar=B_bar, r_bar=r_bar)


def build_S(stages):
    """Block lower-triangular input-to-state map, one block row per stage.

    Block row ``i`` is ``A_i`` times block row ``i-1`` with ``B_bar_i`` on
    the diagonal, so ``S z`` reproduces the forward rollout from ``dx_0 = 0``.
    """
    N, n_x, n_u = stages.N, stages.n_x, stages.n_u
    S = np.zeros((N * n_x, N * n_u))
    for i in range(N):
        rows = slice(i * n_x, (i + 1) * n_x)
        if i > 0:
            prev = slice((i - 1) * n_x, i * n_x)
            S[rows, : i * n_u] = stages.A[i] @ S[prev, : i * n_u]
        S[rows, i * n_u : (i + 1) * n_u] = stages.B_bar[i]
    return S


def build_g1(stages, x_guess, x_ref):
    """Offline part of the free response: guess tracking error plus residual chain."""
    x_guess = np.asarray(x_guess, dtype=np.float64)
    x_ref = np.asarray(x_ref, dtype=np.float64)
    chain = np.empty((stages.N, stages.n_x))
    e = np.zeros(stages.n_x)
    for k in range(stages.N):
        e = stages.A[k] @ e + stages.r_bar[k]
        chain[k] = e
    return (x_guess[1:] - x_ref[1:] + chain).ravel()


def build_g2(stages, x_hat, x_guess_0):
    """Online part of the free response: initial-state mismatch propagated through ``A``."""
    w = np.asarray(x_hat, dtype=np.float64) - np.asarray(x_guess_0, dtype=np.float64)
    out = np.empty((stages.N, stages.n_x))
    for k in range(stages.N):
        w = stages.A[k] @ w
        out[k] = w
    return out.ravel()


def stage_state_weights(weights, N):
    """``[W_x, ..., W_x, W_N]`` weighting ``dx_1 .. dx_N``."""
    Q = np.broadcast_to(weights.W_x, (N,) + weights.W_x.shape).copy()
    Q[-1] = weights.W_N
    return Q


def build_h(S, g1, g2, weights, scaling, u_ref, u_lo, u_hi):
    """Linear term of the scaled QP; returns ``(h, ||h||_inf)``."""
    N = scaling.d.shape[0]
    n_x = weights.W_x.shape[0]
    g = (np.asarray(g1) + np.asarray(g2)).reshape(N, n_x)
    Qg = np.einsum("kij,kj->ki", stage_state_weights(weights, N), g).ravel()
    center = 0.5 * (np.asarray(u_hi) + np.asarray(u_lo))
    u_ref = np.asarray(u_ref, dtype=np.float64).reshape(N, -1)
    DWu = scaling.D @ weights.W_u
    h = S.T @ Qg + ((center - u_ref) @ DWu.T).ravel()
    h_inf = float(np.max(np.abs(h))) if h.size else 0.0
    return h, h_inf


def build_H_oracle(S, weights, scaling):
    """Dense Hessian ``blockdiag(D W_u D) + S^T blockdiag(W_x.., W_N) S``.

    Reference only; symmetrized exactly so that ``H == H.T`` bitwise.
    """
    N = scaling.d.shape[0]
    n_x = weights.W_x.shape[0]
    Q = stage_state_weights(weights, N)
    Qbar = np.zeros((N * n_x, N * n_x))
    for k in range(N):
        Qbar[k * n_x : (k + 1) * n_x, k * n_x : (k + 1) * n_x] = Q[k]
    R = scaling.D @ weights.W_u @ scaling.D
    H = np.kron(np.eye(N), R) + S.T @ Qbar @ S
    return 0.5 * (H + H.T)


def condense(stages, weights, scaling, x_guess, x_ref, u_ref, u_lo, u_hi, x_hat):
    """All-in-one construction of the condensed problem (used by tests and tools)."""
    S = build_S(stages)
    g1 = build_g1(stages, x_guess, x_ref)
    g2 = build_g2(stages, x_hat, np.asarray(x_guess)[0])
    h, h_inf = build_h(S, g1, g2, weights, scaling, u_ref, u_lo, u_hi)
    return CondensedProblem(
        S=S, g1=g1, g2=g2, h=h, h_inf=h_inf, stages=stages, weights=weights, scaling=scaling
    )
