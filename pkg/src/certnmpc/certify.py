"""Analytic flop counts and execution-time certificates.

All counts are closed-form functions of the problem dimensions, evaluated
in exact integer/rational arithmetic. The only data-dependent quantity in
an interior-point solve, the iteration count, is itself a function of
``n = N n_u`` and ``eps`` alone, which is what makes the certificate valid
before any measurement arrives.
"""

from dataclasses import asdict, dataclass, field
from fractions import Fraction
import math

from .ipm import iteration_count


@dataclass(frozen=True)
class ProblemDims:
    N: int
    n_x: int
    n_u: int
    N_s: int = 1
    m_f: int = 0
    m_fx: int = 0
    m_fu: int = 0
    eps: float = 1e-6

    def __post_init__(self):
        for name in ("N", "n_x", "n_u", "N_s"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v}")
        for name in ("m_f", "m_fx", "m_fu"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValueError(f"{name} must be a nonnegative integer, got {v}")
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    @property
    def n(self):
        return self.N * self.n_u

    @classmethod
    def for_model(cls, model, N, N_s, eps):
        return cls(
            N=N, n_x=model.n_x, n_u=model.n_u, N_s=N_s,
            m_f=model.m_f, m_fx=model.m_fx, m_fu=model.m_fu, eps=eps,
        )


def _round(value):
    """Round a nonnegative rational half-up to an integer."""
    return math.floor(Fraction(value) + Fraction(1, 2))


def flops_sensitivities(dims):
    """RK4 sensitivity propagation for all ``N`` stages."""
    N, nx, nu, Ns = dims.N, dims.n_x, dims.n_u, dims.N_s
    per_step = (
        4 * dims.m_f + 4 * dims.m_fx + 4 * dims.m_fu
        + 8 * nx**3 + 8 * nx**2 * nu + 10 * nx**2 + 10 * nx * nu + 16 * nx
    )
    return N * (nx + nu + Ns * per_step + nx**2 + nx * nu + nx)


def flops_riccati_exact(dims):
    N, nx, nu = dims.N, dims.n_x, dims.n_u
    cubic = Fraction(7, 3) * nx**3 + 4 * nx**2 * nu + 2 * nx * nu**2 + Fraction(1, 3) * nu**3
    return N * cubic + N * (8 * nx**2 + 8 * nx * nu + 2 * nu**2)


def flops_riccati(dims):
    """One factorized Riccati Newton step."""
    return _round(flops_riccati_exact(dims))


def flops_condensing(dims):
    """Costs of the individual condensing products.

    ``H`` is listed for comparison even though it is never formed on the
    controller path.
    """
    N, nx, nu = dims.N, dims.n_x, dims.n_u
    return {
        "scaled_dynamics": N * (3 * nx * nu + nx),
        "S": (N**2 - N) * nx * nu**2,
        "H": (2 * N**3 + N**2 + N) * nx**2 * nu + N * nu**2,
        "g1": 2 * N * nx + 2 * (N - 1) * nx**2,
        "g2": nx + 2 * N * nx**2,
        "h": 2 * N * nx**2 + (N**2 + N) * nx * nu + (N**2 - N) * nx + nu + N * (2 * nu + nu**2),
    }


def flops_dense_cholesky(dims):
    """Dense Cholesky solve of the condensed Newton system (for comparison)."""
    n = dims.n
    return _round(Fraction(1, 6) * n**3 + Fraction(5, 2) * n**2 + Fraction(1, 3) * n)


def preparation_breakdown(dims):
    N, nx, nu = dims.N, dims.n_x, dims.n_u
    return {
        "step1_shift": N * nx + N * nu + dims.m_f,
        "step2_sensitivities": flops_sensitivities(dims),
        "step3_condense": (
            nu + N * nu + N * (2 * nx * nu + nx) + (N**2 - N) * nx * nu**2
            + 2 * N * nx + 2 * (N - 1) * nx**2
        ),
    }


def feedback_breakdown(dims, iterations=None):
    N, nx, nu = dims.N, dims.n_x, dims.n_u
    if iterations is None:
        iterations = iteration_count(dims.n, dims.eps)
    per_iteration = 1 + flops_riccati_exact(dims) + 15 * N * nu + 5 * nx
    return {
        "step1_gradient": (
            nx + 4 * N * nx**2 + (N**2 + N) * nx * nu + (N**2 - N) * nx + nu
            + N * (2 * nu + nu**2)
        ),
        "step2_check": N * nu,
        "step3_initialize": 5 * N * nu + 3,
        "step4_iterations": _round(iterations * per_iteration),
        "step5_initial_deviation": nx,
        "step6_recover": N * (2 * nu + nx**2 + nx * nu + 2 * nx),
        "step7_update": (N + 1) * nx + N * nu,
    }


@dataclass(frozen=True)
class Certificate:
    dims: ProblemDims
    iterations: int
    prep_flops: int
    feedback_flops: int
    prep_breakdown: dict = field(default_factory=dict)
    feedback_breakdown: dict = field(default_factory=dict)
    flops_per_sec: float | None = None

    @property
    def total_flops(self):
        return self.prep_flops + self.feedback_flops

    @property
    def estimated_time_s(self):
        if self.flops_per_sec is None:
            return None
        return self.total_flops / self.flops_per_sec

    def to_dict(self):
        out = {
            "dims": asdict(self.dims),
            "n": self.dims.n,
            "iterations": self.iterations,
            "prep_flops": self.prep_flops,
            "feedback_flops": self.feedback_flops,
            "total_flops": self.total_flops,
            "prep_breakdown": dict(self.prep_breakdown),
            "feedback_breakdown": dict(self.feedback_breakdown),
            "flops_per_sec": self.flops_per_sec,
            "estimated_time_s": self.estimated_time_s,
        }
        return out


def certify(dims, flops_per_sec=None):
    """Certified per-sample flop totals and, given a rate, execution time."""
    if flops_per_sec is not None and not flops_per_sec > 0:
        raise ValueError("flops_per_sec must be positive")
    iterations = iteration_count(dims.n, dims.eps)
    prep = preparation_breakdown(dims)
    fb = feedback_breakdown(dims, iterations)
    return Certificate(
        dims=dims,
        iterations=iterations,
        prep_flops=sum(prep.values()),
        feedback_flops=sum(fb.values()),
        prep_breakdown=prep,
        feedback_breakdown=fb,
        flops_per_sec=flops_per_sec,
    )
