"""Closed-loop simulation of the RTI controller against the nominal plant."""

import csv
import logging
import time
from dataclasses import dataclass

import numpy as np

from .certify import ProblemDims, certify
from .exceptions import CertNMPCError, IntegrationDivergedError
from .rti import RTIController
from .sensitivity import IntegratorSpec, rk4_map

logger = logging.getLogger(__name__)


class SimulationError(CertNMPCError, RuntimeError):
    def __init__(self, message, step):
        self.step = step
        super().__init__(f"step {step}: {message}")


@dataclass
class SimTrace:
    """One row per sampling step; inputs are the ones applied during that step."""

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    iterations: np.ndarray
    gap: np.ndarray
    prep_flops: np.ndarray
    feedback_flops: np.ndarray
    prep_wall_s: np.ndarray
    feedback_wall_s: np.ndarray

    def __len__(self):
        return self.t.shape[0]

    def header(self):
        n_x, n_u = self.x.shape[1], self.u.shape[1]
        return (
            ["t"]
            + [f"x{i + 1}" for i in range(n_x)]
            + [f"u{i + 1}" for i in range(n_u)]
            + ["iters", "gap", "prep_flops", "fb_flops", "prep_wall_s", "fb_wall_s"]
        )

    def write_csv(self, path, wall_times=False):
        """Write the trace; wall-time columns are ``nan`` unless ``wall_times``.

        Masking keeps output byte-identical across runs of the same config.
        """
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.header())
            for k in range(len(self)):
                walls = (
                    [repr(float(self.prep_wall_s[k])), repr(float(self.feedback_wall_s[k]))]
                    if wall_times
                    else ["nan", "nan"]
                )
                writer.writerow(
                    [repr(float(self.t[k]))]
                    + [repr(float(v)) for v in self.x[k]]
                    + [repr(float(v)) for v in self.u[k]]
                    + [
                        str(int(self.iterations[k])),
                        repr(float(self.gap[k])),
                        str(int(self.prep_flops[k])),
                        str(int(self.feedback_flops[k])),
                    ]
                    + walls
                )

    def summary(self, x_target=None, tol=0.1):
        out = {
            "steps": len(self),
            "final_time": float(self.t[-1] + (self.t[1] - self.t[0] if len(self) > 1 else 0.0)),
            "iterations": sorted({int(i) for i in self.iterations}),
            "max_gap": float(np.max(self.gap)) if len(self) else 0.0,
            "u_min": self.u.min(axis=0).tolist(),
            "u_max": self.u.max(axis=0).tolist(),
            "prep_wall_s_max": float(np.max(self.prep_wall_s)),
            "fb_wall_s_max": float(np.max(self.feedback_wall_s)),
            "fb_wall_s_mean": float(np.mean(self.feedback_wall_s)),
        }
        if x_target is not None:
            dist = np.linalg.norm(self.x - x_target, axis=1)
            out["final_distance"] = float(dist[-1])
            out["settling_time"] = settling_time(self.t, dist, tol)
        return out


def settling_time(t, dist, tol):
    """First time after which ``dist`` stays below ``tol`` to the end, or ``None``."""
    outside = np.nonzero(dist >= tol)[0]
    if outside.size == 0:
        return float(t[0])
    last = outside[-1]
    if last + 1 >= len(t):
        return None
    return float(t[last + 1])


def run_closed_loop(config, open_loop=False, backend="riccati"):
    """Simulate ``config.sim_duration`` seconds of closed-loop (or uncontrolled) operation.

    Row ``k`` records the plant state at ``t_k = k dt`` and the input held
    over ``[t_k, t_{k+1})``. With ``open_loop`` the input is zero and no
    controller runs.
    """
    model = config.model()
    spec = IntegratorSpec(config.dt, config.N_s)
    steps = config.n_steps
    n_x, n_u = model.n_x, model.n_u

    t = np.arange(steps) * config.dt
    X = np.empty((steps, n_x))
    U = np.zeros((steps, n_u))
    iters = np.zeros(steps, dtype=np.int64)
    gap = np.zeros(steps)
    prep_fl = np.zeros(steps, dtype=np.int64)
    fb_fl = np.zeros(steps, dtype=np.int64)
    prep_wall = np.zeros(steps)
    fb_wall = np.zeros(steps)

    controller = None
    if not open_loop:
        x_ref, u_ref = config.reference_window(0)
        controller = RTIController(
            model=model, spec=spec, N=config.N, u_lo=config.u_lo, u_hi=config.u_hi,
            weights=config.weights, x_ref=x_ref, u_ref=u_ref, eps=config.eps, backend=backend,
        )
        cert = certify(ProblemDims.for_model(model, config.N, config.N_s, config.eps),
                       config.flops_per_sec)
        logger.info(
            "certificate: %d iterations, %d prep + %d feedback flops, %.3g s at %.3g flop/s",
            cert.iterations, cert.prep_flops, cert.feedback_flops,
            cert.estimated_time_s, config.flops_per_sec,
        )

    x = config.initial_state()
    for k in range(steps):
        X[k] = x
        if controller is not None:
            controller.set_reference(*config.reference_window(k))
            try:
                t0 = time.perf_counter()
                controller.prepare(x if k == 0 else None)
                t1 = time.perf_counter()
                sol = controller.feedback(x)
                t2 = time.perf_counter()
            except CertNMPCError as exc:
                raise SimulationError(f"controller failed: {exc}", k) from exc
            U[k] = sol.u[0]
            d = sol.diagnostics
            iters[k], gap[k] = d.iterations, d.gap
            prep_fl[k], fb_fl[k] = d.prep_flops, d.feedback_flops
            prep_wall[k], fb_wall[k] = t1 - t0, t2 - t1
            logger.debug(
                "step %d: iters=%d gap=%.2e fb_wall=%.2e s certified=%.2e s",
                k, d.iterations, d.gap, fb_wall[k], d.feedback_flops / config.flops_per_sec,
            )
        try:
            x = rk4_map(model, x, U[k], spec)
        except IntegrationDivergedError as exc:
            raise SimulationError(f"plant state diverged: {exc}", k) from exc

    trace = SimTrace(t, X, U, iters, gap, prep_fl, fb_fl, prep_wall, fb_wall)
    if controller is not None and steps:
        certified = fb_fl[0] / config.flops_per_sec
        logger.info(
            "mean feedback wall time %.3g s vs certified %.3g s (ratio %.2f)",
            fb_wall.mean(), certified, fb_wall.mean() / certified,
        )
    return trace
