"""Command-line front end.

Subcommands::

    certnmpc simulate --config cfg.json --out trace.csv [--open-loop] [--backend riccati|dense]
    certnmpc certify  --config cfg.json [--flops-per-sec R]
    certnmpc solve-qp --in qp.json

Exit status: 0 on success, 1 on invalid input, 2 on runtime failure.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from .certify import ProblemDims, certify
from .config import load_config
from .exceptions import CertNMPCError, ConfigError
from .ipm import solve_dense_box_qp
from .rti import BACKENDS
from .sim import run_closed_loop

LOG_ENV = "CERT_NMPC_LOG"
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

logger = logging.getLogger("certnmpc")


def _configure_logging():
    level = os.environ.get(LOG_ENV, "error").lower()
    logging.basicConfig(
        level=LOG_LEVELS.get(level, logging.ERROR),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _dump(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_simulate(args):
    cfg = load_config(args.config)
    trace = run_closed_loop(cfg, open_loop=args.open_loop, backend=args.backend)
    trace.write_csv(args.out, wall_times=args.wall_times)
    target = cfg.reference_window(len(trace))[0][0]
    summary = trace.summary(x_target=target)
    summary["csv"] = str(args.out)
    summary["open_loop"] = args.open_loop
    summary["backend"] = None if args.open_loop else args.backend
    if not args.open_loop and len(trace):
        summary["certified_feedback_s"] = int(trace.feedback_flops[0]) / cfg.flops_per_sec
        summary["certified_prep_s"] = int(trace.prep_flops[0]) / cfg.flops_per_sec
    _dump(summary)
    return EXIT_OK


def cmd_certify(args):
    cfg = load_config(args.config)
    model = cfg.model()
    rate = args.flops_per_sec if args.flops_per_sec is not None else cfg.flops_per_sec
    if not rate > 0:
        raise ConfigError("--flops-per-sec", "must be positive")
    cert = certify(ProblemDims.for_model(model, cfg.N, cfg.N_s, cfg.eps), rate)
    out = cert.to_dict()
    out["sampling_time_s"] = cfg.dt
    out["meets_sampling_time"] = cert.estimated_time_s <= cfg.dt
    _dump(out)
    return EXIT_OK


def _read_qp(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected an object with H, h and optional eps")
    for key in ("H", "h"):
        if key not in raw:
            raise ConfigError(key, "missing required field")
    try:
        H = np.asarray(raw["H"], dtype=np.float64)
        h = np.asarray(raw["h"], dtype=np.float64)
    except (TypeError, ValueError):
        raise ConfigError("H", "H and h must be numeric arrays") from None
    if h.ndim != 1 or h.size == 0:
        raise ConfigError("h", "expected a non-empty vector")
    if H.shape != (h.size, h.size):
        raise ConfigError("H", f"expected shape {(h.size, h.size)}, got {H.shape}")
    if not (np.all(np.isfinite(H)) and np.all(np.isfinite(h))):
        raise ConfigError("H", "non-finite entries")
    if not np.allclose(H, H.T, rtol=1e-12, atol=1e-12):
        raise ConfigError("H", "must be symmetric")
    eps = raw.get("eps", 1e-6)
    if isinstance(eps, bool) or not isinstance(eps, (int, float)) or not eps > 0:
        raise ConfigError("eps", "must be a positive number")
    return H, h, float(eps)


def cmd_solve_qp(args):
    H, h, eps = _read_qp(args.input)
    z, info = solve_dense_box_qp(H, h, eps=eps)
    _dump(
        {
            "z": z.tolist(),
            "iterations": info.iterations,
            "gap": info.gap,
            "h_inf": info.h_inf,
            "objective": float(0.5 * z @ H @ z + h @ z),
        }
    )
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="certnmpc",
        description="Execution-time-certified RTI NMPC with a Riccati-based interior-point solver.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a closed-loop simulation and write a CSV trace")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--open-loop", action="store_true", help="apply zero input, no controller")
    p.add_argument("--backend", choices=BACKENDS, default="riccati")
    p.add_argument(
        "--wall-times", action="store_true",
        help="write measured wall times into the CSV (output is then not reproducible)",
    )
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("certify", help="print the flop/execution-time certificate as JSON")
    p.add_argument("--config", required=True)
    p.add_argument("--flops-per-sec", type=float, default=None)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("solve-qp", help="solve a standalone box QP from a JSON file")
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(func=cmd_solve_qp)
    return parser


def main(argv=None):
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (CertNMPCError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
