"""JSON experiment configuration for closed-loop simulation."""

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .condense import Weights
from .exceptions import ConfigError
from .models import MODELS, get_model


@dataclass(frozen=True)
class SimConfig:
    model_name: str
    model_params: dict
    dt: float
    T_p: float
    N_s: int
    sim_duration: float
    x0: np.ndarray
    x_ref: np.ndarray  # (n_x,) constant or (T, n_x) per-step sequence
    u_ref: np.ndarray  # (n_u,) or (T, n_u)
    u_lo: np.ndarray
    u_hi: np.ndarray
    weights: Weights
    eps: float = 1e-6
    flops_per_sec: float = 1e9
    seed: int = 0
    x0_noise: float = 0.0

    @property
    def N(self):
        return int(round(self.T_p / self.dt))

    @property
    def n_steps(self):
        return int(math.floor(self.sim_duration / self.dt + 1e-9))

    def model(self):
        return get_model(self.model_name, self.model_params)

    def initial_state(self):
        """``x0`` plus the optional seeded Gaussian perturbation."""
        if self.x0_noise == 0.0:
            return self.x0.copy()
        rng = np.random.default_rng(self.seed)
        return self.x0 + self.x0_noise * rng.standard_normal(self.x0.shape)

    def reference_window(self, step):
        """References over the horizon starting at simulation step ``step``.

        Per-step sequences are indexed from ``step`` and padded with their
        last entry past the end.
        """
        N = self.N

        def window(ref, length):
            if ref.ndim == 1:
                return np.broadcast_to(ref, (length, ref.shape[0])).copy()
            idx = np.minimum(np.arange(step, step + length), ref.shape[0] - 1)
            return ref[idx]

        return window(self.x_ref, N + 1), window(self.u_ref, N)


def _get(d, key, path, default=None, required=True):
    if key in d:
        return d[key]
    if required and default is None:
        raise ConfigError(f"{path}{key}", "missing required field")
    return default


def _number(value, field, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(field, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(field, "must be finite")
    if positive and value <= 0:
        raise ConfigError(field, f"must be positive, got {value}")
    return value


def _array(value, field, width, allow_sequence=False):
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise ConfigError(field, "expected a numeric array") from None
    if arr.ndim == 0:
        raise ConfigError(field, "expected an array, got a scalar")
    if arr.ndim == 1 and arr.shape[0] == width:
        pass
    elif allow_sequence and arr.ndim == 2 and arr.shape[1] == width and arr.shape[0] >= 1:
        pass
    else:
        raise ConfigError(field, f"expected length-{width} vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(field, "contains non-finite entries")
    return arr


def _weight(value, field, n):
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 1:
        if arr.shape[0] != n:
            raise ConfigError(field, f"diagonal shorthand must have length {n}")
        arr = np.diag(arr)
    elif arr.shape != (n, n):
        raise ConfigError(field, f"expected {n}x{n} matrix or length-{n} diagonal, got shape {arr.shape}")
    return arr


def parse_config(raw):
    """Validate a decoded JSON document and build a :class:`SimConfig`."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")

    model = _get(raw, "model", "")
    if not isinstance(model, dict):
        raise ConfigError("model", "expected an object with 'name' and optional 'params'")
    name = _get(model, "name", "model.")
    if name not in MODELS:
        raise ConfigError("model.name", f"unknown model {name!r}; choose from {sorted(MODELS)}")
    params = model.get("params", {}) or {}
    if not isinstance(params, dict):
        raise ConfigError("model.params", "expected an object")
    try:
        dyn = get_model(name, params)
    except TypeError as exc:
        raise ConfigError("model.params", str(exc)) from None
    n_x, n_u = dyn.n_x, dyn.n_u

    dt = _number(_get(raw, "dt", ""), "dt", positive=True)
    T_p = _number(_get(raw, "T_p", ""), "T_p", positive=True)
    ratio = T_p / dt
    if round(ratio) < 1 or abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
        raise ConfigError("T_p", f"T_p/dt must be a positive integer, got {ratio}")
    N_s = _get(raw, "N_s", "", default=1, required=False)
    if isinstance(N_s, bool) or not isinstance(N_s, int) or N_s < 1:
        raise ConfigError("N_s", f"must be a positive integer, got {N_s!r}")
    duration = _number(_get(raw, "sim_duration", ""), "sim_duration", positive=True)

    x0 = _array(_get(raw, "x0", ""), "x0", n_x)

    refs = _get(raw, "references", "", default={}, required=False)
    if not isinstance(refs, dict):
        raise ConfigError("references", "expected an object")
    x_ref = _array(refs.get("x_ref", np.zeros(n_x)), "references.x_ref", n_x, allow_sequence=True)
    u_ref = _array(refs.get("u_ref", np.zeros(n_u)), "references.u_ref", n_u, allow_sequence=True)

    bounds = _get(raw, "bounds", "")
    if not isinstance(bounds, dict):
        raise ConfigError("bounds", "expected an object with u_lo and u_hi")
    u_lo = _array(_get(bounds, "u_lo", "bounds."), "bounds.u_lo", n_u)
    u_hi = _array(_get(bounds, "u_hi", "bounds."), "bounds.u_hi", n_u)
    if not np.all(u_hi > u_lo):
        raise ConfigError("bounds", "u_hi must exceed u_lo componentwise")

    w = _get(raw, "weights", "")
    if not isinstance(w, dict):
        raise ConfigError("weights", "expected an object with W_x, W_N, W_u")
    mats = {}
    for key, n in (("W_x", n_x), ("W_N", n_x), ("W_u", n_u)):
        mats[key] = _weight(_get(w, key, "weights."), f"weights.{key}", n)
    try:
        weights = Weights.from_arrays(mats["W_x"], mats["W_N"], mats["W_u"], n_x, n_u)
    except ValueError as exc:
        field = next((f"weights.{k}" for k in mats if str(exc).startswith(k)), "weights")
        raise ConfigError(field, str(exc)) from None

    eps = _number(raw.get("eps", 1e-6), "eps", positive=True)
    rate = _number(raw.get("flops_per_sec", 1e9), "flops_per_sec", positive=True)
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed", "must be a nonnegative integer")
    noise = _number(raw.get("x0_noise", 0.0), "x0_noise")
    if noise < 0:
        raise ConfigError("x0_noise", "must be nonnegative")

    return SimConfig(
        model_name=name, model_params=dict(params), dt=dt, T_p=T_p, N_s=N_s,
        sim_duration=duration, x0=x0, x_ref=x_ref, u_ref=u_ref, u_lo=u_lo, u_hi=u_hi,
        weights=weights, eps=eps, flops_per_sec=rate, seed=seed, x0_noise=noise,
    )


def load_config(path):
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from None
    return parse_config(raw)
