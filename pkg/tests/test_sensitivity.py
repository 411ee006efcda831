import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from certnmpc.exceptions import IntegrationDivergedError
from certnmpc.models import LorenzParams, ModelDynamics, double_integrator, lorenz
from certnmpc.sensitivity import (
    IntegratorSpec,
    horizon_sensitivities,
    rk4_map,
    rk4_step,
    rollout,
    stage_sensitivities,
)

from conftest import central_jacobian, rel_err


def test_integrator_spec_step():
    spec = IntegratorSpec(0.1, 4)
    assert spec.step == 0.1 / 4
    with pytest.raises(ValueError):
        IntegratorSpec(0.0, 1)
    with pytest.raises(ValueError):
        IntegratorSpec(0.1, 0)


def test_rk4_constant_derivative(integrator_model):
    assert rk4_step(integrator_model, np.zeros(1), np.ones(1), 0.1)[0] == pytest.approx(0.1, abs=1e-15)


def test_rk4_decay_matches_hand_evaluated_stages(decay_model):
    h = 0.1
    k1 = -1.0
    k2 = -(1 + 0.5 * h * k1)
    k3 = -(1 + 0.5 * h * k2)
    k4 = -(1 + h * k3)
    expected = 1 + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    got = rk4_step(decay_model, np.ones(1), np.zeros(1), h)[0]
    assert got == pytest.approx(expected, abs=1e-15)
    assert got == pytest.approx(0.9048375, abs=5e-8)


def test_rk4_lorenz_equilibrium_fixed():
    x = LorenzParams().attractor()
    np.testing.assert_allclose(rk4_step(lorenz(), x, np.zeros(3), 0.37), x, atol=1e-12)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_rk4_divergence_raises():
    blowup = ModelDynamics(
        "blowup", 1, 1,
        f=lambda x, u: x**2 * 1e200, f_x=lambda x, u: np.array([[0.0]]), f_u=lambda x, u: np.array([[0.0]]),
    )
    with pytest.raises(IntegrationDivergedError):
        rk4_step(blowup, np.array([1e200]), np.zeros(1), 1.0)


@pytest.mark.parametrize("n_steps", [1, 2])
def test_integrator_sensitivities(integrator_model, n_steps):
    spec = IntegratorSpec(0.1, n_steps)
    tri = stage_sensitivities(integrator_model, np.array([0.3]), np.array([2.0]), np.array([0.5]), spec)
    assert tri.A[0, 0] == pytest.approx(1.0, abs=1e-15)
    assert tri.B[0, 0] == pytest.approx(0.1, abs=1e-15)
    assert tri.r[0] == pytest.approx(0.0, abs=1e-15)


def _composed_map_jacobians(model, x, u, spec):
    Jx = central_jacobian(lambda s: rk4_map(model, s, u, spec), x)
    Ju = central_jacobian(lambda v: rk4_map(model, x, v, spec), u)
    return Jx, Ju


def test_lorenz_stage_against_fd_and_rollout():
    model = lorenz()
    spec = IntegratorSpec(0.01, 2)
    x = np.array([1.0, 2.0, 3.0])
    u = np.array([0.5, -1.0, 2.0])
    x_next = rk4_map(model, x, u, spec)
    tri = stage_sensitivities(model, x, u, x_next, spec)
    np.testing.assert_array_equal(tri.r, np.zeros(3))
    Jx, Ju = _composed_map_jacobians(model, x, u, spec)
    assert rel_err(tri.A, Jx) <= 1e-5
    assert rel_err(tri.B, Ju) <= 1e-5


@settings(max_examples=40, deadline=None)
@given(
    x=st.lists(st.floats(-10, 10), min_size=3, max_size=3),
    u=st.lists(st.floats(-3, 3), min_size=3, max_size=3),
    n_steps=st.integers(1, 4),
)
def test_lorenz_sensitivity_consistency(x, u, n_steps):
    model = lorenz()
    spec = IntegratorSpec(0.01, n_steps)
    x, u = np.array(x), np.array(u)
    guess_next = np.array([1.0, -2.0, 0.5])
    tri = stage_sensitivities(model, x, u, guess_next, spec)
    # residual is F(x, u) - x_next exactly (same arithmetic path)
    np.testing.assert_allclose(tri.r, rk4_map(model, x, u, spec) - guess_next, rtol=0, atol=1e-12)
    Jx, Ju = _composed_map_jacobians(model, x, u, spec)
    assert rel_err(tri.A, Jx) <= 1e-5
    assert rel_err(tri.B, Ju) <= 1e-5


@pytest.mark.parametrize("dt,n_steps", [(0.1, 1), (0.05, 3), (0.5, 2)])
def test_double_integrator_exact(dt, n_steps):
    model = double_integrator()
    spec = IntegratorSpec(dt, n_steps)
    tri = stage_sensitivities(model, np.array([0.3, -1.0]), np.array([0.7]), np.zeros(2), spec)
    np.testing.assert_allclose(tri.A, [[1.0, dt], [0.0, 1.0]], rtol=0, atol=1e-12)
    np.testing.assert_allclose(tri.B, [[dt**2 / 2], [dt]], rtol=0, atol=1e-12)


def test_horizon_on_consistent_rollout_has_zero_residuals():
    model = lorenz()
    spec = IntegratorSpec(0.01, 2)
    rng = np.random.default_rng(3)
    u = rng.uniform(-3, 3, (20, 3))
    x = rollout(model, np.array([10.0, 10.0, 30.0]), u, spec)
    stages = horizon_sensitivities(model, x, u, spec)
    assert len(stages) == 20
    for tri in stages:
        np.testing.assert_array_equal(tri.r, np.zeros(3))


def test_horizon_single_stage_equals_stage_call():
    model = lorenz()
    spec = IntegratorSpec(0.01, 2)
    x = np.array([[1.0, 2.0, 3.0], [1.1, 2.0, 2.9]])
    u = np.array([[0.1, 0.2, 0.3]])
    (h,) = horizon_sensitivities(model, x, u, spec)
    s = stage_sensitivities(model, x[0], u[0], x[1], spec)
    np.testing.assert_array_equal(h.A, s.A)
    np.testing.assert_array_equal(h.B, s.B)
    np.testing.assert_array_equal(h.r, s.r)


def test_horizon_double_integrator_closed_form():
    model = double_integrator()
    dt = 0.1
    spec = IntegratorSpec(dt, 2)
    u = np.linspace(-1, 1, 6)[:, None]
    x = rollout(model, np.array([1.0, 0.0]), u, spec)
    for tri in horizon_sensitivities(model, x, u, spec):
        np.testing.assert_allclose(tri.A, [[1, dt], [0, 1]], atol=1e-12)
        np.testing.assert_allclose(tri.B, [[dt**2 / 2], [dt]], atol=1e-12)


def test_horizon_length_mismatch():
    with pytest.raises(ValueError):
        horizon_sensitivities(lorenz(), np.zeros((3, 3)), np.zeros((3, 3)), IntegratorSpec(0.01))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_horizon_divergence_reports_stage():
    model = lorenz()
    spec = IntegratorSpec(1.0, 1)
    x = np.zeros((3, 3))
    x[1] = [1e120, 1e120, 1e120]
    with pytest.raises(IntegrationDivergedError) as info:
        horizon_sensitivities(model, x, np.zeros((2, 3)), spec)
    assert info.value.stage == 1
