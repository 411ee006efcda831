import numpy as np
import pytest

from certnmpc.condense import Weights
from certnmpc.exceptions import InvalidBoundsError
from certnmpc.ipm import iteration_count
from certnmpc.models import LorenzParams, double_integrator, lorenz
from certnmpc.rti import (
    ControlSolution,
    GuessTrajectory,
    RTIController,
    cold_start,
    condensed_problem,
    feedback,
    prepare,
    shift,
)
from certnmpc.sensitivity import IntegratorSpec, rk4_map, rollout

LORENZ_SPEC = IntegratorSpec(0.01, 2)
BOX = (-3 * np.ones(3), 3 * np.ones(3))


def lorenz_weights():
    return Weights(np.eye(3), np.eye(3), 0.1 * np.eye(3))


def test_shift_literal(integrator_model):
    spec = IntegratorSpec(0.1, 1)
    x = np.array([[1.0], [2.0], [3.0], [4.0]])
    u = np.array([[5.0], [6.0], [7.0]])
    g = shift(ControlSolution(x=x, u=u), integrator_model, spec)
    np.testing.assert_array_equal(g.x[:3, 0], [2.0, 3.0, 4.0])
    assert g.x[3, 0] == rk4_map(integrator_model, np.array([4.0]), np.array([7.0]), spec)[0]
    assert g.x[3, 0] == pytest.approx(4.7)
    np.testing.assert_array_equal(g.u[:, 0], [6.0, 7.0, 7.0])


def test_shift_at_equilibrium_is_identity():
    xs = LorenzParams().attractor()
    prev = ControlSolution(x=np.tile(xs, (21, 1)), u=np.zeros((20, 3)))
    g = shift(prev, lorenz(), LORENZ_SPEC)
    np.testing.assert_allclose(g.x, prev.x, atol=1e-12)
    np.testing.assert_array_equal(g.u, prev.u)


def test_guess_shape_check():
    with pytest.raises(ValueError):
        GuessTrajectory(x=np.zeros((3, 1)), u=np.zeros((3, 1)))


def test_prepare_consistent_guess_residual_is_scaling_offset():
    model = lorenz()
    rng = np.random.default_rng(5)
    u = rng.uniform(-2, 2, (20, 3))
    guess = GuessTrajectory(x=rollout(model, np.array([10.0, 10.0, 30.0]), u, LORENZ_SPEC), u=u)
    prep = prepare(model, guess, LorenzParams().attractor(), np.zeros(3), *BOX, lorenz_weights(), LORENZ_SPEC)
    st = prep.stages
    for k in range(20):
        np.testing.assert_allclose(st.r_bar[k], st.B[k] @ prep.scaling.d[k], atol=1e-12)
    assert prep.S.shape == (60, 60)
    assert np.all(np.isfinite(prep.S)) and np.all(np.isfinite(prep.g1))


def test_prepare_double_integrator_closed_form():
    model = double_integrator()
    dt = 0.1
    spec = IntegratorSpec(dt, 2)
    N = 4
    guess = cold_start(model, np.array([1.0, 0.0]), np.zeros((N, 1)), [-1.0], [1.0], spec)
    prep = prepare(model, guess, [0.0, 0.0], [0.0], [-1.0], [1.0], Weights(np.eye(2), np.eye(2), np.eye(1)), spec)
    A = np.array([[1.0, dt], [0.0, 1.0]])
    B = np.array([[dt**2 / 2], [dt]])
    for i in range(N):
        for k in range(i + 1):
            expect = np.linalg.matrix_power(A, i - k) @ B
            np.testing.assert_allclose(prep.S[2 * i : 2 * i + 2, k : k + 1], expect, atol=1e-12)


def test_prepare_rejects_bad_bounds():
    model = double_integrator()
    spec = IntegratorSpec(0.1)
    guess = cold_start(model, np.zeros(2), np.zeros((2, 1)), [-1.0], [1.0], spec)
    with pytest.raises(InvalidBoundsError):
        prepare(model, guess, [0.0, 0.0], [0.0], [1.0], [-1.0], Weights(np.eye(2), np.eye(2), np.eye(1)), spec)


def test_feedback_zero_gradient_shortcut():
    xs = LorenzParams().attractor()
    guess = GuessTrajectory(x=np.tile(xs, (21, 1)), u=np.zeros((20, 3)))
    prep = prepare(lorenz(), guess, xs, np.zeros(3), *BOX, lorenz_weights(), LORENZ_SPEC)
    sol = feedback(prep, xs)
    assert sol.diagnostics.iterations == 0
    np.testing.assert_allclose(sol.x, guess.x, atol=1e-12)
    np.testing.assert_array_equal(sol.u, guess.u)


@pytest.mark.parametrize("bound,expected", [(0.3, 0.3), (1.0, 0.5)])
def test_feedback_scalar_clamped_lqr(integrator_model, bound, expected):
    # x1 = x0 + u, cost 1/2 (x1 - 1)^2 + 1/2 u^2 from x0 = 0: unconstrained u = 1/2
    spec = IntegratorSpec(1.0, 1)
    guess = cold_start(integrator_model, np.zeros(1), np.zeros((1, 1)), [-bound], [bound], spec)
    prep = prepare(integrator_model, guess, [1.0], [0.0], [-bound], [bound],
                   Weights(np.eye(1), np.eye(1), np.eye(1)), spec)
    sol = feedback(prep, np.zeros(1), backend="dense")
    assert sol.u[0, 0] == pytest.approx(expected, abs=1e-5)
    assert sol.diagnostics.iterations == iteration_count(1, 1e-6)
    assert sol.x[1, 0] == pytest.approx(sol.u[0, 0], abs=1e-15)


@pytest.mark.parametrize("backend", ["riccati", "dense"])
def test_feedback_lorenz_perturbed(backend):
    xs = LorenzParams().attractor()
    model = lorenz()
    guess = GuessTrajectory(x=np.tile(xs, (21, 1)), u=np.zeros((20, 3)))
    prep = prepare(model, guess, xs, np.zeros(3), *BOX, lorenz_weights(), LORENZ_SPEC)
    x_hat = xs + np.array([0.5, -0.3, 0.8])
    sol = feedback(prep, x_hat, backend=backend)
    assert sol.diagnostics.iterations == 252
    assert np.all(sol.u >= -3 - 1e-9) and np.all(sol.u <= 3 + 1e-9)
    np.testing.assert_array_equal(sol.x[0], x_hat)

    # defect consistency: the state chain of the recovery step
    st, sc = prep.stages, prep.scaling
    z = np.linalg.solve(sc.D, (sol.u - guess.u - sc.d).T).T
    dx = sol.x - guess.x
    for k in range(20):
        np.testing.assert_allclose(dx[k + 1], st.A[k] @ dx[k] + st.B_bar[k] @ z[k] + st.r_bar[k], atol=1e-12)


def test_backends_agree_on_lorenz():
    xs = LorenzParams().attractor()
    guess = GuessTrajectory(x=np.tile(xs, (21, 1)), u=np.zeros((20, 3)))
    prep = prepare(lorenz(), guess, xs, np.zeros(3), *BOX, lorenz_weights(), LORENZ_SPEC)
    x_hat = xs + np.array([2.0, -1.0, 3.0])
    a = feedback(prep, x_hat, backend="riccati")
    b = feedback(prep, x_hat, backend="dense")
    np.testing.assert_allclose(a.u, b.u, atol=1e-7)


def test_condensed_problem_lorenz_dims():
    x0 = np.array([10.0, 10.0, 30.0])
    guess = cold_start(lorenz(), x0, np.zeros((20, 3)), *BOX, LORENZ_SPEC)
    prep = prepare(lorenz(), guess, LorenzParams().attractor(), np.zeros(3), *BOX, lorenz_weights(), LORENZ_SPEC)
    prob = condensed_problem(prep, x0)
    assert prob.n == 60 and prob.stages.N == 20
    np.testing.assert_array_equal(prob.g2, np.zeros(60))


def make_controller(**kw):
    args = dict(
        model=lorenz(), spec=LORENZ_SPEC, N=20, u_lo=BOX[0], u_hi=BOX[1],
        weights=lorenz_weights(), x_ref=LorenzParams().attractor(), u_ref=np.zeros(3),
    )
    args.update(kw)
    return RTIController(**args)


def test_controller_closed_loop_short():
    ctl = make_controller()
    assert ctl.iterations == 252
    assert ctl.certificate.feedback_flops == 2233707
    x = np.array([10.0, 10.0, 30.0])
    for _ in range(30):
        u = ctl.step(x)
        assert ctl.previous.diagnostics.iterations == 252
        assert ctl.previous.diagnostics.feedback_flops == ctl.certificate.feedback_flops
        assert np.all(np.abs(u) <= 3 + 1e-9)
        x = rk4_map(ctl.model, x, u, ctl.spec)
    assert np.linalg.norm(x - LorenzParams().attractor()) < np.linalg.norm([10, 10, 30] - LorenzParams().attractor())


def test_controller_phase_order():
    ctl = make_controller()
    with pytest.raises(RuntimeError):
        ctl.feedback(np.zeros(3))
    with pytest.raises(ValueError):
        ctl.prepare()
    ctl.prepare(np.array([10.0, 10.0, 30.0]))
    ctl.feedback(np.array([10.0, 10.0, 30.0]))
    prep = ctl.prepare()  # shifted; no estimate needed
    np.testing.assert_array_equal(prep.guess.x[:-1], ctl.previous.x[1:])
    ctl.reset()
    assert ctl.previous is None and ctl.prepared is None


def test_controller_validation():
    with pytest.raises(ValueError):
        make_controller(backend="qr")
    with pytest.raises(ValueError):
        make_controller(N=0)
    with pytest.raises(InvalidBoundsError):
        make_controller(u_lo=np.ones(3), u_hi=-np.ones(3))
