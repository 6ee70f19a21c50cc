import math

import numpy as np
import pytest
import scipy.linalg

from tests.context import (
    DimensionMismatch,
    DomainError,
    GainMatrix,
    GridMismatch,
    Perturbation,
    StateSpaceModel,
    StepTooLarge,
    Trajectory,
    apply_update,
    input_relative_error,
    simulate,
)
from tests.fake_systems import FakeSystemGenerator

SCALAR = StateSpaceModel(A=[[-1.0]], B=[[1.0]], C=[[1.0]])


def test_scalar_decay():
    """Verify x' = -x from x0 = 1 reaches exp(-1) at t = 1."""
    traj = simulate(SCALAR, GainMatrix(F=[[0.0]]), None, [1.0], t_end=1.0, dt=1e-3)
    assert len(traj) == 1001
    assert traj.times[-1] == pytest.approx(1.0)
    assert traj.states[-1, 0] == pytest.approx(math.exp(-1), abs=1e-6)


def test_horizon_not_a_multiple_of_dt():
    """Verify the trajectory ends exactly at t_end with a shorter last step."""
    traj = simulate(SCALAR, GainMatrix(F=[[0.0]]), None, [1.0], t_end=1.0, dt=0.6)
    np.testing.assert_allclose(traj.times, [0.0, 0.6, 1.0])
    assert traj.times[-1] <= 1.0
    assert traj.states[-1, 0] == pytest.approx(math.exp(-1), abs=2e-3)

    traj = simulate(SCALAR, GainMatrix(F=[[0.0]]), None, [1.0], t_end=1.0, dt=0.1)
    assert len(traj) == 11
    assert traj.times[-1] == 1.0
    assert np.all(np.diff(traj.times) > 0)


def test_inputs_follow_gain():
    """Verify u = F C x and y = C x at every step."""
    rng = np.random.default_rng(50)
    model, F = FakeSystemGenerator.stable_system(rng, n=4, m=2, p=3)
    traj = simulate(model, F, None, np.ones(4), t_end=1.0, dt=1e-2)

    np.testing.assert_allclose(traj.outputs, traj.states @ model.C.T, atol=1e-12)
    np.testing.assert_allclose(traj.inputs, traj.states @ (F.F @ model.C).T, atol=1e-12)
    assert traj.inputs.shape == (len(traj), 2)


def test_rk4_order():
    """Verify halving dt cuts the terminal error about 16 times against expm."""
    A = np.array([[-1.0, 2.0], [-3.0, -4.0]])
    model = StateSpaceModel(A=A, B=np.eye(2)[:, :1], C=np.eye(2)[:1])
    F = GainMatrix(F=[[0.0]])
    x0 = np.array([1.0, -0.5])
    exact = scipy.linalg.expm(2.0 * A) @ x0

    coarse = simulate(model, F, None, x0, t_end=2.0, dt=0.1).states[-1]
    fine = simulate(model, F, None, x0, t_end=2.0, dt=0.05).states[-1]
    ratio = np.linalg.norm(coarse - exact) / np.linalg.norm(fine - exact)
    assert 12 < ratio < 20


def test_stable_decay():
    """Verify a Hurwitz loop decays well below the initial state after many time constants."""
    rng = np.random.default_rng(51)
    model, F = FakeSystemGenerator.stable_system(rng, margin=1.0)
    x0 = rng.standard_normal(4)
    traj = simulate(model, F, None, x0, t_end=20.0, dt=1e-2)
    assert np.linalg.norm(traj.states[-1]) < np.linalg.norm(x0)


def test_certified_update_decays():
    """Verify an update that cancels a destabilizing Delta brings the state back down."""
    A = np.diag([-1.0, -2.0, -3.0])
    model = StateSpaceModel(A=A, B=np.eye(3), C=np.eye(3))
    F = GainMatrix(F=np.zeros((3, 3)))
    delta = Perturbation(delta=np.diag([2.0, 0.0, 0.0]) + 0.1 * np.ones((3, 3)))

    result = apply_update(model, F, delta, beta=0.5)
    assert result.alpha_perturbed > 0
    assert result.certified

    t_end = 20.0 / abs(result.alpha_closed)
    x0 = np.ones(3)
    traj = simulate(model, result.F_updated, delta, x0, t_end=t_end, dt=1e-2)
    assert np.linalg.norm(traj.states[-1]) < np.linalg.norm(x0)


def test_step_too_large():
    """Verify a step beyond the integrator heuristic is refused."""
    model = StateSpaceModel(A=[[-10.0]], B=[[1.0]], C=[[1.0]])
    with pytest.raises(StepTooLarge):
        simulate(model, GainMatrix(F=[[0.0]]), None, [1.0], t_end=1.0, dt=0.5)


def test_simulate_domain():
    """Verify nonpositive steps, short horizons and wrong x0 lengths are refused."""
    F = GainMatrix(F=[[0.0]])
    with pytest.raises(DomainError):
        simulate(SCALAR, F, None, [1.0], t_end=1.0, dt=0.0)
    with pytest.raises(DomainError):
        simulate(SCALAR, F, None, [1.0], t_end=1e-4, dt=1e-3)
    with pytest.raises(DimensionMismatch):
        simulate(SCALAR, F, None, [1.0, 2.0], t_end=1.0, dt=1e-3)


def _trajectory(inputs: np.ndarray) -> Trajectory:
    steps = len(inputs)
    return Trajectory(
        times=0.1 * np.arange(steps),
        states=np.zeros((steps, 1)),
        inputs=inputs,
        outputs=np.zeros((steps, 1)),
    )


def test_input_relative_error_identical():
    """Verify identical trajectories have zero relative error."""
    traj = simulate(SCALAR, GainMatrix(F=[[-0.5]]), None, [1.0], t_end=1.0, dt=1e-2)
    np.testing.assert_array_equal(input_relative_error(traj, traj), 0.0)


def test_input_relative_error_scaled():
    """Verify inputs scaled by 1.003 give a constant 0.3 percent error."""
    u = np.linspace(1.0, 2.0, 11).reshape(-1, 1) * np.array([[1.0, -2.0]])
    error = input_relative_error(_trajectory(1.003 * u), _trajectory(u))
    np.testing.assert_allclose(error, 0.3, atol=1e-9)


def test_input_relative_error_zero_reference():
    """Verify vanishing reference inputs give NaN instead of dividing by zero."""
    u = np.array([[0.0], [1.0], [0.0]])
    error = input_relative_error(_trajectory(2 * u), _trajectory(u))
    assert np.isnan(error[0]) and np.isnan(error[2])
    assert error[1] == pytest.approx(100.0)


def test_input_relative_error_grid_mismatch():
    """Verify trajectories on different time grids are refused."""
    with pytest.raises(GridMismatch):
        input_relative_error(_trajectory(np.ones((3, 1))), _trajectory(np.ones((4, 1))))
