import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrsdsar.autofocus import (
    UqpProblem,
    build_uqp,
    default_mu,
    lift,
    lifted_matrix,
    phase_update_simplified,
    power_step,
    select_range_cells,
    solve_uqp,
    uqp_objective,
    unlift,
)
from lrsdsar.linops import ForwardModel, PhaseDiagonal, ValidationError, apply_forward
from lrsdsar.simkit import SceneSpec, gen_phase_error, gen_scene
from lrsdsar.solver import ISAR_SPARSE, SolverConfig, solve

import oracles


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_pd(rng, n):
    A = crandn(rng, n, n)
    H = A @ A.conj().T
    return UqpProblem(H + 1e-3 * np.eye(n), mu=0.0)


def test_build_uqp_trivial():
    prob = build_uqp(np.zeros(3), np.zeros(3), mu=1.0)
    assert np.array_equal(prob.U, np.eye(4))


def test_build_uqp_is_hermitian_pd():
    rng = np.random.default_rng(0)
    t, r = crandn(rng, 2), crandn(rng, 2)
    U = build_uqp(t, r).U
    assert np.allclose(U, U.conj().T)
    assert np.linalg.eigvalsh(U).min() > 0


def test_build_uqp_rejects_small_mu():
    rng = np.random.default_rng(1)
    t, r = crandn(rng, 4), crandn(rng, 4)
    lam = np.linalg.eigvalsh(lifted_matrix(t, r)).max()
    with pytest.raises(ValidationError):
        build_uqp(t, r, mu=0.99 * lam)


def test_default_mu_bounds_lifted_spectrum():
    rng = np.random.default_rng(2)
    for _ in range(20):
        t, r = crandn(rng, 7), crandn(rng, 7)
        assert default_mu(t, r) > np.linalg.eigvalsh(lifted_matrix(t, r)).max()


def test_quadratic_form_identity():
    rng = np.random.default_rng(3)
    M = 6
    t, r = crandn(rng, M), crandn(rng, M)
    prob = build_uqp(t, r)
    p = np.exp(1j * rng.uniform(-np.pi, np.pi, M))
    lhs = uqp_objective(prob, np.append(p, 1.0))
    rhs = prob.mu * (M + 1) - np.linalg.norm(r - t * p) ** 2 + np.linalg.norm(r) ** 2
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_power_step_identity_matrix():
    p = np.exp(1j * np.array([0.1, -2.0, 3.0]))
    assert np.allclose(power_step(UqpProblem(np.eye(3), 1.0), p), p)


def test_power_step_keeps_phase_where_product_vanishes():
    U = np.array([[1.0, -1.0], [-1.0, 1.0]])
    p = np.array([1.0 + 0j, 1.0 + 0j])
    assert np.array_equal(power_step(UqpProblem(U, 2.0), p), p)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**31 - 1))
def test_power_steps_monotone_and_unimodular(n, seed):
    rng = np.random.default_rng(seed)
    prob = random_pd(rng, n)
    p = np.exp(1j * rng.uniform(-np.pi, np.pi, n))
    obj = uqp_objective(prob, p)
    for _ in range(50):
        p = power_step(prob, p)
        assert np.max(np.abs(np.abs(p) - 1)) <= 1e-14
        new = uqp_objective(prob, p)
        assert new >= obj - 1e-12 * abs(obj)
        obj = new


def test_lift_unlift_gauge():
    phi = np.array([0.3, -1.0, 2.5])
    p = lift(phi) * np.exp(0.7j)
    assert np.allclose(unlift(p), phi)


def test_uqp_recovers_quadratic_phase_of_point_target():
    side = 16
    model = ForwardModel.full(side)
    X = np.zeros((side, side), complex)
    X[4, 9] = 3.0
    phi = gen_phase_error("quadratic", np.pi / 2, side)
    t = apply_forward(model, X).ravel()
    r = apply_forward(model.with_phases(phi), X).ravel()
    state = solve_uqp(build_uqp(t, r), max_iter=2000, tol=1e-12)
    est = state.phases.reshape(side, side)
    d = np.angle(np.exp(1j * (est - phi[:, None])))
    d -= np.angle(np.mean(np.exp(1j * d)))
    assert np.max(np.abs(d)) < 1e-3
    assert np.all(np.diff(state.objective_history) >= -1e-12 * abs(state.objective_history[-1]))


# ------------------------------------------------------ simplified update


def test_simplified_zero_inputs_keep_phase():
    phi = np.array([0.2, -1.0, 3.0])
    out = phase_update_simplified(phi, np.zeros((3, 4)), np.zeros((3, 4)), mu=1.0)
    assert np.allclose(out.phases, phi)


@pytest.mark.parametrize("shape", [(8, 8), (16, 16), (5, 11)])
def test_matrix_form_equals_scalar_loop(shape):
    rng = np.random.default_rng(shape[0])
    Y, Rt = crandn(rng, *shape), crandn(rng, *shape)
    phi = rng.uniform(-np.pi, np.pi, shape[0])
    mu = 1.01 * np.max(np.abs(Y) ** 2)
    got = phase_update_simplified(PhaseDiagonal(phi), Y, Rt, mu).phases
    ref = oracles.phase_update_loop(phi, Y, Rt, mu)
    assert np.max(np.abs(np.angle(np.exp(1j * (got - ref))))) <= 1e-12


def test_single_range_cell_reduces_to_power_step():
    rng = np.random.default_rng(5)
    Ma = 6
    Y, Rt = crandn(rng, Ma, 1), crandn(rng, Ma, 1)
    phi = rng.uniform(-np.pi, np.pi, Ma)
    mu = 1.01 * np.max(np.abs(Y) ** 2)
    got = phase_update_simplified(phi, Y, Rt, mu).phases
    for i in range(Ma):
        # per azimuth bin, the 1+1 lifted problem with t = Y_i, r = R_tilde_i
        U = mu * np.eye(2) - lifted_matrix(Y[i], Rt[i])
        p = power_step(UqpProblem(U, mu), lift([phi[i]]))
        assert abs(np.angle(np.exp(1j * (got[i] - np.angle(p[0]))))) <= 1e-12


def test_per_pulse_mu_and_cells():
    rng = np.random.default_rng(6)
    Y, Rt = crandn(rng, 4, 6), crandn(rng, 4, 6)
    phi = np.zeros(4)
    mu = np.full(4, 50.0)
    a = phase_update_simplified(phi, Y, Rt, mu).phases
    b = phase_update_simplified(phi, Y, Rt, 50.0).phases
    assert np.allclose(a, b)
    c = phase_update_simplified(phi, Y, Rt, 50.0, cells=[1, 4]).phases
    assert np.allclose(c, oracles.phase_update_loop(phi, Y[:, [1, 4]], Rt[:, [1, 4]], 50.0))


def test_select_range_cells():
    X = np.zeros((5, 6))
    X[2, 3] = 1.0
    assert select_range_cells(X, 0.1).tolist() == [3]
    assert select_range_cells(np.ones((4, 5)), 0.5).tolist() == list(range(5))
    with pytest.warns(RuntimeWarning):
        assert select_range_cells(np.zeros((3, 3)), 0.5).tolist() == [0, 1, 2]
    with pytest.raises(ValidationError):
        select_range_cells(X, 1.0)


def test_select_range_cells_covers_isar_targets():
    X, truth = gen_scene(SceneSpec(64, 11, background="none", seed=7))
    cols = {c for _, c in truth.target_pixels}
    assert cols <= set(select_range_cells(X, 0.1).tolist())


def test_global_phase_offset_leaves_image_magnitude():
    model = ForwardModel.full(16)
    X, _ = gen_scene(SceneSpec(16, 3, background="none", seed=8))
    phi = gen_phase_error("quadratic", np.pi / 2, 16)
    R = apply_forward(model.with_phases(phi), X)
    a = solve(R, model, None, SolverConfig(mode=ISAR_SPARSE))
    b = solve(R * np.exp(0.9j), model, None, SolverConfig(mode=ISAR_SPARSE))
    assert np.allclose(np.abs(a.X), np.abs(b.X), atol=1e-9 * np.abs(a.X).max())

