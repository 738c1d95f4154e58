import numpy as np
import pytest

from lqteam.errors import DimensionError, SingularSystemError, SpecError
from lqteam.noise import NoiseModel
from lqteam.stiefel import canonical_frame, sample_stiefel
from lqteam.team import (
    EstimateWithError,
    LinearPolicy,
    TeamSpec,
    build_instance,
    cost,
    gaussian_cost,
    mc_cost,
    ngl_system,
    solve_linear,
)

from conftest import random_spec
from oracles import gradient_minimize, ngl_from_instance


def test_spec_validation_names_field():
    W = np.eye(3)
    with pytest.raises(SpecError, match="Q"):
        TeamSpec(1, (2,), [[-1.0]], W)
    with pytest.raises(SpecError, match="Q"):
        TeamSpec(2, (1, 1), [[2.0, 1.0], [0.0, 2.0]], np.eye(4))
    with pytest.raises(SpecError, match="W"):
        TeamSpec(1, (1,), [[1.0]], np.eye(3))
    with pytest.raises(SpecError, match="obs_dims"):
        TeamSpec(2, (1,), np.eye(2), np.eye(3))
    bad = np.eye(3)
    bad[1:] = 0.0
    bad[1, 0] = bad[2, 0] = 1.0  # W_1 has two identical rows
    with pytest.raises(SpecError, match="W_1"):
        TeamSpec(1, (2,), [[1.0]], bad)


def test_identity_construction():
    spec = TeamSpec(2, (1, 2), np.eye(2), np.eye(5))
    inst = build_instance(spec, 9, canonical_frame(9, 5))
    np.testing.assert_array_equal(inst.S, np.eye(9)[:2])
    np.testing.assert_array_equal(inst.H[0], np.eye(9)[2:3])
    np.testing.assert_array_equal(inst.H[1], np.eye(9)[3:5])


def test_stacking_reproduces_z_and_singular_values(rng):
    for _ in range(10):
        spec = random_spec(rng)
        n = int(rng.integers(spec.ell, 40))
        R = sample_stiefel(n, spec.ell, rng)
        inst = build_instance(spec, n, R)
        np.testing.assert_allclose(inst.Z, spec.W @ R.T, atol=1e-10, rtol=0)
    spec = random_spec(rng, m=2, dims=(1, 1))
    inst = build_instance(spec, 16, sample_stiefel(16, 4, rng))
    sv_z = np.linalg.svd(inst.Z, compute_uv=False)
    sv_w = np.linalg.svd(spec.W, compute_uv=False)
    np.testing.assert_allclose(sv_z, sv_w, atol=1e-9)


def test_build_instance_dimension_errors():
    spec = TeamSpec(1, (1,), [[1.0]], np.eye(2))
    with pytest.raises(DimensionError):
        build_instance(spec, 1, canonical_frame(2, 2))
    with pytest.raises(DimensionError):
        build_instance(spec, 5, canonical_frame(4, 2))


def _unit_instance():
    spec = TeamSpec(1, (1,), [[1.0]], np.eye(2))
    return build_instance(spec, 2, canonical_frame(2, 2))


def test_cost_examples(rng):
    inst = _unit_instance()
    assert cost(inst, np.array([1.0]), np.array([1.0, 0.0])) == pytest.approx(2.0, abs=1e-15)
    spec = random_spec(rng, m=3, dims=(1, 2, 1))
    inst = build_instance(spec, 12, sample_stiefel(12, spec.ell, rng))
    xi = rng.standard_normal(12)
    sx = inst.S @ xi
    u_star = -np.linalg.solve(spec.Q, sx)
    assert abs(cost(inst, u_star, xi)) < 1e-12
    q = 0.5 * sx @ np.linalg.solve(spec.Q, sx)
    assert cost(inst, np.zeros(3), xi) == pytest.approx(q, rel=1e-12)
    u = rng.standard_normal(3)
    expanded = 0.5 * u @ spec.Q @ u + u @ sx + q
    assert cost(inst, u, xi) == pytest.approx(expanded, rel=1e-10, abs=1e-12)
    with pytest.raises(DimensionError):
        cost(inst, np.zeros(2), xi)


def test_cost_nonnegative_random(rng):
    worst = np.inf
    for _ in range(200):
        spec = random_spec(rng)
        n = spec.ell + 3
        inst = build_instance(spec, n, sample_stiefel(n, spec.ell, rng))
        scale = 10.0 ** rng.uniform(-3, 3)
        vals = cost(inst, scale * rng.standard_normal((100, spec.m)), scale * rng.standard_normal((100, n)))
        worst = min(worst, vals.min())
    assert worst >= -1e-9


def _two_player_example():
    # H_1 H_1^T = H_2 H_2^T = 1, H_1 H_2^T = 0, H_i S_i^T = 1
    W = np.zeros((4, 4))
    W[0, [0, 2]] = 1.0
    W[1, [1, 3]] = 1.0
    W[2, 0] = 1.0
    W[3, 1] = 1.0
    return TeamSpec(2, (1, 1), [[2.0, 1.0], [1.0, 2.0]], W)


def test_solve_linear_examples():
    perfect = TeamSpec(1, (1,), [[1.0]], [[0.6, 0.8], [0.6, 0.8]])
    np.testing.assert_allclose(solve_linear(perfect).flat, [-1.0], atol=1e-12)
    assert gaussian_cost(perfect) == pytest.approx(0.0, abs=1e-12)

    spec = _two_player_example()
    M, b, c = ngl_from_instance(build_instance(spec, 4, canonical_frame(4, 4)))
    oracle = gradient_minimize(M, b)
    np.testing.assert_allclose(oracle, [-0.5, -0.5], atol=1e-10)
    np.testing.assert_allclose(solve_linear(spec).flat, oracle, atol=1e-10)

    W = np.eye(4)
    W[:2] = 0.0
    no_cross = TeamSpec(2, (1, 1), [[2.0, 1.0], [1.0, 2.0]], W)
    np.testing.assert_array_equal(solve_linear(no_cross).flat, np.zeros(2))
    assert gaussian_cost(no_cross) == 0.0


def test_singular_system():
    # M is positive definite in exact arithmetic; wildly scaled blocks make it numerically singular
    W = np.eye(4)
    W[2, 2] = 1e-7
    W[3, 3] = 1e4
    spec = TeamSpec(2, (1, 1), [[2.0, 1.0], [1.0, 2.0]], W)
    with pytest.raises(SingularSystemError):
        solve_linear(spec)


def test_reduction_matches_instance_assembly(rng):
    # closed-form blocks Q_ij W_i W_j^T agree with E[H(xi) Q H(xi)^T] built in R^n
    for _ in range(20):
        spec = random_spec(rng)
        n = int(rng.integers(spec.ell, 3 * spec.ell + 1))
        inst = build_instance(spec, n, sample_stiefel(n, spec.ell, rng))
        M, b, c = ngl_from_instance(inst)
        sys_ = ngl_system(spec)
        np.testing.assert_allclose(sys_.M, M, atol=1e-10)
        np.testing.assert_allclose(sys_.b, b, atol=1e-10)
        assert sys_.const == pytest.approx(c, rel=1e-10, abs=1e-12)


def test_linear_policy_is_n_and_r_invariant(rng):
    spec = random_spec(rng, m=3, dims=(2, 1, 2))
    ref = solve_linear(spec).flat
    for n in (spec.ell, 4 * spec.ell, 16 * spec.ell):
        inst = build_instance(spec, n, sample_stiefel(n, spec.ell, rng))
        assert np.array_equal(solve_linear(inst.spec).flat, ref)


def test_gaussian_cost_orthogonal_observation():
    spec = TeamSpec(1, (1,), [[1.0]], np.eye(2))
    np.testing.assert_array_equal(solve_linear(spec).flat, [0.0])
    assert gaussian_cost(spec) == 0.5
    inst = build_instance(spec, 2, canonical_frame(2, 2))
    est = mc_cost(inst, solve_linear(spec), NoiseModel("gaussian", 2), 1_000_000, 17)
    assert abs(est.value - 0.5) <= 4 * est.stderr


def test_zero_policy_matches_trace_formula(rng):
    spec = random_spec(rng, m=2, dims=(2, 1))
    n = 20
    inst = build_instance(spec, n, sample_stiefel(n, spec.ell, rng))
    target = 0.5 * np.trace(np.linalg.solve(spec.Q, spec.W0 @ spec.W0.T))
    for family in ("exp_product", "uniform_ball"):
        est = mc_cost(inst, LinearPolicy.zero(spec.obs_dims), NoiseModel(family, n), 400_000, rng)
        assert abs(est.value - target) <= 4 * est.stderr


def test_single_sample_estimate():
    inst = _unit_instance()
    policy = LinearPolicy(([0.3],))
    est = mc_cost(inst, policy, NoiseModel("laplace_product", 2), 1, 4)
    assert est.samples == 1 and est.stderr == 0.0
    # reproduce the single draw and evaluate the cost directly
    from lqteam.noise import sample_projected

    xhat = sample_projected(NoiseModel("laplace_product", 2), inst.R.entries, 1, 4)
    xi = xhat[0]  # R = I
    u = np.array([0.3 * (inst.H[0] @ xi)[0]])
    assert est.value == pytest.approx(cost(inst, u, xi), rel=1e-14)


def test_estimate_with_error():
    e = EstimateWithError.from_samples([1.0, 2.0, 3.0, 4.0])
    assert e.value == 2.5 and e.samples == 4
    assert e.stderr == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
