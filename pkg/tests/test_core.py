import numpy as np
import pytest
from hypothesis import given, strategies as st

from tnconf.core import (
    Z12,
    Z13,
    Z23,
    SpectralParams,
    TnConfiguration,
    all_minors,
    assemble_AZ,
    characterization_passes,
    characterization_residual,
    characterize,
    check_characterization,
    cof,
    determinant_residual,
    generate_random,
    k_coefficients,
    minor_det,
    rank_le_one,
    reconstruct,
    t_vectors,
    validate_tn,
)
from tnconf.errors import InputError, PreconditionError

params_strategy = st.builds(
    lambda mu, lam: SpectralParams(mu, np.asarray(lam)),
    st.floats(1.001, 1e3),
    st.lists(st.floats(1e-3, 1.0), min_size=2, max_size=8),
)


# minors and rank

def test_rank_le_one_examples():
    assert rank_le_one(np.zeros((3, 2)), 1e-9)
    assert rank_le_one(np.outer([1, 2, 3], [4, 5]), 1e-9)
    assert not rank_le_one(np.eye(2), 1e-9)


def test_minor_det_examples():
    M = np.array([[1, 2], [3, 4], [5, 6]], dtype=float)
    assert minor_det(M, Z12) == -2.0
    assert minor_det(M, Z13) == -4.0
    R = np.array([[1, 2], [1, 2], [7, 1]], dtype=float)
    assert minor_det(R, Z12) == 0.0


def test_all_minors_3x2():
    assert all_minors(3, 2) == [Z12, Z13, Z23]
    assert len(all_minors(3, 3)) == 9


def test_minor_index_bounds():
    with pytest.raises(IndexError):
        minor_det(np.eye(2), Z13)


def test_cof_is_adjugate():
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(cof(A), [[4.0, -2.0], [-3.0, 1.0]])
    assert np.allclose(A @ cof(A), np.linalg.det(A) * np.eye(2))


def test_assemble_AZ_two_points():
    pts = np.array([np.diag((2.0, 0.0)), np.diag((1.0, 2.0))])
    assert np.array_equal(assemble_AZ(pts, Z12, 2.0), [[0.0, -2.0], [-4.0, 0.0]])


def test_assemble_AZ_identical_points_vanishes():
    pts = np.repeat(np.eye(2)[None], 3, axis=0)
    assert not np.any(assemble_AZ(pts, Z12, 3.0))


def test_assemble_AZ_diag_kernel(diag_points, diag_params):
    A = assemble_AZ(diag_points, Z12, diag_params.mu)
    assert np.array_equal(A @ (15 * diag_params.lambdas), np.zeros(4))


# spectral parameters

def test_params_validation():
    with pytest.raises(InputError):
        SpectralParams(1.0, [0.5, 0.5])
    with pytest.raises(InputError):
        SpectralParams(2.0, [0.5, -0.5])
    with pytest.raises(InputError):
        SpectralParams(float("nan"), [1.0])


def test_t_vectors_uniform():
    tv = t_vectors(SpectralParams(2.0, np.full(4, 0.25)))
    assert tv.xis[0] == 1.0
    assert np.allclose(tv.t[0], 0.25)
    assert tv.xis[2] == pytest.approx(1.5)
    assert np.allclose(tv.t[2], [1 / 3, 1 / 3, 1 / 6, 1 / 6])


def test_t_vectors_diag(diag_params):
    tv = t_vectors(diag_params)
    assert tv.xis[1] == pytest.approx(2.0)
    assert np.allclose(tv.t[1], np.array([16, 2, 4, 8]) / 30)


def test_k_coefficients_examples(diag_params):
    assert np.allclose(k_coefficients(SpectralParams(2.0, np.full(4, 0.25))), [5, 6, 7, 8])
    assert np.allclose(k_coefficients(diag_params), 2.0)


@given(params_strategy)
def test_t_vectors_unit_norm_and_k_above_one(params):
    tv = t_vectors(params)
    assert np.allclose(np.abs(tv.t).sum(axis=1), 1.0)
    assert np.all(tv.t > 0)
    assert np.all(k_coefficients(params) > 1.0)


@given(params_strategy)
def test_params_scale_invariant(params):
    scaled = SpectralParams(params.mu, 7.0 * params.lambdas)
    assert np.allclose(k_coefficients(scaled), k_coefficients(params))


# characterization

def test_diag_characterization_exact(diag_points, diag_params):
    assert check_characterization(diag_points, diag_params) == 0.0
    assert determinant_residual(diag_points, diag_params) == 0.0


def test_uniform_params_fail_diag(diag_points):
    assert characterization_residual(diag_points, SpectralParams(2.0, np.full(4, 0.25))) > 0.1


def test_perturbed_point_breaks_determinant_residual(diag_points, diag_params):
    pts = diag_points.copy()
    pts[0, 0, 0] += 0.1
    assert determinant_residual(pts, diag_params) > 1e-9


def test_characterize_recovers_diag(diag_points, diag_params):
    found = characterize(diag_points)
    assert found is not None
    assert characterization_residual(diag_points, found) <= 1e-9
    assert found.mu == pytest.approx(16.0, rel=1e-6)
    assert np.allclose(found.lambdas, diag_params.lambdas, atol=1e-6)


def test_characterize_collinear_rank_one_points():
    pts = np.array([k * np.outer([1.0, 2.0, 3.0], [1.0, 1.0]) for k in range(4)])
    assert characterize(pts) is None


def test_characterize_gaussian_points():
    rng = np.random.default_rng(20240611)  # pinned
    assert characterize(rng.normal(size=(4, 3, 2))) is None


def test_characterize_generated():
    config, params = generate_random(5, seed=7)
    found = characterize(config.points)
    assert found is not None
    assert found.mu == pytest.approx(params.mu, rel=1e-5)
    assert np.allclose(found.lambdas, params.lambdas, atol=1e-6)


@given(st.floats(-5, 5), st.floats(0.1, 10))
def test_characterization_affine_invariance(shift, scale):
    # translation leaves every determinant unchanged; scaling multiplies by scale^2
    config, params = generate_random(4, seed=11)
    moved = scale * config.points + shift
    assert characterization_passes(moved, params)


def test_lower_triangle_is_mu_times_upper(diag_points):
    # det(X_i - X_j) = det(X_j - X_i) for 2x2 minors, so only the weight differs
    mu = 3.0
    A = assemble_AZ(diag_points, Z12, mu)
    iu = np.triu_indices(4, 1)
    assert np.allclose(A.T[iu], mu * A[iu])
    assert not np.any(np.diag(A))


# validation and reconstruction

def test_diag_validates(diag_config):
    report = validate_tn(diag_config)
    assert report.ok, report.failures


def test_kappa_one_rejected(diag_config):
    bad = TnConfiguration(diag_config.points, diag_config.base, diag_config.legs, [1.0, 2.0, 2.0, 2.0])
    report = validate_tn(bad)
    assert not report.ok and not report.kappas_ok


def test_perturbed_last_leg(diag_config):
    legs = diag_config.legs.copy()
    legs[3] = -legs[:3].sum(axis=0) + np.diag((0.1, 0.0))
    report = validate_tn(TnConfiguration(diag_config.points, diag_config.base, legs, diag_config.kappas))
    assert not report.ok
    assert report.equation_residuals[3] > 1e-8
    # the perturbation also breaks closing: the legs now sum to diag(0.1, 0)
    assert report.closing_residual == pytest.approx(0.1)


def test_repeated_point_not_distinct(diag_config):
    pts = diag_config.points.copy()
    pts[1] = pts[0]
    report = validate_tn(TnConfiguration(pts, diag_config.base, diag_config.legs, diag_config.kappas))
    assert not report.ok and report.distinctness == 0.0


def test_reconstruct_diag(diag_points, diag_params, diag_config):
    config = reconstruct(diag_points, diag_params)
    assert np.allclose(config.base, 0.0, atol=1e-14)
    assert np.allclose(config.legs, diag_config.legs, atol=1e-14)
    assert np.allclose(config.kappas, 2.0)
    assert validate_tn(config).ok


def test_reconstruct_refuses_uncharacterized(diag_points):
    with pytest.raises(PreconditionError):
        reconstruct(diag_points, SpectralParams(2.0, np.full(4, 0.25)))


def test_reconstruct_two_points_rejected():
    pts = np.array([np.diag((1.0, 0.0)), np.diag((0.0, 1.0))])
    config = reconstruct(pts, SpectralParams(2.0, [0.5, 0.5]), check=False)
    assert np.allclose(config.legs[0], -config.legs[1])
    assert not validate_tn(config).ok


@pytest.mark.parametrize("N,seed", [(4, 1), (5, 7)])
def test_generate_contract(N, seed):
    config, params = generate_random(N, seed=seed)
    assert config.points.shape == (N, 3, 2)
    assert validate_tn(config).ok
    assert determinant_residual(config.points, params) <= 1e-9 * max(1.0, np.abs(config.points).max() ** 2)


@pytest.mark.parametrize("seed", range(25))
def test_generate_round_trip(seed):
    config, params = generate_random(4 + seed % 3, seed=seed)
    back = reconstruct(config.points, params)
    scale = max(1.0, np.abs(config.legs).max())
    assert np.max(np.abs(back.legs - config.legs)) <= 1e-8 * scale
    assert np.allclose(back.kappas, config.kappas)


def test_generate_deterministic():
    a, pa = generate_random(5, seed=3)
    b, pb = generate_random(5, seed=3)
    assert np.array_equal(a.points, b.points) and pa.mu == pb.mu


def test_generate_2x2_and_pattern():
    config, _ = generate_random(4, shape=(2, 2), seed=2, pattern="+--+")
    assert config.shape == (2, 2)
    signs = "".join("+" if np.trace(D) > 0 else "-" for D in config.legs)
    assert signs == "+--+"


def test_generate_rejects_bad_input():
    with pytest.raises(InputError):
        generate_random(3)
    with pytest.raises(InputError):
        generate_random(4, shape=(4, 4))
    with pytest.raises(InputError):
        generate_random(4, pattern="++++")
