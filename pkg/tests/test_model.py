import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from spatial_mtr import errors
from spatial_mtr.model import (
    LOG_2PI,
    Dataset,
    Hyperparameters,
    ModelState,
    build_spatial_structure,
    default_neighborhood,
    independent_structure,
    log_joint,
    log_joint_terms,
    sample_errors,
    sigma_from_kappa,
    simulate_dataset,
)

from conftest import random_neighborhood, random_problem, random_spd


def dense_log_joint(dataset, state, spatial, hyper):
    """Reference log joint built from scipy densities and the full c x c covariance."""
    c = dataset.c
    cov = np.kron(np.linalg.inv(spatial.b), state.sigma)
    mean = dataset.x @ state.w
    ll = sum(stats.multivariate_normal(mean[l], cov).logpdf(dataset.y[l]) for l in range(dataset.n))
    lw = 0.0
    for i in range(dataset.d):
        for j in range(c // 2):
            lw += stats.multivariate_normal(np.zeros(2), state.omega2[i] * state.sigma).logpdf(
                state.w[i, 2 * j : 2 * j + 2]
            )
    lo = np.sum(stats.gamma(0.5 * (c + 1), scale=2.0 / hyper.lambda2).logpdf(state.omega2))
    ls = stats.invwishart(df=hyper.v, scale=hyper.s).logpdf(state.sigma)
    return ll + lw + lo + ls


class TestSpatialStructure:
    def test_rho_zero_gives_degree_matrix(self):
        s = build_spatial_structure([[0, 1], [1, 0]], 0.0)
        np.testing.assert_array_equal(s.b, np.eye(2))

    def test_half_rho(self):
        s = build_spatial_structure([[0, 1], [1, 0]], 0.5)
        np.testing.assert_array_equal(s.b, [[1, -0.5], [-0.5, 1]])

    def test_path_graph_high_rho_is_spd(self):
        a = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], float)
        s = build_spatial_structure(a, 0.95)
        expected = np.diag([1.0, 2.0, 1.0]) - 0.95 * a
        np.testing.assert_allclose(s.b, expected)
        assert np.linalg.eigvalsh(expected).min() > 0
        assert s.eig[0].min() == pytest.approx(np.linalg.eigvalsh(expected).min(), rel=1e-12)

    @pytest.mark.parametrize(
        "a, rho, exc",
        [
            ([[0, 1], [0.5, 0]], 0.5, errors.NonSymmetricNeighborhood),
            ([[0, -1], [-1, 0]], 0.5, errors.NonSymmetricNeighborhood),
            ([[1, 1], [1, 0]], 0.5, errors.NonSymmetricNeighborhood),
            ([[0, 0, 0], [0, 0, 1], [0, 1, 0]], 0.5, errors.ZeroRowSum),
            ([[0, 1], [1, 0]], 1.0, errors.RhoOutOfRange),
            ([[0, 1], [1, 0]], -0.1, errors.RhoOutOfRange),
            ([[0, 1, 1], [1, 0, 1]], 0.5, errors.NeighborhoodShapeMismatch),
        ],
    )
    def test_invalid_inputs(self, a, rho, exc):
        with pytest.raises(exc):
            build_spatial_structure(a, rho)

    @settings(max_examples=60, deadline=None)
    @given(k=st.integers(2, 6), rho=st.floats(0.0, 0.99), seed=st.integers(0, 2**31))
    def test_eigenvalue_floor_from_diagonal_dominance(self, k, rho, seed):
        a = random_neighborhood(np.random.default_rng(seed), k)
        s = build_spatial_structure(a, rho)
        floor = (1 - rho) * a.sum(axis=1).min()
        assert np.linalg.eigvalsh(s.b).min() >= floor - 1e-12

    def test_kronecker_inverse_identity(self, rng):
        for _ in range(20):
            s = build_spatial_structure(random_neighborhood(rng, 3), rng.uniform(0, 0.95))
            sig = random_spd(rng)
            prod = np.kron(s.b, np.linalg.inv(sig)) @ np.kron(np.linalg.inv(s.b), sig)
            assert np.max(np.abs(prod - np.eye(6))) < 1e-10

    def test_cov_factor(self, rng):
        s = build_spatial_structure(random_neighborhood(rng, 4), 0.7)
        f = s.cov_factor
        np.testing.assert_allclose(f @ f.T, np.linalg.inv(s.b), atol=1e-12)


class TestDefaultNeighborhood:
    def test_average_absolute_correlation(self, rng):
        # orthonormal columns orthogonal to the constant, so exactly centered
        n = 40
        q, _ = np.linalg.qr(np.column_stack([np.ones(n), rng.standard_normal((n, 4))]))
        u = q[:, 1:5]
        y = np.column_stack([u[:, 0], u[:, 2], 0.6 * u[:, 0] + 0.8 * u[:, 1], -0.8 * u[:, 2] + 0.6 * u[:, 3]])
        a = default_neighborhood(y)
        assert a[0, 1] == pytest.approx(0.7, abs=1e-12)
        assert a[1, 0] == a[0, 1]
        np.testing.assert_array_equal(np.diag(a), 0)

    def test_single_pair(self, rng):
        np.testing.assert_array_equal(default_neighborhood(rng.standard_normal((10, 2))), [[0.0]])

    def test_matches_brute_force(self):
        y = np.random.default_rng(7).standard_normal((50, 6))

        def corr(u, v):
            u = u - u.mean()
            v = v - v.mean()
            return np.sum(u * v) / np.sqrt(np.sum(u * u) * np.sum(v * v))

        a = default_neighborhood(y)
        for i in range(3):
            for j in range(3):
                want = 0.0 if i == j else 0.5 * (
                    abs(corr(y[:, 2 * i], y[:, 2 * j])) + abs(corr(y[:, 2 * i + 1], y[:, 2 * j + 1]))
                )
                assert abs(a[i, j] - want) < 1e-12

    def test_constant_column(self, rng):
        y = rng.standard_normal((10, 4))
        y[:, 3] = 2.0
        with pytest.raises(errors.ConstantColumn):
            default_neighborhood(y)


class TestDataset:
    def test_odd_c(self):
        with pytest.raises(errors.OddPhenotypeCount):
            Dataset(np.zeros((3, 3)), np.zeros((3, 1)))

    def test_subject_mismatch(self):
        with pytest.raises(errors.SubjectCountMismatch):
            Dataset(np.zeros((3, 2)), np.zeros((4, 1)))

    def test_non_finite(self):
        y = np.zeros((3, 2))
        y[1, 1] = np.nan
        with pytest.raises(errors.NonFiniteValue):
            Dataset(y, np.zeros((3, 1)))

    def test_distinct_error_types(self):
        kinds = {errors.OddPhenotypeCount, errors.SubjectCountMismatch, errors.NeighborhoodShapeMismatch}
        assert len(kinds) == 3
        assert all(issubclass(k, errors.ValidationError) for k in kinds)


class TestLogJoint:
    def test_independence_reduction(self, rng):
        n = 7
        y = rng.standard_normal((n, 2))
        ds = Dataset(y, np.ones((n, 1)))
        state = ModelState(np.zeros((1, 2)), np.eye(2), np.ones(1))
        terms = log_joint_terms(ds, state, independent_structure(1), Hyperparameters(1.0))
        assert terms["loglik"] == pytest.approx(-0.5 * np.sum(y**2) - n * LOG_2PI, rel=1e-13)

    def test_matches_dense_oracle(self, rng):
        for _ in range(10):
            ds, sp, hy, st1 = random_problem(rng, n=5, c=4, d=2)
            st2 = ModelState(rng.standard_normal((2, 4)), random_spd(rng), rng.uniform(0.2, 2.0, 2))
            assert log_joint(ds, st1, sp, hy) == pytest.approx(dense_log_joint(ds, st1, sp, hy), abs=1e-8)
            diff = log_joint(ds, st1, sp, hy) - log_joint(ds, st2, sp, hy)
            want = dense_log_joint(ds, st1, sp, hy) - dense_log_joint(ds, st2, sp, hy)
            assert abs(diff - want) < 1e-8

    def test_per_pair_factorization_at_rho_zero(self, rng):
        n, c = 6, 4
        ds, _, hy, state = random_problem(rng, n=n, c=c, d=2)
        sp = build_spatial_structure([[0, 1], [1, 0]], 0.0)
        other = state.copy()
        other.w = other.w + 0.3
        resid = [ds.y - ds.x @ s.w for s in (state, other)]

        def pairwise(r):
            mvn = stats.multivariate_normal(np.zeros(2), state.sigma)
            return sum(mvn.logpdf(r[:, 2 * j : 2 * j + 2]).sum() for j in range(c // 2))

        got = log_joint_terms(ds, state, sp, hy)["loglik"] - log_joint_terms(ds, other, sp, hy)["loglik"]
        assert abs(got - (pairwise(resid[0]) - pairwise(resid[1]))) < 1e-10

    def test_deterministic(self, rng):
        ds, sp, hy, state = random_problem(rng)
        a = log_joint(ds, state, sp, hy)
        ds2 = Dataset(ds.y * 1.0, ds.x)
        assert log_joint(ds2, state, sp, hy) == a

    def test_dimension_mismatch(self, rng):
        ds, sp, hy, state = random_problem(rng, c=4, d=3)
        bad = ModelState(np.zeros((2, 4)), np.eye(2), np.ones(2))
        with pytest.raises(errors.DimensionMismatch):
            log_joint(ds, bad, sp, hy)

    def test_non_spd_sigma(self, rng):
        ds, sp, hy, state = random_problem(rng)
        state.sigma = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(errors.NonPositiveDefinite):
            log_joint(ds, state, sp, hy)


class TestSimulation:
    def test_identity_covariance(self):
        # unit row sums and rho = 0 make B the identity
        a = np.array([[0, 0.5, 0.5], [0.5, 0, 0.5], [0.5, 0.5, 0]])
        sp = build_spatial_structure(a, 0.0)
        x = np.zeros((50000, 1))
        ds = simulate_dataset(np.zeros((1, 6)), np.eye(2), sp, x, 11)
        assert np.max(np.abs(np.cov(ds.y, rowvar=False) - np.eye(6))) < 0.05

    def test_within_pair_correlation(self):
        sp = build_spatial_structure([[0, 1], [1, 0]], 0.0)
        ds = simulate_dataset(np.zeros((1, 4)), sigma_from_kappa(0.9), sp, np.zeros((50000, 1)), 5)
        r = np.corrcoef(ds.y, rowvar=False)
        assert abs(r[0, 1] - 0.9) < 0.02
        assert abs(r[2, 3] - 0.9) < 0.02

    def test_same_seed_same_data(self, rng):
        sp = build_spatial_structure(random_neighborhood(rng, 3), 0.5)
        x = rng.integers(0, 3, (20, 4)).astype(float)
        w = rng.standard_normal((4, 6))
        d1 = simulate_dataset(w, np.eye(2), sp, x, 3)
        d2 = simulate_dataset(w, np.eye(2), sp, x, 3)
        np.testing.assert_array_equal(d1.y, d2.y)

    def test_kronecker_factor_matches_dense_cholesky(self, rng):
        sp = build_spatial_structure(random_neighborhood(rng, 3), 0.8)
        sig = random_spd(rng)
        z_rng = np.random.default_rng(1)
        eps = sample_errors(4, sp, sig, z_rng)
        z = np.random.default_rng(1).standard_normal((4, 3, 2)).reshape(4, 6)
        dense = np.kron(sp.cov_factor, np.linalg.cholesky(sig))
        np.testing.assert_allclose(eps, z @ dense.T, atol=1e-12)
        np.testing.assert_allclose(dense @ dense.T, np.kron(np.linalg.inv(sp.b), sig), atol=1e-10)
