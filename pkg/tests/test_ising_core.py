"""Deterministic model quantities: local fields, pseudo-log-likelihood
and its derivatives, the field-spread statistic, and the enumeration
oracle."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isingvb.coupling import (CouplingMatrix, EdgeSet, lattice4_adjacency,
                              random_regular_edges, scaled_adjacency)
from isingvb.errors import CapacityError, ParameterError
from isingvb.ising import (ENUMERATION_MAX_N, FieldStats, ModelParams,
                           SpinConfiguration, conditional_prob_plus,
                           enumerate_log_probs, exact_log_lik, hessian,
                           index_to_spins, load_spins, local_fields, log_cosh,
                           log_partition, pseudo_log_lik, remainder_matrices,
                           save_spins, score, sech_sq, spins_to_index,
                           taylor_remainder, tn_statistic)

from helpers import central_diff, dense_local_fields, dense_pseudo_log_lik

MAX_TANH_MINUS_CUBE = 2.0 * math.sqrt(3.0) / 9.0  # max of tanh(a) - tanh(a)^3


def random_instance(n, d, seed):
    rng = np.random.default_rng(seed)
    a = scaled_adjacency(random_regular_edges(n, d, seed=seed))
    x = SpinConfiguration(np.where(rng.random(n) < 0.5, -1, 1).astype(np.int8))
    return a, x


def no_edge_matrix(n):
    empty = np.array([], dtype=np.int64)
    return CouplingMatrix(n=n, edge_i=empty, edge_j=empty,
                          edge_weights=np.array([], dtype=np.float64))


class TestStableScalars:
    def test_log_cosh_moderate(self):
        a = np.linspace(-20, 20, 401)
        np.testing.assert_allclose(log_cosh(a), np.log(np.cosh(a)),
                                   atol=1e-12)

    def test_log_cosh_huge_argument(self):
        """No overflow at |a| = 800 or 1e4; log cosh(a) ~ |a| - log 2."""
        for a in (800.0, 1e4):
            v = float(log_cosh(np.array([a]))[0])
            assert math.isfinite(v)
            np.testing.assert_allclose(v, a - math.log(2.0), rtol=1e-15)

    def test_sech_sq_moderate(self):
        a = np.linspace(-20, 20, 401)
        np.testing.assert_allclose(sech_sq(a), 1.0 / np.cosh(a) ** 2,
                                   atol=1e-12)

    def test_sech_sq_is_second_derivative_of_log_cosh(self):
        a = np.linspace(-3, 3, 61)
        h = 1e-4
        fd = (log_cosh(a + h) - 2 * log_cosh(a) + log_cosh(a - h)) / h**2
        np.testing.assert_allclose(sech_sq(a), fd, atol=1e-6)


class TestSpinConfiguration:
    def test_accepts_plus_minus_one(self):
        x = SpinConfiguration(np.array([1.0, -1.0, 1.0]))
        assert x.n == 3
        assert x.spins.dtype == np.int8

    def test_rejects_other_values(self):
        for bad in ([0, 1, -1], [2, 1], []):
            with pytest.raises(ParameterError):
                SpinConfiguration(np.array(bad))

    def test_rejects_matrix(self):
        with pytest.raises(ParameterError):
            SpinConfiguration(np.ones((2, 2)))

    def test_immutable(self):
        x = SpinConfiguration(np.array([1, -1]))
        with pytest.raises(ValueError):
            x.spins[0] = -1


class TestModelParams:
    def test_zero_beta_allowed(self):
        assert ModelParams(beta=0.0, b_field=0.3).beta == 0.0

    def test_negative_beta_rejected(self):
        with pytest.raises(ParameterError):
            ModelParams(beta=-0.5, b_field=0.0)

    def test_non_finite_rejected(self):
        with pytest.raises(ParameterError):
            ModelParams(beta=math.nan, b_field=0.0)
        with pytest.raises(ParameterError):
            ModelParams(beta=1.0, b_field=math.inf)


class TestLocalFields:
    def test_all_plus_regular(self):
        """Row sums are 1, so every m_i = 1 at the all-plus state."""
        a = scaled_adjacency(random_regular_edges(20, 3, seed=0))
        x = SpinConfiguration(np.ones(20))
        np.testing.assert_allclose(local_fields(a, x), 1.0, atol=1e-12)

    def test_two_spins(self):
        a = scaled_adjacency(EdgeSet(n=2, edges=((0, 1),)))
        x = SpinConfiguration(np.array([1, -1]))
        np.testing.assert_array_equal(local_fields(a, x), [-1.0, 1.0])

    def test_lattice_bounded_by_gamma(self):
        """|m_i| <= max row sum (1.5 on the 3x3 grid)."""
        a = lattice4_adjacency(3, 3)
        rng = np.random.default_rng(1)
        for _ in range(20):
            x = SpinConfiguration(np.where(rng.random(9) < 0.5, -1, 1))
            assert np.max(np.abs(local_fields(a, x))) <= 1.5 + 1e-12

    def test_matches_dense_product(self):
        for seed in range(5):
            a, x = random_instance(24, 4, seed)
            np.testing.assert_allclose(local_fields(a, x),
                                       dense_local_fields(a, x), atol=1e-13)

    def test_dimension_mismatch(self):
        a = lattice4_adjacency(2, 2)
        with pytest.raises(ParameterError):
            local_fields(a, SpinConfiguration(np.ones(5)))


class TestConditionalProbPlus:
    def test_symmetric_point(self):
        assert conditional_prob_plus(ModelParams(2.0, 0.0), 0.0) == 0.5

    def test_monotone_in_field(self):
        theta = ModelParams(1.0, 0.0)
        m = np.linspace(-5, 5, 101)
        p = conditional_prob_plus(theta, m)
        assert np.all(np.diff(p) > 0)
        assert np.all((p > 0) & (p < 1))

    def test_plug_in_value(self):
        """At beta*m + b = 0.5 both the tanh and the exp form agree."""
        p = conditional_prob_plus(ModelParams(0.5, 0.3), 0.4)
        np.testing.assert_allclose(p, (1 + math.tanh(0.5)) / 2, atol=1e-15)
        np.testing.assert_allclose(
            p, math.exp(0.5) / (math.exp(0.5) + math.exp(-0.5)), atol=1e-15)


class TestPseudoLogLik:
    def test_free_spins_value(self):
        """beta = b = 0 makes every conditional 1/2."""
        a, x = random_instance(16, 3, 0)
        np.testing.assert_allclose(pseudo_log_lik(ModelParams(0.0, 0.0), a, x),
                                   -16 * math.log(2.0), atol=1e-12)

    def test_compositional(self):
        """Equals the sum of log conditional probabilities of each
        observed spin given the rest."""
        a, x = random_instance(20, 4, 3)
        theta = ModelParams(0.7, -0.2)
        m = local_fields(a, x)
        p_plus = conditional_prob_plus(theta, m)
        probs = np.where(x.spins > 0, p_plus, 1.0 - p_plus)
        np.testing.assert_allclose(pseudo_log_lik(theta, a, x),
                                   np.log(probs).sum(), atol=1e-12)

    def test_is_log_probability(self):
        for seed in range(5):
            a, x = random_instance(12, 3, seed)
            v = pseudo_log_lik(ModelParams(0.5, 0.1), a, x)
            assert v <= 1e-12
            assert 0.0 < math.exp(v) <= 1.0

    def test_finite_at_extreme_arguments(self):
        a, x = random_instance(12, 3, 1)
        for theta in (ModelParams(1e4, 0.0), ModelParams(0.0, 1e4),
                      ModelParams(5e3, -5e3)):
            assert math.isfinite(pseudo_log_lik(theta, a, x))

    def test_matches_dense_formula(self):
        for seed in range(5):
            a, x = random_instance(30, 3, seed)
            np.testing.assert_allclose(
                pseudo_log_lik(ModelParams(0.8, 0.4), a, x),
                dense_pseudo_log_lik(0.8, 0.4, a, x), rtol=1e-12)


class TestFieldStats:
    """The compressed sufficient statistics must reproduce the plain
    evaluations exactly (the reductions only reorder sums)."""

    def test_objective_score_hessian_agree(self):
        for seed in range(5):
            a, x = random_instance(40, 5, seed)
            stats = FieldStats.from_instance(a, x)
            for beta, b in [(0.3, 0.1), (1.2, -0.7), (0.0, 0.0)]:
                theta = ModelParams(beta, b)
                np.testing.assert_allclose(stats.pseudo_log_lik(beta, b),
                                           pseudo_log_lik(theta, a, x),
                                           rtol=1e-13)
                np.testing.assert_allclose(stats.score(beta, b),
                                           score(theta, a, x).as_array(),
                                           rtol=1e-11, atol=1e-11)
                np.testing.assert_allclose(stats.hessian(beta, b),
                                           hessian(theta, a, x).values,
                                           rtol=1e-11, atol=1e-11)

    def test_compression_is_small_for_regular_graphs(self):
        """A d-regular scaled graph has at most d+1 local-field values."""
        a, x = random_instance(100, 10, 0)
        stats = FieldStats.from_instance(a, x)
        assert stats.m_values.size <= 11


class TestScore:
    def test_free_spin_values(self):
        """At beta = b = 0: w1 = x'Ax and w2 = sum x."""
        a, x = random_instance(26, 3, 2)
        w = score(ModelParams(0.0, 0.0), a, x)
        xf = x.as_float()
        np.testing.assert_allclose(w.w1, xf @ a.to_dense() @ xf, atol=1e-10)
        np.testing.assert_allclose(w.w2, xf.sum(), atol=1e-12)

    def test_matches_finite_differences(self):
        for seed in range(5):
            a, x = random_instance(50, 4, seed)
            t0 = np.array([0.6, -0.3])
            w = score(ModelParams(*t0), a, x).as_array()
            fd = central_diff(
                lambda t: pseudo_log_lik(ModelParams(t[0], t[1]), a, x), t0)
            np.testing.assert_allclose(w, fd, rtol=1e-6, atol=1e-6)


class TestHessian:
    def test_free_spin_corner(self):
        """At beta = b = 0 every sech^2 term is 1, so H[1,1] = n."""
        a, x = random_instance(18, 3, 4)
        h = hessian(ModelParams(0.0, 0.0), a, x)
        np.testing.assert_allclose(h.values[1, 1], 18.0, atol=1e-12)

    def test_matches_finite_differences_of_score(self):
        for seed in range(5):
            a, x = random_instance(40, 4, seed)
            t0 = np.array([0.5, 0.2])
            h = hessian(ModelParams(*t0), a, x).values
            eps = 1e-5
            fd = np.empty((2, 2))
            for k in range(2):
                e = np.zeros(2)
                e[k] = eps
                wp = score(ModelParams(*(t0 + e)), a, x).as_array()
                wm = score(ModelParams(*(t0 - e)), a, x).as_array()
                fd[:, k] = (wp - wm) / (2 * eps)
            # the returned matrix is the negated curvature
            np.testing.assert_allclose(h, -fd, rtol=1e-5, atol=1e-7)

    def test_positive_semidefinite(self):
        for seed in range(10):
            a, x = random_instance(30, 3, seed)
            h = hessian(ModelParams(0.8, -0.5), a, x)
            assert h.min_eigenvalue() >= -1e-10

    def test_trace_bound(self):
        """trace(H) = sum (m_i^2 + 1) S_i <= n (1 + gamma^2)."""
        for seed in range(5):
            a, x = random_instance(30, 3, seed)
            h = hessian(ModelParams(0.4, 0.1), a, x).values
            assert np.trace(h) <= 30 * (1 + 1.0**2) + 1e-9

    def test_eigenvalue_lower_bound(self):
        """min eig >= sech^4(beta*gamma + |b|) / (1 + gamma^2) * n * T_n."""
        for seed in range(10):
            a, x = random_instance(30, 3, seed)
            theta = ModelParams(0.6, 0.25)
            gamma = float(a.row_sums().max())
            bound = (float(sech_sq(np.array([theta.beta * gamma
                                             + abs(theta.b_field)]))[0]) ** 2
                     / (1 + gamma**2) * 30 * tn_statistic(a, x))
            assert hessian(theta, a, x).min_eigenvalue() >= bound - 1e-10


class TestRemainderMatrices:
    def test_zero_at_origin(self):
        """tanh(0) = 0 makes every third-derivative moment vanish."""
        a, x = random_instance(14, 3, 0)
        rem = remainder_matrices(ModelParams(0.0, 0.0), a, x)
        np.testing.assert_array_equal(rem.r1, 0.0)
        np.testing.assert_array_equal(rem.r2, 0.0)

    def test_symmetric(self):
        a, x = random_instance(20, 3, 1)
        rem = remainder_matrices(ModelParams(0.7, 0.3), a, x)
        np.testing.assert_array_equal(rem.r1, rem.r1.T)
        np.testing.assert_array_equal(rem.r2, rem.r2.T)

    def test_entry_bound(self):
        """|entries| <= max(tanh - tanh^3) * gamma * n * max(gamma^2, 1)."""
        for seed in range(5):
            a, x = random_instance(30, 3, seed)
            gamma = 1.0
            cap = MAX_TANH_MINUS_CUBE * gamma * 30 * max(gamma**2, 1.0)
            for theta in (ModelParams(0.66, 0.0), ModelParams(1.5, -0.8)):
                rem = remainder_matrices(theta, a, x)
                assert np.max(np.abs(rem.r1)) <= cap + 1e-9
                assert np.max(np.abs(rem.r2)) <= cap + 1e-9

    def test_matches_hessian_derivative(self):
        """dH/dbeta = -2 r1 and dH/db = -2 r2 (central differences)."""
        a, x = random_instance(30, 4, 2)
        t0 = np.array([0.6, 0.2])
        rem = remainder_matrices(ModelParams(*t0), a, x)
        eps = 1e-6
        for k, expected in ((0, rem.r1), (1, rem.r2)):
            e = np.zeros(2)
            e[k] = eps
            hp = hessian(ModelParams(*(t0 + e)), a, x).values
            hm = hessian(ModelParams(*(t0 - e)), a, x).values
            np.testing.assert_allclose((hp - hm) / (2 * eps), -2.0 * expected,
                                       rtol=1e-4, atol=1e-6)


class TestTaylorIdentity:
    def test_fourth_order_with_midpoint_remainder(self):
        """value + score.d - d'Hd/2 + remainder(midpoint) reproduces the
        objective to fourth order; without the remainder only to third."""
        a, x = random_instance(30, 3, 8)
        t0 = np.array([0.6, 0.1])
        theta0 = ModelParams(*t0)
        f0 = pseudo_log_lik(theta0, a, x)
        w = score(theta0, a, x).as_array()
        h = hessian(theta0, a, x).values
        direction = np.array([1.0, 0.5]) / np.linalg.norm([1.0, 0.5])
        prev_err = None
        for scale in (0.2, 0.1, 0.05, 0.025):
            d = scale * direction
            f = pseudo_log_lik(ModelParams(*(t0 + d)), a, x)
            second = f0 + w @ d - 0.5 * d @ h @ d
            rem = taylor_remainder(ModelParams(*(t0 + 0.5 * d)), a, x, d)
            err = abs(f - (second + rem))
            assert err <= 0.2 * abs(f - second)  # remainder helps
            if prev_err is not None:
                assert err <= 0.1 * prev_err  # faster than cubic decay
            prev_err = err


class TestTnStatistic:
    def test_constant_fields(self):
        a = scaled_adjacency(random_regular_edges(12, 3, seed=0))
        assert tn_statistic(a, SpinConfiguration(np.ones(12))) == 0.0

    def test_range(self):
        for seed in range(5):
            a, x = random_instance(20, 4, seed)
            t = tn_statistic(a, x)
            assert 0.0 <= t <= 1.0 + 1e-12  # gamma = 1 for regular graphs

    def test_lattice_checkerboard_value(self):
        """3x3 grid, alternating signs: corner fields -2w, side fields
        +3w, centre -4w with w = 9/24; variance works out to 1.0625."""
        a = lattice4_adjacency(3, 3)
        x = SpinConfiguration(np.array([1, -1, 1, -1, 1, -1, 1, -1, 1]))
        np.testing.assert_allclose(tn_statistic(a, x), 1.0625, atol=1e-12)


class TestEnumeration:
    def test_probabilities_normalize(self):
        for n, d, seed in [(10, 3, 0), (12, 3, 1)]:
            a, _ = random_instance(n, d, seed)
            lp = enumerate_log_probs(ModelParams(0.5, 0.3), a)
            assert lp.size == 1 << n
            np.testing.assert_allclose(np.exp(lp).sum(), 1.0, atol=1e-10)

    def test_single_free_spin(self):
        """n=1, no edges: P(x = +1) = e^b / (e^b + e^{-b})."""
        a = no_edge_matrix(1)
        b = 0.7
        got = exact_log_lik(ModelParams(0.0, b), a,
                            SpinConfiguration(np.array([1])))
        want = math.log(math.exp(b) / (math.exp(b) + math.exp(-b)))
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_equals_pseudo_at_beta_zero(self):
        """Without interactions the likelihood factorizes, so the exact
        and pseudo forms coincide."""
        a, x = random_instance(10, 3, 5)
        theta = ModelParams(0.0, 0.4)
        np.testing.assert_allclose(exact_log_lik(theta, a, x),
                                   pseudo_log_lik(theta, a, x), atol=1e-12)

    def test_capacity_errors(self):
        with pytest.raises(CapacityError):
            log_partition(ModelParams(0.1, 0.0),
                          no_edge_matrix(ENUMERATION_MAX_N + 1))
        with pytest.raises(CapacityError):
            enumerate_log_probs(ModelParams(0.1, 0.0), no_edge_matrix(21))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 16), st.integers(0, 1 << 16))
    def test_index_round_trip(self, n, k):
        k = k % (1 << n)
        spins = index_to_spins(np.array([k]), n)[0]
        assert spins_to_index(SpinConfiguration(spins)) == k


class TestSpinSerialization:
    def test_round_trip(self, tmp_path):
        x = SpinConfiguration(np.array([1, -1, -1, 1, 1]))
        path = tmp_path / "x.txt"
        save_spins(x, path)
        assert path.read_text() == "1 -1 -1 1 1\n"
        y = load_spins(path)
        np.testing.assert_array_equal(y.spins, x.spins)

    def test_empty_rejected(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("")
        with pytest.raises(ParameterError):
            load_spins(path)

    def test_bad_value_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1 0 -1\n")
        with pytest.raises(ParameterError):
            load_spins(path)
