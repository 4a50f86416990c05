import math
from fractions import Fraction

import numpy as np
import pytest

from momentmix.errors import InputError, MissingMomentError
from momentmix.moments import (
    Knowns,
    MixtureParams,
    MomentTable,
    UnivariateRing,
    exact_moments,
    gaussian_moment,
    mixture_moment_poly,
    multivariate_moment_poly,
    sample_moments,
)
from momentmix.polysys import SparsePoly


def moment_by_combinatorics(i, mu, var):
    """Independent oracle: sum over pairings, M_i = sum_j C(i,2j)(2j-1)!! var^j mu^(i-2j)."""
    total = 0.0
    for j in range(i // 2 + 1):
        total += (
            math.comb(i, 2 * j)
            * math.prod(range(1, 2 * j, 2))
            * var**j
            * mu ** (i - 2 * j)
        )
    return total


class TestGaussianMoment:
    def test_first_is_the_mean(self):
        assert gaussian_moment(1, 3.7, 0.9) == 3.7

    def test_zeroth_is_one(self):
        assert gaussian_moment(0, 123.0, 456.0) == 1

    def test_third_unit(self):
        # mu^3 + 3 mu var at mu = var = 1
        assert gaussian_moment(3, 1.0, 1.0) == pytest.approx(4.0)

    def test_fourth_centered(self):
        # 3 var^2 at mu = 0, var = 1
        assert gaussian_moment(4, 0.0, 1.0) == pytest.approx(3.0)

    def test_negative_order_rejected(self):
        with pytest.raises(InputError):
            gaussian_moment(-1, 0.0, 1.0)

    def test_recursion_reevaluated(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            mu, var = rng.standard_normal(), rng.uniform(0.1, 4.0)
            ms = [gaussian_moment(i, mu, var) for i in range(13)]
            for i in range(2, 13):
                assert ms[i] == pytest.approx(mu * ms[i - 1] + (i - 1) * var * ms[i - 2], rel=1e-13)

    def test_combinatorial_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            mu, var = rng.standard_normal(), rng.uniform(0.1, 4.0)
            for i in range(0, 11):
                assert gaussian_moment(i, mu, var) == pytest.approx(
                    moment_by_combinatorics(i, mu, var), rel=1e-11
                )

    def test_quadrature_oracle(self):
        from scipy.integrate import quad

        for i, mu, var in [(3, 0.5, 1.2), (5, -0.7, 0.6), (6, 1.1, 2.0)]:
            pdf = lambda x: np.exp(-((x - mu) ** 2) / (2 * var)) / np.sqrt(2 * np.pi * var)
            val, _ = quad(lambda x: x**i * pdf(x), -30, 30)
            assert gaussian_moment(i, mu, var) == pytest.approx(val, rel=1e-8)


class TestDerivativeIdentities:
    def test_symbolic(self):
        mu = SparsePoly.variable(2, 0)
        var = SparsePoly.variable(2, 1)
        ms = [gaussian_moment(i, mu, var) for i in range(11)]
        for i in range(1, 11):
            mi = ms[i] if isinstance(ms[i], SparsePoly) else SparsePoly.constant(2, ms[i])
            assert mi.diff(0) == i * ms[i - 1]
            assert mi.diff(1) == math.comb(i, 2) * ms[i - 2]

    def test_finite_differences(self):
        rng = np.random.default_rng(2)
        h = 1e-6
        for _ in range(20):
            mu, var = rng.standard_normal(), rng.uniform(0.5, 3.0)
            i = int(rng.integers(1, 11))
            dmu = (gaussian_moment(i, mu + h, var) - gaussian_moment(i, mu - h, var)) / (2 * h)
            dvar = (gaussian_moment(i, mu, var + h) - gaussian_moment(i, mu, var - h)) / (2 * h)
            ref_mu = i * gaussian_moment(i - 1, mu, var)
            ref_var = math.comb(i, 2) * gaussian_moment(i - 2, mu, var) if i >= 2 else 0.0
            assert dmu == pytest.approx(ref_mu, rel=1e-6, abs=1e-6)
            assert dvar == pytest.approx(ref_var, rel=1e-6, abs=1e-6)


class TestMixtureMomentPoly:
    def test_order_two_known_weights(self):
        p = mixture_moment_poly(2, 2, Knowns(weights=(0.5, 0.5)), target_moment=3.0)
        # ring order (mu1, var1, mu2, var2)
        expected = SparsePoly(4, {
            (2, 0, 0, 0): Fraction(1, 2), (0, 1, 0, 0): Fraction(1, 2),
            (0, 0, 2, 0): Fraction(1, 2), (0, 0, 0, 1): Fraction(1, 2),
            (0, 0, 0, 0): Fraction(-3),
        })
        assert p == expected

    def test_single_component_first_order(self):
        p = mixture_moment_poly(1, 1, Knowns(), target_moment=2.0)
        # ring order (lam1, mu1, var1): the equation reads lam1*mu1 - target
        assert p == SparsePoly(3, {(1, 1, 0): 1, (0, 0, 0): Fraction(-2)})

    def test_order_four_quartic_term(self):
        p = mixture_moment_poly(4, 2, Knowns(weights=(0.5, 0.5)))
        # contains 3/2 var1^2 (from 3 var^2 scaled by the weight)
        assert p.terms[(0, 2, 0, 0)] == Fraction(3, 2)
        assert p.terms[(4, 0, 0, 0)] == Fraction(1, 2)
        assert p.terms[(2, 1, 0, 0)] == Fraction(3)

    def test_all_fixed_rejected(self):
        with pytest.raises(InputError):
            mixture_moment_poly(2, 1, Knowns(weights=(1.0,), variances=(1.0,), means=(0.0,)))


def hand_m11(k=2):
    """m_{(1,1)} for a 2-mixture written against the documented ring order."""
    from momentmix.moments import _MultivariateRing

    ring = _MultivariateRing(k, 2)
    acc = SparsePoly.constant(ring.nvars, 0)
    for ell in range(k):
        acc = acc + ring.lam(ell) * (ring.mu(ell, 0) * ring.mu(ell, 1) + ring.sig(ell, 0, 1))
    return acc


def hand_m21(k=2):
    from momentmix.moments import _MultivariateRing

    ring = _MultivariateRing(k, 2)
    acc = SparsePoly.constant(ring.nvars, 0)
    for ell in range(k):
        mu1, mu2 = ring.mu(ell, 0), ring.mu(ell, 1)
        s11, s12 = ring.sig(ell, 0, 0), ring.sig(ell, 0, 1)
        acc = acc + ring.lam(ell) * (mu1**2 * mu2 + 2 * mu1 * s12 + mu2 * s11)
    return acc


class TestMultivariateMomentPoly:
    def test_cross_moment_order_two(self):
        assert multivariate_moment_poly((1, 1), 2) == hand_m11()

    def test_cross_moment_order_three(self):
        assert multivariate_moment_poly((2, 1), 2) == hand_m21()

    def test_zero_key_with_known_weights(self):
        p = multivariate_moment_poly((0, 0, 0), 3, weights=(0.2, 0.3, 0.5))
        assert p == SparsePoly.constant(p.nvars, 1)

    def test_order_cap(self):
        with pytest.raises(InputError):
            multivariate_moment_poly((8,) * 1, 2)  # order 8 > 3*2+1

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_univariate_consistency(self, k):
        # all-parameters-unknown rings coincide for n=1
        for order in range(0, 3 * k + 2):
            uni = mixture_moment_poly(order, k, Knowns())
            multi = multivariate_moment_poly((order,), k, max_order=3 * k + 1)
            if order == 0:
                uni = uni + 1  # drop the "- 1" of the weight-sum equation
            assert uni == multi


class TestSampleMoments:
    def test_mean(self):
        t = sample_moments([1.0, 2.0, 3.0], [(1,)])
        assert t.get((1,)) == pytest.approx(2.0)

    def test_mean_of_squares(self):
        t = sample_moments([1.0, 2.0, 3.0], [(2,)])
        assert t.get((2,)) == pytest.approx(14.0 / 3.0)

    def test_cross(self):
        t = sample_moments([[1.0, 2.0], [3.0, 4.0]], [(1, 1)])
        assert t.get((1, 1)) == pytest.approx(7.0)

    def test_empty_rejected(self):
        with pytest.raises(InputError):
            sample_moments(np.empty((0, 2)), [(1, 0)])

    def test_nan_rejected(self):
        with pytest.raises(InputError):
            sample_moments([1.0, np.nan], [(1,)])

    def test_key_dimension_mismatch(self):
        with pytest.raises(InputError):
            sample_moments([[1.0, 2.0]], [(1,)])

    def test_statistical_convergence(self):
        rng = np.random.default_rng(123)
        params = MixtureParams(
            [0.3, 0.7], [[0.5, -1.0], [2.0, 1.5]],
            [np.diag([1.0, 0.8]), np.diag([0.6, 1.4])],
        )
        comp = rng.choice(2, size=10**6, p=params.weights)
        data = np.column_stack([
            rng.normal(params.means[comp, s], np.sqrt(params.covariances[comp, s, s]))
            for s in range(2)
        ])
        keys = [(1, 0), (0, 1), (2, 0), (0, 2), (1, 1)]
        sm = sample_moments(data, keys)
        em = exact_moments(params, keys)
        for key in keys:
            assert abs(sm.get(key) - em.get(key)) < 5e-2


class TestExactMoments:
    def test_worked_cross_moment(self, worked_truth):
        t = exact_moments(worked_truth, [(1, 1), (1, 0), (2, 1)])
        assert t.get((1, 1)) == pytest.approx(0.8125, abs=1e-12)
        assert t.get((1, 0)) == pytest.approx(-0.25, abs=1e-12)
        assert t.get((2, 1)) == pytest.approx(7.75, abs=1e-12)

    def test_single_gaussian_matches_recursion(self):
        params = MixtureParams([1.0], [[1.3]], [[[0.7]]])
        t = exact_moments(params, [(r,) for r in range(1, 7)], max_order=6)
        for r in range(1, 7):
            assert t.get((r,)) == pytest.approx(gaussian_moment(r, 1.3, 0.7), rel=1e-12)

    def test_order_cap(self):
        params = MixtureParams([1.0], [[0.0]], [[[1.0]]])
        with pytest.raises(InputError):
            exact_moments(params, [(5,)])  # cap is 3*1+1 = 4


class TestContainers:
    def test_zero_key_must_be_one(self):
        with pytest.raises(InputError):
            MomentTable(2, {(0, 0): 0.5})

    def test_missing_key_named(self):
        t = MomentTable(2, {(1, 0): 1.0})
        with pytest.raises(MissingMomentError) as err:
            t.get((0, 1))
        assert "(0, 1)" in str(err.value)

    def test_weights_must_sum_to_one(self):
        with pytest.raises(InputError):
            MixtureParams([0.5, 0.6], [[0.0], [1.0]], [[[1.0]], [[1.0]]])

    def test_asymmetric_covariance_rejected(self):
        with pytest.raises(InputError):
            MixtureParams([1.0], [[0.0, 0.0]], [[[1.0, 0.2], [0.3, 1.0]]])

    def test_meaningful_requires_positive_definite(self):
        p = MixtureParams([1.0], [[0.0, 0.0]], [[[1.0, 2.0], [2.0, 1.0]]])
        assert not p.is_meaningful()


class TestRingLayouts:
    def test_known_weights_interleaved(self):
        ring = UnivariateRing(2, Knowns(weights=(0.5, 0.5)))
        assert ring.names == ["mu1", "var1", "mu2", "var2"]

    def test_shared_variance_block(self):
        ring = UnivariateRing(3, Knowns(weights=(0.2, 0.3, 0.5), equal_variances=True))
        assert ring.names == ["mu1", "mu2", "mu3", "var"]
        assert ring.var_index(0) == ring.var_index(2) == 3

    def test_general_block(self):
        ring = UnivariateRing(2, Knowns())
        assert ring.names == ["lam1", "lam2", "mu1", "mu2", "var1", "var2"]
