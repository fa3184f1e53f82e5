"""Generator machinery: closed forms against their numeric oracle twins."""

import math

import numpy as np
import pytest

from season.errors import DomainError
from season.generators import (
    GENERATOR_NAMES,
    TWO_LOG_TWO,
    bayes_pointwise_loss,
    conjugate,
    conjugate_numeric,
    eval_f,
    get_generator,
    inv_fprime,
    inverse_link,
    link,
    partial_losses,
    perspective_prior,
    pointwise_loss,
)

ALL = [get_generator(n) for n in GENERATOR_NAMES]
KL = get_generator("kl")
RKL = get_generator("reverse_kl")
JS = get_generator("js_shifted")


def s_grid(gen, n=41, span=6.0):
    lo, hi = gen.conjugate_domain
    return np.linspace(max(lo, -span), min(hi - 1e-3, span), n)


class TestEvalF:
    def test_js_at_one_is_zero(self):
        assert eval_f(JS, 1.0) == 0.0

    def test_js_at_zero_right_limit(self):
        assert eval_f(JS, 0.0) == pytest.approx(TWO_LOG_TWO, abs=0.0)

    def test_kl_at_two(self):
        assert eval_f(KL, 2.0) == pytest.approx(2.0 * math.log(2.0), abs=1e-15)

    def test_rkl_at_zero_is_inf(self):
        assert eval_f(RKL, 0.0) == math.inf

    def test_negative_rejected(self):
        for gen in ALL:
            with pytest.raises(DomainError):
                eval_f(gen, -0.5)

    @pytest.mark.parametrize("gen", ALL, ids=GENERATOR_NAMES)
    def test_strict_convexity_on_grid(self, gen):
        t = np.linspace(0.05, 5.0, 200)
        f = np.asarray(gen.f(t))
        second = f[2:] - 2 * f[1:-1] + f[:-2]
        assert np.all(second > 0)


class TestConjugate:
    def test_kl_example(self):
        assert conjugate(KL, 1.0) == pytest.approx(1.0, abs=1e-15)

    def test_js_example(self):
        assert conjugate(JS, -math.log(2.0)) == pytest.approx(-math.log(2.0), abs=1e-12)

    def test_rkl_example_vs_numeric_sup(self):
        assert conjugate(RKL, -1.0) == pytest.approx(-1.0, abs=1e-12)
        assert conjugate_numeric(RKL, -1.0) == pytest.approx(-1.0, abs=1e-6)

    def test_outside_domain_is_inf(self):
        assert conjugate(JS, 0.0) == math.inf
        assert conjugate(RKL, 0.5) == math.inf

    @pytest.mark.parametrize("gen", ALL, ids=GENERATOR_NAMES)
    def test_fenchel_young_on_log_grid(self, gen):
        t = np.logspace(-3, 3, 50)
        fy = np.asarray(gen.f(t)) + np.asarray(gen.conjugate_fn(gen.f_prime(t))) \
            - t * np.asarray(gen.f_prime(t))
        assert np.abs(fy).max() <= 1e-10

    @pytest.mark.parametrize("gen", ALL, ids=GENERATOR_NAMES)
    def test_conjugate_dominates_identity(self, gen):
        s = s_grid(gen)
        assert np.all(np.asarray(gen.conjugate_fn(s)) >= s)

    @pytest.mark.parametrize("gen", ALL, ids=GENERATOR_NAMES)
    def test_conjugate_derivative_is_inverse_fprime(self, gen):
        s = s_grid(gen)
        eps = 1e-6
        fd = (np.asarray(gen.conjugate_fn(s + eps)) - np.asarray(gen.conjugate_fn(s - eps))) \
            / (2 * eps)
        target = np.asarray(gen.f_prime_inv(s))
        rel = np.abs(fd - target) / np.maximum(np.abs(target), 1.0)
        assert rel.max() <= 1e-6


class TestConjugateNumeric:
    @pytest.mark.parametrize("gen", ALL, ids=GENERATOR_NAMES)
    def test_agrees_with_closed_form(self, gen):
        for s in s_grid(gen, n=13, span=4.0):
            assert conjugate_numeric(gen, float(s)) == pytest.approx(
                conjugate(gen, float(s)), abs=1e-6)

    def test_kl_at_zero(self):
        assert conjugate_numeric(KL, 0.0) == pytest.approx(math.exp(-1.0), abs=1e-6)

    def test_unbounded_sup_detected(self):
        assert conjugate_numeric(JS, 0.5) == math.inf
        assert conjugate_numeric(RKL, 0.1) == math.inf


class TestInvFprime:
    def test_js_example(self):
        t, _ = inv_fprime(JS, -math.log(2.0))
        assert t == pytest.approx(1.0, abs=1e-15)

    def test_kl_trivial(self):
        t, d = inv_fprime(KL, 1.0)
        assert t == pytest.approx(1.0) and d == pytest.approx(1.0)

    def test_rkl_trivial(self):
        t, _ = inv_fprime(RKL, -1.0)
        assert t == pytest.approx(1.0)

    def test_outside_range_rejected(self):
        with pytest.raises(DomainError):
            inv_fprime(JS, 0.5)
        with pytest.raises(DomainError):
            inv_fprime(RKL, 0.0)

    @pytest.mark.parametrize("gen", ALL, ids=GENERATOR_NAMES)
    def test_derivative_matches_finite_difference(self, gen):
        eps = 1e-6
        for s in s_grid(gen, n=11, span=3.0):
            _, d = inv_fprime(gen, float(s))
            fd = (gen.f_prime_inv(s + eps) - gen.f_prime_inv(s - eps)) / (2 * eps)
            assert d == pytest.approx(float(fd), rel=1e-6)

    @pytest.mark.parametrize("gen", ALL, ids=GENERATOR_NAMES)
    def test_nonnegative_on_domain(self, gen):
        for s in s_grid(gen, n=25):
            t, _ = inv_fprime(gen, float(s))
            assert t >= 0.0

    @pytest.mark.parametrize("gen", ALL, ids=GENERATOR_NAMES)
    def test_roundtrip_through_fprime(self, gen):
        for s in s_grid(gen, n=11, span=3.0):
            t, _ = inv_fprime(gen, float(s))
            assert float(gen.f_prime(t)) == pytest.approx(float(s), rel=1e-9, abs=1e-9)


class TestLink:
    def test_kl_at_half(self):
        assert link(KL, 0.5) == pytest.approx(1.0)

    def test_js_at_half(self):
        assert link(JS, 0.5) == pytest.approx(-math.log(2.0))

    def test_boundary_rejected(self):
        for bad in (0.0, 1.0, -0.1, 1.1):
            with pytest.raises(DomainError):
                link(JS, bad)

    @pytest.mark.parametrize("gen", ALL, ids=GENERATOR_NAMES)
    def test_roundtrip(self, gen):
        for eta in np.linspace(0.02, 0.98, 30):
            assert inverse_link(gen, link(gen, float(eta))) == pytest.approx(
                float(eta), abs=1e-12)

    @pytest.mark.parametrize("gen", ALL, ids=GENERATOR_NAMES)
    def test_strictly_increasing(self, gen):
        vals = [link(gen, float(e)) for e in np.linspace(0.02, 0.98, 40)]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    @pytest.mark.parametrize("gen", ALL, ids=GENERATOR_NAMES)
    def test_link_of_logit_matches_link(self, gen):
        # same map through the stable parametrization eta = sigmoid(z)
        for z in np.linspace(-4, 4, 17):
            eta = 1.0 / (1.0 + math.exp(-z))
            assert float(gen.link_of_logit(z)) == pytest.approx(link(gen, eta), rel=1e-12)

    @pytest.mark.parametrize("gen", ALL, ids=GENERATOR_NAMES)
    def test_link_of_logit_deriv(self, gen):
        eps = 1e-6
        for z in np.linspace(-4, 4, 17):
            fd = (float(gen.link_of_logit(z + eps)) - float(gen.link_of_logit(z - eps))) / (2 * eps)
            assert float(gen.link_of_logit_deriv(z)) == pytest.approx(fd, rel=1e-6, abs=1e-9)


class TestPartialLosses:
    def test_js_at_half(self):
        pl = partial_losses(JS, 0.5)
        assert pl.loss_pos == pytest.approx(math.log(2.0))
        assert pl.loss_neg == pytest.approx(-math.log(2.0))

    def test_kl_at_half(self):
        pl = partial_losses(KL, 0.5)
        assert pl.loss_pos == pytest.approx(-1.0)
        assert pl.loss_neg == pytest.approx(1.0)

    def test_js_positive_partial_is_log_loss(self):
        for eta in np.linspace(0.05, 0.95, 19):
            assert partial_losses(JS, float(eta)).loss_pos == pytest.approx(
                -math.log(eta), rel=1e-12)

    @pytest.mark.parametrize("gen", ALL, ids=GENERATOR_NAMES)
    def test_properness_grid_argmin(self, gen):
        t = np.linspace(1e-4, 1 - 1e-4, 20001)
        pos = -np.asarray(gen.f_prime(t / (1 - t)))
        neg = np.asarray(gen.conjugate_fn(gen.f_prime(t / (1 - t))))
        for eta in np.arange(0.1, 0.95, 0.1):
            grid_loss = eta * pos + (1 - eta) * neg
            argmin = t[int(np.argmin(grid_loss))]
            assert abs(argmin - eta) <= 2 * (t[1] - t[0])


class TestBayesPointwiseLoss:
    def test_js_at_half_zero(self):
        assert bayes_pointwise_loss(JS, 0.5) == pytest.approx(0.0, abs=1e-15)

    def test_js_at_zero_limit(self):
        assert bayes_pointwise_loss(JS, 0.0) == pytest.approx(-TWO_LOG_TWO)

    def test_kl_at_half_zero(self):
        assert bayes_pointwise_loss(KL, 0.5) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("gen", ALL, ids=GENERATOR_NAMES)
    def test_matches_grid_infimum(self, gen):
        t = np.linspace(1e-4, 1 - 1e-4, 20001)
        pos = -np.asarray(gen.f_prime(t / (1 - t)))
        neg = np.asarray(gen.conjugate_fn(gen.f_prime(t / (1 - t))))
        for eta in np.arange(0.1, 0.95, 0.1):
            grid_inf = float((eta * pos + (1 - eta) * neg).min())
            assert bayes_pointwise_loss(gen, float(eta)) == pytest.approx(grid_inf, abs=1e-6)

    @pytest.mark.parametrize("gen", ALL, ids=GENERATOR_NAMES)
    def test_concavity_on_grid(self, gen):
        eta = np.linspace(0.02, 0.98, 97)
        vals = np.array([bayes_pointwise_loss(gen, float(e)) for e in eta])
        second = vals[2:] - 2 * vals[1:-1] + vals[:-2]
        assert np.all(second <= 1e-9)

    def test_js_symmetry_up_to_affine_shift(self):
        # Lbar(eta) + 2 (1 - eta) log 2 is the binary entropy, symmetric
        # about 1/2; the affine part comes from the +2 log 2 shift in f.
        for eta in np.linspace(0.01, 0.99, 99):
            lhs = bayes_pointwise_loss(JS, float(eta)) + 2 * (1 - eta) * math.log(2)
            rhs = bayes_pointwise_loss(JS, float(1 - eta)) + 2 * eta * math.log(2)
            assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_pointwise_loss_consistency(self):
        # evaluating the pointwise loss at t = eta gives the Bayes value
        for gen in ALL:
            for eta in (0.2, 0.5, 0.8):
                assert pointwise_loss(gen, eta, eta) == pytest.approx(
                    bayes_pointwise_loss(gen, eta), rel=1e-12, abs=1e-12)


class TestPerspectivePrior:
    def bayes_js(self, e):
        return bayes_pointwise_loss(JS, e)

    def test_value_at_one(self):
        for pi in (0.25, 0.5, 0.75):
            fpi = perspective_prior(self.bayes_js, pi)
            assert float(fpi.f(1.0)) == pytest.approx(-self.bayes_js(pi), abs=1e-15)

    def test_half_prior_closed_form(self):
        fpi = perspective_prior(self.bayes_js, 0.5)
        for u in np.linspace(0.1, 4.0, 17):
            expected = -((1 + u) / 2.0) * self.bayes_js(u / (1 + u))
            assert float(fpi.f(float(u))) == pytest.approx(expected, rel=1e-12)

    def test_convexity_on_grid(self):
        for pi in (0.25, 0.5, 0.75):
            fpi = perspective_prior(self.bayes_js, pi)
            u = np.linspace(0.05, 6.0, 120)
            vals = np.asarray(fpi.f(u))
            second = vals[2:] - 2 * vals[1:-1] + vals[:-2]
            assert np.all(second >= -1e-9)

    def test_continuous_in_prior_sweep(self):
        u = np.linspace(0.1, 3.0, 30)
        sweeps = [np.asarray(perspective_prior(self.bayes_js, pi).f(u))
                  for pi in np.linspace(0.25, 0.75, 11)]
        gaps = [np.abs(a - b).max() for a, b in zip(sweeps, sweeps[1:])]
        assert all(np.isfinite(g) and g < 0.5 for g in gaps)

    def test_numeric_conjugate_available(self):
        fpi = perspective_prior(self.bayes_js, 0.5)
        val = conjugate_numeric(fpi, -0.5)
        assert math.isfinite(val)
        # oracle twin of the oracle: dense grid over t
        t = np.linspace(1e-6, 10.0, 100001)
        dense = float((-0.5 * t - np.asarray(fpi.f(t))).max())
        assert val == pytest.approx(dense, abs=1e-5)

    def test_bad_prior_rejected(self):
        with pytest.raises(DomainError):
            perspective_prior(self.bayes_js, 1.0)
