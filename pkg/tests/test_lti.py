import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynet.lti import (Polynomial, TransferFunction, frequency_response, hinf_norm,
                       is_stable, poly_roots)


def stable_tf(rng, order=2, radius=0.9):
    poles = rng.uniform(0, radius, order) * np.exp(1j * rng.uniform(0, np.pi, order))
    poles = np.concatenate([poles[: order // 2], poles[: order // 2].conj(),
                            rng.uniform(-radius, radius, order % 2)])
    den = Polynomial.from_roots(poles)
    num = np.concatenate([[0.0], rng.standard_normal(order)])
    return TransferFunction(num, den)


class TestPolynomial:
    def test_trailing_zeros_trimmed(self):
        p = Polynomial([1.0, -0.5, 0.0, 1e-15])
        assert p.degree == 1
        np.testing.assert_array_equal(p.coeffs, [1.0, -0.5])

    def test_zero_polynomial(self):
        assert Polynomial([0.0, 0.0]).is_zero()
        with pytest.raises(ValueError):
            poly_roots(Polynomial.zero())

    def test_from_roots_is_monic(self):
        p = Polynomial.from_roots([0.5, 0.2 + 0.3j, 0.2 - 0.3j])
        assert p.coeffs[0] == 1.0
        np.testing.assert_allclose(np.sort_complex(p.roots()),
                                   np.sort_complex([0.5, 0.2 + 0.3j, 0.2 - 0.3j]), atol=1e-12)

    def test_mixing_conventions_rejected(self):
        with pytest.raises(ValueError):
            Polynomial([1, 1]) + Polynomial([1, 1], continuous=True)

    def test_linear_root(self):
        np.testing.assert_allclose(poly_roots(Polynomial([1.0, -0.5])), [0.5])

    def test_continuous_roots(self):
        r = poly_roots(Polynomial([-1.0, 0.0, 1.0], continuous=True))
        np.testing.assert_allclose(np.sort(r.real), [-1.0, 1.0])

    def test_random_degree5_residual(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            p = Polynomial(np.concatenate([[1.0], rng.standard_normal(5)]))
            r = p.roots()
            assert r.size == 5
            # evaluate as a polynomial in q
            vals = np.polyval(p.coeffs, r)
            assert np.max(np.abs(vals)) / np.max(np.abs(p.coeffs)) < 1e-8

    def test_delay_evaluation(self):
        p = Polynomial([0.0, 1.0])
        assert p(2.0) == pytest.approx(0.5)


class TestStability:
    def test_discrete(self):
        assert is_stable(TransferFunction([1.0], [1.0, -0.5]))
        assert not is_stable(TransferFunction([1.0], [1.0, -1.1]))

    def test_continuous(self):
        assert is_stable(TransferFunction([1.0], [2.0, 1.0], continuous=True))
        assert not is_stable(TransferFunction([1.0], [-2.0, 1.0], continuous=True))

    def test_zero_denominator_rejected(self):
        with pytest.raises(ValueError):
            TransferFunction([1.0], [0.0])

    def test_properness(self):
        g = TransferFunction([0.0, 0.3], [1.0, -0.4])
        assert g.is_strictly_proper() and g.is_proper()
        assert not TransferFunction([1.0, 0.3], [1.0, -0.4]).is_strictly_proper()


class TestHinf:
    def test_constant(self):
        assert hinf_norm(TransferFunction([2.0])) == pytest.approx(2.0)

    def test_first_order_lowpass(self):
        # |1/(1 - 0.5 e^{-jw})| peaks at w=0 with value 1/(1-0.5)
        assert hinf_norm(TransferFunction([1.0], [1.0, -0.5])) == pytest.approx(2.0, abs=1e-10)

    def test_delayed_first_order_matches_dense_grid(self):
        g = TransferFunction([0.0, 0.3], [1.0, -0.4])
        w = np.linspace(0, np.pi, 1_000_001)
        brute = np.max(np.abs(0.3 * np.exp(-1j * w) / (1 - 0.4 * np.exp(-1j * w))))
        assert brute == pytest.approx(0.5, abs=1e-12)
        assert hinf_norm(g) == pytest.approx(brute, abs=1e-9)

    def test_resonant_peak_refined(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            g = stable_tf(rng, order=4, radius=0.97)
            w = np.linspace(0, np.pi, 200_001)
            brute = np.max(np.abs(frequency_response(g, np.exp(1j * w))))
            assert hinf_norm(g) == pytest.approx(brute, rel=1e-6)

    def test_continuous_peak(self):
        g = TransferFunction([1.0], [2.0, 1.0], continuous=True)
        assert hinf_norm(g) == pytest.approx(0.5, rel=1e-9)

    def test_unstable_rejected(self):
        with pytest.raises(ValueError):
            hinf_norm(TransferFunction([1.0], [1.0, -1.1]))


class TestFrequencyResponse:
    def test_unit(self):
        np.testing.assert_allclose(frequency_response(TransferFunction([1.0]), [0.3 + 2j, 5.0]), 1.0)

    def test_dc(self):
        assert frequency_response(TransferFunction([1.0], [1.0, -0.5]), 1.0) == pytest.approx(2.0)

    def test_matches_horner(self):
        rng = np.random.default_rng(1)
        g = TransferFunction(rng.standard_normal(3), np.array([1.0, -0.3, 0.1]))
        z = np.exp(1j * np.linspace(0, np.pi, 16))

        def horner(c, x):
            acc = np.zeros_like(x)
            for ck in c[::-1]:
                acc = acc * x + ck
            return acc

        ref = horner(g.num.coeffs, 1 / z) / horner(g.den.coeffs, 1 / z)
        np.testing.assert_allclose(frequency_response(g, z), ref, rtol=1e-12)

    def test_pole_evaluation_raises(self):
        with pytest.raises(ValueError):
            frequency_response(TransferFunction([1.0], [1.0, -0.5]), 0.5)


seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_series_norm_is_submultiplicative(seed):
    rng = np.random.default_rng(seed)
    g1, g2 = stable_tf(rng), stable_tf(rng)
    assert hinf_norm(g1 * g2) <= hinf_norm(g1) * hinf_norm(g2) * (1 + 1e-9) + 1e-12


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_product_response_is_pointwise_product(seed):
    rng = np.random.default_rng(seed)
    g1, g2 = stable_tf(rng, 3), stable_tf(rng, 2)
    z = np.exp(1j * rng.uniform(0, np.pi, 16))
    np.testing.assert_allclose(frequency_response(g1 * g2, z),
                               frequency_response(g1, z) * frequency_response(g2, z),
                               rtol=1e-12, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-10, 10).filter(lambda c: c == 0 or abs(c) > 1e-6),
                min_size=2, max_size=9))
def test_root_residual(coeffs):
    p = Polynomial(coeffs)
    if p.is_zero() or p.degree < 1:
        return
    r = poly_roots(p)
    # backward error: residual relative to the size of the terms being summed
    resid = np.abs(np.polyval(p.coeffs, r))
    size = np.polyval(np.abs(p.coeffs), np.abs(r))
    assert np.all(resid <= 1e-8 * size)
