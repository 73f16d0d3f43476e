import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from fracext.bessel import (bessel_k, kernel_tail_mass, normalization_constant,
                            periodized_poisson_kernel, phi, phi_at_zero, phi_derivative,
                            poisson_kernel, profile, recurrence_residual)

# K_nu(t) from mpmath.besselk at 30 digits
MP_BESSEL_K = [
    (0.5, 1.0, 0.46106850444789455844),
    (0.3, 2.0, 0.11603697434811925836),
    (0.7, 30.0, 2.1496807317919460934e-14),
    (0.25, 0.1, 2.6851568718760591968),
    (1.3, 0.7, 1.4232613423144328745),
    (2.5, 5.0, 0.0064957750043857580024),
    (0.0, 1.0, 0.42102443824070833334),
    (1.0, 0.01, 99.973894118296245561),
    (0.75, 12.0, 2.2509792704099482038e-6),
    (3.7, 2.2, 0.97475595617671115858),
]

# t^g K_g(t) from mpmath
MP_PHI = [
    (0.3, 0.5, 0.79314344750896403053), (0.3, 2.0, 0.14285827271013438295),
    (0.75, 0.5, 0.76807903612489954102), (0.75, 2.0, 0.21510631245909820682),
    (1.5, 0.5, 1.1402601757997106042), (1.5, 2.0, 0.50885287127413235581),
    (2.5, 0.5, 3.6108238900324169133), (2.5, 2.0, 2.2050291088545735418),
]


class TestBesselK:
    """Modified Bessel function of the second kind."""

    @pytest.mark.parametrize("nu,t,ref", MP_BESSEL_K)
    def test_against_mpmath(self, nu, t, ref):
        """Frozen high-precision values are reproduced to 1e-10 relative."""
        assert bessel_k(nu, t) == pytest.approx(ref, rel=1e-10)

    def test_half_integer_closed_form(self):
        """K_1/2(t) = sqrt(pi / 2t) e^-t."""
        t = np.geomspace(1e-3, 50, 40)
        assert np.allclose(bessel_k(0.5, t), np.sqrt(np.pi / (2 * t)) * np.exp(-t), rtol=1e-13)

    def test_reflection_exact(self):
        """K_-nu equals K_nu bit for bit."""
        assert bessel_k(-0.3, 2.0) == bessel_k(0.3, 2.0)

    def test_large_argument_asymptote(self):
        """At nu = 0.7, t = 30 the ratio to sqrt(pi/2t) e^-t is within 1e-2 of 1."""
        ratio = bessel_k(0.7, 30.0) / (math.sqrt(math.pi / 60) * math.exp(-30))
        assert abs(ratio - 1) < 1e-2

    @pytest.mark.parametrize("t", [0.0, -1.0])
    def test_rejects_nonpositive(self, t):
        """t <= 0 is rejected."""
        with pytest.raises(ValueError):
            bessel_k(0.5, t)

    @pytest.mark.parametrize("nu", [0.25, 0.5, 0.75, 1.3, 2.5])
    def test_recurrence(self, nu):
        """The derivative recurrence holds to 1e-9 on [0.1, 20]."""
        assert recurrence_residual(nu, np.linspace(0.1, 20, 200)).max() <= 1e-9

    @given(nu=st.floats(0, 4), t=st.floats(0.05, 40))
    def test_three_term_recurrence(self, nu, t):
        """K_(nu+1) = K_(nu-1) + (2 nu / t) K_nu."""
        lhs = bessel_k(nu + 1, t)
        rhs = bessel_k(nu - 1, t) + 2 * nu / t * bessel_k(nu, t)
        assert lhs == pytest.approx(rhs, rel=1e-12)


class TestPhi:
    """The extension profile t^g K_g(t)."""

    @pytest.mark.parametrize("g,t,ref", MP_PHI)
    def test_against_mpmath(self, g, t, ref):
        """Frozen values are reproduced."""
        assert phi(g, t) == pytest.approx(ref, rel=1e-12)

    def test_half_closed_form(self):
        """phi_1/2(t) = sqrt(pi/2) e^-t, including t = 0."""
        t = np.array([0.0, 0.3, 2.0])
        assert np.allclose(phi(0.5, t), math.sqrt(math.pi / 2) * np.exp(-t), rtol=1e-14)

    def test_value_at_zero(self):
        """phi_1.5(0) = sqrt(2) Gamma(1.5) agrees with t = 1e-8 to 1e-6."""
        assert phi_at_zero(1.5) == pytest.approx(math.sqrt(2) * math.gamma(1.5), rel=1e-15)
        assert phi(1.5, 1e-8) == pytest.approx(phi_at_zero(1.5), rel=1e-6)

    def test_normalized_limit(self):
        """c_g phi_g(1e-6) is 1 to 1e-8 for g > 1/2."""
        for g in (0.75, 1.5, 2.3):
            assert normalization_constant(g) * phi(g, 1e-6) == pytest.approx(1.0, abs=1e-8)
            assert profile(g, 0.0) == pytest.approx(1.0, abs=1e-15)

    def test_monotone_samples(self):
        """phi_0.75(1) > phi_0.75(2) > phi_0.75(4)."""
        assert phi(0.75, 1.0) > phi(0.75, 2.0) > phi(0.75, 4.0) > 0

    def test_rejects_zero_order_at_origin(self):
        """The limit at t = 0 needs g > 0."""
        with pytest.raises(ValueError):
            phi(0.0, 0.0)

    @given(g=st.floats(0.05, 4.0), t1=st.floats(0, 30), dt=st.floats(1e-3, 10))
    def test_positive_decreasing(self, g, t1, dt):
        """phi is positive, strictly decreasing and bounded by phi(0)."""
        a, b = phi(g, t1), phi(g, t1 + dt)
        assert 0 < b < a <= phi_at_zero(g) * (1 + 1e-13)


class TestPhiDerivative:
    """phi_g'(t) = -t phi_(g-1)(t)."""

    def test_half_closed_form(self):
        """g = 1/2 gives -sqrt(pi/2) e^-t."""
        t = np.array([0.2, 1.0, 5.0])
        assert np.allclose(phi_derivative(0.5, t), -math.sqrt(math.pi / 2) * np.exp(-t), rtol=1e-13)
        assert np.allclose(phi_derivative(0.5, t), -t * phi(-0.5, t), rtol=1e-13)

    def test_finite_difference(self):
        """Centered difference at (1.3, 0.7) with h = 1e-5 agrees to 1e-7."""
        h = 1e-5
        fd = (phi(1.3, 0.7 + h) - phi(1.3, 0.7 - h)) / (2 * h)
        assert abs(phi_derivative(1.3, 0.7) - fd) / abs(fd) <= 1e-7

    def test_negative(self):
        """The derivative is negative on [0.01, 20]."""
        t = np.linspace(0.01, 20, 300)
        for g in (0.3, 0.75, 1.5, 2.5):
            assert np.all(phi_derivative(g, t) < 0)


class TestPoissonKernel:
    """The fractional Poisson kernel."""

    def test_classical(self):
        """g = 1/2, n = 1 is the harmonic Poisson kernel; 1/pi at x = 0, eps = 1."""
        assert poisson_kernel(0.5, 1, 1.0, 0.0) == pytest.approx(1 / math.pi, rel=1e-15)
        x = np.linspace(-3, 3, 11)
        assert np.allclose(poisson_kernel(0.5, 1, 0.2, x), 0.2 / (math.pi * (x ** 2 + 0.04)), rtol=1e-14)

    @pytest.mark.parametrize("g,n", [(0.3, 1), (0.75, 1), (1.5, 2)])
    def test_scaling(self, g, n):
        """P_eps(x) = eps^-n P_1(x / eps) at eps = 0.5, |x| = 0.3."""
        x = np.full(n, 0.3 / math.sqrt(n)) if n > 1 else 0.3
        lhs = poisson_kernel(g, n, 0.5, x)
        rhs = 0.5 ** -n * poisson_kernel(g, n, 1.0, np.asarray(x) / 0.5)
        assert lhs == pytest.approx(rhs, rel=1e-12)

    @pytest.mark.parametrize("g", [0.3, 0.75, 1.5])
    def test_unit_mass(self, g):
        """The kernel integrates to 1 on the line and the plane."""
        m1 = integrate.quad(lambda x: poisson_kernel(g, 1, 0.7, x), -np.inf, np.inf, epsabs=1e-12)[0]
        m2 = integrate.quad(lambda r: 2 * math.pi * r * poisson_kernel(g, 2, 0.7, np.array([r, 0.0])),
                            0, np.inf, epsabs=1e-12)[0]
        assert m1 == pytest.approx(1.0, abs=1e-6)
        assert m2 == pytest.approx(1.0, abs=1e-6)

    def test_periodized_mass(self):
        """The lattice sum has mass 1 over one period."""
        x = np.linspace(-math.pi, math.pi, 4097)[:-1]
        vals = periodized_poisson_kernel(0.3, 0.5, x)
        assert np.sum(vals) * (2 * math.pi / 4096) == pytest.approx(1.0, abs=1e-8)


class TestKernelTail:
    """Tail mass of the kernel and its derivatives."""

    def test_arctan_closed_form(self):
        """g = 1/2, a = 1: mass (2/pi) arctan(eps)."""
        for eps in (0.1, 0.01, 1e-3):
            assert kernel_tail_mass(0.5, 1, 0, 1.0, eps) == pytest.approx(2 / math.pi * math.atan(eps), rel=1e-9)

    def test_frozen_mpmath(self):
        """g = 0.75, eps = 0.01 against an mpmath quadrature."""
        assert kernel_tail_mass(0.75, 1, 0, 1.0, 0.01) == pytest.approx(0.0005563880884817133289, rel=1e-9)

    @pytest.mark.parametrize("g", [0.3, 0.5, 0.75, 1.5])
    def test_monotone_in_eps(self, g):
        """Smaller eps leaves less mass outside the ball."""
        assert kernel_tail_mass(g, 1, 0, 1.0, 1e-3) < kernel_tail_mass(g, 1, 0, 1.0, 1e-2)

    @pytest.mark.parametrize("g", [0.3, 0.75, 1.5])
    @pytest.mark.parametrize("n,alpha", [(1, 0), (1, 1), (2, 0), (2, 2)])
    def test_slope(self, g, n, alpha):
        """Log-log slope in eps equals 2 g within 0.05."""
        eps = np.array([1e-1, 1e-2, 1e-3, 1e-4])
        mass = [kernel_tail_mass(g, n, alpha, 1.0, e) for e in eps]
        slope = np.polyfit(np.log(eps), np.log(mass), 1)[0]
        assert abs(slope - 2 * g) <= 0.05

    @pytest.mark.parametrize("kw", [dict(n=3), dict(alpha=3), dict(a=0.0)])
    def test_rejects(self, kw):
        """Unsupported dimension, derivative order or radius."""
        args = dict(gamma=0.5, n=1, alpha=0, a=1.0, eps=0.1) | kw
        with pytest.raises(ValueError):
            kernel_tail_mass(**args)
