import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracext.carleman import (C_MAX, CarlemanWeight, ManufacturedTest, WeightSpec, build_weight,
                              carleman_ratio, check_weight, conformal_constant, conformal_transform,
                              convex_shift, mode_commutator_check, random_profile, random_sequence,
                              random_tests, slowly_varying_envelope, spherical_spectrum)


def _spike(tau=100.0, delta=0.1, nu=0.1):
    c = np.zeros(10)
    c[5] = delta / 2
    return build_weight(WeightSpec(c, tau, nu=nu, delta=delta))


class TestSphericalSpectrum:
    """Weighted Neumann eigenvalues on the half circle."""

    def test_unweighted(self):
        """b = 0 gives k^2."""
        sp = spherical_spectrum(1, 0.0, 6)
        assert np.allclose(sp.eigenvalues, [0, 1, 4, 9, 16, 25], atol=1e-9)

    def test_half(self):
        """b = 1/2 gives 0, 1.5, 5, 10.5."""
        sp = spherical_spectrum(1, 0.5, 4)
        assert np.allclose(sp.eigenvalues, [0, 1.5, 5, 10.5], atol=1e-9)

    def test_minus_half(self):
        """b = -1/2 gives 0, 0.5, 3, 7.5."""
        sp = spherical_spectrum(1, -0.5, 4)
        assert np.allclose(sp.eigenvalues, [0, 0.5, 3, 7.5], atol=1e-9)

    @pytest.mark.parametrize("b", [-0.5, -0.2, 0.0, 0.3, 0.7])
    def test_closed_form(self, b):
        """k(k + b) to 1e-6 relative for k <= 12."""
        sp = spherical_spectrum(1, b, 13)
        k = np.arange(13)
        exact = k * (k + b)
        assert sp.eigenvalues[0] == pytest.approx(0, abs=1e-10)
        assert np.all(np.abs(sp.eigenvalues[1:] - exact[1:]) <= 1e-6 * exact[1:])
        assert np.all(np.diff(sp.eigenvalues) > 0) and sp.gap > 0

    @pytest.mark.parametrize("b", [-0.5, 0.3])
    def test_fd_cross_check(self, b):
        """The finite-volume discretization converges to the same values."""
        sp = spherical_spectrum(1, b, 5, method="fd", cells=4000)
        k = np.arange(5)
        assert np.allclose(sp.eigenvalues, k * (k + b), rtol=1e-3, atol=1e-3)

    def test_eigenfunctions_orthonormal(self):
        """Eigenfunctions are orthonormal in L^2(sin^b)."""
        sp = spherical_spectrum(1, 0.0, 4, samples=4001)
        w = np.full(len(sp.theta), sp.theta[1] - sp.theta[0])
        w[[0, -1]] /= 2
        gram = (sp.functions * w) @ sp.functions.T
        assert np.allclose(gram, np.eye(4), atol=1e-6)

    def test_bad_exponent(self):
        """b outside (-1, 1) is rejected."""
        with pytest.raises(ValueError):
            spherical_spectrum(1, 1.0, 4)


class TestBuildWeight:
    """Construction of the mollified weight."""

    def test_zero_sequence(self):
        """c = 0 gives a linear weight with slope 17.25 at tau = 16."""
        w = build_weight(WeightSpec(np.zeros(5), 16.0))
        assert np.all(w.d2h == 0)
        assert np.allclose(w.dh, 17.25)
        assert np.allclose(w.h, 17.25 * w.t)

    def test_per_cell_fallback(self):
        """A draw whose shared-run search is infeasible still gets an admissible weight at tau = 16."""
        c = np.zeros(30)
        c[[1, 17, 25, 27]] = [0.0004922284541862636, 0.009168682064003252,
                              4.813577561022173e-05, 0.002870728728849752]
        w = build_weight(WeightSpec(c, 16.0))
        rep = check_weight(w, spherical_spectrum(1, 0.0, 16))
        assert rep.ok and rep.min_gap >= 0.25 - 1e-9
        ta = 16.0 * w.envelope
        active = ta > w.nu
        assert np.all(w.cells[active] >= ta[active] - 1e-12)
        assert np.all(w.cells[active] <= 2 * ta[active] + 1e-12)
        assert np.all(w.cells[~active] == 0)

    def test_spike_envelope(self):
        """A single spike gives a two-sided geometric envelope, active exactly above nu/tau."""
        tau, nu = 100.0, 0.1
        w = _spike(tau, nu=nu)
        a = w.envelope
        j0 = int(np.argmax(a))
        j = np.arange(len(a))
        assert np.allclose(a, 0.05 * 2.0 ** (-nu * np.abs(j - j0)), rtol=1e-14)
        active = a > nu / tau
        assert np.array_equal(w.cells > 0, active)
        ta = tau * a[active]
        assert np.all(w.cells[active] >= ta * (1 - 1e-12))
        assert np.all(w.cells[active] <= 2 * ta * (1 + 1e-12))

    def test_envelope_formula(self):
        """Direct double sum for the envelope."""
        c = np.array([0.01, 0.0, 0.03])
        a = slowly_varying_envelope(c, 0.2, 5)
        expected = [sum(c[i] * 2 ** (-0.2 * abs(j - i)) for i in range(3)) for j in range(5)]
        assert np.allclose(a, expected, rtol=1e-15)

    def test_l1_violation(self):
        """sum c >= delta is rejected."""
        with pytest.raises(ValueError):
            WeightSpec(np.array([0.06, 0.05]), 16.0, delta=0.1)

    def test_negative_entries(self):
        """Negative entries are rejected."""
        with pytest.raises(ValueError):
            WeightSpec(np.array([0.01, -0.001]), 16.0)

    def test_slowly_varying_draws(self):
        """50 random sequences produce slowly varying envelopes."""
        rng = np.random.default_rng(7)
        for _ in range(50):
            c = random_sequence(rng)
            a = slowly_varying_envelope(c, 0.1, len(c) + 40)
            r = 2 ** 0.1
            assert np.all(a[:-1] <= r * a[1:] * (1 + 1e-12))
            assert np.all(a[1:] <= r * a[:-1] * (1 + 1e-12))

    @settings(max_examples=15)
    @given(seed=st.integers(0, 2 ** 20), tau=st.sampled_from([16.0, 40.5, 128.0]))
    def test_invariants(self, seed, tau):
        """h(0) = 0, h'' >= 0, h' nondecreasing and within the stated band."""
        c = random_sequence(np.random.default_rng(seed))
        w = build_weight(WeightSpec(c, tau))
        assert w.h[0] == 0.0
        assert np.all(w.d2h >= -1e-12)
        assert np.all(np.diff(w.dh) >= -1e-10)
        lo = math.floor(tau) + 1.25
        assert w.dh.min() >= lo - 1e-10
        assert w.dh.max() <= lo + 2 * tau * w.envelope.sum() + 1e-8


class TestCheckWeight:
    """Slope, gap and derivative checks."""

    def test_linear_passes(self):
        """Slope 17.25 sits a quarter away from the integer ladder."""
        rep = check_weight(CarlemanWeight.linear(17.25, tau=16.0), spherical_spectrum(1, 0.0, 16))
        assert rep.ok
        assert rep.min_gap == pytest.approx(0.25, abs=1e-12)

    def test_forced_violation(self):
        """A slope on a spectral value fails the gap check."""
        rep = check_weight(CarlemanWeight.linear(17.0, tau=16.0), spherical_spectrum(1, 0.0, 16))
        assert not rep.gap_ok and rep.min_gap == pytest.approx(0, abs=1e-12)

    def test_weighted_ladder(self):
        """For b != 0 the zero-sequence weight sits off the shifted ladder."""
        w = build_weight(WeightSpec(np.zeros(3), 16.0, b=0.5))
        assert check_weight(w, spherical_spectrum(1, 0.5, 24)).ok

    @pytest.mark.parametrize("tau", [16.0, 128.0, 1024.0])
    def test_random_draws(self, tau):
        """Random draws pass every check with C <= 10."""
        rng = np.random.default_rng(int(tau))
        sp = spherical_spectrum(1, 0.0, 16)
        for _ in range(8):
            rep = check_weight(build_weight(WeightSpec(random_sequence(rng), tau)), sp)
            assert rep.ok and rep.C <= C_MAX, rep.lines()

    def test_report_lines(self):
        """The report lists raw and shifted distances."""
        text = "\n".join(check_weight(CarlemanWeight.linear(17.25, tau=16.0)).lines())
        assert "raw dist" in text and "shifted dist" in text


class TestConformal:
    """Conformal cylinder coordinates."""

    def test_constant(self):
        """c_{1,0} = 0 and c_{1,b} = -(b/2)^2."""
        assert conformal_constant(1, 0.0) == 0.0
        assert conformal_constant(1, 0.5) == pytest.approx(-0.0625)

    @pytest.mark.parametrize("b", [0.0, 0.4])
    def test_power_law(self, b):
        """|x|^alpha becomes a pure exponential in t."""
        alpha = 1.7
        cyl = conformal_transform(lambda x, y: np.hypot(x, y) ** alpha, 1, b, 0.1, 2.0)
        expected = np.exp((-b / 2 - alpha) * cyl.t)[:, None]
        assert np.allclose(cyl.values, np.broadcast_to(expected, cyl.values.shape), rtol=1e-12)

    def test_round_trip(self):
        """Cubic resampling recovers a smooth bump to 1e-6."""
        u = lambda x, y: np.exp(-((x - 0.3) ** 2 + (y - 0.5) ** 2))
        cyl = conformal_transform(u, 1, 0.3, 0.2, 1.5)
        rng = np.random.default_rng(3)
        r = rng.uniform(0.25, 1.4, 200)
        th = rng.uniform(0.05, math.pi - 0.05, 200)
        x, y = r * np.cos(th), r * np.sin(th)
        assert np.max(np.abs(cyl.inverse(x, y) - u(x, y))) <= 1e-6


class TestCommutator:
    """Mode-wise S/A decomposition."""

    def test_linear_weight(self):
        """Linear h: commutator vanishes and the identity holds to 1e-8."""
        w = CarlemanWeight.linear(17.25, tau=16.0)
        rep = mode_commutator_check(w, 2.0, lambda t: np.exp(-(t - 20) ** 2))
        assert rep.terms == (0.0, 0.0, 0.0) or max(map(abs, rep.terms)) == 0
        assert rep.residual <= 1e-8

    def test_convex_signs(self):
        """Spike weight at lam = 1: the first two terms are nonnegative."""
        w = _spike()
        t0 = float(w.t[np.argmax(w.d2h)])
        rep = mode_commutator_check(w, 1.0, lambda t: np.exp(-((t - t0) / 2) ** 2))
        assert rep.terms[0] > 0 and rep.terms[1] > 0
        assert rep.residual <= 1e-6

    def test_random_profiles(self):
        """20 random profiles satisfy the identity to 1e-6."""
        rng = np.random.default_rng(11)
        w = build_weight(WeightSpec(random_sequence(rng), 64.0))
        for _ in range(20):
            lam = float(rng.uniform(0, 80))
            assert mode_commutator_check(w, lam, random_profile(w, rng)).residual <= 1e-6

    def test_support_violation(self):
        """Profiles touching the ends are rejected."""
        w = CarlemanWeight.linear(17.25, tau=16.0)
        with pytest.raises(ValueError):
            mode_commutator_check(w, 1.0, lambda t: np.ones_like(t))


class TestCarlemanRatio:
    """Empirical LHS/RHS of the weighted estimates."""

    def test_zero(self):
        """u = 0 gives ratio 0."""
        w = CarlemanWeight.linear(17.25, tau=16.0)
        test = ManufacturedTest(0.2, 1.0, amplitude=0.0)
        assert carleman_ratio(test, 0.5, w).ratio == 0.0

    @pytest.mark.parametrize("gamma", [0.5, 1.5])
    def test_bounded_sweep(self, gamma):
        """One constant bounds the ratio across tau in {16, 64, 256}."""
        rng = np.random.default_rng(5)
        tests = random_tests(rng, 4, b=1 - 2 * (gamma % 1), neumann_only=gamma > 1, m=int(gamma))
        ratios = []
        for tau in (16.0, 64.0, 256.0):
            w = build_weight(WeightSpec(random_sequence(rng), tau))
            for t in tests:
                r = carleman_ratio(t, gamma, w, t_shift=convex_shift(w, t)).ratio
                assert np.isfinite(r) and r > 0
                ratios.append(r)
        assert max(ratios) <= 1.0

    def test_dilation_invariance(self):
        """For a linear weight a shift only rescales both sides together."""
        w = CarlemanWeight.linear(17.25, tau=16.0)
        t = ManufacturedTest(0.3, 1.2, k=2)
        a = carleman_ratio(t, 0.5, w).ratio
        b = carleman_ratio(t, 0.5, w, t_shift=0.7).ratio
        assert a == pytest.approx(b, rel=1e-10)

    def test_power_too_small_for_system(self):
        """m = 1 needs a radial power of at least 4 for the source to be square integrable."""
        w = CarlemanWeight.linear(17.25, tau=16.0)
        with pytest.raises(ValueError):
            carleman_ratio(ManufacturedTest(0.3, 1.0, p=3, k=1), 1.5, w)
        assert all(t.p >= 4 for t in random_tests(np.random.default_rng(0), 20, m=1))

    def test_support_outside(self):
        """Supports leaving B_4 are rejected."""
        w = CarlemanWeight.linear(17.25, tau=16.0)
        with pytest.raises(ValueError):
            carleman_ratio(ManufacturedTest(1.0, 4.5), 0.5, w)
