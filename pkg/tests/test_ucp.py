import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracext.extension import extend
from fracext.grid import PeriodicGrid, SpectralField, random_bandlimited
from fracext.ucp import (FieldTower, MaskedSet, antilocality_nullspace, blowup_rescale,
                         caccioppoli_ratio, doubling_quotients, half_ball_rule, interpolation_ratio,
                         manufactured_potential, masked_smallness, normalization_sum, poisson_matrix,
                         random_trace_function, runge_approximate, trace_ratio, vanishing_order,
                         weighted_norms)
from fracext.varcoef import MetricField, assemble_operator

G64 = PeriodicGrid(1, 64)


def _cos_ext(gamma=0.5, N=64):
    return extend(SpectralField.from_function(PeriodicGrid(1, N), np.cos), gamma)


@pytest.fixture(scope="module")
def L_spec():
    return assemble_operator(MetricField.identity(G64))


@pytest.fixture(scope="module")
def L_fd():
    return assemble_operator(MetricField.identity(G64), method="fd")


class TestQuadrature:
    """Weighted half-ball rules."""

    @pytest.mark.parametrize("b", [-0.5, 0.0, 0.6])
    def test_volume_n1(self, b):
        """int_{B_r^+} y^b = r^{2+b} B((1+b)/2, 1/2) / (2+b)."""
        r = 0.7
        _, _, w = half_ball_rule(1, r, b)
        exact = r ** (2 + b) * math.gamma((1 + b) / 2) * math.sqrt(math.pi) / math.gamma(1 + b / 2) / (2 + b)
        assert w.sum() == pytest.approx(exact, rel=1e-13)

    def test_volume_n2(self):
        """b = 0, n = 2: half-ball volume 2 pi r^3 / 3."""
        _, _, w = half_ball_rule(2, 0.5, 0.0)
        assert w.sum() == pytest.approx(2 * math.pi * 0.125 / 3, rel=1e-13)

    def test_moment(self):
        """int_{B_1^+} y^2 dx dy = pi / 8 for b = 0."""
        x, y, w = half_ball_rule(1, 1.0, 0.0)
        assert np.sum(w * y ** 2) == pytest.approx(math.pi / 8, rel=1e-13)


class TestDoubling:
    """Doubling quotients."""

    def test_constant(self):
        """A constant gives 2^{(n+1)/2} = 2 for n = 1, b = 0."""
        tower = FieldTower([lambda x, y: np.ones(len(y))], 0.0)
        rep = doubling_quotients(tower, (0.4, 0.2, 0.1, 0.05))
        assert np.allclose(rep.quotients, 2.0, rtol=1e-12)

    def test_extension_bounded(self):
        """The gamma = 1/2 extension of cos x has bounded quotients."""
        rep = doubling_quotients(_cos_ext(), (0.4, 0.2, 0.1, 0.05))
        assert rep.bounded and rep.constant < 10
        assert np.all(np.diff(rep.norms[0]) < 0)

    def test_cutoff_unbounded(self):
        """A field vanishing near 0 has infinite quotients at small radii."""
        def u(x, y):
            r = np.hypot(x[:, 0], y)
            return np.where(r > 0.3, (r - 0.3) ** 3, 0.0)
        rep = doubling_quotients(FieldTower([u], 0.0, extent=2.0), (0.4, 0.2, 0.1))
        assert math.isfinite(rep.quotients[0]) and not rep.bounded
        assert rep.quotients[-1] == math.inf

    def test_radius_too_large(self):
        """Doubled radii beyond the domain are rejected."""
        with pytest.raises(ValueError):
            doubling_quotients(_cos_ext(), (2.0,))


class TestVanishingOrder:
    """Log-log slopes of local norms."""

    def test_square(self):
        """x^2 has slope 5/2."""
        rep = vanishing_order(lambda x: x ** 2, (0.4, 0.2, 0.1, 0.05))
        assert rep.slope == pytest.approx(2.5, abs=1e-10)

    def test_constant(self):
        """A constant has slope 1/2."""
        rep = vanishing_order(lambda x: np.ones_like(x), (0.4, 0.2, 0.1, 0.05))
        assert rep.slope == pytest.approx(0.5, abs=1e-12)

    def test_flat(self):
        """exp(-1/|x|) has local slope above 10 at the smallest window."""
        rep = vanishing_order(lambda x: np.exp(-1 / np.abs(x)), (0.4, 0.2, 0.1, 0.05))
        assert rep.local_slopes[-1] > 10

    def test_zero(self):
        """A vanishing function has infinite order."""
        assert vanishing_order(lambda x: 0 * x, (0.4, 0.2, 0.1, 0.05)).slope == math.inf

    def test_spectral_field(self):
        """A grid field 1 - cos x behaves like x^2 / 2."""
        f = SpectralField.from_function(G64, lambda x: 1 - np.cos(x))
        assert vanishing_order(f, (0.04, 0.02, 0.01, 0.005)).slope == pytest.approx(2.5, abs=1e-3)

    def test_too_few_radii(self):
        """Fewer than four radii are rejected."""
        with pytest.raises(ValueError):
            vanishing_order(np.cos, (0.4, 0.2, 0.1))


class TestBlowup:
    """Blow-up rescaling."""

    def test_zero(self):
        """Zero fields have a degenerate denominator."""
        with pytest.raises(ValueError):
            blowup_rescale(FieldTower([lambda x, y: 0 * y], 0.0, extent=4.0), 0.5)

    @pytest.mark.parametrize("sigma", [0.25, 0.1, 0.01])
    def test_normalized(self, sigma):
        """The gamma = 1/2 extension of cos x normalizes to 1e-10."""
        t = blowup_rescale(_cos_ext(), sigma)
        assert abs(normalization_sum(t) - 1) <= 1e-10

    @pytest.mark.parametrize("gamma", [1.5, 2.5])
    def test_normalized_towers(self, gamma):
        """Higher towers normalize as well."""
        f = SpectralField.from_function(G64, lambda x: np.cos(x) + 0.5 * np.sin(2 * x))
        t = blowup_rescale(extend(f, gamma), 0.1)
        assert abs(normalization_sum(t) - 1) <= 1e-10

    def test_self_similar(self):
        """Homogeneous towers u_j = |x|^{a - 2j} rescale to the same fields."""
        a, b = 3.0, 0.3
        base = FieldTower([lambda x, y: np.hypot(x[:, 0], y) ** a,
                           lambda x, y: np.hypot(x[:, 0], y) ** (a - 2)], b, extent=4.0)
        x = np.array([[0.3], [-0.5], [0.1]])
        y = np.array([0.2, 0.6, 0.05])
        t1, t2 = blowup_rescale(base, 0.1), blowup_rescale(base, 0.003)
        for j in (0, 1):
            assert np.allclose(t1.value(j, x, y), t2.value(j, x, y), rtol=1e-12)

    def test_sigma_range(self):
        """sigma beyond a quarter of the domain is rejected."""
        with pytest.raises(ValueError):
            blowup_rescale(_cos_ext(), 1.0)


class TestTrace:
    """Trace inequality audit."""

    def test_y_independent(self):
        """No normal variation: finite ratio with the expected sides."""
        rep = trace_ratio(lambda x, y: np.cos(x) + 0 * y, 0.0, height=1.0)
        assert rep.lhs == pytest.approx(math.sqrt(math.pi), rel=1e-12)
        assert rep.bulk == pytest.approx(math.sqrt(math.pi), rel=1e-12)
        assert math.isfinite(rep.ratio)

    def test_cos_exp(self):
        """cos(x) e^{-y}, b = 0: ratio at most 4."""
        rep = trace_ratio(lambda x, y: np.cos(x) * np.exp(-y), 0.0)
        assert rep.ratio <= 4

    def test_random_draws(self):
        """Random separable functions: bounded and scale invariant."""
        rng = np.random.default_rng(42)
        for _ in range(10):
            w, g = random_trace_function(rng)
            a = trace_ratio(w, 0.3, grad=g).ratio
            b = trace_ratio(lambda x, y: 2 * w(x, y), 0.3, grad=lambda x, y: 2 * g(x, y)).ratio
            assert a <= 1 and abs(a - b) <= 1e-12 * a

    def test_extension_input(self):
        """An extension can be audited directly."""
        assert math.isfinite(trace_ratio(_cos_ext(0.75), 1 - 1.5).ratio)


class TestCaccioppoli:
    """Caccioppoli ratio."""

    def test_extension(self):
        """gamma = 1/2 extension of cos x, J = 0, r = 1: finite positive ratio."""
        rep = caccioppoli_ratio(_cos_ext())
        assert 0 < rep.ratio < math.inf

    def test_constant(self):
        """Constants have zero left side."""
        ext = extend(SpectralField(G64, np.full(64, 3.0)), 0.5)
        assert caccioppoli_ratio(ext).ratio == 0.0

    def test_scaling(self):
        """u -> 2u with g -> 2g leaves the ratio unchanged."""
        f = SpectralField.from_function(G64, lambda x: np.cos(x) + 0.2 * np.sin(3 * x))
        a = caccioppoli_ratio(extend(f, 0.5), J=1).ratio
        b = caccioppoli_ratio(extend(SpectralField(G64, 2 * f.values), 0.5), J=1).ratio
        assert abs(a - b) <= 1e-12 * a


class TestInterpolation:
    """Interpolation inequality ratio."""

    def test_zero(self):
        """u = 0 gives ratio 0."""
        assert interpolation_ratio(SpectralField(PeriodicGrid(1, 128), np.zeros(128)), 2, 2.5).ratio == 0.0

    def test_single_mode(self):
        """cos(kx): mode-wise value reached as the cutoff effects fade with k."""
        g = PeriodicGrid(1, 128)
        dev = []
        for k in (10, 20, 40):
            rep = interpolation_ratio(SpectralField.from_function(g, lambda x: np.cos(k * x)), 2, 2.5)
            local = math.sqrt(0.5 + math.sin(2 * k * 0.5) / (4 * k * 0.5))  # |cos kx| on (-1/2, 1/2)
            assert rep.lhs == pytest.approx(k ** 4 * local, rel=1e-10)
            dev.append(abs(rep.ratio / (rep.lhs / ((1 + k * k) ** 2 * rep.l2)) - 1))
        assert dev[0] > dev[1] > dev[2] and dev[2] < 0.02

    def test_random_sweep(self):
        """sup over 20 draws at (2.5, 2), r = 0.5, is at most 10; scale invariant."""
        g = PeriodicGrid(1, 128)
        rng = np.random.default_rng(42)
        for _ in range(20):
            u = random_bandlimited(g, 8, rng)
            a = interpolation_ratio(u, 2, 2.5).ratio
            b = interpolation_ratio(SpectralField(g, 3 * u.values), 2, 2.5).ratio
            assert a <= 10 and abs(a - b) <= 1e-12 * a

    def test_bad_index(self):
        """j > floor(gamma) is rejected."""
        with pytest.raises(ValueError):
            interpolation_ratio(SpectralField.from_function(PeriodicGrid(1, 128), np.cos), 3, 2.5)


class TestMasked:
    """Smallness on measurable sets."""

    def test_everything(self):
        """E = everything gives zero left side."""
        ext = _cos_ext(0.5, 256)
        rep = masked_smallness(ext, MaskedSet.everything(ext.grid))
        assert np.all(rep.lhs == 0) and np.all(rep.epsilon == 0)

    def test_density_profile(self):
        """The density-one mask has density increasing toward 1."""
        E = MaskedSet.density_one(PeriodicGrid(1, 1024))
        d = E.density((0.4, 0.2, 0.1, 0.05))
        assert np.all((d >= 0) & (d <= 1)) and np.all(np.diff(d) >= 0) and d[-1] == 1.0

    def test_density_one_decreasing(self):
        """epsilon(r) decreases over r in {0.4, 0.2, 0.1}."""
        g = PeriodicGrid(1, 1024)
        f = SpectralField.from_function(g, lambda x: 1 + 0.5 * np.cos(x) + 0.2 * np.sin(3 * x))
        ext = extend(f, 0.5)
        eps = masked_smallness(ext, MaskedSet.density_one(g)).epsilon
        assert np.all(np.diff(eps) < 0)

    def test_half_line_control(self):
        """The half line keeps epsilon away from 0."""
        g = PeriodicGrid(1, 1024)
        ext = extend(SpectralField.from_function(g, lambda x: 1 + 0.5 * np.cos(x)), 0.5)
        eps = masked_smallness(ext, MaskedSet.half_line(g)).epsilon
        assert eps.min() >= 0.5 * eps.max()


class TestAntilocality:
    """Discrete antilocality."""

    @pytest.mark.parametrize("gamma", [0.3, 0.5, 0.75, 1.5, 2.5])
    @pytest.mark.parametrize("size", [5, 8, 12, 16, 48, 56, 64])
    def test_nonlocal_trivial(self, L_spec, gamma, size):
        """Non-integer powers: dimension 0 for small and large windows."""
        assert antilocality_nullspace(L_spec, gamma, size).dimension == 0

    def test_conditioning_near_half(self, L_spec):
        """The smallest singular value decays toward |W| = N/2."""
        smin = [antilocality_nullspace(L_spec, 0.5, s).singular_values[min(2 * s, 64) - 1]
                for s in (8, 16, 24, 32)]
        assert all(b < a for a, b in zip(smin, smin[1:]))

    @pytest.mark.parametrize("size", [3, 5, 8, 16, 61])
    def test_local_control(self, L_fd, size):
        """gamma = 1 with the local stencil has a nontrivial kernel."""
        assert antilocality_nullspace(L_fd, 1.0, size).dimension > 0

    def test_full_grid(self, L_spec):
        """W = everything gives dimension 0."""
        assert antilocality_nullspace(L_spec, 0.5, np.arange(64)).dimension == 0

    def test_window_checks(self, L_spec):
        """Windows of size < 2 or out of range are rejected."""
        with pytest.raises(ValueError):
            antilocality_nullspace(L_spec, 0.5, 1)
        with pytest.raises(ValueError):
            antilocality_nullspace(L_spec, 0.5, [0, 64])


class TestRunge:
    """Discrete Runge approximation."""

    OMEGA = np.arange(24, 40)
    W = np.arange(44, 60)

    def test_realizable(self, L_fd):
        """Targets in the range are recovered to 1e-8."""
        P = poisson_matrix(L_fd, 0.5, None, self.OMEGA, self.W)
        v = P @ np.random.default_rng(1).normal(size=16)
        assert runge_approximate(L_fd, 0.5, None, self.OMEGA, self.W, v).relative_error <= 1e-8

    def test_smooth_target(self, L_fd):
        """Gaussian bump: relative error at most 0.05 with |W| = 16, monotone in |W|."""
        x = G64.centered_coordinates()[0][self.OMEGA]
        v = np.exp(-((x - x.mean()) / 0.3) ** 2)
        errs = [runge_approximate(L_fd, 0.5, None, self.OMEGA, self.W[:s], v).relative_error
                for s in (1, 4, 16)]
        assert errs[-1] <= 0.05 and errs[0] > errs[1] > errs[2]

    def test_potential(self, L_fd):
        """A positive potential keeps the block invertible."""
        v = np.ones(16)
        rep = runge_approximate(L_fd, 0.5, 0.3, self.OMEGA, self.W, v)
        assert np.isfinite(rep.error)

    def test_overlap(self, L_fd):
        """Omega and W must be disjoint."""
        with pytest.raises(ValueError):
            poisson_matrix(L_fd, 0.5, None, self.OMEGA, np.arange(30, 50))

    def test_singular_block(self, L_fd):
        """A potential cancelling an eigenvalue of the block is rejected."""
        A = L_fd.power_matrix(0.5)[np.ix_(self.OMEGA, self.OMEGA)]
        lam = np.linalg.eigvalsh(A)[0]
        with pytest.raises(ValueError):
            poisson_matrix(L_fd, 0.5, -lam, self.OMEGA, self.W)


class TestPotential:
    """Manufactured potentials."""

    def test_constant(self):
        """u = 1 gives q = 0."""
        rep = manufactured_potential(SpectralField(G64, np.ones(64)), 0.5, 0.5)
        assert np.allclose(rep.q, 0, atol=1e-14)

    def test_residual(self):
        """u = 2 + cos x at gamma = 1/2 reconstructs to 1e-10."""
        u = SpectralField.from_function(G64, lambda x: 2 + np.cos(x))
        rep = manufactured_potential(u, 0.5, 1.0)
        assert rep.mask.all() and rep.residual <= 1e-10
        assert np.allclose(rep.q, -np.cos(G64.axis()) / (2 + np.cos(G64.axis())), atol=1e-12)

    def test_hardy(self):
        """The Hardy audit reports a finite sup."""
        u = SpectralField.from_function(G64, lambda x: 1 + 0.5 * np.sin(x))
        assert math.isfinite(manufactured_potential(u, 0.75, 0.1).hardy)

    def test_below_threshold(self):
        """Thresholds above |u| everywhere are rejected."""
        with pytest.raises(ValueError):
            manufactured_potential(SpectralField(G64, np.ones(64)), 0.5, 2.0)


class TestHomogeneity:
    """Degree-zero homogeneity of the audited ratios."""

    @settings(max_examples=10)
    @given(scale=st.floats(1e-3, 1e3), seed=st.integers(0, 1000))
    def test_weighted_norms_linear(self, scale, seed):
        """Weighted norms scale linearly."""
        w, _ = random_trace_function(np.random.default_rng(seed))
        t1 = FieldTower([lambda x, y: w(x[:, 0], y)], 0.2)
        t2 = FieldTower([lambda x, y: scale * w(x[:, 0], y)], 0.2)
        assert weighted_norms(t2, 0.5)[0] == pytest.approx(scale * weighted_norms(t1, 0.5)[0], rel=1e-12)
