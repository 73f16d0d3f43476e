"""Modified Bessel functions of the second kind and the kernels built on them.

``bessel_k`` evaluates :math:`K_\\nu(t)` for real order and positive argument
with Temme's method.  The order is reduced to :math:`|\\mu| \\le 1/2`, the pair
:math:`K_\\mu, K_{\\mu+1}` is computed by a power series (``t < 2``) or by
Steed's continued fraction (``t >= 2``), and the upward recurrence

.. math:: K_{\\mu+1}(t) = \\frac{2\\mu}{t} K_\\mu(t) + K_{\\mu-1}(t)

which is stable for :math:`K`, lifts the result to the requested order.
Everything is vectorized over ``t`` for a scalar order.

The normalized profiles :math:`\\phi_\\gamma(t) = t^\\gamma K_\\gamma(t)` and
the Poisson kernel of the extension are defined here as well.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate

_EPS = 1e-16
_MAX_ITER = 10000

# Taylor coefficients of 1/Gamma(z) about z = 0 (coefficient of z^k at index k).
_RGAMMA_TAYLOR = np.array([
    0.0,
    1.0,
    0.57721566490153286061,
    -0.65587807152025388108,
    -0.042002635034095235529,
    0.1665386113822914895,
    -0.042197734555544336748,
    -0.0096219715278769735621,
    0.0072189432466630995424,
    -0.0011651675918590651121,
    -0.00021524167411495097282,
    0.00012805028238811618615,
    -0.000020134854780788238656,
    -1.2504934821426706573e-6,
    1.1330272319816958824e-6,
    -2.0563384169776071035e-7,
    6.1160951044814158179e-9,
    5.0020076444692229301e-9,
    -1.1812745704870201446e-9,
    1.0434267116911005105e-10,
    7.782263439905071254e-12,
    -3.6968056186422057082e-12,
    5.100370287454475979e-13,
    -2.0583260535665067832e-14,
    -5.3481225394230179824e-15,
    1.2267786282382607902e-15,
    -1.1812593016974587695e-16,
])


def _temme_gammas(mu: float) -> tuple[float, float, float, float]:
    """Return gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu) for |mu| <= 1/2.

    gam1 = (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu) is evaluated from the
    even part of the 1/Gamma series so that it has no cancellation near 0.
    """
    c = _RGAMMA_TAYLOR
    # 1/Gamma(1+x) = sum_k c[k] x^(k-1)
    even = c[2::2]  # c2, c4, ...
    odd = c[1::2]  # c1, c3, ...
    mu2 = mu * mu
    gam1 = -np.polynomial.polynomial.polyval(mu2, even)
    gam2 = np.polynomial.polynomial.polyval(mu2, odd)
    gampl = gam2 - mu * gam1
    gammi = gam2 + mu * gam1
    return float(gam1), float(gam2), float(gampl), float(gammi)


def _k_pair_small(mu: float, x: np.ndarray, scaled: bool) -> tuple[np.ndarray, np.ndarray]:
    gam1, gam2, gampl, gammi = _temme_gammas(mu)
    x2 = 0.5 * x
    pimu = math.pi * mu
    fact = 1.0 if abs(pimu) < _EPS else pimu / math.sin(pimu)
    d = -np.log(x2)
    e = mu * d
    fact2 = np.where(np.abs(e) < _EPS, 1.0, np.sinh(e) / np.where(e == 0, 1.0, e))
    ff = fact * (gam1 * np.cosh(e) + gam2 * fact2 * d)
    total = ff.copy()
    e = np.exp(e)
    p = 0.5 * e / gampl
    q = 0.5 / (e * gammi)
    c = np.ones_like(x)
    d2 = x2 * x2
    total1 = p.copy()
    for i in range(1, _MAX_ITER):
        ff = (i * ff + p + q) / (i * i - mu * mu)
        c = c * d2 / i
        p = p / (i - mu)
        q = q / (i + mu)
        delta = c * ff
        total = total + delta
        total1 = total1 + c * (p - i * ff)
        if np.all(np.abs(delta) < np.abs(total) * _EPS):
            break
    k0 = total
    k1 = total1 * (2.0 / x)
    if scaled:
        ex = np.exp(x)
        k0, k1 = k0 * ex, k1 * ex
    return k0, k1


def _k_pair_large(mu: float, x: np.ndarray, scaled: bool) -> tuple[np.ndarray, np.ndarray]:
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = d.copy()
    delh = d.copy()
    q1 = np.zeros_like(x)
    q2 = np.ones_like(x)
    a1 = 0.25 - mu * mu
    q = np.full_like(x, a1)
    c = np.full_like(x, a1)
    a = -a1
    s = 1.0 + q * delh
    for i in range(2, _MAX_ITER):
        a -= 2 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1 = q2
        q2 = qnew
        q = q + c * qnew
        b = b + 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h = h + delh
        dels = q * delh
        s = s + dels
        if np.all(np.abs(dels) < np.abs(s) * _EPS):
            break
    h = a1 * h
    k0 = np.sqrt(math.pi / (2.0 * x)) / s
    if not scaled:
        k0 = k0 * np.exp(-x)
    k1 = k0 * (mu + x + 0.5 - h) / x
    return k0, k1


def _bessel_k(nu: float, t, scaled: bool) -> np.ndarray:
    nu = abs(float(nu))
    t_arr = np.asarray(t, dtype=float)
    if np.any(~(t_arr > 0)):
        raise ValueError("bessel_k requires t > 0")
    x = np.atleast_1d(t_arr).ravel()
    nl = int(nu + 0.5)
    mu = nu - nl
    k0 = np.empty_like(x)
    k1 = np.empty_like(x)
    small = x < 2.0
    if np.any(small):
        k0[small], k1[small] = _k_pair_small(mu, x[small], scaled)
    if np.any(~small):
        k0[~small], k1[~small] = _k_pair_large(mu, x[~small], scaled)
    xi2 = 2.0 / x
    with np.errstate(over="ignore"):  # K overflows to inf for tiny t and large order
        for i in range(1, nl + 1):
            k0, k1 = k1, (mu + i) * xi2 * k1 + k0
    out = k0.reshape(t_arr.shape)
    return out if out.ndim else float(out)


def bessel_k(nu: float, t):
    """Modified Bessel function of the second kind :math:`K_\\nu(t)`, ``t > 0``.

    Uses :math:`K_{-\\nu} = K_\\nu`.  Relative accuracy is close to machine
    precision for orders up to about 20 and arguments up to a few hundred;
    beyond ``t ~ 700`` the unscaled value underflows and
    :func:`bessel_k_scaled` should be used instead.
    """
    return _bessel_k(nu, t, scaled=False)


def bessel_k_scaled(nu: float, t):
    """Exponentially scaled :math:`e^{t} K_\\nu(t)`."""
    return _bessel_k(nu, t, scaled=True)


_T_TINY = 1e-30


def _phi_tiny(gamma: float, t: np.ndarray) -> np.ndarray:
    # two-term expansion; the remainder is O(t^2) relative
    out = np.full_like(t, phi_at_zero(gamma))
    if gamma < 1:
        out -= 2.0 ** (-gamma - 1) * math.gamma(1 - gamma) / gamma * t ** (2 * gamma)
    return out


def phi(gamma: float, t):
    """The profile :math:`\\phi_\\gamma(t) = t^\\gamma K_\\gamma(t)` for ``t >= 0``.

    At ``t = 0`` the limit :math:`2^{\\gamma-1}\\Gamma(\\gamma)` is returned,
    which requires ``gamma > 0``.  For ``gamma <= 0`` the profile blows up at
    the origin and ``t`` must be positive.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("phi requires t >= 0")
    flat = np.atleast_1d(t_arr).ravel()
    out = np.empty_like(flat)
    zero = flat == 0
    if np.any(zero):
        if gamma <= 0:
            raise ValueError("phi_gamma(0) is infinite for gamma <= 0")
        out[zero] = phi_at_zero(gamma)
    tiny = ~zero & (flat < _T_TINY)
    if np.any(tiny):
        if gamma <= 0:
            raise ValueError("phi_gamma near 0 requires gamma > 0")
        out[tiny] = _phi_tiny(gamma, flat[tiny])
    pos = flat >= _T_TINY
    if np.any(pos):
        tp = flat[pos]
        # t^g e^{-t} (e^t K) keeps large arguments away from overflow in K
        out[pos] = np.exp(gamma * np.log(tp) - tp) * bessel_k_scaled(gamma, tp)
    out = out.reshape(t_arr.shape)
    return out if out.ndim else float(out)


def phi_at_zero(gamma: float) -> float:
    """:math:`\\phi_\\gamma(0) = 2^{\\gamma-1}\\Gamma(\\gamma)` for ``gamma > 0``."""
    if gamma <= 0:
        raise ValueError("phi_gamma(0) is finite only for gamma > 0")
    return 2.0 ** (gamma - 1.0) * math.gamma(gamma)


def normalization_constant(gamma: float) -> float:
    """:math:`c_\\gamma = 1/(2^{\\gamma-1}\\Gamma(\\gamma))`, so that ``c_gamma * phi(gamma, 0) = 1``."""
    return 1.0 / phi_at_zero(gamma)


def phi_derivative(gamma: float, t):
    """Derivative :math:`\\phi_\\gamma'(t) = -t\\,\\phi_{\\gamma-1}(t)`."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("phi_derivative requires t >= 0")
    flat = np.atleast_1d(t_arr).ravel()
    out = np.zeros_like(flat)
    pos = flat > 0
    if np.any(pos):
        tp = flat[pos]
        out[pos] = -np.exp(gamma * np.log(tp) - tp) * bessel_k_scaled(gamma - 1.0, tp)
    if np.any(~pos) and gamma <= 0.5:
        # -t^gamma K_{gamma-1}(t) ~ -2^{-gamma} Gamma(1-gamma) t^{2 gamma - 1}
        out[~pos] = -np.inf if gamma < 0.5 else -(2.0 ** -gamma) * math.gamma(1.0 - gamma)
    out = out.reshape(t_arr.shape)
    return out if out.ndim else float(out)


_FD8 = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])


def recurrence_residual(nu: float, t) -> np.ndarray:
    """Relative residual of :math:`(t^\nu K_\nu)' = -t^\nu K_{\nu-1}`.

    The derivative is an eighth-order centered difference of
    :math:`t^\nu K_\nu` with step ``0.02 min(t, 1)``, so the check does not reuse
    the recurrence that :func:`phi_derivative` is built on.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t <= 0):
        raise ValueError("recurrence_residual requires t > 0")
    h = 0.02 * np.minimum(t, 1.0)
    offs = np.arange(-4, 5)
    pts = t[:, None] + offs[None, :] * h[:, None]
    vals = pts ** nu * np.asarray(bessel_k(nu, pts.ravel())).reshape(pts.shape)
    deriv = vals @ _FD8 / h
    rhs = t ** nu * np.asarray(bessel_k(nu - 1.0, t))
    return np.abs(deriv + rhs) / np.abs(rhs)


def profile(gamma: float, t):
    """Normalized extension profile :math:`c_\\gamma \\phi_\\gamma(t)`, equal to 1 at ``t = 0``."""
    return normalization_constant(gamma) * np.asarray(phi(gamma, t))


def poisson_constant(gamma: float, n: int) -> float:
    """Constant making :math:`c\\,\\varepsilon^{2\\gamma}(|x|^2+\\varepsilon^2)^{-(n+2\\gamma)/2}` a probability density."""
    return math.gamma(n / 2.0 + gamma) / (math.pi ** (n / 2.0) * math.gamma(gamma))


def poisson_kernel(gamma: float, n: int, eps: float, x):
    """Poisson kernel of the extension at height ``eps``, evaluated at points ``x``.

    ``x`` is an array of shape ``(..., n)`` (or ``(...)`` when ``n = 1``).
    The kernel has unit mass and satisfies
    :math:`P_\\varepsilon(x) = \\varepsilon^{-n} P_1(x/\\varepsilon)`.
    """
    if gamma <= 0 or eps <= 0:
        raise ValueError("poisson_kernel requires gamma > 0 and eps > 0")
    x = np.asarray(x, dtype=float)
    r2 = x * x if n == 1 and (x.ndim == 0 or x.shape[-1] != 1) else np.sum(x * x, axis=-1)
    c = poisson_constant(gamma, n)
    return c * eps ** (2 * gamma) * (r2 + eps * eps) ** (-(n + 2 * gamma) / 2.0)


def periodized_poisson_kernel(gamma: float, eps: float, x, period: float = 2 * math.pi,
                              n_images: int = 2000) -> np.ndarray:
    """Lattice sum :math:`\\sum_m P_\\varepsilon(x + m L)` in one dimension.

    The images with ``|m| <= n_images`` are summed directly.  The remaining
    algebraic tail is added with the Euler-Maclaurin formula applied to the
    asymptotic power law, which keeps slowly decaying kernels (small ``gamma``)
    tractable.
    """
    x = np.asarray(x, dtype=float)
    m = np.arange(-n_images, n_images + 1)
    z = x[..., None] + period * m
    total = poisson_kernel(gamma, 1, eps, z).sum(axis=-1)
    c = poisson_constant(gamma, 1) * eps ** (2 * gamma)
    p = 1.0 + 2.0 * gamma
    for sign in (1.0, -1.0):
        # f(s) = c ((x + sign L s)^2 + eps^2)^{-p/2}, summed over s > n_images
        s0 = n_images + 1

        def f(s):
            return c * ((x + sign * period * s) ** 2 + eps * eps) ** (-p / 2)

        def df(s):
            z = x + sign * period * s
            return -p * c * sign * period * z * (z * z + eps * eps) ** (-p / 2 - 1)

        # integral from s0 of the far-field power law (exact enough at large s)
        z0 = np.abs(x + sign * period * s0)
        integral = c * z0 ** (1 - p) / ((p - 1) * period)
        total = total + integral + 0.5 * f(s0) - df(s0) / 12.0
    return total


def kernel_tail_mass(gamma: float, n: int, alpha: int, a: float, eps: float,
                     rtol: float = 1e-10) -> float:
    """Mass of :math:`|\\nabla^\\alpha P_\\varepsilon|` outside the ball of radius ``a``.

    Supports ``n`` in {1, 2} and ``alpha`` in {0, 1, 2}; for ``n = 2`` the
    derivative tensor is measured in the Frobenius norm.  The radial integral
    is computed with adaptive quadrature; a :class:`QuadratureError` is raised
    if the reported error estimate is not below ``rtol`` relative.
    """
    if n not in (1, 2):
        raise ValueError("n must be 1 or 2")
    if alpha not in (0, 1, 2):
        raise ValueError("alpha must be 0, 1 or 2")
    if a <= 0 or eps <= 0 or gamma <= 0:
        raise ValueError("a, eps and gamma must be positive")
    c = poisson_constant(gamma, n) * eps ** (2 * gamma)
    p = (n + 2 * gamma) / 2.0
    e2 = eps * eps

    def radial(r):
        s = r * r + e2
        if alpha == 0:
            return c * s ** -p
        d1 = -2 * p * r * c * s ** (-p - 1)
        if alpha == 1:
            return abs(d1)
        d2 = c * (-2 * p * s ** (-p - 1) + 4 * p * (p + 1) * r * r * s ** (-p - 2))
        if n == 1:
            return abs(d2)
        return math.hypot(d2, d1 / r)

    measure = (lambda r: 2.0) if n == 1 else (lambda r: 2 * math.pi * r)
    # split at the sign change of the second derivative to help quad
    breaks = [a]
    if alpha == 2:
        r_inflect = eps / math.sqrt(2 * p + 1)
        if r_inflect > a:
            breaks.append(r_inflect)
    breaks.append(max(breaks[-1], a) * 10 + 10 * eps)
    total, err = 0.0, 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        v, e = integrate.quad(lambda r: measure(r) * radial(r), lo, hi, epsabs=0, epsrel=rtol, limit=200)
        total += v
        err += e
    v, e = integrate.quad(lambda r: measure(r) * radial(r), breaks[-1], np.inf, epsabs=0, epsrel=rtol, limit=200)
    total += v
    err += e
    if not err <= 10 * rtol * abs(total) + 1e-300:
        raise QuadratureError(f"tail mass quadrature did not converge (est. error {err:.3e})")
    return total


class QuadratureError(RuntimeError):
    """Raised when a quadrature fails to reach its tolerance."""
