"""Unique-continuation experiments on extensions and discrete operators.

Half-ball norms ``|y^{b/2} u|_{L^2(B_r^+)}`` are computed with polar
Gauss-Jacobi rules that absorb the weight ``y^b`` and the radial Jacobian, so
the degenerate weight is integrated exactly and the blow-up normalization is
exact up to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg, special

from .extension import ExtensionField
from .grid import PeriodicGrid, SpectralField, fractional_laplacian, sobolev_norm
from .varcoef import DiscreteOperator

DEFAULT_RADII = tuple(0.4 * 2.0 ** -i for i in range(4))


# -- quadrature --------------------------------------------------------------
def half_ball_rule(n: int, r: float, b: float, q: int = 32):
    """Nodes ``(x, y)`` and weights for ``int_{B_r^+} y^b F dx dy``.

    ``x`` has shape ``(P, n)``.  All heights are strictly positive.
    """
    xi, wi = special.roots_jacobi(q, 0.0, n + b)
    rho = r * (1 + xi) / 2
    w_rho = wi * (r / 2) ** (n + 1 + b)
    if n == 1:
        a = (b - 1) / 2
        xc, wc = special.roots_jacobi(q, a, a)
        th = np.arccos(xc)
        R, TH = np.meshgrid(rho, th, indexing="ij")
        W = np.outer(w_rho, wc)
        x = (R * np.cos(TH)).reshape(-1, 1)
        y = (R * np.sin(TH)).ravel()
        return x, y, W.ravel()
    if n == 2:
        # mu = cos of the angle to the normal axis, weight mu^b on (0, 1)
        xm, wm = special.roots_jacobi(q, 0.0, b)
        mu = (1 + xm) / 2
        w_mu = wm / 2 ** (1 + b)
        psi = 2 * math.pi * np.arange(2 * q) / (2 * q)
        w_psi = np.full(2 * q, 2 * math.pi / (2 * q))
        R, MU, PSI = np.meshgrid(rho, mu, psi, indexing="ij")
        W = w_rho[:, None, None] * w_mu[None, :, None] * w_psi[None, None, :]
        s = np.sqrt(1 - MU ** 2)
        x = np.stack([(R * s * np.cos(PSI)).ravel(), (R * s * np.sin(PSI)).ravel()], axis=-1)
        y = (R * MU).ravel()
        return x, y, W.ravel()
    raise ValueError("n must be 1 or 2")


def boundary_ball_rule(n: int, r: float, q: int = 64):
    """Nodes and weights for ``int_{B'_r} F dx'``."""
    if n == 1:
        x, w = special.roots_legendre(q)
        return (r * x).reshape(-1, 1), r * w
    if n == 2:
        xi, wi = special.roots_jacobi(q, 0.0, 1.0)
        rho, w_rho = r * (1 + xi) / 2, wi * (r / 2) ** 2
        psi = 2 * math.pi * np.arange(2 * q) / (2 * q)
        R, P = np.meshgrid(rho, psi, indexing="ij")
        W = np.outer(w_rho, np.full(2 * q, 2 * math.pi / (2 * q)))
        return np.stack([(R * np.cos(P)).ravel(), (R * np.sin(P)).ravel()], axis=-1), W.ravel()
    raise ValueError("n must be 1 or 2")


# -- field towers ------------------------------------------------------------
class FieldTower:
    """Fields ``u_0, .., u_m`` of the half-space system evaluated pointwise.

    Wraps an :class:`ExtensionField` (the tower ``u_{j+1} = Delta_b u_j``)
    or explicit callables ``u_j(x, y)``; gradients of callables default to
    fourth-order central differences.
    """

    def __init__(self, values: Sequence[Callable], b: float, n: int = 1,
                 gradients: Sequence[Callable] | None = None, extent: float = math.inf):
        self._values = list(values)
        self._grads = list(gradients) if gradients is not None else None
        self.b = float(b)
        self.n = n
        self.extent = extent

    @classmethod
    def from_extension(cls, ext: ExtensionField, normalization: str = "tower") -> "FieldTower":
        vals = [(lambda x, y, j=j: ext.evaluate(x, y, j, normalization=normalization))
                for j in range(ext.m + 1)]
        grads = [(lambda x, y, j=j: ext.gradient(x, y, j, normalization=normalization))
                 for j in range(ext.m + 1)]
        return cls(vals, ext.b, ext.n, grads, extent=ext.grid.period / 2)

    @property
    def m(self) -> int:
        return len(self._values) - 1

    def value(self, j: int, x, y) -> np.ndarray:
        return np.asarray(self._values[j](np.asarray(x, float).reshape(-1, self.n), y), float)

    def gradient(self, j: int, x, y, h: float = 1e-4) -> np.ndarray:
        x = np.asarray(x, float).reshape(-1, self.n)
        y = np.asarray(y, float)
        if self._grads is not None:
            return np.asarray(self._grads[j](x, y), float)
        comps = []
        for d in range(self.n + 1):
            def shifted(t):
                xs, ys = x.copy(), y.copy()
                if d < self.n:
                    xs[:, d] += t
                else:
                    ys = ys + t
                return self.value(j, xs, ys)
            # one-sided in y would be needed at y = 0; quadrature nodes keep y > h
            comps.append((8 * (shifted(h) - shifted(-h)) - (shifted(2 * h) - shifted(-2 * h))) / (12 * h))
        return np.stack(comps, axis=-1)


def _as_tower(fields) -> FieldTower:
    if isinstance(fields, FieldTower):
        return fields
    if isinstance(fields, ExtensionField):
        return FieldTower.from_extension(fields)
    raise TypeError("expected an ExtensionField or a FieldTower")


def weighted_norms(tower: FieldTower, r: float, q: int = 32, gradient: bool = False) -> np.ndarray:
    """``|y^{b/2} u_j|_{L^2(B_r^+)}`` (or of ``grad u_j``) for ``j = 0..m``."""
    x, y, w = half_ball_rule(tower.n, r, tower.b, q)
    out = np.empty(tower.m + 1)
    for j in range(tower.m + 1):
        if gradient:
            g = tower.gradient(j, x, y)
            out[j] = math.sqrt(float(np.sum(w * np.sum(g * g, axis=-1))))
        else:
            v = tower.value(j, x, y)
            out[j] = math.sqrt(float(np.sum(w * v * v)))
    return out


# -- doubling ------------------------------------------------------------------
@dataclass
class RadialReport:
    """Per-radius weighted norms and doubling quotients.

    ``norms[j, l]`` is the norm of ``u_j`` on ``B_{r_l}^+``; ``outer`` and
    ``outer_grad`` hold the norms of ``u_j`` and ``grad u_j`` on ``B_{2 r_l}^+``.
    """

    radii: np.ndarray
    norms: np.ndarray
    outer: np.ndarray
    outer_grad: np.ndarray
    quotients: np.ndarray
    caveat: str = ("radii probe the full set; the restriction to intervals around the "
                   "vanishing-order radii is not observable at this scale")

    @property
    def constant(self) -> float:
        return float(np.max(self.quotients))

    @property
    def bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.quotients)))


def doubling_quotients(fields, radii: Sequence[float] = DEFAULT_RADII, q: int = 32) -> RadialReport:
    """Measure the doubling quotient at each radius.

    ``Q(r) = [sum_j r^{2j} |u_j|_{B_2r} + sum_j r^{2j+1} |grad u_j|_{B_2r}]
    / sum_j r^{2j} |u_j|_{B_r}`` with weighted norms; ``Q = inf`` where the
    denominator vanishes.
    """
    tower = _as_tower(fields)
    radii = np.sort(np.asarray(radii, float))[::-1]
    if np.any(radii <= 0):
        raise ValueError("radii must be positive")
    if 2 * radii[0] > tower.extent:
        raise ValueError("the largest doubled radius exceeds the field's domain")
    J = tower.m + 1
    inner = np.empty((J, len(radii)))
    outer = np.empty((J, len(radii)))
    outer_g = np.empty((J, len(radii)))
    Q = np.empty(len(radii))
    for l, r in enumerate(radii):
        inner[:, l] = weighted_norms(tower, r, q)
        outer[:, l] = weighted_norms(tower, 2 * r, q)
        outer_g[:, l] = weighted_norms(tower, 2 * r, q, gradient=True)
        pw = r ** (2 * np.arange(J))
        num = float(np.sum(pw * outer[:, l]) + r * np.sum(pw * outer_g[:, l]))
        den = float(np.sum(pw * inner[:, l]))
        Q[l] = num / den if den > 0 else math.inf
    return RadialReport(radii, inner, outer, outer_g, Q)


# -- vanishing order -------------------------------------------------------------
@dataclass
class VanishingReport:
    radii: np.ndarray
    norms: np.ndarray
    slope: float
    local_slopes: np.ndarray


def _periodic_callable(f) -> tuple[Callable, int]:
    if isinstance(f, SpectralField):
        return (lambda x: f.evaluate(x)), f.grid.n
    return f, 1


def vanishing_order(f, radii: Sequence[float], q: int = 64) -> VanishingReport:
    """Least-squares slope of ``log |u|_{L^2(B_r)}`` against ``log r``.

    ``f`` is a :class:`SpectralField` (the origin is the grid point 0) or a
    callable of ``x`` (``n = 1``).  A vanishing norm gives order ``+inf``.
    """
    radii = np.sort(np.asarray(radii, float))[::-1]
    if len(radii) < 4:
        raise ValueError("at least four radii are required")
    func, n = _periodic_callable(f)
    norms = np.empty(len(radii))
    for l, r in enumerate(radii):
        x, w = boundary_ball_rule(n, r, q)
        v = np.asarray(func(x if n > 1 else x[:, 0]), float)
        norms[l] = math.sqrt(float(np.sum(w * v * v)))
    if np.any(norms == 0):
        return VanishingReport(radii, norms, math.inf, np.full(len(radii) - 1, math.inf))
    lr, ln = np.log(radii), np.log(norms)
    slope = float(np.polyfit(lr, ln, 1)[0])
    local = np.diff(ln) / np.diff(lr)
    return VanishingReport(radii, norms, slope, local)


# -- blow-up ---------------------------------------------------------------------
class RescaledTower(FieldTower):
    """``u_{sigma,j}(x) = sigma^{-2(m-j)} u_j(sigma x) / D``."""

    def __init__(self, base: FieldTower, sigma: float, denominator: float):
        m = base.m
        vals = [(lambda x, y, j=j: sigma ** (-2 * (m - j)) * base.value(j, sigma * x, sigma * y) / denominator)
                for j in range(m + 1)]
        grads = [(lambda x, y, j=j: sigma ** (1 - 2 * (m - j)) * base.gradient(j, sigma * x, sigma * y) / denominator)
                 for j in range(m + 1)]
        super().__init__(vals, base.b, base.n, grads, extent=base.extent / sigma)
        self.sigma = sigma
        self.denominator = denominator


def blowup_rescale(fields, sigma: float, q: int = 32, r_max: float | None = None) -> RescaledTower:
    """Rescale the tower at scale ``sigma`` so that ``sum_j |y^{b/2} u_{sigma,j}|_{B_1^+} = 1``."""
    tower = _as_tower(fields)
    r_max = tower.extent if r_max is None else r_max
    if not 0 < sigma <= r_max / 4:
        raise ValueError(f"sigma must lie in (0, {r_max / 4:.6g}]")
    m, n, b = tower.m, tower.n, tower.b
    norms = weighted_norms(tower, sigma, q)
    k = np.arange(m + 1)
    D = float(np.sum(sigma ** (-(n + 1) / 2 - b / 2 - 2 * (m - k)) * norms))
    if not D > 0 or not math.isfinite(D):
        raise ValueError("degenerate normalization: all weighted norms vanish on B_sigma")
    return RescaledTower(tower, sigma, D)


def normalization_sum(tower: FieldTower, q: int = 32) -> float:
    return float(np.sum(weighted_norms(tower, 1.0, q)))


# -- trace inequality --------------------------------------------------------------
@dataclass
class TraceReport:
    taus: np.ndarray
    ratios: np.ndarray
    lhs: float
    bulk: float
    bulk_grad: float

    @property
    def ratio(self) -> float:
        """``lhs / min_tau rhs(tau)``, i.e. the largest ratio over the sweep."""
        return float(np.max(self.ratios))


def trace_ratio(w, b: float, taus: Sequence[float] = tuple(np.geomspace(1, 1e3, 31)),
                grad: Callable | None = None, period: float = 2 * math.pi, height: float = 4.0,
                nx: int = 128, ny: int = 48) -> TraceReport:
    """Audit ``|w|_{L^2} <= C (tau^{(1+b)/2} |y^{b/2} w| + tau^{(b-1)/2} |y^{b/2} grad w|)``.

    ``w`` is an :class:`ExtensionField` (its ``u_0``) or a callable
    ``w(x, y)`` on the strip ``[0, period) x (0, height)``; norms use the
    trapezoid rule in ``x`` and Gauss-Jacobi in ``y``.
    """
    if isinstance(w, ExtensionField):
        ext = w
        period = ext.grid.period
        func = lambda x, y: ext.evaluate(x, y)
        grad = lambda x, y: ext.gradient(x, y)
    else:
        func = w
    xs = period * np.arange(nx) / nx
    wx = np.full(nx, period / nx)
    eta, we = special.roots_jacobi(ny, 0.0, b)
    ys = height * (1 + eta) / 2
    wy = we * (height / 2) ** (1 + b)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    W = np.outer(wx, wy).ravel()
    xf, yf = X.ravel(), Y.ravel()
    vals = np.asarray(func(xf, yf), float)
    if grad is None:
        h = 1e-4
        gx = (8 * (func(xf + h, yf) - func(xf - h, yf)) - (func(xf + 2 * h, yf) - func(xf - 2 * h, yf))) / (12 * h)
        gy = (8 * (func(xf, yf + h) - func(xf, yf - h)) - (func(xf, yf + 2 * h) - func(xf, yf - 2 * h))) / (12 * h)
        g2 = gx * gx + gy * gy
    else:
        g = np.asarray(grad(xf, yf), float)
        g2 = np.sum(g * g, axis=-1)
    trace = np.asarray(func(xs, np.zeros(nx)), float)
    lhs = math.sqrt(float(np.sum(wx * trace ** 2)))
    A = math.sqrt(float(np.sum(W * vals ** 2)))
    B = math.sqrt(float(np.sum(W * g2)))
    taus = np.asarray(taus, float)
    if np.any(taus < 1):
        raise ValueError("tau must be at least 1")
    rhs = taus ** ((1 + b) / 2) * A + taus ** ((b - 1) / 2) * B
    ratios = np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), 0.0)
    return TraceReport(taus, ratios, lhs, A, B)


def random_trace_function(rng: np.random.Generator, modes: int = 4):
    """Separable test function ``sum_k a_k cos(k x + p_k) e^{-c_k y}`` with its gradient."""
    k = rng.integers(0, 6, size=modes)
    a = rng.normal(size=modes)
    p = rng.uniform(0, 2 * math.pi, size=modes)
    c = rng.uniform(0.2, 3.0, size=modes)

    def w(x, y):
        x, y = np.asarray(x, float)[..., None], np.asarray(y, float)[..., None]
        return np.sum(a * np.cos(k * x + p) * np.exp(-c * y), axis=-1)

    def grad(x, y):
        x, y = np.asarray(x, float)[..., None], np.asarray(y, float)[..., None]
        e = np.exp(-c * y)
        return np.stack([np.sum(-a * k * np.sin(k * x + p) * e, axis=-1),
                         np.sum(-a * c * np.cos(k * x + p) * e, axis=-1)], axis=-1)

    return w, grad


# -- Caccioppoli ---------------------------------------------------------------------
@dataclass
class CaccioppoliReport:
    lhs: float
    rhs: float
    terms: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        if self.lhs == 0:
            return 0.0
        return self.lhs / self.rhs


def caccioppoli_ratio(u: ExtensionField, f: Callable | None = None, g: SpectralField | None = None,
                      r: float = 1.0, J: int = 0, q: int = 32, normalization: str = "tower") -> CaccioppoliReport:
    """Both sides of the tangential Caccioppoli inequality for ``u_0`` of an extension (``n = 1``).

    ``f(x, y, j)`` returns ``d'^j f``; ``None`` means ``f = 0``.  ``g``
    defaults to the weighted Neumann trace of ``u`` when ``u`` solves the
    scalar problem (``m = 0``).
    """
    if u.n != 1:
        raise NotImplementedError("only n = 1 is supported")
    if J < 0 or (u.m > 0 and J > 2 * u.m):
        raise ValueError("J must satisfy 0 <= J <= 2m (any J for m = 0)")
    if g is None:
        g = u.flux_limit(0, normalization=normalization) if u.m == 0 else None
    b = u.b
    xo, yo, wo = half_ball_rule(1, r / 2, b, q)
    xi, yi, wi = half_ball_rule(1, r, b, q)
    xb, wb = boundary_ball_rule(1, r, 2 * q)
    lhs = 0.0
    t_u = t_f = t_g = 0.0
    for j in range(J + 1):
        a = (j,)
        gx = u.evaluate(xo, yo, alpha=(j + 1,), normalization=normalization)
        gy = u.evaluate(xo, yo, alpha=a, dy=1, normalization=normalization)
        lhs += r ** j * math.sqrt(float(np.sum(wo * (gx * gx + gy * gy))))
        v = u.evaluate(xi, yi, alpha=a, normalization=normalization)
        t_u += r ** (j - 1) * math.sqrt(float(np.sum(wi * v * v)))
        if f is not None:
            fv = np.asarray(f(xi, yi, j), float)
            t_f += r ** (j + 1) * math.sqrt(float(np.sum(wi * fv * fv)))
        if g is not None:
            gb = g.evaluate(xb[:, 0], alpha=a)
            ub = u.evaluate(xb, np.zeros(len(wb)), alpha=a, normalization=normalization)
            t_g += r ** j * math.sqrt(float(np.sum(wb * np.abs(gb * ub))))
    rhs = t_u + t_f + t_g
    return CaccioppoliReport(lhs, rhs, {"u": t_u, "f": t_f, "g": t_g})


# -- interpolation inequality ----------------------------------------------------------
def smooth_cutoff(x, inner: float, outer: float) -> np.ndarray:
    """C-infinity cutoff equal to 1 for ``|x| <= inner`` and 0 for ``|x| >= outer``."""
    d = np.abs(np.asarray(x, float))
    s = np.clip((d - inner) / (outer - inner), 0.0, 1.0)

    def psi(t):
        return np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)

    return psi(1 - s) / (psi(1 - s) + psi(s))


@dataclass
class InterpolationReport:
    lhs: float
    l2: float
    sobolev: float
    ratio: float


def interpolation_ratio(u: SpectralField, j: int, gamma: float, r: float = 0.5,
                        q: int = 128) -> InterpolationReport:
    """``|(-Delta)^j u|_{L^2(B'_r)} / (|u eta|^{1-j/gamma} |u eta|_{H^{2 gamma}}^{j/gamma})``.

    ``eta`` equals 1 on ``B'_{2r}`` and vanishes outside ``B'_{4r}``; the
    torus norms are scaled to the unnormalized measure.
    """
    if not 1 <= j <= math.floor(gamma):
        raise ValueError("need 1 <= j <= floor(gamma)")
    grid = u.grid
    if 4 * r > grid.period / 2:
        raise ValueError("the cutoff support B'_{4r} does not fit in the periodic cell")
    Lju = fractional_laplacian(u, j)
    x, w = boundary_ball_rule(grid.n, r, q)
    v = Lju.evaluate(x if grid.n > 1 else x[:, 0])
    lhs = math.sqrt(float(np.sum(w * v * v)))
    cc = grid.centered_coordinates()
    dist = np.sqrt(sum(c * c for c in cc))
    ueta = SpectralField(grid, u.values * smooth_cutoff(dist, 2 * r, 4 * r))
    vol = math.sqrt(grid.period ** grid.n)
    l2 = vol * sobolev_norm(ueta, 0.0)
    hs = vol * sobolev_norm(ueta, 2 * gamma)
    if lhs == 0:
        return InterpolationReport(0.0, l2, hs, 0.0)
    theta = j / gamma
    return InterpolationReport(lhs, l2, hs, lhs / (l2 ** (1 - theta) * hs ** theta))


# -- measurable-set smallness ----------------------------------------------------------
def _periodic_distance(grid: PeriodicGrid) -> np.ndarray:
    cc = grid.centered_coordinates()
    return np.sqrt(sum(c * c for c in cc))


@dataclass
class MaskedSet:
    """Boolean mask ``E`` on the tangential grid (``True`` = in ``E``)."""

    grid: PeriodicGrid
    mask: np.ndarray

    def __post_init__(self) -> None:
        self.mask = np.asarray(self.mask, bool)
        if self.mask.shape != self.grid.shape:
            raise ValueError("mask shape does not match the grid")

    @classmethod
    def everything(cls, grid: PeriodicGrid) -> "MaskedSet":
        return cls(grid, np.ones(grid.shape, bool))

    @classmethod
    def half_line(cls, grid: PeriodicGrid) -> "MaskedSet":
        """``E = {x_1 >= 0}`` near the origin (density 1/2)."""
        return cls(grid, grid.centered_coordinates()[0] >= 0)

    @classmethod
    def density_one(cls, grid: PeriodicGrid, scale: float = 0.8, power: float = 1.5,
                    factor: float = 0.5) -> "MaskedSet":
        """Complement of intervals centered at ``+-scale 2^{-i}`` with lengths ``factor c^power``."""
        if grid.n != 1:
            raise NotImplementedError("density-one masks are built for n = 1")
        x = grid.centered_coordinates()[0]
        mask = np.ones(grid.shape, bool)
        i = 0
        while True:
            c = scale * 2.0 ** -i
            half = 0.5 * factor * c ** power
            # intervals shorter than a cell are below grid resolution
            if 2 * half < grid.spacing:
                break
            for sgn in (1, -1):
                mask &= ~(np.abs(x - sgn * c) < half)
            i += 1
        return cls(grid, mask)

    def density(self, radii: Sequence[float]) -> np.ndarray:
        """``|E cap B'_r| / |B'_r|`` measured by grid cells."""
        d = _periodic_distance(self.grid)
        out = []
        for r in radii:
            ball = d <= r
            out.append(float(np.sum(self.mask & ball)) / max(float(np.sum(ball)), 1.0))
        return np.array(out)


@dataclass
class MaskedReport:
    radii: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    density: np.ndarray

    @property
    def epsilon(self) -> np.ndarray:
        return np.where(self.rhs > 0, self.lhs / np.where(self.rhs > 0, self.rhs, 1.0), 0.0)


def masked_smallness(fields: ExtensionField, E: MaskedSet, radii: Sequence[float] = (0.4, 0.2, 0.1),
                     q: int = 32) -> MaskedReport:
    """Measured ``epsilon(r)`` of the smallness lemma.

    The trace ``u_0`` is replaced by zero on ``E`` (the lemma's hypothesis);
    the left side is the grid norm of the remaining trace on ``B'_r``, the
    right side ``sum_j r^{2j-(1+b)/2} |y^{b/2} u_j|_{B_r^+}``.
    """
    if E.grid != fields.grid:
        raise ValueError("mask and field live on different grids")
    radii = np.sort(np.asarray(radii, float))[::-1]
    tower = FieldTower.from_extension(fields)
    d = _periodic_distance(fields.grid)
    cell = fields.grid.spacing ** fields.grid.n
    trace = np.where(E.mask, 0.0, fields.f.values)
    lhs, rhs = [], []
    b = fields.b
    for r in radii:
        lhs.append(math.sqrt(float(np.sum(trace[d <= r] ** 2)) * cell))
        norms = weighted_norms(tower, r, q)
        pw = r ** (2 * np.arange(tower.m + 1) - (1 + b) / 2)
        rhs.append(float(np.sum(pw * norms)))
    return MaskedReport(radii, np.array(lhs), np.array(rhs), E.density(radii))


# -- discrete antilocality ------------------------------------------------------------
def _window(N: int, W) -> np.ndarray:
    if np.isscalar(W):
        size = int(W)
        if not 1 <= size <= N:
            raise ValueError("window size out of range")
        start = N // 2 - size // 2
        return np.arange(start, start + size)
    idx = np.unique(np.asarray(W, int))
    if idx.size == 0 or idx.min() < 0 or idx.max() >= N:
        raise ValueError("window indices out of range")
    return idx


@dataclass
class AntilocalityReport:
    dimension: int
    singular_values: np.ndarray
    threshold: float
    window: np.ndarray


def antilocality_nullspace(L: DiscreteOperator, gamma: float, W, rel_threshold: float = 1e-8) -> AntilocalityReport:
    """Rank deficiency of the stacked restriction ``[R_W; R_W L^gamma / |L^gamma|]``.

    The deficiency counts vectors ``phi`` supported in ``W`` whose image
    ``L^gamma phi`` is also supported in ``W``; for a nonlocal power it is 0,
    for a local operator it grows with ``|W|``.
    """
    idx = _window(L.size, W)
    if len(idx) < 2:
        raise ValueError("the window needs at least two points")
    A = L.power_matrix(gamma)
    A = A / max(np.linalg.norm(A, 2), 1e-300)
    R = np.zeros((len(idx), L.size))
    R[np.arange(len(idx)), idx] = 1.0
    S = np.vstack([R, A[idx]])
    sv = linalg.svdvals(S)
    k = min(S.shape)
    thr = rel_threshold * sv[0]
    return AntilocalityReport(int(np.sum(sv[:k] < thr)), sv, thr, idx)


# -- Runge approximation --------------------------------------------------------------
@dataclass
class RungeReport:
    f: np.ndarray
    error: float
    relative_error: float
    image: np.ndarray


def poisson_matrix(L: DiscreteOperator, gamma: float, q, omega, W, tol: float = 1e-12) -> np.ndarray:
    """``P = -(A_OO + Q)^{-1} A_OW`` with ``A = L^gamma``: exterior data on ``W`` to the solution on ``Omega``."""
    omega, W = np.asarray(omega, int), np.asarray(W, int)
    if np.intersect1d(omega, W).size:
        raise ValueError("Omega and W must be disjoint")
    A = L.power_matrix(gamma)
    qv = np.zeros(len(omega)) if q is None else np.broadcast_to(np.asarray(q, float), (len(omega),))
    B = A[np.ix_(omega, omega)] + np.diag(qv)
    smin = linalg.svdvals(B)[-1]
    if smin <= tol * max(np.linalg.norm(B, 2), 1e-300):
        raise ValueError("0 is an eigenvalue of the restricted operator (singular block)")
    return -linalg.solve(B, A[np.ix_(omega, W)], assume_a="sym")


def runge_approximate(L: DiscreteOperator, gamma: float, q, omega, W, v) -> RungeReport:
    """Least-squares exterior data on ``W`` whose solution best matches ``v`` on ``Omega``."""
    P = poisson_matrix(L, gamma, q, omega, W)
    v = np.asarray(v, float)
    f, *_ = linalg.lstsq(P, v)
    image = P @ f
    err = float(np.linalg.norm(image - v))
    nv = float(np.linalg.norm(v))
    return RungeReport(f, err, err / nv if nv > 0 else 0.0, image)


# -- manufactured potentials ------------------------------------------------------------
@dataclass
class PotentialReport:
    q: np.ndarray
    mask: np.ndarray
    residual: float
    hardy: float


def manufactured_potential(u: SpectralField, gamma: float, threshold: float) -> PotentialReport:
    """``q = -(-Delta)^gamma u / u`` where ``|u| >= threshold`` (NaN elsewhere).

    ``hardy`` is ``sup |q(x)| |x|^{2 gamma}`` over the admissible subgrid,
    with ``|x|`` the periodic distance to the origin.
    """
    mask = np.abs(u.values) >= threshold
    if not np.any(mask):
        raise ValueError("|u| is below the threshold everywhere")
    Lu = fractional_laplacian(u, gamma).values
    q = np.full(u.values.shape, np.nan)
    q[mask] = -Lu[mask] / u.values[mask]
    res = float(np.max(np.abs(Lu[mask] + q[mask] * u.values[mask])))
    scale = max(float(np.max(np.abs(Lu))), 1.0)
    d = _periodic_distance(u.grid)
    hardy = float(np.max(np.abs(q[mask]) * d[mask] ** (2 * gamma)))
    return PotentialReport(q, mask, res / scale, hardy)
