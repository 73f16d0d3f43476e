"""Degenerate elliptic extension of periodic data and its derived fields.

For data ``f`` on the torus and a non-integer order ``gamma = m + s`` the
extension to the half-cylinder ``torus x (0, inf)`` is built mode by mode.  The
profile of order ``nu`` is

    P_nu(z) = c_nu phi_nu(z),    P_nu(0) = 1,

and the tower ``u_0 = u, u_{j+1} = Delta_b u_j`` with
``Delta_b = y^{-b} d_y y^b d_y + Delta'`` has the closed form

    hat u_j(k, y) = T_j |k|^{2j} fhat_k P_{gamma - j}(|k| y),
    T_j = prod_{i<j} -(m - i) / (gamma - i - 1).

The constants ``T_j`` are the Dirichlet trace constants of the tower.  The
*trace-normalized* derived fields drop them so that their boundary values are
exactly ``(-Delta)^j f``.  The weighted normal derivative of the top field
converges to ``kappa (-Delta)^gamma f`` with
``kappa = -T_m 2^{1-2s} Gamma(1-s) / Gamma(s)``.

Boundary limits are taken from the three smallest y-nodes by Richardson
extrapolation using the known exponents of the small-``z`` expansion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import bessel
from .grid import PeriodicGrid, SpectralField, fractional_laplacian
from .order import FractionalOrder, as_order


@dataclass(frozen=True)
class ExtensionGrid:
    """Tangential grid times a geometric grid of heights."""

    grid: PeriodicGrid
    y_min: float = 1e-5
    y_max: float = 4.0
    M: int = 256

    def __post_init__(self) -> None:
        if not (0 < self.y_min < self.y_max):
            raise ValueError("need 0 < y_min < y_max")
        if self.M < 8:
            raise ValueError("need at least 8 height nodes")

    @property
    def y(self) -> np.ndarray:
        return np.geomspace(self.y_min, self.y_max, self.M)

    @property
    def log_step(self) -> float:
        return math.log(self.y_max / self.y_min) / (self.M - 1)


def tower_constants(order: FractionalOrder) -> np.ndarray:
    """Dirichlet trace constants ``T_0 .. T_m`` of the tower ``Delta_b^j u``."""
    g, m = order.gamma, order.m
    T = np.ones(m + 1)
    for i in range(m):
        T[i + 1] = T[i] * (-(m - i) / (g - i - 1))
    return T


def neumann_constant(order: FractionalOrder) -> float:
    """``kappa`` with ``y^b d_y u_m -> kappa (-Delta)^gamma f`` as ``y -> 0``."""
    s = order.s
    return -tower_constants(order)[-1] * 2.0 ** (1 - 2 * s) * math.gamma(1 - s) / math.gamma(s)


def expansion_exponents(nu: float, count: int = 2) -> list[float]:
    """Smallest positive exponents in the small-``z`` expansion of ``P_nu(z)``.

    ``z^nu K_nu(z)`` is a series in ``z^{2k}`` and ``z^{2 nu + 2k}``.
    """
    cands = sorted({2.0 * k for k in range(1, count + 2)} | {2 * nu + 2.0 * k for k in range(count + 1)})
    cands = [c for c in cands if c > 1e-12]
    out: list[float] = []
    for c in cands:
        if all(abs(c - o) > 1e-9 for o in out):
            out.append(c)
        if len(out) == count:
            break
    return out


def richardson_limit(ys: np.ndarray, values: np.ndarray, exponents: list[float]) -> np.ndarray:
    """Limit as ``y -> 0`` of ``L + sum_i A_i y^{p_i}`` fitted through ``len(ys)`` samples.

    ``values`` has the sample index first.  ``len(ys)`` must equal
    ``len(exponents) + 1``.
    """
    ys = np.asarray(ys, dtype=float)
    if len(ys) != len(exponents) + 1:
        raise ValueError("need one more sample than exponents")
    # rescale y so that the Vandermonde-type matrix is well scaled
    scale = ys.max()
    V = np.column_stack([np.ones_like(ys)] + [(ys / scale) ** p for p in exponents])
    weights = np.linalg.solve(V.T, np.eye(len(ys))[:, 0])
    return np.tensordot(weights, values, axes=(0, 0))


class ExtensionField:
    """The extension of ``f`` of order ``gamma`` and its derived tower.

    Fields are evaluated per Fourier mode from Bessel profiles, either on the
    stored height grid (:meth:`on_grid`) or at arbitrary points
    (:meth:`evaluate`).
    """

    def __init__(self, f: SpectralField, order, ygrid: ExtensionGrid | None = None):
        self.f = f
        self.order = as_order(order, f.grid.n)
        if self.order.n != f.grid.n:
            self.order = FractionalOrder(self.order.gamma, f.grid.n)
        self.grid = f.grid
        self.ygrid = ygrid if ygrid is not None else ExtensionGrid(f.grid)
        if self.ygrid.grid != f.grid:
            raise ValueError("height grid and data live on different tangential grids")
        self.T = tower_constants(self.order)
        self._cache: dict = {}

    # -- bookkeeping -------------------------------------------------------
    @property
    def m(self) -> int:
        return self.order.m

    @property
    def b(self) -> float:
        return self.order.b

    @property
    def n(self) -> int:
        return self.grid.n

    def _scale(self, j: int, normalization: str) -> float:
        if not 0 <= j <= self.m:
            raise ValueError(f"field index must be in 0..{self.m}")
        if normalization == "tower":
            return float(self.T[j])
        if normalization == "trace":
            return 1.0
        raise ValueError("normalization must be 'tower' or 'trace'")

    def mode_profile(self, j: int, kmag: np.ndarray, y: np.ndarray, dy: int = 0,
                     weighted: bool = False) -> np.ndarray:
        """Per-mode multiplier ``|k|^{2j} d_y^dy P_{gamma-j}(|k| y)`` (no tower constant).

        ``kmag`` and ``y`` broadcast.  With ``weighted=True`` and ``dy=1`` the
        factor ``y^b`` is included.
        """
        nu = self.order.gamma - j
        c = bessel.normalization_constant(nu)
        kmag, y = np.broadcast_arrays(np.asarray(kmag, float), np.asarray(y, float))
        out = np.zeros(kmag.shape)
        pos = kmag > 0
        z = kmag[pos] * y[pos]
        kp = kmag[pos]
        if dy == 0:
            out[pos] = kp ** (2 * j) * c * bessel.phi(nu, z)
            if j == 0:
                out[~pos] = 1.0
        elif dy == 1:
            # d_y P_nu(|k| y) = -c |k|^2 y phi_{nu-1}(|k| y)
            yy = y[pos]
            val = -c * kp ** (2 * j + 2) * yy * _phi_any(nu - 1, z)
            if weighted:
                val = val * yy ** self.b
            out[pos] = val
        else:
            raise ValueError("dy must be 0 or 1")
        return out

    # -- grid evaluation ---------------------------------------------------
    def on_grid(self, j: int = 0, normalization: str = "tower", dy: int = 0,
                weighted: bool = False, y: np.ndarray | None = None) -> np.ndarray:
        """Field values on ``heights x grid``; shape ``(M,) + grid.shape``."""
        key = (j, normalization, dy, weighted, None if y is None else tuple(np.asarray(y).ravel()))
        if key in self._cache:
            return self._cache[key]
        ys = self.ygrid.y if y is None else np.atleast_1d(np.asarray(y, float))
        scale = self._scale(j, normalization)
        coeffs = self.f.coefficients
        kmag = self.grid.wavenumber_magnitude()
        # evaluate the profile once per distinct |k|
        kq, inv = np.unique(np.round(kmag, 12), return_inverse=True)
        prof = self.mode_profile(j, kq[None, :], ys[:, None], dy=dy, weighted=weighted)
        full = prof[:, inv.ravel()].reshape((len(ys),) + self.grid.shape)
        spec = scale * full * coeffs[None]
        axes = tuple(range(1, self.n + 1))
        vals = np.real(np.fft.ifftn(spec, axes=axes)) * self.grid.size
        self._cache[key] = vals
        return vals

    def derived_field(self, k: int, normalization: str = "trace") -> np.ndarray:
        return self.on_grid(k, normalization)

    # -- pointwise evaluation ---------------------------------------------
    def evaluate(self, x, y, j: int = 0, alpha: tuple[int, ...] | None = None, dy: int = 0,
                 normalization: str = "tower", weighted: bool = False,
                 chunk: int = 2048) -> np.ndarray:
        """Evaluate ``d^alpha d_y^dy u_j`` at points ``(x, y)``.

        ``x`` has shape ``(P,)`` (n = 1) or ``(P, n)``; ``y`` has shape
        ``(P,)`` with ``y >= 0`` (``y = 0`` is allowed for ``dy = 0``).
        """
        scale = self._scale(j, normalization)
        x = np.asarray(x, float).reshape(-1, self.n)
        y = np.asarray(y, float).ravel()
        if x.shape[0] != y.shape[0]:
            raise ValueError("x and y must have the same number of points")
        if np.any(y < 0):
            raise ValueError("heights must be non-negative")
        from .grid import _split_nyquist
        kv, c = _split_nyquist(self.grid, self.f.coefficients)
        keep = c != 0
        kv, c = kv[keep], c[keep] * scale
        if alpha is not None:
            for d, a in enumerate(alpha):
                c = c * (1j * kv[:, d]) ** a
        kmag = np.sqrt(np.sum(kv ** 2, axis=1))
        out = np.empty(len(y))
        for start in range(0, len(y), chunk):
            sl = slice(start, start + chunk)
            yy = y[sl]
            if dy == 1 and np.any(yy == 0):
                raise ValueError("normal derivative is evaluated at y > 0 only")
            prof = np.empty((len(yy), len(kmag)))
            # y = 0 is handled inside phi; positive |k| only have non-trivial profiles
            prof[:] = self.mode_profile(j, kmag[None, :], yy[:, None], dy=dy, weighted=weighted)
            phase = np.exp(1j * x[sl] @ kv.T)
            out[sl] = np.real(np.sum(phase * prof * c[None, :], axis=1))
        return out

    def gradient(self, x, y, j: int = 0, normalization: str = "tower") -> np.ndarray:
        """Full gradient ``(d_x1, .., d_xn, d_y)`` of ``u_j``; shape ``(P, n+1)``."""
        comps = []
        for d in range(self.n):
            alpha = tuple(1 if i == d else 0 for i in range(self.n))
            comps.append(self.evaluate(x, y, j, alpha=alpha, normalization=normalization))
        comps.append(self.evaluate(x, y, j, dy=1, normalization=normalization))
        return np.stack(comps, axis=-1)

    # -- boundary limits ---------------------------------------------------
    def _smallest_nodes(self, y_min: float | None) -> np.ndarray:
        if y_min is None:
            return self.ygrid.y[:3]
        r = math.exp(self.ygrid.log_step)
        return y_min * r ** np.arange(3)

    def dirichlet_trace(self, j: int = 0, normalization: str = "tower",
                        y_min: float | None = None) -> SpectralField:
        """Extrapolated ``u_j(., 0)``."""
        ys = self._smallest_nodes(y_min)
        vals = self.on_grid(j, normalization, y=ys)
        exps = expansion_exponents(self.order.gamma - j)
        return SpectralField(self.grid, richardson_limit(ys, vals, exps))

    def weighted_flux(self, j: int, y: np.ndarray, normalization: str = "tower") -> np.ndarray:
        """``y^b d_y u_j`` at heights ``y``."""
        return self.on_grid(j, normalization, dy=1, weighted=True, y=y)

    def flux_limit(self, j: int, y_min: float | None = None, normalization: str = "tower") -> SpectralField:
        """Extrapolated ``lim y^b d_y u_j``."""
        ys = self._smallest_nodes(y_min)
        vals = self.weighted_flux(j, ys, normalization)
        s = self.order.s
        if j == self.m:
            exps = expansion_exponents(1 - s)
        else:
            nu1 = self.order.gamma - j - 1
            p = 2 - 2 * s
            exps = [p, p + min(2.0, 2 * nu1)]
        return SpectralField(self.grid, richardson_limit(ys, vals, exps))


def _phi_any(nu: float, z: np.ndarray) -> np.ndarray:
    """``z^nu K_nu(z)`` for ``z > 0`` and any real ``nu``."""
    return np.exp(nu * np.log(z) - z) * bessel.bessel_k_scaled(nu, z)


def extend(f: SpectralField, order, ygrid: ExtensionGrid | None = None) -> ExtensionField:
    """Extension of ``f`` of the given order (see :class:`ExtensionField`)."""
    return ExtensionField(f, order, ygrid)


def derived_field(f: SpectralField, order, k: int, ygrid: ExtensionGrid | None = None,
                  normalization: str = "trace") -> np.ndarray:
    """Derived field ``w_k`` on the height grid, trace-normalized by default."""
    return ExtensionField(f, order, ygrid).derived_field(k, normalization)


def neumann_trace(field_: ExtensionField, y_min: float | None = None,
                  method: str = "analytic") -> SpectralField:
    """Weighted Neumann trace of the top field, normalized to approximate ``(-Delta)^gamma f``.

    ``method='analytic'`` evaluates ``y^b d_y u_m`` per mode from the Bessel
    recurrence at the three smallest heights and extrapolates.
    ``method='direct'`` returns the same analytic flux at ``y_min`` alone,
    without extrapolation; its error decays like ``y_min^(2 - 2 s)``.
    ``method='fd'`` differentiates the stored top field along the height grid
    (second-order one-sided differences in ``log y``) as an independent check.
    """
    kappa = neumann_constant(field_.order)
    m = field_.m
    if method == "analytic":
        lim = field_.flux_limit(m, y_min=y_min)
        return SpectralField(field_.grid, lim.values / kappa)
    if method == "direct":
        y0 = field_.ygrid.y_min if y_min is None else y_min
        flux = field_.weighted_flux(m, np.array([y0]))[0]
        return SpectralField(field_.grid, flux / kappa)
    if method == "fd":
        ys = field_.ygrid.y if y_min is None else np.geomspace(y_min, field_.ygrid.y_max, field_.ygrid.M)
        u = field_.on_grid(m, y=ys[:5])
        hs = math.log(ys[1] / ys[0])
        # d_y u = (1/y) d_s u with s = log y, one-sided second order at the first node
        du = (-3 * u[0] + 4 * u[1] - u[2]) / (2 * hs) / ys[0]
        val = ys[0] ** field_.b * du
        return SpectralField(field_.grid, val / kappa)
    raise ValueError("method must be 'analytic', 'direct' or 'fd'")


def apply_Lb(values: np.ndarray, b: float, ygrid: ExtensionGrid, metric=None,
             y: np.ndarray | None = None):
    """``Delta_b`` (or ``L_b``) of a field sampled on log-uniform heights.

    Centered differences in ``s = log y`` for the normal part (fourth order
    with at least five nodes, second order with three or four) and the
    spectral Laplacian in the tangential variables.  With ``metric`` (a
    :class:`~fracext.varcoef.MetricField` or an assembled
    :class:`~fracext.varcoef.DiscreteOperator`) the tangential part is
    ``-L`` with ``L = -div(a grad)``.  Returns ``(total, normal,
    tangential)`` on the interior nodes.
    """
    operator = metric
    if operator is not None and not hasattr(operator, "matrix"):
        from .varcoef import assemble_operator
        operator = assemble_operator(operator)
    grid = ygrid.grid
    y = ygrid.y if y is None else np.asarray(y, float)
    u = np.asarray(values, float)
    M = u.shape[0]
    if M < 3 or len(y) != M:
        raise ValueError("need at least three height nodes matching the samples")
    h = float(np.log(y[1] / y[0]))
    if M >= 5:
        us = (-u[4:] + 8 * u[3:-1] - 8 * u[1:-3] + u[:-4]) / (12 * h)
        uss = (-u[4:] + 16 * u[3:-1] - 30 * u[2:-2] + 16 * u[1:-3] - u[:-4]) / (12 * h * h)
        inner = slice(2, M - 2)
    else:
        us = (u[2:] - u[:-2]) / (2 * h)
        uss = (u[2:] - 2 * u[1:-1] + u[:-2]) / (h * h)
        inner = slice(1, M - 1)
    yi = y[inner].reshape((-1,) + (1,) * grid.n)
    normal = (uss + (b - 1) * us) / yi ** 2
    core = u[inner]
    if operator is None:
        kmag2 = grid.wavenumber_magnitude() ** 2
        axes = tuple(range(1, grid.n + 1))
        tang = -np.real(np.fft.ifftn(np.fft.fftn(core, axes=axes) * kmag2, axes=axes))
    else:
        flat = core.reshape(core.shape[0], -1)
        tang = -(flat @ operator.matrix.T).reshape(core.shape)
    return normal + tang, normal, tang


@dataclass
class SystemReport:
    """Largest relative violation of each family in the extension system."""

    bulk_top: float
    bulk_chain: float
    dirichlet: float
    neumann_top: float
    neumann_lower: float
    details: dict = field(default_factory=dict)

    @property
    def max_violation(self) -> float:
        return max(self.bulk_top, self.bulk_chain, self.dirichlet, self.neumann_top, self.neumann_lower)


def _rel(a: np.ndarray, scale: float) -> float:
    return float(np.sqrt(np.mean(a ** 2)) / max(scale, 1e-300))


def _local_lb(ext: ExtensionField, j: int, ys: np.ndarray, delta: float):
    """``Delta_b u_j`` at heights ``ys``.

    The weighted flux ``F = y^b d_y u_j`` is evaluated from the Bessel
    recurrence and differentiated with a centered fourth-order stencil of step
    ``delta`` in ``log y``; the normal part is ``y^{-b} dF/dy``.
    """
    offs = np.exp(delta * np.arange(-2, 3))
    F = ext.on_grid(j, dy=1, weighted=True, y=(ys[:, None] * offs[None, :]).ravel())
    F = F.reshape((len(ys), 5) + ext.grid.shape)
    Fs = (-F[:, 4] + 8 * F[:, 3] - 8 * F[:, 1] + F[:, 0]) / (12 * delta)
    yi = ys.reshape((-1,) + (1,) * ext.n)
    normal = Fs / yi ** (1 + ext.b)
    u = ext.on_grid(j, y=ys)
    kmag2 = ext.grid.wavenumber_magnitude() ** 2
    axes = tuple(range(1, ext.n + 1))
    tang = -np.real(np.fft.ifftn(np.fft.fftn(u, axes=axes) * kmag2, axes=axes))
    return normal + tang, normal, tang


def system_residual(f: SpectralField, order, ygrid: ExtensionGrid | None = None,
                    delta: float = 2e-3) -> SystemReport:
    """Check the extension tower against every line of the degenerate system.

    Families: ``Delta_b u_m = 0``; ``Delta_b u_j = u_{j+1}`` for ``j < m``;
    Dirichlet traces ``u_j -> T_j (-Delta)^j f``; ``y^b d_y u_m ->
    kappa (-Delta)^gamma f``; ``y^b d_y u_j -> 0`` for ``0 <= j < m``.

    Bulk equations are checked at every height node with a centered
    fourth-order stencil of step ``delta`` in ``log y`` on the analytically
    evaluated fields.  Each violation is relative to the size of the terms
    being balanced.
    """
    ext = ExtensionField(f, order, ygrid)
    o = ext.order
    ys = ext.ygrid.y
    details: dict = {}
    bulk_top = 0.0
    bulk_chain = 0.0
    for j in range(o.m + 1):
        res, normal, tang = _local_lb(ext, j, ys, delta)
        scale = math.sqrt(np.mean(normal ** 2)) + math.sqrt(np.mean(tang ** 2))
        if j == o.m:
            bulk_top = _rel(res, scale)
            details["bulk_top"] = bulk_top
        else:
            nxt = ext.on_grid(j + 1)
            v = _rel(res - nxt, scale)
            details[f"bulk_chain_{j}"] = v
            bulk_chain = max(bulk_chain, v)
    dirichlet = 0.0
    for j in range(o.m + 1):
        target = fractional_laplacian(f, j).values * ext.T[j] if j else f.values
        got = ext.dirichlet_trace(j).values
        v = _rel(got - target, math.sqrt(np.mean(target ** 2)))
        details[f"dirichlet_{j}"] = v
        dirichlet = max(dirichlet, v)
    target = fractional_laplacian(f, o).values * neumann_constant(o)
    got = ext.flux_limit(o.m).values
    neumann_top = _rel(got - target, math.sqrt(np.mean(target ** 2)))
    details["neumann_top"] = neumann_top
    neumann_lower = 0.0
    for j in range(o.m):
        # natural size of a normal derivative of u_j: |(-Delta)^{j+1} f|
        scale = abs(ext.T[j]) * math.sqrt(np.mean(fractional_laplacian(f, j + 1).values ** 2))
        got = ext.flux_limit(j).values
        v = _rel(got, scale)
        details[f"neumann_{j}"] = v
        neumann_lower = max(neumann_lower, v)
    return SystemReport(bulk_top, bulk_chain, dirichlet, neumann_top, neumann_lower, details)


def intermediate_neumann_check(f: SpectralField, order, k: int,
                               heights=(1e-2, 1e-3, 1e-4, 1e-5)) -> tuple[np.ndarray, np.ndarray, float]:
    """Norms of ``y^b d_y w_k`` (``k < m``) at decreasing heights and the fitted rate.

    The rate is NaN when a norm vanishes (zero data).
    """
    ext = ExtensionField(f, order)
    if not 0 <= k < ext.m:
        raise ValueError("intermediate fields have 0 <= k < m")
    ys = np.asarray(heights, float)
    vals = ext.weighted_flux(k, ys)
    norms = np.sqrt(np.mean(vals.reshape(len(ys), -1) ** 2, axis=1))
    if np.any(norms == 0):
        return ys, norms, math.nan
    rate = float(np.polyfit(np.log(ys), np.log(norms), 1)[0])
    return ys, norms, rate


class DivergentIntegralError(ArithmeticError):
    """Raised when a weighted energy integral does not decay at the top of the height grid."""


def bulk_energy(field_: ExtensionField, k: int = 0, tangential_order: float = 0.0,
                normalization: str = "tower") -> float:
    """``|| y^{b/2} grad |D'|^nu w_k ||^2`` over ``torus x (0, inf)``.

    Tangential integrals are exact (Parseval over the period cell); the
    height integral is the trapezoid rule in ``log y`` with the first cell
    integrated analytically from a local power law and an exponential tail
    beyond the top node.
    """
    grid = field_.grid
    ys = field_.ygrid.y
    kmag = grid.wavenumber_magnitude()
    coeffs = field_.f.coefficients
    scale = field_._scale(k, normalization)
    kq, inv = np.unique(np.round(kmag, 12), return_inverse=True)
    weight_k = np.bincount(inv.ravel(), weights=np.abs(coeffs.ravel()) ** 2)
    weight_k = weight_k * kq ** (2 * tangential_order) if tangential_order else weight_k
    P = field_.mode_profile(k, kq[None, :], ys[:, None])
    dP = field_.mode_profile(k, kq[None, :], ys[:, None], dy=1)
    dens = (kq[None, :] ** 2 * P ** 2 + dP ** 2) @ weight_k
    dens = dens * scale ** 2 * grid.period ** grid.n * ys ** field_.b
    s = np.log(ys)
    total = integrate.trapezoid(dens * ys, s)
    q = math.log(dens[1] / dens[0]) / (s[1] - s[0]) if dens[0] > 0 and dens[1] > 0 else 0.0
    if q <= -1:
        raise DivergentIntegralError("integrand is not integrable at y = 0")
    total += dens[0] * ys[0] / (q + 1)
    rate = -(math.log(dens[-1]) - math.log(dens[-2])) / (ys[-1] - ys[-2]) if dens[-1] > 0 else np.inf
    if dens[-1] > 0:
        if not rate > 0:
            raise DivergentIntegralError("integrand does not decay at the top of the height grid")
        total += dens[-1] / rate
    return float(total)
