"""Variable-coefficient operators ``L = -div(a grad)`` on the torus.

The operator is realized as a dense symmetric matrix acting on grid values.
Its eigendecomposition gives the functional calculus (fractional powers and
the heat semigroup), and the heat semigroup gives the extension

    u(y) = c_gamma y^{2 gamma} int_0^inf e^{-tL} f e^{-y^2/4t} t^{-1-gamma} dt,

with ``c_gamma = 1 / (4^gamma Gamma(gamma))`` so that ``u(0) = f``.  The time
integral is computed with tanh-sinh quadrature in ``tau = log t``.

Two discretizations are available.  The default is a Fourier-Galerkin form
``(Lv, w) = int a grad(Jv) . grad(Jw)`` where ``J`` interpolates grid values
by trigonometric polynomials (the Nyquist mode weighted so that ``J`` is an
isometry); the integral is evaluated on a grid refined by two, which makes
the matrix exactly symmetric and, for ``a = I``, diagonal in the Fourier
basis with eigenvalues ``|k|^2``.  The fallback is the conservative
second-order finite-difference stencil, which is local.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .grid import PeriodicGrid, SpectralField
from .order import as_order
from .quadrature import tanh_sinh

MAX_SIZE = 4096


@dataclass
class MetricField:
    """Symmetric matrix field ``a(x)`` sampled on a periodic grid; ``values`` has shape ``grid.shape + (n, n)``."""

    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        n = self.grid.n
        if v.shape == self.grid.shape:
            v = v[..., None, None] * np.eye(n)
        if v.shape != self.grid.shape + (n, n):
            raise ValueError(f"metric values must have shape {self.grid.shape + (n, n)}")
        if not np.all(np.isfinite(v)):
            raise ValueError("metric values must be finite")
        self.values = v

    @classmethod
    def identity(cls, grid: PeriodicGrid) -> "MetricField":
        return cls(grid, np.ones(grid.shape))

    @classmethod
    def scalar(cls, grid: PeriodicGrid, func) -> "MetricField":
        """``a(x) = func(x) I``."""
        return cls(grid, func(*grid.coordinates()))

    def min_eigenvalue(self) -> float:
        sym = 0.5 * (self.values + np.swapaxes(self.values, -1, -2))
        return float(np.min(np.linalg.eigvalsh(sym)))

    def symmetry_residual(self) -> float:
        return float(np.max(np.abs(self.values - np.swapaxes(self.values, -1, -2))))

    def seminorm(self, order: int) -> float:
        """Estimate of ``[a]_{C^{order,1}}``: sup of the ``order+1`` derivatives by divided differences.

        All mixed directions are included; the maximum over matrix entries is returned.
        """
        h = self.grid.spacing
        n = self.grid.n
        best = 0.0
        # each multi-index of total order order+1, as a sequence of axis choices
        from itertools import combinations_with_replacement
        for axes in combinations_with_replacement(range(n), order + 1):
            d = self.values
            for ax in axes:
                d = (np.roll(d, -1, axis=ax) - d) / h
            best = max(best, float(np.max(np.abs(d))))
        return best

    def value_at_origin(self) -> np.ndarray:
        return self.values[(0,) * self.grid.n]


@dataclass
class MetricReport:
    a1: bool
    a2: bool
    a3: bool
    min_eigenvalue: float
    symmetry_residual: float
    seminorms: dict
    delta: float
    mu: int

    @property
    def ok(self) -> bool:
        return self.a1 and self.a2 and self.a3


def validate_metric(metric: MetricField, order=None, delta: float = 0.1,
                    lam_min: float = 1e-8) -> MetricReport:
    """Check the structural conditions on the metric.

    A1: symmetric (residual <= 1e-14) with smallest eigenvalue >= ``lam_min``.
    A2: ``[a]_{C^{mu,1}} + [a]_{C^{0,1}} <= delta`` with ``mu = 2 floor(gamma)``;
    the seminorms of every order ``0..mu`` are reported.
    A3: ``a(0) = I`` within 1e-14.
    """
    mu = 0 if order is None else 2 * as_order(order, metric.grid.n).m
    sym = metric.symmetry_residual()
    lam = metric.min_eigenvalue()
    a1 = sym <= 1e-14 and lam >= lam_min
    semis = {ell: metric.seminorm(ell) for ell in range(mu + 1)}
    a2 = semis[mu] + semis[0] <= delta if mu else semis[0] <= delta
    a3 = float(np.max(np.abs(metric.value_at_origin() - np.eye(metric.grid.n)))) <= 1e-14
    return MetricReport(a1, a2, a3, lam, sym, semis, delta, mu)


# ---------------------------------------------------------------------------
# discretization

_R2 = math.sqrt(0.5)


def _prolong_axis(c: np.ndarray, axis: int, N: int) -> np.ndarray:
    c = np.moveaxis(c, axis, -1)
    out = np.zeros(c.shape[:-1] + (2 * N,), dtype=complex)
    h = N // 2
    out[..., :h] = c[..., :h]
    out[..., 2 * N - h + 1:] = c[..., h + 1:]
    out[..., h] = _R2 * c[..., h]
    out[..., 2 * N - h] = _R2 * c[..., h]
    return np.moveaxis(out, -1, axis)


def _restrict_axis(F: np.ndarray, axis: int, N: int) -> np.ndarray:
    F = np.moveaxis(F, axis, -1)
    out = np.zeros(F.shape[:-1] + (N,), dtype=complex)
    h = N // 2
    out[..., :h] = F[..., :h]
    out[..., h + 1:] = F[..., 2 * N - h + 1:]
    out[..., h] = _R2 * (F[..., h] + F[..., 2 * N - h])
    return np.moveaxis(out, -1, axis)


def _fine_metric(metric: MetricField) -> np.ndarray:
    """Metric on the grid refined by two, by trigonometric interpolation."""
    grid = metric.grid
    n, N = grid.n, grid.N
    axes = tuple(range(n))
    vals = np.moveaxis(metric.values, (-2, -1), (0, 1))  # (n, n) + shape
    c = np.fft.fftn(vals, axes=tuple(a + 2 for a in axes)) / grid.size
    for ax in axes:
        c = _prolong_axis(c, ax + 2, N)
    fine = np.real(np.fft.ifftn(c, axes=tuple(a + 2 for a in axes))) * (2 * N) ** n
    return fine


def _galerkin_apply(fine_a: np.ndarray, grid: PeriodicGrid, v: np.ndarray) -> np.ndarray:
    """Apply the Fourier-Galerkin operator to a batch ``v`` of shape ``(B,) + grid.shape``."""
    n, N = grid.n, grid.N
    axes = tuple(range(1, n + 1))
    c = np.fft.fftn(v, axes=axes) / grid.size
    for ax in axes:
        c = _prolong_axis(c, ax, N)
    kf = np.fft.fftfreq(2 * N, d=grid.spacing / 2) * 2 * math.pi
    kgrids = np.meshgrid(*([kf] * n), indexing="ij")
    scale = (2 * N) ** n
    grads = [np.real(np.fft.ifftn(1j * k[None] * c, axes=axes)) * scale for k in kgrids]
    out_hat = 0
    for i in range(n):
        flux = sum(fine_a[i, j][None] * grads[j] for j in range(n))
        Fh = np.fft.fftn(flux, axes=axes) / scale
        out_hat = out_hat + (-1j * kgrids[i][None]) * Fh
    for ax in axes:
        out_hat = _restrict_axis(out_hat, ax, N)
    return np.real(np.fft.ifftn(out_hat, axes=axes)) * grid.size


def _fd_matrix(metric: MetricField) -> np.ndarray:
    grid = metric.grid
    n, h = grid.n, grid.spacing
    size = grid.size
    idx = np.arange(size).reshape(grid.shape)
    D = []
    for ax in range(n):
        fwd = np.roll(idx, -1, axis=ax).ravel()
        Dm = np.zeros((size, size))
        Dm[np.arange(size), fwd] += 1.0 / h
        Dm[np.arange(size), np.arange(size)] -= 1.0 / h
        D.append(Dm)
    a = metric.values
    L = np.zeros((size, size))
    for i in range(n):
        for j in range(n):
            if n == 1:
                # coefficient at the cell midpoint between x_k and x_{k+1}
                coef = 0.5 * (a[..., 0, 0] + np.roll(a[..., 0, 0], -1))
            else:
                coef = a[..., i, j]
                if i == j:
                    coef = 0.5 * (coef + np.roll(coef, -1, axis=i))
                else:
                    coef = 0.25 * (coef + np.roll(coef, -1, axis=0) + np.roll(coef, -1, axis=1)
                                   + np.roll(np.roll(coef, -1, axis=0), -1, axis=1))
            L += D[i].T @ (coef.ravel()[:, None] * D[j])
    return L


@dataclass
class DiscreteOperator:
    """Dense symmetric positive semidefinite matrix with its eigendecomposition."""

    grid: PeriodicGrid
    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    method: str = "spectral"
    metric: MetricField | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def symmetry_residual(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.T)) / max(np.max(np.abs(self.matrix)), 1e-300))

    def reconstruction_residual(self) -> float:
        V, lam = self.eigenvectors, self.eigenvalues
        R = (V * lam) @ V.T - self.matrix
        return float(np.max(np.abs(R)) / max(np.max(np.abs(self.matrix)), 1e-300))

    def power_matrix(self, gamma: float) -> np.ndarray:
        """Dense matrix of ``L^gamma`` (``gamma > 0``)."""
        lam = self.eigenvalues ** gamma if gamma != 0 else np.ones_like(self.eigenvalues)
        return (self.eigenvectors * lam) @ self.eigenvectors.T

    def to_eigen(self, f) -> np.ndarray:
        return self.eigenvectors.T @ _vec(f, self.grid)

    def from_eigen(self, c: np.ndarray) -> np.ndarray:
        return self.eigenvectors @ c


def _vec(f, grid: PeriodicGrid) -> np.ndarray:
    if isinstance(f, SpectralField):
        return f.values.ravel()
    arr = np.asarray(f, dtype=float)
    if arr.size != grid.size:
        raise ValueError("field size does not match the operator")
    return arr.ravel()


def _field(vec: np.ndarray, grid: PeriodicGrid) -> SpectralField:
    return SpectralField(grid, vec.reshape(grid.shape))


def assemble_operator(metric: MetricField, grid: PeriodicGrid | None = None,
                      method: str = "spectral", lam_min: float = 1e-12,
                      batch: int = 256) -> DiscreteOperator:
    """Discretize ``L = -div(a grad)`` and diagonalize it.

    ``method`` is ``'spectral'`` (Fourier-Galerkin, default) or ``'fd'``
    (conservative finite differences).  Raises ``ValueError`` if the metric
    is not symmetric positive definite or the grid exceeds the dense cap.
    """
    grid = grid or metric.grid
    if grid != metric.grid:
        raise ValueError("metric lives on a different grid")
    if grid.size > MAX_SIZE:
        raise ValueError(f"dense operator limited to {MAX_SIZE} unknowns")
    if metric.symmetry_residual() > 1e-12:
        raise ValueError("metric is not symmetric")
    if metric.min_eigenvalue() < lam_min:
        raise ValueError("metric is not positive definite")
    if method == "spectral":
        fine = _fine_metric(metric)
        size = grid.size
        L = np.empty((size, size))
        eye = np.eye(size)
        for start in range(0, size, batch):
            cols = eye[start:start + batch].reshape((-1,) + grid.shape)
            L[:, start:start + batch] = _galerkin_apply(fine, grid, cols).reshape(len(cols), size).T
    elif method == "fd":
        L = _fd_matrix(metric)
    else:
        raise ValueError("method must be 'spectral' or 'fd'")
    L = 0.5 * (L + L.T)
    lam, V = linalg.eigh(L)
    tol = 1e-12 * max(abs(lam[-1]), 1.0)
    lam = np.where(np.abs(lam) < tol, 0.0, lam)
    if lam[0] < 0:
        raise ValueError("discrete operator is not positive semidefinite")
    return DiscreteOperator(grid, L, lam, V, method, metric)


def fractional_power_apply(L: DiscreteOperator, gamma: float, f) -> SpectralField:
    """``L^gamma f = sum lam_i^gamma <f, phi_i> phi_i``."""
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    c = L.to_eigen(f)
    lam = L.eigenvalues ** gamma if gamma else np.ones_like(L.eigenvalues)
    return _field(L.from_eigen(lam * c), L.grid)


def heat_semigroup_apply(L: DiscreteOperator, t: float, f) -> SpectralField:
    """``e^{-tL} f``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    c = L.to_eigen(f)
    return _field(L.from_eigen(np.exp(-t * L.eigenvalues) * c), L.grid)


TAU_RANGE = (-30.0, 30.0)


def _heat_mode_integral(lam: np.ndarray, y: float, power: float, tol: float) -> np.ndarray:
    """``int_0^inf e^{-lam t} e^{-y^2/4t} t^{power - 1} dt`` for every ``lam``, in ``tau = log t``."""

    def integrand(tau):
        t = np.exp(tau)[:, None]
        expo = -lam[None, :] * t - y * y / (4.0 * t) + power * tau[:, None]
        return np.exp(expo)

    return tanh_sinh(integrand, *TAU_RANGE, tol=tol)


def heat_extension(L: DiscreteOperator, order, f, y: float, representation: str = "heat",
                   quad_tol: float = 1e-12) -> SpectralField:
    """The heat-semigroup extension at height ``y``.

    ``representation='heat'`` uses ``c_gamma y^{2 gamma} int e^{-tL} f
    e^{-y^2/4t} t^{-1-gamma} dt``.  ``representation='power'`` uses
    ``Gamma(gamma)^{-1} int e^{-tL} L^gamma f e^{-y^2/4t} t^{gamma-1} dt``,
    which only sees the complement of the kernel of ``L``; the kernel
    component of ``f`` (its mean) is carried over unchanged.
    """
    if not y > 0:
        raise ValueError("y must be positive")
    g = as_order(order).gamma if not isinstance(order, (int, float)) else float(order)
    c = L.to_eigen(f)
    lam = L.eigenvalues
    if representation == "heat":
        I = _heat_mode_integral(lam, y, -g, quad_tol)
        mult = y ** (2 * g) / (4.0 ** g * math.gamma(g)) * I
    elif representation == "power":
        # kernel modes are excluded from the quadrature (their integrand grows like t^gamma)
        pos = lam > 0
        I = _heat_mode_integral(lam[pos], y, g, quad_tol)
        mult = np.ones_like(lam)
        mult[pos] = lam[pos] ** g * I / math.gamma(g)
    else:
        raise ValueError("representation must be 'heat' or 'power'")
    return _field(L.from_eigen(mult * c), L.grid)


def derived_heat_extension(L: DiscreteOperator, order, k: int, f, y: float,
                           quad_tol: float = 1e-12) -> SpectralField:
    """Trace-normalized derived heat field ``w_k``: the order ``gamma - k`` extension of ``L^k f``."""
    o = as_order(order)
    if not 0 <= k <= o.m:
        raise ValueError("k must lie in 0..m")
    g = L.eigenvalues ** k * L.to_eigen(f) if k else L.to_eigen(f)
    return heat_extension(L, o.gamma - k, L.from_eigen(g), y, quad_tol=quad_tol)


def heat_weighted_flux(L: DiscreteOperator, order, f, y: float, quad_tol: float = 1e-12) -> SpectralField:
    """``y^b d_y w_m`` for the top derived heat field, divided by its limiting constant.

    After an integration by parts in ``t`` the weighted flux is
    ``-2 c_s L int e^{-tL} L^m f e^{-y^2/4t} t^{-s} dt``, which converges as
    ``y -> 0`` to ``-2 c_s Gamma(1-s) L^gamma f``.
    """
    o = as_order(order)
    s = o.s
    lam = L.eigenvalues
    c = L.to_eigen(f) * lam ** (o.m + 1)
    I = _heat_mode_integral(lam, y, 1.0 - s, quad_tol)
    # normalized so that the y -> 0 limit is L^gamma f
    return _field(L.from_eigen(c * I / math.gamma(1 - s)), L.grid)


def heat_extension_neumann(L: DiscreteOperator, order, f, y0: float = 1e-3,
                           quad_tol: float = 1e-12) -> SpectralField:
    """Extrapolated weighted Neumann trace of the heat extension, normalized to ``L^gamma f``."""
    from .extension import expansion_exponents, richardson_limit
    o = as_order(order)
    ys = y0 * np.array([1.0, 2.0, 4.0])
    vals = np.stack([heat_weighted_flux(L, o, f, y, quad_tol).values for y in ys])
    lim = richardson_limit(ys, vals, expansion_exponents(1 - o.s))
    return SpectralField(L.grid, lim)
