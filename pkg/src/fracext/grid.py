"""Periodic grids on the torus and Fourier multipliers acting on them.

Fields are real samples on a uniform ``N``-point grid per axis (``n`` = 1 or 2)
of period ``L`` (default ``2 pi``).  Fourier coefficients are normalized so
that ``f(x) = sum_k fhat_k exp(i k.x)``; with this convention the grid norm

    ||f||^2 = mean(|f|^2) = sum_k |fhat_k|^2

is the L2 norm for the normalized (probability) measure on the torus, and the
Sobolev norm ``(sum (1+|k|^2)^mu |fhat_k|^2)^(1/2)`` reduces to it at ``mu = 0``.

The Nyquist mode is treated as ``cos(N x / 2)`` and receives the symmetric
multiplier ``|N/2|^{2 gamma}``; derivatives of odd order annihilate it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .order import FractionalOrder


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform grid on the ``n``-torus of the given period."""

    n: int
    N: int
    period: float = 2 * math.pi

    def __post_init__(self) -> None:
        if self.n not in (1, 2):
            raise ValueError("n must be 1 or 2")
        if self.N < 8 or self.N & (self.N - 1):
            raise ValueError("N must be a power of two, at least 8")
        if not self.period > 0:
            raise ValueError("period must be positive")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.n

    @property
    def size(self) -> int:
        return self.N ** self.n

    @property
    def spacing(self) -> float:
        return self.period / self.N

    def axis(self) -> np.ndarray:
        """Grid coordinates along one axis, ``0, h, ..., L - h``."""
        return np.arange(self.N) * self.spacing

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Meshgrid of coordinates (``indexing='ij'``)."""
        return np.meshgrid(*([self.axis()] * self.n), indexing="ij")

    def centered_coordinates(self) -> tuple[np.ndarray, ...]:
        """Coordinates wrapped to ``[-L/2, L/2)`` so that the origin is a grid point."""
        ax = self.axis()
        ax = np.where(ax >= self.period / 2, ax - self.period, ax)
        return np.meshgrid(*([ax] * self.n), indexing="ij")

    def wavenumbers_1d(self) -> np.ndarray:
        return np.fft.fftfreq(self.N, d=self.spacing) * 2 * math.pi

    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        return np.meshgrid(*([self.wavenumbers_1d()] * self.n), indexing="ij")

    def wavenumber_magnitude(self) -> np.ndarray:
        ks = self.wavenumbers()
        return np.sqrt(sum(k * k for k in ks))

    def nyquist_mask(self) -> tuple[np.ndarray, ...]:
        """Per-axis boolean masks of the Nyquist index."""
        ny = np.zeros(self.N, dtype=bool)
        ny[self.N // 2] = True
        return tuple(np.meshgrid(*([ny] * self.n), indexing="ij"))


@dataclass
class SpectralField:
    """Real samples of a field on a :class:`PeriodicGrid`."""

    grid: PeriodicGrid
    values: np.ndarray
    _coeffs: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"values have shape {v.shape}, grid expects {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        self.values = v

    @classmethod
    def from_function(cls, grid: PeriodicGrid, func) -> "SpectralField":
        return cls(grid, func(*grid.coordinates()))

    @classmethod
    def from_coefficients(cls, grid: PeriodicGrid, coeffs: np.ndarray) -> "SpectralField":
        values = np.real(np.fft.ifftn(coeffs * grid.size))
        return cls(grid, values)

    @property
    def coefficients(self) -> np.ndarray:
        """Normalized Fourier coefficients ``fhat_k`` (``fftn(f) / N^n``)."""
        if self._coeffs is None:
            self._coeffs = np.fft.fftn(self.values) / self.grid.size
        return self._coeffs

    def evaluate(self, points: np.ndarray, alpha: tuple[int, ...] | None = None) -> np.ndarray:
        """Evaluate the trigonometric interpolant (or a derivative) at arbitrary points.

        ``points`` has shape ``(P,)`` for ``n = 1`` or ``(P, n)``.  The Nyquist
        coefficient is split symmetrically between ``+N/2`` and ``-N/2``.
        """
        return evaluate_series(self.grid, self.coefficients, points, alpha)


def _split_nyquist(grid: PeriodicGrid, coeffs: np.ndarray):
    """Return (wavevectors (K, n), coefficients (K,)) with the Nyquist mode split."""
    k1 = grid.wavenumbers_1d()
    N = grid.N
    k1_full = np.concatenate([k1, [N // 2 * 2 * math.pi / grid.period]])
    idx = list(range(N)) + [N // 2]
    weight_1d = np.ones(N + 1)
    weight_1d[N // 2] = 0.5
    weight_1d[N] = 0.5
    if grid.n == 1:
        kv = k1_full[:, None]
        c = coeffs[idx] * weight_1d
        return kv, c
    K1, K2 = np.meshgrid(k1_full, k1_full, indexing="ij")
    W = np.outer(weight_1d, weight_1d)
    c = coeffs[np.ix_(idx, idx)] * W
    kv = np.stack([K1.ravel(), K2.ravel()], axis=1)
    return kv, c.ravel()


def evaluate_series(grid: PeriodicGrid, coeffs: np.ndarray, points, alpha=None,
                    chunk: int = 4096) -> np.ndarray:
    """Evaluate ``sum_k c_k (i k)^alpha exp(i k.x)`` at ``points`` (real part)."""
    pts = np.asarray(points, dtype=float)
    if grid.n == 1:
        pts = pts.reshape(-1, 1)
    else:
        pts = pts.reshape(-1, grid.n)
    kv, c = _split_nyquist(grid, coeffs)
    keep = c != 0
    kv, c = kv[keep], c[keep]
    if alpha is not None:
        for d, a in enumerate(alpha):
            c = c * (1j * kv[:, d]) ** a
    out = np.empty(pts.shape[0])
    for start in range(0, pts.shape[0], chunk):
        phase = np.exp(1j * pts[start:start + chunk] @ kv.T)
        out[start:start + chunk] = np.real(phase @ c)
    return out


def forward_transform(f: SpectralField) -> np.ndarray:
    """Normalized Fourier coefficients of ``f``."""
    return f.coefficients.copy()


def inverse_transform(grid: PeriodicGrid, coeffs: np.ndarray) -> SpectralField:
    """Field with the given normalized coefficients (real part)."""
    return SpectralField.from_coefficients(grid, coeffs)


def l2_norm(f: SpectralField) -> float:
    """Grid L2 norm for the normalized measure, ``sqrt(mean |f|^2)``."""
    return float(np.sqrt(np.mean(f.values ** 2)))


def _order_value(order) -> float:
    if isinstance(order, FractionalOrder):
        return order.gamma
    g = float(order)
    if not g > 0:
        raise ValueError("order must be positive")
    return g


def fractional_laplacian(f: SpectralField, order) -> SpectralField:
    """Apply ``(-Delta)^gamma`` as the Fourier multiplier ``|k|^{2 gamma}``.

    The zero mode is mapped to zero.  ``order`` may be a
    :class:`FractionalOrder` or any positive number (integers included).
    """
    g = _order_value(order)
    kmag = f.grid.wavenumber_magnitude()
    mult = np.zeros_like(kmag)
    nz = kmag > 0
    mult[nz] = kmag[nz] ** (2 * g)
    return SpectralField.from_coefficients(f.grid, f.coefficients * mult)


def sobolev_norm(f: SpectralField, mu: float) -> float:
    """``(sum_k (1 + |k|^2)^mu |fhat_k|^2)^(1/2)``."""
    kmag = f.grid.wavenumber_magnitude()
    w = (1.0 + kmag ** 2) ** mu
    return float(np.sqrt(np.sum(w * np.abs(f.coefficients) ** 2)))


def homogeneous_sobolev_norm(f: SpectralField, mu: float) -> float:
    """``(sum_{k != 0} |k|^{2 mu} |fhat_k|^2)^(1/2)``."""
    kmag = f.grid.wavenumber_magnitude()
    nz = kmag > 0
    return float(np.sqrt(np.sum(kmag[nz] ** (2 * mu) * np.abs(f.coefficients[nz]) ** 2)))


def tangential_derivative(f: SpectralField, alpha: tuple[int, ...] | int) -> SpectralField:
    """Spectral partial derivative ``d^alpha f`` for a multi-index ``alpha``."""
    if isinstance(alpha, int):
        alpha = (alpha,)
    if len(alpha) != f.grid.n or any(a < 0 for a in alpha):
        raise ValueError("alpha must be a non-negative multi-index of length n")
    mult = np.ones(f.grid.shape, dtype=complex)
    for k, a, ny in zip(f.grid.wavenumbers(), alpha, f.grid.nyquist_mask()):
        factor = (1j * k) ** a
        if a % 2:
            factor = np.where(ny, 0.0, factor)
        mult = mult * factor
    return SpectralField.from_coefficients(f.grid, f.coefficients * mult)


def random_bandlimited(grid: PeriodicGrid, n_modes: int, rng: np.random.Generator,
                       zero_mean: bool = True, decay: float = 0.0) -> SpectralField:
    """A random real field with energy in modes ``1 <= |k|_inf <= n_modes``."""
    ks = grid.wavenumbers()
    kinf = np.max(np.abs(np.stack(ks)), axis=0)
    mask = (kinf <= n_modes) & (kinf >= (1 if zero_mean else 0))
    c = (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)) * mask
    if decay:
        c = c / (1.0 + grid.wavenumber_magnitude()) ** decay
    values = np.real(np.fft.ifftn(c))
    values = values / max(np.sqrt(np.mean(values ** 2)), 1e-300)
    return SpectralField(grid, values)
