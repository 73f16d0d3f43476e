"""Carleman weights in conformal coordinates and the checks that go with them.

The weight lives on ``t = -ln|x|``.  Its second derivative is a mollified step
function ``sum_j b_j chi_[j, j+1]`` whose heights come from a slowly varying
envelope ``a_j = sum_i c_i 2^{-nu |j - i|}`` of a small l1 sequence.  The
slope starts at ``floor(tau) + 5/4`` (shifted onto the ladder of the weighted
spherical operator) and ``h(0) = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial
from scipy import interpolate, linalg, special

from .order import as_order

T_STEP = 1.0 / 64.0
T_WINDOW = 40.0
GAP = 0.25
C_MAX = 10.0


# -- mollifier -------------------------------------------------------------
def _bump(s):
    s = np.asarray(s, float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 0.5
    out[inside] = np.exp(-1.0 / (1.0 - 4.0 * s[inside] ** 2))
    return out


class _Mollifier:
    """Unit-width C-infinity bump and its iterated antiderivatives."""

    def __init__(self, samples: int = 4097):
        s = np.linspace(-0.5, 0.5, samples)
        raw = interpolate.make_interp_spline(s, _bump(s), k=5)
        mass = float(raw.integrate(-0.5, 0.5))
        self.eta = interpolate.make_interp_spline(s, _bump(s) / mass, k=5)
        self.deta = self.eta.derivative()
        self.H = self.eta.antiderivative(1)
        self.G = self.eta.antiderivative(2)
        self.G2 = self.eta.antiderivative(3)
        self.H_end = float(self.H(0.5))
        self.G_end = float(self.G(0.5))
        self.G2_end = float(self.G2(0.5))

    def kernel(self, u, order: int) -> np.ndarray:
        """Value of the step kernel differentiated ``order`` times (0: ``G2``, 2: ``H``, 4: ``eta'``)."""
        u = np.asarray(u, float)
        out = np.zeros_like(u)
        inside = np.abs(u) < 0.5
        right = u >= 0.5
        ui, ur = u[inside], u[right] - 0.5
        if order == 0:
            out[inside] = self.G2(ui)
            out[right] = self.G2_end + self.G_end * ur + self.H_end * ur ** 2 / 2
        elif order == 1:
            out[inside] = self.G(ui)
            out[right] = self.G_end + self.H_end * ur
        elif order == 2:
            out[inside] = self.H(ui)
            out[right] = self.H_end
        elif order == 3:
            out[inside] = self.eta(ui)
        elif order == 4:
            out[inside] = self.deta(ui)
        else:
            raise ValueError("order must be in 0..4")
        return out


_MOLLIFIER: _Mollifier | None = None


def _mollifier() -> _Mollifier:
    global _MOLLIFIER
    if _MOLLIFIER is None:
        _MOLLIFIER = _Mollifier()
    return _MOLLIFIER


# -- spherical spectrum ----------------------------------------------------
@dataclass
class SphericalSpectrum:
    """Neumann eigenpairs of ``-(sin^b psi')' = lam sin^b psi`` on ``(0, pi)``.

    ``functions[k]`` samples the k-th eigenfunction on ``theta``, normalized
    in ``L^2(sin^b dtheta)``.
    """

    n: int
    b: float
    eigenvalues: np.ndarray
    theta: np.ndarray
    functions: np.ndarray
    method: str = "galerkin"

    @property
    def c_nb(self) -> float:
        return conformal_constant(self.n, self.b)

    @property
    def gap(self) -> float:
        return float(self.eigenvalues[1] - self.eigenvalues[0])

    def eigenvalue(self, k):
        """Eigenvalue ``k``; beyond the computed range the closed form ``k(k+b)`` is used."""
        k = np.asarray(k)
        K = len(self.eigenvalues)
        closed = k * (k + self.b)
        inner = np.clip(k, 0, K - 1)
        return np.where(k < K, self.eigenvalues[inner], closed)

    def ladder(self, upper: float, shifted: bool = True) -> np.ndarray:
        """Points ``sqrt(lam_k - c_nb)`` (or ``sqrt(lam_k)``) up to ``upper``."""
        kmax = int(math.ceil(upper)) + 2
        lam = self.eigenvalue(np.arange(kmax + 1))
        lam = np.maximum(lam - (self.c_nb if shifted else 0.0), 0.0)
        return np.sqrt(lam)


def conformal_constant(n: int, b: float) -> float:
    return -((n + b - 1) / 2.0) ** 2


def _check_b(b: float) -> None:
    if not -1.0 < b < 1.0:
        raise ValueError(f"weight exponent b must lie in (-1, 1), got {b}")


def spherical_spectrum(n: int, b: float, K: int, method: str = "galerkin",
                       samples: int = 201, cells: int = 4000) -> SphericalSpectrum:
    """First ``K`` Neumann eigenvalues of the weighted operator on the half circle.

    ``method='galerkin'`` uses polynomials in ``cos(theta)`` with Gauss-Jacobi
    quadrature; ``method='fd'`` is a finite-volume discretization in ``theta``
    (second order, used as a cross-check).
    """
    if n != 1:
        raise NotImplementedError("only n = 1 (half circle) is supported")
    _check_b(b)
    if K < 2:
        raise ValueError("K must be at least 2")
    theta = np.linspace(0.0, math.pi, samples)
    if method == "galerkin":
        vals, funcs = _spectrum_galerkin(b, K, theta)
    elif method == "fd":
        vals, funcs = _spectrum_fd(b, K, theta, cells)
    else:
        raise ValueError(f"unknown method {method!r}")
    return SphericalSpectrum(n, b, vals, theta, funcs, method)


def _spectrum_galerkin(b: float, K: int, theta: np.ndarray):
    deg = K + 4
    a = (b - 1) / 2
    # mass: int p q (1-x^2)^a dx ; stiffness: int p' q' (1-x^2)^(a+1) dx
    xm, wm = special.roots_jacobi(deg + 2, a, a)
    xs, ws = special.roots_jacobi(deg + 2, a + 1, a + 1)
    P = np.array([special.eval_legendre(k, xm) for k in range(deg)])
    dP = np.array([_legendre_derivative(k, xs) for k in range(deg)])
    M = (P * wm) @ P.T
    S = (dP * ws) @ dP.T
    vals, vecs = linalg.eigh(S, M)
    order = np.argsort(vals)[:K]
    vals, vecs = vals[order], vecs[:, order]
    vals[0] = max(vals[0], 0.0) if abs(vals[0]) < 1e-10 else vals[0]
    x = np.cos(theta)
    funcs = vecs.T @ np.array([special.eval_legendre(k, x) for k in range(deg)])
    funcs *= np.sign(funcs[:, :1] + (funcs[:, :1] == 0))
    return vals, funcs


def _legendre_derivative(k: int, x: np.ndarray) -> np.ndarray:
    if k == 0:
        return np.zeros_like(x)
    return special.eval_jacobi(k - 1, 1, 1, x) * (k + 1) / 2


def _spectrum_fd(b: float, K: int, theta: np.ndarray, cells: int):
    h = math.pi / cells
    faces = np.linspace(0.0, math.pi, cells + 1)
    centers = 0.5 * (faces[1:] + faces[:-1])
    # cell masses of sin^b; the end cells carry the integrable singularity
    mass = np.sin(centers) ** b * h
    end = h ** (b + 1) / (b + 1)
    mass[0] = mass[-1] = end
    kf = np.sin(faces[1:-1]) ** b / h
    diag = np.zeros(cells)
    diag[:-1] += kf
    diag[1:] += kf
    d = 1.0 / np.sqrt(mass)
    vals, vecs = linalg.eigh_tridiagonal(diag * d * d, -kf * d[:-1] * d[1:],
                                         select="i", select_range=(0, K - 1))
    vals[0] = max(vals[0], 0.0)
    psi = vecs * d[:, None]
    funcs = np.array([np.interp(theta, centers, psi[:, k]) for k in range(K)])
    funcs *= np.sign(funcs[:, :1] + (funcs[:, :1] == 0))
    return vals, funcs


# -- weight construction ---------------------------------------------------
@dataclass
class WeightSpec:
    """Parameters of the Carleman weight.

    ``c`` is indexed from 0; :func:`build_weight` shifts it into the
    t-window so that the left tail of the envelope fits and ``h`` starts
    linearly at ``t = 0``.
    """

    c: np.ndarray
    tau: float
    nu: float = 0.1
    delta: float = 0.1
    n: int = 1
    b: float = 0.0
    step: float = T_STEP
    window: float = T_WINDOW

    def __post_init__(self) -> None:
        self.c = np.atleast_1d(np.asarray(self.c, float))
        if np.any(self.c < 0):
            raise ValueError("the sequence c must be nonnegative")
        if not np.sum(self.c) < self.delta:
            raise ValueError(f"l1 norm {np.sum(self.c):.6g} is not below delta = {self.delta}")
        if not 0.0 < self.nu < 1.0:
            raise ValueError("nu must lie in (0, 1)")
        if not self.tau > 1.0:
            raise ValueError("tau must exceed 1")
        _check_b(self.b)

    @property
    def theta0(self) -> float:
        """Offset of the shifted ladder ``{k + theta0}``."""
        return (self.n + self.b - 1) / 2.0

    @property
    def baseline(self) -> float:
        return math.floor(self.tau) + 1.25 + self.theta0


def slowly_varying_envelope(c: np.ndarray, nu: float, cells: int) -> np.ndarray:
    """``a_j = sum_i c_i 2^{-nu|j-i|}`` for ``j = 0..cells-1`` (``c`` indexed from 0)."""
    j = np.arange(cells)[:, None]
    i = np.arange(len(c))[None, :]
    return (c[None, :] * 2.0 ** (-nu * np.abs(j - i))).sum(axis=1)


def _ladder_dist(v, theta0: float) -> np.ndarray:
    d = np.mod(np.asarray(v) - theta0, 1.0)
    return np.minimum(d, 1.0 - d)


def _crosses(v, rise, theta0: float) -> np.ndarray:
    return np.floor(v - theta0) != np.floor(v + rise - theta0)


@dataclass
class CarlemanWeight:
    """Sampled weight with its first four derivatives."""

    t: np.ndarray
    h: np.ndarray
    dh: np.ndarray
    d2h: np.ndarray
    d3h: np.ndarray
    d4h: np.ndarray
    steps: np.ndarray
    tau: float
    base: float
    theta0: float
    cells: np.ndarray = field(default_factory=lambda: np.zeros(0))
    envelope: np.ndarray = field(default_factory=lambda: np.zeros(0))
    classes: str = ""
    nu: float = 0.1
    b: float = 0.0
    n: int = 1

    @classmethod
    def linear(cls, slope: float, tau: float | None = None, window: float = T_WINDOW,
               step: float = T_STEP, b: float = 0.0, n: int = 1) -> "CarlemanWeight":
        """Weight ``h(t) = slope * t`` (no convexity)."""
        t = np.arange(int(round(window / step)) + 1) * step
        z = np.zeros_like(t)
        tau = float(slope) if tau is None else tau
        return cls(t, slope * t, np.full_like(t, slope), z, z.copy(), z.copy(), z.copy(),
                   tau, float(slope), (n + b - 1) / 2.0, np.zeros(0), np.zeros(0), "", 0.1, b, n)

    @property
    def window(self) -> float:
        return float(self.t[-1])

    def evaluate(self, t, deriv: int = 0) -> np.ndarray:
        """``h^{(deriv)}`` at arbitrary ``t``; extended linearly outside the window."""
        t = np.asarray(t, float)
        T = self.window
        if len(self.cells) == 0:
            return {0: self.base * t, 1: np.full_like(t, self.base)}.get(deriv, np.zeros_like(t))
        tc = np.clip(t, 0.0, T)
        mol = _mollifier()
        jumps = np.diff(np.concatenate([[0.0], self.cells, [0.0]]))
        out = np.zeros_like(tc)
        for j, dj in enumerate(jumps, start=1):
            if dj != 0.0:
                out += dj * mol.kernel(tc - j, deriv)
        if deriv == 0:
            out += self.base * tc
            slope_left = self.base
            slope_right = self.evaluate(np.array([T]), 1)[0]
            out = np.where(t < 0, slope_left * t, out)
            out = np.where(t > T, out + slope_right * (t - T), out)
        elif deriv == 1:
            out += self.base
        elif deriv >= 2:
            out = np.where((t < 0) | (t > T), 0.0, out)
        return out


def _classify(a: np.ndarray, tau: float, nu: float, q: float) -> str:
    ta = tau * a
    return "".join("Z" if x <= nu else ("S" if 2 * x < q else "B") for x in ta)


def _segments(classes: str, per_cell: bool = False):
    segs, j = [], 0
    while j < len(classes):
        if classes[j] == "B" and not per_cell:
            k = j
            while k < len(classes) and classes[k] == "B":
                k += 1
            segs.append(("B", j, k))
            j = k
        else:
            segs.append((classes[j], j, j + 1))
            j += 1
    return segs


def _choose_steps(ta: np.ndarray, classes: str, base: float, theta0: float,
                  margin: float, bins: int = 1024, choices: int = 257,
                  per_cell: bool = False):
    """Pick ``b_j`` in ``[tau a_j, 2 tau a_j]`` so the pre-mollified gap condition holds.

    Dynamic programming over the fractional part of ``h'`` at cell starts;
    each run of large cells shares one interpolation parameter so that the
    steps stay slowly varying.  With ``per_cell`` every large cell gets its
    own parameter, which widens the search at the price of rougher steps.
    Returns ``None`` if no admissible path exists.
    """
    V = np.array([base])
    cost = np.array([0.0])
    history = []
    started = False
    for kind, lo, hi in _segments(classes, per_cell):
        if kind == "Z":
            rise = np.array([0.0])
            add = np.array([0.0])
        elif kind == "S":
            frac = np.linspace(0.0, 1.0, 9)
            rise = ta[lo] * (1.0 + frac)
            add = frac
        else:
            need = np.max((GAP + margin) / ta[lo:hi] - 1.0)
            frac = np.linspace(max(need, 0.0), 1.0, choices)
            rise = np.sum(ta[lo:hi]) * (1.0 + frac)
            add = frac
        newV = V[:, None] + rise[None, :]
        newC = cost[:, None] + add[None, :]
        ok = np.ones(newV.shape, bool)
        if kind == "Z":
            if started:
                ok &= _ladder_dist(V[:, None], theta0) >= GAP + margin
        elif kind == "S":
            b = rise[None, :]
            need_d = GAP + margin - b
            end_ok = np.minimum(_ladder_dist(V[:, None], theta0),
                                _ladder_dist(newV, theta0)) >= need_d
            ok &= end_ok & ~_crosses(V[:, None], b, theta0)
            started = True
        else:
            started = True
        parent, choice = np.nonzero(ok)
        if len(parent) == 0:
            return None
        v = newV[parent, choice]
        cst = newC[parent, choice]
        key = np.floor(np.mod(v - theta0, 1.0) * bins).astype(int)
        order = np.lexsort((cst, key))
        key_sorted = key[order]
        first = order[np.concatenate([[True], key_sorted[1:] != key_sorted[:-1]])]
        history.append((kind, lo, hi, parent[first], choice[first]))
        V, cost = v[first], cst[first]
    final_ok = _ladder_dist(V, theta0) >= GAP + margin if started else np.ones(len(V), bool)
    if not np.any(final_ok):
        return None
    idx = int(np.flatnonzero(final_ok)[np.argmin(cost[final_ok])])
    steps = np.zeros(len(ta))
    for kind, lo, hi, parents, chosen in reversed(history):
        ch = chosen[idx]
        if kind == "S":
            steps[lo] = ta[lo] * (1.0 + np.linspace(0.0, 1.0, 9)[ch])
        elif kind == "B":
            need = np.max((GAP + margin) / ta[lo:hi] - 1.0)
            frac = np.linspace(max(need, 0.0), 1.0, choices)[ch]
            steps[lo:hi] = ta[lo:hi] * (1.0 + frac)
        idx = int(parents[idx])
    return steps


def build_weight(spec: WeightSpec, margins=(0.01, 0.02, 0.04, 0.005, 0.0)) -> CarlemanWeight:
    """Construct the mollified weight for ``spec``.

    The envelope ``a_j`` is two-sided, so the sequence is placed far enough
    into the window that its left tail fits (``c[0]`` sits on cell
    ``1 + pad``).  Cells with ``tau a_j <= nu`` get ``b_j = 0``.  The
    remaining heights are chosen inside ``[tau a_j, 2 tau a_j]`` so that the
    gap condition holds after mollification; when no admissible choice exists
    the lower end ``tau a_j`` is used and the gap check reports the failure.
    """
    c = spec.c
    tau = spec.tau
    total = float(np.sum(c))
    # envelope decays like 2^{-nu d} away from the support; stop once tau a <= nu
    pad = 1
    if total > 0 and tau * total > spec.nu:
        pad += int(math.ceil(math.log2(tau * total / spec.nu) / spec.nu))
    a_full = slowly_varying_envelope(np.concatenate([np.zeros(pad), c]), spec.nu,
                                     len(c) + 2 * pad)
    ta = tau * a_full
    window_min = spec.window
    base = spec.baseline
    weight = None
    for per_cell, margin in [(False, m) for m in margins] + [(True, m) for m in margins]:
        classes = _classify(a_full, tau, spec.nu, GAP + margin)
        active = [i for i, ch in enumerate(classes) if ch != "Z"]
        ncell = active[-1] + 1 if active else 0
        a, classes = a_full[:ncell], classes[:ncell]
        t = np.arange(int(round(max(window_min, ncell + 4.0) / spec.step)) + 1) * spec.step
        steps = (_choose_steps(ta[:ncell], classes, base, spec.theta0, margin, per_cell=per_cell)
                 if ncell else np.zeros(0))
        if steps is None:
            continue
        weight = _sample_weight(t, steps, spec, a, classes, base)
        if _gap_profile(weight, None).min() >= GAP - 1e-9:
            return weight
    if weight is None:
        steps = np.where(np.array(list(classes)) == "Z", 0.0, ta[:ncell])
        weight = _sample_weight(t, steps, spec, a, classes, base)
    return weight


def _sample_weight(t, steps, spec: WeightSpec, a, classes, base) -> CarlemanWeight:
    w = CarlemanWeight(t, t, t, t, t, t, np.zeros_like(t), spec.tau, base, spec.theta0,
                       np.asarray(steps, float), np.asarray(a, float), classes, spec.nu,
                       spec.b, spec.n)
    w.h, w.dh, w.d2h, w.d3h, w.d4h = (w.evaluate(t, d) for d in range(5))
    # piecewise-constant second derivative before mollification; cell j = [j+1, j+2]
    cell = np.floor(t).astype(int) - 1
    inside = (cell >= 0) & (cell < len(steps))
    w.steps = np.zeros_like(t)
    w.steps[inside] = np.asarray(steps)[cell[inside]]
    return w


# -- checks ------------------------------------------------------------------
@dataclass
class WeightReport:
    slowly_varying: bool
    slope_ok: bool
    gap_ok: bool
    derivative_ok: bool
    C: float
    C_slope: float
    C_derivative: float
    min_gap: float
    min_shifted_distance: float
    min_raw_distance: float
    convex: bool

    @property
    def ok(self) -> bool:
        return self.slowly_varying and self.slope_ok and self.gap_ok and self.derivative_ok

    def lines(self) -> list[str]:
        flag = {True: "pass", False: "FAIL"}
        return [
            f"slowly varying: {flag[self.slowly_varying]}",
            f"slope bounds: {flag[self.slope_ok]} (C = {self.C_slope:.4g})",
            f"gap >= 1/4: {flag[self.gap_ok]} (min h'' + dist = {self.min_gap:.6g}; "
            f"shifted dist {self.min_shifted_distance:.6g}, raw dist {self.min_raw_distance:.6g})",
            f"derivative growth: {flag[self.derivative_ok]} (C = {self.C_derivative:.4g})",
            f"constant C = {self.C:.4g}",
        ]


def _distance_to(points: np.ndarray, ladder: np.ndarray) -> np.ndarray:
    idx = np.clip(np.searchsorted(ladder, points), 1, len(ladder) - 1)
    return np.minimum(np.abs(points - ladder[idx - 1]), np.abs(points - ladder[idx]))


def _gap_profile(w: CarlemanWeight, spectrum: SphericalSpectrum | None, shifted: bool = True):
    if spectrum is None:
        return w.d2h + _ladder_dist(w.dh, w.theta0)
    ladder = spectrum.ladder(float(np.max(w.dh)) + 2, shifted=shifted)
    return w.d2h + _distance_to(w.dh, ladder)


def check_weight(w: CarlemanWeight, spectrum: SphericalSpectrum | None = None,
                 c_max: float = C_MAX) -> WeightReport:
    """Slope, gap and derivative-growth checks with the measured constant ``C``."""
    if spectrum is None:
        spectrum = spherical_spectrum(w.n, w.b, 16)
    a = w.envelope
    r = 2.0 ** w.nu
    sv = bool(np.all(a[:-1] <= r * a[1:] * (1 + 1e-12)) and np.all(a[1:] <= r * a[:-1] * (1 + 1e-12)))
    C_slope = max(float(np.max(w.dh)) / w.tau, w.tau / float(np.min(w.dh)))
    one = 1.0 + w.d2h
    growth = float(np.max(np.maximum(np.abs(w.d3h), np.abs(w.d4h)) / one))
    C_der = max(growth, float(np.max(one)) / w.tau)
    gap = _gap_profile(w, spectrum, shifted=True)
    ladder = spectrum.ladder(float(np.max(w.dh)) + 2, shifted=True)
    raw = spectrum.ladder(float(np.max(w.dh)) + 2, shifted=False)
    C = max(C_slope, C_der, 1.0)
    return WeightReport(
        slowly_varying=sv,
        slope_ok=C_slope <= c_max,
        gap_ok=bool(gap.min() >= GAP - 1e-9),
        derivative_ok=C_der <= c_max,
        C=C,
        C_slope=C_slope,
        C_derivative=C_der,
        min_gap=float(gap.min()),
        min_shifted_distance=float(_distance_to(w.dh, ladder).min()),
        min_raw_distance=float(_distance_to(w.dh, raw).min()),
        convex=bool(np.all(w.d2h >= -1e-12)),
    )


def random_sequence(rng: np.random.Generator, delta: float = 0.1, length: int = 30,
                    spikes: int | None = None) -> np.ndarray:
    """Sparse nonnegative sequence with l1 norm uniformly in ``(0.1, 0.95) delta``."""
    spikes = int(rng.integers(1, 6)) if spikes is None else spikes
    c = np.zeros(length)
    pos = rng.choice(length, size=spikes, replace=False)
    c[pos] = rng.dirichlet(np.ones(spikes))
    return c * delta * rng.uniform(0.1, 0.95)


# -- conformal coordinates -------------------------------------------------
@dataclass
class CylinderField:
    """``tilde u(t, theta) = e^{(1-b-n)t/2} u(e^{-t} theta)`` on a (t, theta) grid."""

    t: np.ndarray
    theta: np.ndarray
    values: np.ndarray
    n: int
    b: float

    @property
    def c_nb(self) -> float:
        return conformal_constant(self.n, self.b)

    @property
    def exponent(self) -> float:
        return (1 - self.b - self.n) / 2.0

    def inverse(self, x, y) -> np.ndarray:
        """Resample ``u`` at Cartesian points inside the annulus (cubic interpolation)."""
        x, y = np.asarray(x, float), np.asarray(y, float)
        r = np.hypot(x, y)
        t = -np.log(r)
        th = np.arctan2(y, x)
        spline = interpolate.RectBivariateSpline(self.t, self.theta, self.values, kx=3, ky=3)
        vals = spline(t.ravel(), th.ravel(), grid=False).reshape(t.shape)
        return np.exp(-self.exponent * t) * vals


def conformal_transform(u, n: int, b: float, r_min: float, r_max: float,
                        nt: int = 129, ntheta: int = 129) -> CylinderField:
    """Sample ``u`` on an annulus of the upper half plane in conformal coordinates.

    ``u`` is an :class:`~fracext.extension.ExtensionField` (its ``u_0`` is
    used) or a callable ``u(x, y)``.
    """
    if n != 1:
        raise NotImplementedError("only n = 1 is supported")
    _check_b(b)
    if not 0 < r_min < r_max:
        raise ValueError("need 0 < r_min < r_max")
    t = np.linspace(-math.log(r_max), -math.log(r_min), nt)
    theta = np.linspace(0.0, math.pi, ntheta)
    T, TH = np.meshgrid(t, theta, indexing="ij")
    r = np.exp(-T)
    x, y = r * np.cos(TH), np.maximum(r * np.sin(TH), 0.0)
    if hasattr(u, "evaluate"):
        vals = u.evaluate(x.ravel(), y.ravel()).reshape(x.shape)
    else:
        vals = np.asarray(u(x, y), float)
    return CylinderField(t, theta, np.exp((1 - b - n) / 2.0 * T) * vals, n, b)


# -- mode-wise commutator identity -----------------------------------------
@dataclass
class CommutatorReport:
    lhs: float
    rhs: float
    norm_S: float
    norm_A: float
    terms: tuple[float, float, float]

    @property
    def residual(self) -> float:
        return abs(self.lhs - self.rhs) / max(abs(self.lhs), 1e-300)

    @property
    def signs(self) -> tuple[int, int, int]:
        return tuple(int(np.sign(v)) for v in self.terms)


def _spectral_derivatives(f: np.ndarray, dt: float, orders=(1, 2)):
    N = len(f)
    k = 2 * math.pi * np.fft.rfftfreq(N, d=dt)
    F = np.fft.rfft(f)
    out = []
    for p in orders:
        mult = (1j * k) ** p
        if N % 2 == 0 and p % 2 == 1:
            mult[-1] = 0.0
        out.append(np.fft.irfft(F * mult, n=N))
    return out


def mode_commutator_check(w: CarlemanWeight, lam: float, alpha, c_nb: float | None = None,
                          support_tol: float = 1e-13) -> CommutatorReport:
    """Check ``|(S+A)a|^2 = |Sa|^2 + |Aa|^2 + <[S,A]a, a>`` for one angular mode.

    ``S a = a'' - lam^2 a + h'^2 a + c a`` and ``A a = -2 h' a' - h'' a``;
    the commutator is evaluated from its closed form
    ``4 int h'' h'^2 a^2 + 4 int h'' a'^2 - int h'''' a^2``.
    """
    t = w.t
    a = np.asarray(alpha(t) if callable(alpha) else alpha, float)
    if a.shape != t.shape:
        raise ValueError("alpha must be sampled on the weight's t-grid")
    scale = np.max(np.abs(a))
    if scale == 0 or max(abs(a[0]), abs(a[-1]), abs(a[1]), abs(a[-2])) > support_tol * scale:
        raise ValueError("alpha must be nonzero and vanish near both ends of the t-grid")
    c = conformal_constant(w.n, w.b) if c_nb is None else c_nb
    dt = t[1] - t[0]
    da, d2a = _spectral_derivatives(a, dt)
    h1, h2, h4 = w.dh, w.d2h, w.d4h
    Sa = d2a - lam ** 2 * a + h1 ** 2 * a + c * a
    Aa = -2 * h1 * da - h2 * a

    def integral(g):
        return float(np.sum(g) * dt)

    lhs = integral((Sa + Aa) ** 2)
    nS, nA = integral(Sa ** 2), integral(Aa ** 2)
    terms = (4 * integral(h2 * h1 ** 2 * a ** 2), 4 * integral(h2 * da ** 2), -integral(h4 * a ** 2))
    return CommutatorReport(lhs, nS + nA + sum(terms), nS, nA, terms)


def random_profile(w: CarlemanWeight, rng: np.random.Generator):
    """Gaussian-windowed random polynomial supported well inside the window."""
    T = w.window
    center = rng.uniform(0.3 * T, 0.7 * T)
    width = rng.uniform(0.5, 2.0)
    coef = rng.normal(size=4)

    def alpha(t):
        s = (t - center) / width
        return np.polynomial.polynomial.polyval(s, coef) * np.exp(-s ** 2)

    return alpha


# -- Carleman ratios --------------------------------------------------------
def _laurent_L(P: Polynomial, e: int, lam: float, b: float, r1: float) -> tuple[Polynomial, int]:
    """Apply ``d^2 + (1+b)/r d - lam/r^2`` to ``P(r - r1) r^{-e}``.

    Polynomials are kept in the shifted variable ``s = r - r1`` so that the
    high-order zero at the inner edge is evaluated without cancellation.
    """
    r = Polynomial([r1, 1.0])
    dP, d2P = P.deriv(), P.deriv(2)
    Q = r * r * d2P - 2 * e * r * dP + e * (e + 1) * P + (1 + b) * (r * dP - e * P) - lam * P
    return Q, e + 2


def _laurent_eval(P: Polynomial, e: int, r: np.ndarray, r1: float, deriv: int = 0) -> np.ndarray:
    s = r - r1
    if deriv == 0:
        return P(s) * r ** (-e)
    return (P.deriv()(s) * r - e * P(s)) * r ** (-e - 1)


@dataclass
class ManufacturedTest:
    """Separable test function ``chi(r) Theta(theta)`` on the half annulus ``r1 < r < r2``.

    ``chi = amplitude ((r - r1)(r2 - r))^p`` and ``Theta`` is the k-th Neumann
    mode (``kind='neumann'``, a Jacobi polynomial in ``cos theta``) or
    ``sin(k theta)`` (``kind='sine'``, only for ``b = 0``; it carries
    nonzero boundary flux).
    """

    r1: float
    r2: float
    p: int = 4
    k: int = 1
    kind: str = "neumann"
    amplitude: float = 1.0

    def radial(self) -> Polynomial:
        """``chi`` as a polynomial in ``s = r - r1``."""
        s = Polynomial([0.0, 1.0])
        return self.amplitude * (s * (self.r2 - self.r1 - s)) ** self.p

    def angular(self, b: float, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
        """``Theta``, ``Theta'`` and the eigenvalue."""
        if self.kind == "neumann":
            a = (b - 1) / 2
            x = np.cos(theta)
            val = special.eval_jacobi(self.k, a, a, x)
            if self.k == 0:
                dval = np.zeros_like(x)
            else:
                dval = -np.sin(theta) * 0.5 * (self.k + 2 * a + 1) * special.eval_jacobi(self.k - 1, a + 1, a + 1, x)
            return val, dval, self.k * (self.k + b)
        if self.kind == "sine":
            if b != 0:
                raise ValueError("sine modes are only admissible for b = 0")
            return np.sin(self.k * theta), self.k * np.cos(self.k * theta), float(self.k ** 2)
        raise ValueError(f"unknown kind {self.kind!r}")


def random_tests(rng: np.random.Generator, count: int = 10, b: float = 0.0,
                 neumann_only: bool = False, m: int = 0) -> list[ManufacturedTest]:
    """Random separable tests; the radial power is at least ``max(3, 2m + 2)``."""
    p_min = max(3, 2 * m + 2)
    tests = []
    for _ in range(count):
        r1 = rng.uniform(0.05, 0.5)
        r2 = r1 + rng.uniform(0.3, 2.0)
        kind = "neumann" if (neumann_only or b != 0 or rng.random() < 0.5) else "sine"
        k = int(rng.integers(0 if kind == "neumann" else 1, 6))
        tests.append(ManufacturedTest(r1, min(r2, 3.5), int(rng.integers(p_min, p_min + 4)), k, kind))
    return tests


@dataclass
class CarlemanRatio:
    tau: float
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        if self.lhs == 0 and self.rhs == 0:
            return 0.0
        return self.lhs / self.rhs


def _radial_nodes(r1: float, r2: float, panels: int = 24, order: int = 24):
    # geometric grading toward both ends of the support, where the weight concentrates
    g = np.geomspace(1e-7, 0.5, panels)
    edges = np.unique(np.concatenate([[0.0], g, 1.0 - g[::-1], [1.0]]))
    x, wq = special.roots_legendre(order)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        nodes.append(lo + (hi - lo) * (x + 1) / 2)
        weights.append(wq * (hi - lo) / 2)
    s, ws = np.concatenate(nodes), np.concatenate(weights)
    return r1 + (r2 - r1) * s, (r2 - r1) * ws


def carleman_ratio(test: ManufacturedTest, order, w: CarlemanWeight,
                   n_theta: int = 32, t_shift: float = 0.0) -> CarlemanRatio:
    """LHS/RHS of the weighted Carleman inequality for a manufactured solution.

    For ``m = 0`` the scalar estimate with bulk source ``f = y^b Delta_b u``
    and boundary flux ``g`` is evaluated; for ``m = 1`` the two-level system
    ``u_1 = Delta_b u_0``, ``f_1 = Delta_b u_1`` is used.  Norms are computed
    by Gauss-Jacobi quadrature in ``cos(theta)`` and graded Gauss-Legendre
    quadrature in ``r``; the weight is ``exp(h(-ln r + t_shift))``.  Both
    sides scale identically under dilations, so ``t_shift`` is equivalent to
    rescaling the test function and is used to move the convex part of the
    weight over the support.
    """
    order = as_order(order, 1)
    m, b = order.m, order.b
    if m > 1:
        raise NotImplementedError("only m <= 1 is supported")
    if not 0 < test.r1 < test.r2 < 4:
        raise ValueError("the support must lie in B_4 minus the origin")
    if test.p < 2 * m + 2:
        # otherwise the top-level source carries a surface measure at the support edge
        raise ValueError(f"radial power p = {test.p} too small for m = {m}; need p >= {2 * m + 2}")
    if test.kind == "sine" and m == 1:
        raise ValueError("the system estimate needs Neumann-compatible angular modes")
    tau = w.tau
    r, wr = _radial_nodes(test.r1, test.r2)
    a = (b - 1) / 2
    xq, wq = special.roots_jacobi(n_theta, a, a)
    theta = np.arccos(xq)
    Th, dTh, lam = test.angular(b, theta)
    Th0, dTh0, _ = test.angular(b, np.array([0.0, math.pi]))

    tt = -np.log(r) + t_shift
    hv = w.evaluate(tt, 0)
    hbar = 1.0 + w.evaluate(tt, 2)
    E2 = np.exp(2 * (hv - hv.max()))
    # bulk measure y^b dx dy = r^{1+b} sin^b dr dtheta; angular weight inside wq
    bulk_r = wr * r ** (1 + b) * E2
    bdry_r = wr * E2

    def bulk(radial_sq, angular_sq):
        return float(np.sum(bulk_r * radial_sq) * np.sum(wq * angular_sq))

    r1 = test.r1
    P0 = test.radial()
    u_r, du_r = _laurent_eval(P0, 0, r, r1), _laurent_eval(P0, 0, r, r1, 1)

    def grad_sq(vr, dvr):
        return bulk(dvr ** 2, Th ** 2) + bulk(vr ** 2 / r ** 2, dTh ** 2)

    if m == 0:
        P1, e1 = _laurent_L(P0, 0, lam, b, r1)
        f_r = _laurent_eval(P1, e1, r, r1)
        g_sq = (dTh0[0] ** 2 + dTh0[1] ** 2) * u_r ** 2 / r ** 2 if test.kind == "sine" else 0 * r
        trace_sq = (Th0[0] ** 2 + Th0[1] ** 2) * u_r ** 2
        lhs = (tau * math.sqrt(bulk(hbar * u_r ** 2 / r ** 2, Th ** 2))
               + math.sqrt(bulk(hbar * du_r ** 2, Th ** 2) + bulk(hbar * u_r ** 2 / r ** 2, dTh ** 2))
               + tau ** ((1 - b) / 2) * math.sqrt(np.sum(bdry_r * hbar * r ** (b - 1) * trace_sq)))
        rhs = (math.sqrt(bulk(r ** 2 * f_r ** 2, Th ** 2))
               + tau ** ((1 + b) / 2) * math.sqrt(np.sum(bdry_r * r ** (1 - b) * g_sq)))
        return CarlemanRatio(tau, lhs, rhs)

    P1, e1 = _laurent_L(P0, 0, lam, b, r1)
    P2, e2 = _laurent_L(P1, e1, lam, b, r1)
    u1, du1 = _laurent_eval(P1, e1, r, r1), _laurent_eval(P1, e1, r, r1, 1)
    f1 = _laurent_eval(P2, e2, r, r1)

    def gradient_norm(vr, dvr, wgt):
        return math.sqrt(bulk(wgt * dvr ** 2, Th ** 2) + bulk(wgt * vr ** 2 / r ** 2, dTh ** 2))

    lhs = (tau ** 2 * math.sqrt(bulk(hbar ** 2 * u_r ** 2 / r ** 6, Th ** 2))
           + tau * gradient_norm(u_r, du_r, hbar ** 2 / r ** 4)
           + tau * math.sqrt(bulk(hbar * u1 ** 2 / r ** 2, Th ** 2))
           + gradient_norm(u1, du1, hbar))
    rhs = math.sqrt(bulk(r ** 2 * f1 ** 2, Th ** 2))
    return CarlemanRatio(tau, lhs, rhs)


def convex_shift(w: CarlemanWeight, test: ManufacturedTest) -> float:
    """Shift placing the maximum of ``h''`` at the middle of the test support (in ``t``)."""
    if not np.any(w.d2h > 0):
        return 0.0
    t_peak = float(w.t[np.argmax(w.d2h)])
    return t_peak + 0.5 * (math.log(test.r1) + math.log(test.r2))
