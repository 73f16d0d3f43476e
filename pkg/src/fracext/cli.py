"""Config-driven command line front end.

Usage::

    fracext run <name> [--config FILE] [--key value ...]
    fracext list

Settings come from an optional flat ``key = value`` file, and command line
flags override them.  Every run writes a CSV (``--out``), may write a line
plot (``--plot``), prints a short report and exits with

* 0 when every declared check passes,
* 1 when a check fails,
* 2 for an unknown subcommand,
* 3 for malformed input (bad keys, values or files),
* 4 for I/O failures.

All randomness comes from one generator seeded by ``seed`` (default 42).
``FRACEXT_THREADS`` sets the worker count for independent sweep points;
results are assembled in a fixed order, so it never changes the output.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import io as fio
from .bessel import QuadratureError, kernel_tail_mass, profile
from .grid import PeriodicGrid, SpectralField
from .order import as_order

EXIT_PASS, EXIT_FAIL, EXIT_UNKNOWN, EXIT_MALFORMED, EXIT_IO = 0, 1, 2, 3, 4


class ConfigError(ValueError):
    """Missing, unknown or unparsable configuration value."""


# ---------------------------------------------------------------- value types

def _float(s: str) -> float:
    s = s.strip().lower()
    if s in ("pi", "2pi"):
        return math.pi * (2 if s == "2pi" else 1)
    return float(s)


def _floats(s: str) -> list[float]:
    return [_float(t) for t in s.replace(";", ",").split(",") if t.strip()]


def _ints(s: str) -> list[int]:
    return [int(t) for t in s.replace(";", ",").split(",") if t.strip()]


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], object]
    default: str | None
    help: str
    required: bool = False


def _k(parse, default, help_, required=False) -> Key:
    return Key(parse, default, help_, required)


COMMON = {
    "seed": _k(int, "42", "seed of the single random generator"),
    "plot": _k(str, None, "optional raster image path for a line plot"),
}

FIELD_KEYS = {
    "n": _k(int, "1", "tangential dimension (1 or 2)"),
    "N": _k(int, "64", "grid points per axis (power of two)"),
    "period": _k(_float, "2pi", "torus period"),
    "modes": _k(str, "1:1", "boundary datum as 'k:amp[:sin]' terms separated by commas; n=2 uses 'kx/ky:amp'"),
    "field": _k(str, None, "FLD1 file with the boundary datum (overrides modes)"),
}


@dataclass
class ExperimentConfig:
    """A subcommand name plus its raw string settings."""

    name: str
    params: dict[str, str] = field(default_factory=dict)


@dataclass
class ExperimentReport:
    """Outcome of one run; ``rows`` match ``header``."""

    name: str
    config: dict
    header: list[str]
    rows: list
    checks: dict[str, bool]
    notes: list[str] = field(default_factory=list)
    wall: float = 0.0
    plot_axes: tuple[int, int] | None = (0, 1)
    log_axes: tuple[bool, bool] = (False, False)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def lines(self) -> list[str]:
        out = [f"fracext {self.name}"]
        out += [f"  {k} = {v}" for k, v in sorted(self.config.items())]
        out += self.notes
        out += [f"check {k}: {'PASS' if ok else 'FAIL'}" for k, ok in self.checks.items()]
        out.append(f"rows: {len(self.rows)}  wall: {self.wall:.2f} s  "
                   f"result: {'PASS' if self.passed else 'FAIL'}")
        return out


@dataclass
class Subcommand:
    name: str
    summary: str
    keys: dict[str, Key]
    func: Callable[[dict, np.random.Generator], ExperimentReport]


REGISTRY: dict[str, Subcommand] = {}


def subcommand(name: str, summary: str, keys: dict[str, Key], out_default: str | None = None):
    def deco(func):
        allkeys = dict(keys)
        allkeys["seed"] = COMMON["seed"]
        allkeys["plot"] = COMMON["plot"]
        allkeys.setdefault("out", _k(str, out_default or f"{name}.csv", "output CSV path"))
        REGISTRY[name] = Subcommand(name, summary, allkeys, func)
        return func
    return deco


def resolve(config: ExperimentConfig) -> dict:
    """Typed parameter map; raises :class:`ConfigError`."""
    sub = REGISTRY[config.name]
    unknown = set(config.params) - set(sub.keys)
    if unknown:
        raise ConfigError(f"unknown keys for {config.name}: {', '.join(sorted(unknown))}")
    out = {}
    for key, spec in sub.keys.items():
        raw = config.params.get(key, spec.default)
        if raw is None:
            if spec.required:
                raise ConfigError(f"missing required key '{key}'")
            out[key] = None
            continue
        try:
            out[key] = spec.parse(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for '{key}': {raw!r} ({exc})") from None
    return out


# ---------------------------------------------------------------- helpers

def _workers() -> int:
    try:
        return max(1, int(os.environ.get("FRACEXT_THREADS", "1")))
    except ValueError:
        return 1


def _map(func, items) -> list:
    items = list(items)
    w = _workers()
    if w == 1 or len(items) < 2:
        return [func(i) for i in items]
    with ThreadPoolExecutor(max_workers=w) as pool:
        return list(pool.map(func, items))


def parse_modes(spec: str, grid: PeriodicGrid) -> SpectralField:
    """Build ``sum amp cos(k.x)`` (or ``sin``) from ``'k:amp[:sin]'`` terms."""
    X = grid.coordinates()
    vals = np.zeros(grid.shape)
    for term in spec.split(","):
        term = term.strip()
        if not term:
            continue
        parts = term.split(":")
        if len(parts) not in (2, 3):
            raise ConfigError(f"bad mode term {term!r}")
        ks = [float(v) for v in parts[0].split("/")]
        if len(ks) != grid.n:
            raise ConfigError(f"mode {term!r} needs {grid.n} wavenumber(s)")
        amp = float(parts[1])
        kind = parts[2].strip() if len(parts) == 3 else "cos"
        if kind not in ("cos", "sin"):
            raise ConfigError(f"mode kind must be cos or sin, got {kind!r}")
        phase = sum(k * x * 2 * math.pi / grid.period for k, x in zip(ks, X))
        vals += amp * (np.cos(phase) if kind == "cos" else np.sin(phase))
    return SpectralField(grid, vals)


def _datum(p: dict) -> SpectralField:
    if p.get("field"):
        return fio.read_field(p["field"])
    return parse_modes(p["modes"], PeriodicGrid(p["n"], p["N"], p["period"]))


def _window(spec: str, N: int) -> np.ndarray:
    """``'a:b'`` is ``range(a, b)``; a bare count is a centered window."""
    if ":" in spec:
        a, b = (int(v) for v in spec.split(":"))
        if not 0 <= a < b <= N:
            raise ConfigError(f"window {spec!r} outside 0..{N}")
        return np.arange(a, b)
    w = int(spec)
    if not 1 <= w <= N:
        raise ConfigError(f"window size {w} outside 1..{N}")
    start = N // 2 - w // 2
    return np.arange(start, start + w)


def _noninteger(gamma: float) -> None:
    if gamma <= 0 or float(gamma).is_integer():
        raise ConfigError("gamma must be positive and not an integer")


def _operator(p: dict, grid: PeriodicGrid):
    from .varcoef import MetricField, assemble_operator
    metric = fio.read_metric(p["metric"], grid.period) if p.get("metric") else MetricField.identity(grid)
    if metric.grid.N != grid.N or metric.grid.n != grid.n:
        raise ConfigError("metric grid does not match the field grid")
    return assemble_operator(metric, method=p.get("method") or "spectral")


def emit_plot(rows, path, xlabel: str = "x", ylabel: str = "y",
              logx: bool = False, logy: bool = False) -> bool:
    """Line plot of ``(x, y)`` rows.

    Returns ``False`` with a warning, never an exception, when there are
    fewer than two rows or plotting fails.
    """
    rows = list(rows)
    if len(rows) < 2:
        warnings.warn("need at least two rows to plot; skipping image", RuntimeWarning, stacklevel=2)
        return False
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        data = np.asarray(rows, dtype=float)
        fig, ax = plt.subplots(figsize=(5, 3.5), dpi=100)
        ax.plot(data[:, 0], data[:, 1], lw=1.2, marker="o" if len(data) <= 50 else None, ms=3)
        if logx:
            ax.set_xscale("log")
        if logy and np.all(data[:, 1] > 0):
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
        return True
    except Exception as exc:  # plotting never fails a run
        warnings.warn(f"plot not written: {exc}", RuntimeWarning, stacklevel=2)
        return False


def _report(name, p, header, rows, checks, notes=(), plot_axes=(0, 1), log_axes=(False, False)):
    return ExperimentReport(name, {k: v for k, v in p.items() if v is not None}, header,
                            rows, checks, list(notes), plot_axes=plot_axes, log_axes=log_axes)


# ---------------------------------------------------------------- subcommands

@subcommand("extend", "extension of a boundary datum, written as an EXT1 file", {
    "gamma": _k(_float, None, "fractional order (not an integer)", True),
    **FIELD_KEYS,
    "y_min": _k(_float, "1e-5", "smallest height"),
    "y_max": _k(_float, "4", "largest height"),
    "M": _k(int, "64", "number of geometric heights"),
    "csv": _k(str, None, "optional CSV of per-mode profiles u(k,y)/f(k)"),
    "tol": _k(_float, "1e-6", "tolerance for the extrapolated Dirichlet trace"),
}, out_default="extension.ext")
def _run_extend(p, rng):
    from .extension import ExtensionGrid, extend
    _noninteger(p["gamma"])
    f = _datum(p)
    yg = ExtensionGrid(f.grid, p["y_min"], p["y_max"], p["M"])
    ext = extend(f, p["gamma"], yg)
    vals = ext.on_grid(0, "tower")
    data = fio.ExtensionData(f.grid, p["gamma"], yg.y, vals)
    fio.write_extension(data, p["out"])
    fhat = f.coefficients
    active = np.argwhere(np.abs(fhat) > 1e-12 * max(np.max(np.abs(fhat)), 1e-300))
    coeffs = data.coefficients()
    ks = [np.rint(k).astype(int) for k in f.grid.wavenumbers()]
    rows = []
    for idx in active:
        idx = tuple(idx)
        label = "/".join(str(int(k[idx])) for k in ks)
        if any(int(k[idx]) < 0 for k in ks[:1]):
            continue
        prof = np.real(coeffs[(slice(None),) + idx] / fhat[idx])
        rows += [(float(y), label, float(v)) for y, v in zip(yg.y, prof)]
    trace = ext.dirichlet_trace(0)
    err = float(np.max(np.abs(trace.values - f.values)) / max(np.max(np.abs(f.values)), 1e-300))
    if p["csv"]:
        fio.write_csv(p["csv"], ["y", "k", "profile"], rows)
    checks = {"finite": bool(np.all(np.isfinite(vals))), "trace": err <= p["tol"]}
    return _report("extend", p, ["y", "k", "profile"], rows, checks,
                   [f"trace error: {err:.3e}"], plot_axes=None)


@subcommand("weight", "build and audit a Carleman weight", {
    "tau": _k(_float, None, "large parameter (> 1)", True),
    "nu": _k(_float, "0.1", "envelope decay"),
    "delta": _k(_float, "0.1", "bound on the l1 mass of the sequence"),
    "seq": _k(str, None, "file with one c_j per line; empty file means c = 0; absent means a random draw"),
    "length": _k(int, "30", "length of a random draw"),
    "n": _k(int, "1", "tangential dimension"),
    "b": _k(_float, "0", "weight exponent b in (-1, 1)"),
    "c_max": _k(_float, "10", "largest admissible reported constant"),
})
def _run_weight(p, rng):
    from .carleman import WeightSpec, build_weight, check_weight, random_sequence
    c = fio.read_sequence(p["seq"]) if p["seq"] else random_sequence(rng, p["delta"], p["length"])
    spec = WeightSpec(c, p["tau"], nu=p["nu"], delta=p["delta"], n=p["n"], b=p["b"])
    w = build_weight(spec)
    rep = check_weight(w, c_max=p["c_max"])
    rows = [(float(a), float(b_), float(c_), float(d)) for a, b_, c_, d in zip(w.t, w.h, w.dh, w.d2h)]
    checks = {"slowly-varying": rep.slowly_varying, "slope": rep.slope_ok,
              "gap": rep.gap_ok, "derivative": rep.derivative_ok}
    return _report("weight", p, ["t", "h", "dh", "d2h"], rows, checks, rep.lines(),
                   plot_axes=(0, 2))


@subcommand("carleman-ratio", "Carleman ratio sweep over tau on manufactured tests", {
    "gamma": _k(_float, "0.5", "fractional order (m = floor(gamma) <= 1)"),
    "taus": _k(_floats, "16,64,256", "large parameters"),
    "tests": _k(int, "10", "number of manufactured test functions"),
    "seq": _k(str, None, "sequence file for the weight (default: a fixed two-spike sequence)"),
    "n_theta": _k(int, "32", "angular quadrature size"),
    "bound": _k(_float, "1", "uniform bound required of the ratio"),
})
def _run_carleman_ratio(p, rng):
    from .carleman import WeightSpec, build_weight, carleman_ratio, convex_shift, random_tests
    _noninteger(p["gamma"])
    order = as_order(p["gamma"])
    if order.m > 1:
        raise ConfigError("carleman-ratio supports floor(gamma) <= 1")
    c = fio.read_sequence(p["seq"]) if p["seq"] else np.array([0, 0, 0.03, 0, 0.02])
    tests = random_tests(rng, p["tests"], b=order.b, neumann_only=order.m >= 1, m=order.m)

    def one(tau):
        w = build_weight(WeightSpec(c, tau, b=order.b))
        return max(carleman_ratio(t, order, w, n_theta=p["n_theta"], t_shift=convex_shift(w, t)).ratio
                   for t in tests)

    ratios = _map(one, p["taus"])
    rows = [(float(t), float(r)) for t, r in zip(p["taus"], ratios)]
    checks = {"finite": bool(np.all(np.isfinite(ratios))), "bounded": max(ratios) <= p["bound"]}
    return _report("carleman-ratio", p, ["tau", "ratio"], rows, checks,
                   [f"max ratio: {max(ratios):.4g}"], log_axes=(True, False))


@subcommand("kernel-tail", "Poisson-kernel tail mass and its log-log slope in eps", {
    "gamma": _k(_float, None, "fractional order", True),
    "n": _k(int, "1", "tangential dimension"),
    "alpha": _k(int, "0", "tangential derivative order"),
    "a": _k(_float, "1", "tail radius"),
    "eps": _k(_floats, "1e-1,1e-2,1e-3,1e-4", "heights"),
    "expect": _k(_float, None, "expected slope (default 2 gamma)"),
    "tol": _k(_float, "0.05", "slope tolerance"),
})
def _run_kernel_tail(p, rng):
    _noninteger(p["gamma"])
    eps = np.asarray(p["eps"])
    if len(eps) < 2 or np.any(eps <= 0):
        raise ConfigError("need at least two positive eps values")
    mass = np.array(_map(lambda e: kernel_tail_mass(p["gamma"], p["n"], p["alpha"], p["a"], e), eps))
    slope = float(np.polyfit(np.log(eps), np.log(mass), 1)[0])
    expect = 2 * p["gamma"] if p["expect"] is None else p["expect"]
    rows = [(float(e), float(m), slope) for e, m in zip(eps, mass)]
    checks = {"slope": abs(slope - expect) <= p["tol"]}
    return _report("kernel-tail", p, ["eps", "mass", "fitted_slope"], rows, checks,
                   [f"fitted slope: {slope:.6f} (expected {expect:.6f})"], log_axes=(True, True))


@subcommand("heat-extend", "heat-semigroup extension for a variable-coefficient operator", {
    "gamma": _k(_float, None, "fractional order (not an integer)", True),
    "y": _k(_floats, "0.1,0.5,1", "heights"),
    "metric": _k(str, None, "MET1 metric file (default: identity)"),
    "method": _k(str, "spectral", "operator discretization: spectral or fd"),
    "quad_tol": _k(_float, "1e-12", "quadrature tolerance"),
    **FIELD_KEYS,
    "N": _k(int, "32", "grid points per axis"),
    "tol": _k(_float, "1e-6", "agreement tolerance between representations"),
})
def _run_heat_extend(p, rng):
    from .varcoef import heat_extension
    _noninteger(p["gamma"])
    f = _datum(p)
    L = _operator(p, f.grid)
    rows, errs = [], []
    scale = max(np.max(np.abs(f.values)), 1e-300)
    for y in p["y"]:
        heat = heat_extension(L, p["gamma"], f, y, "heat", p["quad_tol"])
        power = heat_extension(L, p["gamma"], f, y, "power", p["quad_tol"])
        errs.append(float(np.max(np.abs(heat.values - power.values)) / scale))
        if not p["metric"]:
            mult = profile(p["gamma"], f.grid.wavenumber_magnitude() * y)
            ref = np.real(np.fft.ifftn(mult * f.coefficients * f.grid.size))
            errs.append(float(np.max(np.abs(heat.values - ref)) / scale))
        for i, (h, w) in enumerate(zip(heat.values.ravel(), power.values.ravel())):
            rows.append((float(y), i, float(h), float(w)))
    checks = {"representations": max(errs) <= p["tol"]}
    return _report("heat-extend", p, ["y", "index", "heat", "power"], rows, checks,
                   [f"max disagreement: {max(errs):.3e}"], plot_axes=None)


def _extension(p):
    from .extension import extend
    _noninteger(p["gamma"])
    return extend(_datum(p), p["gamma"])


@subcommand("doubling", "doubling quotients of an extension over shrinking radii", {
    "gamma": _k(_float, "0.5", "fractional order"),
    **FIELD_KEYS,
    "radii": _k(_floats, "0.4,0.2,0.1,0.05", "radii"),
    "q": _k(int, "32", "quadrature size"),
    "bound": _k(_float, "inf", "required bound on the quotients"),
})
def _run_doubling(p, rng):
    from .ucp import doubling_quotients
    rep = doubling_quotients(_extension(p), p["radii"], p["q"])
    rows = [(float(r), float(np.sum(rep.norms[:, i])), float(qv))
            for i, (r, qv) in enumerate(zip(rep.radii, rep.quotients))]
    qs = np.asarray(rep.quotients)
    checks = {"finite": bool(np.all(np.isfinite(qs))), "bounded": bool(np.all(qs <= p["bound"]))}
    return _report("doubling", p, ["r", "norm", "quotient"], rows, checks, [rep.caveat],
                   plot_axes=(0, 2), log_axes=(True, False))


def _profile(spec: str):
    s = spec.strip().lower()
    if s == "exp":
        return lambda x: np.exp(-1.0 / np.maximum(np.abs(x), 1e-300))
    if s.startswith("power:"):
        p = float(s.split(":", 1)[1])
        return lambda x: np.abs(x) ** p
    raise ConfigError("profile must be 'exp' or 'power:p'")


@subcommand("vanish-order", "vanishing order from log-log slopes of local L2 norms", {
    "profile": _k(str, "power:2", "'power:p' for |x|^p or 'exp' for exp(-1/|x|)"),
    "field": _k(str, None, "FLD1 file (overrides profile)"),
    "radii": _k(_floats, "0.4,0.2,0.1,0.05", "radii (at least four)"),
    "q": _k(int, "64", "quadrature size"),
})
def _run_vanish(p, rng):
    from .ucp import vanishing_order
    f = fio.read_field(p["field"]) if p["field"] else _profile(p["profile"])
    rep = vanishing_order(f, p["radii"], p["q"])
    loc = np.concatenate([[np.nan], np.asarray(rep.local_slopes, float)])
    rows = [(float(r), float(nv), float(s)) for r, nv, s in zip(rep.radii, rep.norms, loc)]
    checks = {"norms": bool(np.all(np.isfinite(rep.norms)))}
    return _report("vanish-order", p, ["r", "norm", "local_slope"], rows, checks,
                   [f"fitted order: {rep.slope:.6g}"], log_axes=(True, True))


@subcommand("blowup", "normalization of rescaled extension towers", {
    "gamma": _k(_float, "0.5", "fractional order"),
    **FIELD_KEYS,
    "sigmas": _k(_floats, "0.25,0.1,0.01", "rescaling radii"),
    "q": _k(int, "32", "quadrature size"),
    "tol": _k(_float, "1e-10", "tolerance on the normalization"),
})
def _run_blowup(p, rng):
    from .ucp import blowup_rescale, normalization_sum
    ext = _extension(p)
    rows = []
    for s in p["sigmas"]:
        total = normalization_sum(blowup_rescale(ext, s, p["q"]), p["q"])
        rows.append((float(s), float(total), float(abs(total - 1))))
    checks = {"normalized": max(r[2] for r in rows) <= p["tol"]}
    return _report("blowup", p, ["sigma", "sum", "error"], rows, checks, plot_axes=(0, 2),
                   log_axes=(True, False))


@subcommand("trace-ratio", "trace inequality ratio over random bulk functions", {
    "b": _k(_float, "0", "weight exponent in (-1, 1)"),
    "draws": _k(int, "30", "number of random functions"),
    "modes": _k(int, "4", "modes per random function"),
    "nx": _k(int, "128", "tangential quadrature points"),
    "ny": _k(int, "48", "normal quadrature points"),
    "bound": _k(_float, "1", "required bound on the ratio"),
    "tol": _k(_float, "1e-12", "scale-invariance tolerance"),
})
def _run_trace(p, rng):
    from .ucp import random_trace_function, trace_ratio
    draws = [random_trace_function(rng, p["modes"]) for _ in range(p["draws"])]

    def one(d):
        w, gr = d
        a = trace_ratio(w, p["b"], grad=gr, nx=p["nx"], ny=p["ny"]).ratio
        b2 = trace_ratio(lambda x, y: 2 * w(x, y), p["b"], grad=lambda x, y: 2 * gr(x, y),
                         nx=p["nx"], ny=p["ny"]).ratio
        return a, abs(a - b2) / a if a else 0.0

    res = _map(one, draws)
    rows = [(i, float(a), float(s)) for i, (a, s) in enumerate(res)]
    ratios = np.array([r[1] for r in rows])
    checks = {"finite": bool(np.all(np.isfinite(ratios))), "bounded": bool(ratios.max() <= p["bound"]),
              "scale-invariant": max(r[2] for r in rows) <= p["tol"]}
    return _report("trace-ratio", p, ["draw", "ratio", "scale_error"], rows, checks,
                   [f"sup ratio: {ratios.max():.4g}"])


@subcommand("caccioppoli", "Caccioppoli ratio of an extension on half balls", {
    "gamma": _k(_float, "0.5", "fractional order"),
    **FIELD_KEYS,
    "radii": _k(_floats, "1", "half-ball radii"),
    "J": _k(int, "0", "tower index"),
    "q": _k(int, "32", "quadrature size"),
    "bound": _k(_float, "inf", "required bound on the ratio"),
})
def _run_caccioppoli(p, rng):
    from .ucp import caccioppoli_ratio
    ext = _extension(p)
    rows = []
    for r in p["radii"]:
        rep = caccioppoli_ratio(ext, r=r, J=p["J"], q=p["q"])
        rows.append((float(r), float(rep.lhs), float(rep.rhs), float(rep.ratio)))
    ratios = np.array([r[3] for r in rows])
    checks = {"finite": bool(np.all(np.isfinite(ratios))), "bounded": bool(np.all(ratios <= p["bound"]))}
    return _report("caccioppoli", p, ["r", "lhs", "rhs", "ratio"], rows, checks, plot_axes=(0, 3))


@subcommand("interp-ratio", "interpolation inequality ratio over random band-limited data", {
    "gamma": _k(_float, "2.5", "fractional order"),
    "j": _k(int, "2", "intermediate index, 1 <= j <= floor(gamma)"),
    "N": _k(int, "128", "grid points"),
    "draws": _k(int, "20", "number of random data"),
    "modes": _k(int, "8", "modes per datum"),
    "r": _k(_float, "0.5", "inner radius"),
    "q": _k(int, "128", "quadrature size"),
    "bound": _k(_float, "inf", "required bound on the ratio"),
    "tol": _k(_float, "1e-12", "scale-invariance tolerance"),
})
def _run_interp(p, rng):
    from .grid import random_bandlimited
    from .ucp import interpolation_ratio
    _noninteger(p["gamma"])
    g = PeriodicGrid(1, p["N"])
    data = [random_bandlimited(g, p["modes"], rng) for _ in range(p["draws"])]

    def one(u):
        a = interpolation_ratio(u, p["j"], p["gamma"], p["r"], p["q"]).ratio
        b2 = interpolation_ratio(SpectralField(g, 3.0 * u.values), p["j"], p["gamma"], p["r"], p["q"]).ratio
        return a, abs(a - b2) / a if a else 0.0

    res = _map(one, data)
    rows = [(i, float(a), float(s)) for i, (a, s) in enumerate(res)]
    ratios = np.array([r[1] for r in rows])
    checks = {"finite": bool(np.all(np.isfinite(ratios))), "bounded": bool(np.all(ratios <= p["bound"])),
              "scale-invariant": max(r[2] for r in rows) <= p["tol"]}
    return _report("interp-ratio", p, ["draw", "ratio", "scale_error"], rows, checks,
                   [f"sup ratio: {ratios.max():.4g}"])


@subcommand("mucp", "smallness on a measurable boundary set", {
    "gamma": _k(_float, "0.5", "fractional order"),
    **FIELD_KEYS,
    "N": _k(int, "1024", "grid points"),
    "modes": _k(str, "0:1,1:0.5,3:0.2:sin", "boundary datum"),
    "mask": _k(str, "density_one", "density_one, half_line or everything"),
    "radii": _k(_floats, "0.4,0.2,0.1", "radii"),
    "q": _k(int, "32", "quadrature size"),
})
def _run_mucp(p, rng):
    from .ucp import MaskedSet, masked_smallness
    ext = _extension(p)
    makers = {"density_one": MaskedSet.density_one, "half_line": MaskedSet.half_line,
              "everything": MaskedSet.everything}
    if p["mask"] not in makers:
        raise ConfigError(f"unknown mask {p['mask']!r}")
    rep = masked_smallness(ext, makers[p["mask"]](ext.grid), p["radii"], p["q"])
    eps = rep.epsilon
    rows = [(float(r), float(d), float(a), float(b_), float(e))
            for r, d, a, b_, e in zip(rep.radii, rep.density, rep.lhs, rep.rhs, eps)]
    checks = {"finite": bool(np.all(np.isfinite(eps)))}
    return _report("mucp", p, ["r", "density", "lhs", "rhs", "epsilon"], rows, checks,
                   plot_axes=(0, 4))


@subcommand("antilocality", "null space of the restricted fractional power", {
    "gamma": _k(_float, None, "order (integers allowed as local controls)", True),
    "N": _k(int, "64", "grid points"),
    "window": _k(str, "5", "window size (centered) or 'a:b'"),
    "method": _k(str, "spectral", "operator discretization: spectral or fd"),
    "threshold": _k(_float, "1e-8", "relative singular value threshold"),
    "expect": _k(str, "auto", "'zero', 'positive' or 'auto' (zero unless gamma is an integer)"),
})
def _run_antilocality(p, rng):
    from .ucp import antilocality_nullspace
    if p["gamma"] <= 0:
        raise ConfigError("gamma must be positive")
    g = PeriodicGrid(1, p["N"])
    L = _operator({"metric": None, "method": p["method"]}, g)
    rep = antilocality_nullspace(L, p["gamma"], _window(p["window"], p["N"]), p["threshold"])
    expect = p["expect"]
    if expect == "auto":
        expect = "positive" if float(p["gamma"]).is_integer() else "zero"
    if expect not in ("zero", "positive"):
        raise ConfigError("expect must be zero, positive or auto")
    ok = rep.dimension == 0 if expect == "zero" else rep.dimension > 0
    rows = [(i, float(s)) for i, s in enumerate(rep.singular_values)]
    return _report("antilocality", p, ["index", "singular_value"], rows, {f"dimension-{expect}": ok},
                   [f"dimension: {rep.dimension}"], log_axes=(False, True))


@subcommand("runge", "Runge approximation errors for nested exterior windows", {
    "gamma": _k(_float, "0.5", "fractional order (not an integer)"),
    "N": _k(int, "64", "grid points"),
    "method": _k(str, "fd", "operator discretization: fd or spectral"),
    "omega": _k(str, "24:40", "domain index range 'a:b'"),
    "W": _k(str, "44:60", "largest exterior window 'a:b'"),
    "sizes": _k(_ints, "1,4,16", "nested window sizes (prefixes of W)"),
    "width": _k(_float, "0.3", "width of the Gaussian target"),
    "tol": _k(_float, "0.05", "relative error required at the largest window"),
    "realizable_tol": _k(_float, "1e-8", "relative error required for a realizable target"),
})
def _run_runge(p, rng):
    from .ucp import poisson_matrix, runge_approximate
    _noninteger(p["gamma"])
    g = PeriodicGrid(1, p["N"])
    L = _operator({"metric": None, "method": p["method"]}, g)
    om, W = _window(p["omega"], p["N"]), _window(p["W"], p["N"])
    sizes = sorted(p["sizes"])
    if not sizes or sizes[0] < 1 or sizes[-1] > len(W):
        raise ConfigError("window sizes must lie in 1..|W|")
    x = g.centered_coordinates()[0]
    centre = x[om].mean()
    v = np.exp(-((x[om] - centre) / p["width"]) ** 2)
    rows = []
    for s in sizes:
        rep = runge_approximate(L, p["gamma"], None, om, W[:s], v)
        rows.append(("smooth", s, float(rep.error), float(rep.relative_error)))
    P = poisson_matrix(L, p["gamma"], None, om, W)
    target = P @ rng.normal(size=len(W))
    real = runge_approximate(L, p["gamma"], None, om, W, target)
    rows.append(("realizable", len(W), float(real.error), float(real.relative_error)))
    errs = [r[3] for r in rows[:-1]]
    checks = {"monotone": all(b_ <= a + 1e-14 for a, b_ in zip(errs, errs[1:])),
              "smooth-target": errs[-1] <= p["tol"],
              "realizable-target": real.relative_error <= p["realizable_tol"]}
    return _report("runge", p, ["target", "size", "error", "relative_error"], rows, checks,
                   plot_axes=None)


# ---------------------------------------------------------------- driver

def run(config: ExperimentConfig) -> ExperimentReport:
    """Resolve, execute and time one experiment.  Writes nothing."""
    if config.name not in REGISTRY:
        raise KeyError(config.name)
    p = resolve(config)
    rng = np.random.default_rng(p["seed"])
    t0 = time.perf_counter()
    rep = REGISTRY[config.name].func(p, rng)
    rep.wall = time.perf_counter() - t0
    return rep


def write_outputs(rep: ExperimentReport) -> None:
    out = rep.config.get("out")
    if rep.name != "extend" and out:
        fio.write_csv(out, rep.header, rep.rows)
    plot = rep.config.get("plot")
    if plot and rep.plot_axes is not None:
        i, j = rep.plot_axes
        pts = [(r[i], r[j]) for r in rep.rows]
        emit_plot(pts, plot, rep.header[i], rep.header[j], *rep.log_axes)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="fracext", description="Extension, Carleman and unique-continuation experiments.",
                  formatter_class=argparse.RawDescriptionHelpFormatter,
                  epilog="exit codes: 0 pass, 1 check failure, 2 unknown subcommand, "
                         "3 malformed input, 4 I/O failure")
    sub = top.add_subparsers(dest="command")
    sub.add_parser("list", help="list subcommands")
    runp = sub.add_parser("run", help="run one experiment")
    names = runp.add_subparsers(dest="name", metavar="<name>")
    for name, sc in REGISTRY.items():
        lines = [f"  {k:<15} {s.help}" + ("" if s.default is None else f" [default: {s.default}]")
                 + (" (required)" if s.required else "") for k, s in sc.keys.items()]
        sp = names.add_parser(name, help=sc.summary, description=sc.summary,
                              formatter_class=argparse.RawDescriptionHelpFormatter,
                              epilog="config keys (as 'key = value' lines or --key value flags; "
                                     "'_' and '-' are interchangeable):\n"
                                     + "\n".join(lines))
        sp.add_argument("--config", help="flat 'key = value' config file")
        for k in sc.keys:
            flags = [f"--{k}"] + ([f"--{k.replace('_', '-')}"] if "_" in k else [])
            sp.add_argument(*flags, dest=k, default=None, metavar="VALUE", help=argparse.SUPPRESS)
    return top


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if len(argv) >= 2 and argv[0] == "run" and not argv[1].startswith("-") and argv[1] not in REGISTRY:
        print(f"fracext: unknown subcommand '{argv[1]}' (try 'fracext list')", file=sys.stderr)
        return EXIT_UNKNOWN
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"fracext: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.command == "list":
        for name, sc in REGISTRY.items():
            print(f"{name:<16} {sc.summary}")
        return EXIT_PASS
    if args.command != "run" or not args.name:
        parser.print_help()
        return EXIT_UNKNOWN
    params: dict[str, str] = {}
    try:
        if args.config:
            params.update(fio.read_config(args.config))
        for k in REGISTRY[args.name].keys:
            v = getattr(args, k, None)
            if v is not None:
                params[k] = v
        rep = run(ExperimentConfig(args.name, params))
        write_outputs(rep)
    except (ConfigError, fio.MalformedFileError) as exc:
        print(f"fracext: malformed input: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except OSError as exc:
        print(f"fracext: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except (QuadratureError, ArithmeticError) as exc:
        print(f"fracext: check failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        print(f"fracext: malformed input: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    for line in rep.lines():
        print(line)
    return EXIT_PASS if rep.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
