"""Plain-text serialization of fields, extensions, metrics and configs.

Every float is written with 17 significant digits, which round-trips an
IEEE double exactly.

* ``FLD1``: header ``FLD1 n N period`` then ``N**n`` samples, row-major.
* ``EXT1``: header ``EXT1 n N M gamma``, a line with the ``M`` heights,
  then one ``FLD1`` block per height.
* ``MET1``: header ``MET1 n N`` then one line per grid point holding the
  upper triangle of the symmetric matrix, row by row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import PeriodicGrid, SpectralField
from .varcoef import MetricField


class MalformedFileError(ValueError):
    """Raised for bad magic, bad headers or a wrong number of entries."""


def _fmt(x: float) -> str:
    return "%.17g" % x


def _join(values: np.ndarray, per_line: int = 8) -> str:
    flat = [_fmt(v) for v in np.ravel(values)]
    return "\n".join(" ".join(flat[i:i + per_line]) for i in range(0, len(flat), per_line))


def _floats(tokens: list[str], count: int, what: str) -> np.ndarray:
    if len(tokens) < count:
        raise MalformedFileError(f"{what}: expected {count} numbers, found {len(tokens)}")
    try:
        return np.array([float(t) for t in tokens[:count]])
    except ValueError as exc:
        raise MalformedFileError(f"{what}: {exc}") from None


def _field_header(tokens: list[str]) -> PeriodicGrid:
    if len(tokens) < 4 or tokens[0] != "FLD1":
        raise MalformedFileError("missing FLD1 header")
    try:
        n, N, period = int(tokens[1]), int(tokens[2]), float(tokens[3])
        return PeriodicGrid(n, N, period)
    except ValueError as exc:
        raise MalformedFileError(f"bad FLD1 header: {exc}") from None


def format_field(f: SpectralField) -> str:
    g = f.grid
    return f"FLD1 {g.n} {g.N} {_fmt(g.period)}\n{_join(f.values)}\n"


def parse_field(tokens: list[str]) -> tuple[SpectralField, list[str]]:
    """Parse one FLD1 block from a token list; returns the field and the rest."""
    grid = _field_header(tokens)
    vals = _floats(tokens[4:], grid.size, "FLD1 samples")
    try:
        field_ = SpectralField(grid, vals.reshape(grid.shape))
    except ValueError as exc:
        raise MalformedFileError(str(exc)) from None
    return field_, tokens[4 + grid.size:]


def write_field(f: SpectralField, path) -> None:
    Path(path).write_text(format_field(f))


def read_field(path) -> SpectralField:
    """Read a FLD1 file; raises :class:`MalformedFileError` on bad content."""
    field_, rest = parse_field(Path(path).read_text().split())
    if rest:
        raise MalformedFileError("trailing data after FLD1 samples")
    return field_


@dataclass
class ExtensionData:
    """Samples of an extension on ``M`` heights: ``values[i]`` lives at ``y[i]``."""

    grid: PeriodicGrid
    gamma: float
    y: np.ndarray
    values: np.ndarray

    def coefficients(self) -> np.ndarray:
        """Normalized Fourier coefficients per height, shape ``(M,) + grid.shape``."""
        axes = tuple(range(1, self.grid.n + 1))
        return np.fft.fftn(self.values, axes=axes) / self.grid.size


def write_extension(data: ExtensionData, path) -> None:
    g = data.grid
    parts = [f"EXT1 {g.n} {g.N} {len(data.y)} {_fmt(data.gamma)}", _join(data.y)]
    parts += [format_field(SpectralField(g, v)).rstrip("\n") for v in data.values]
    Path(path).write_text("\n".join(parts) + "\n")


def read_extension(path) -> ExtensionData:
    tokens = Path(path).read_text().split()
    if len(tokens) < 5 or tokens[0] != "EXT1":
        raise MalformedFileError("missing EXT1 header")
    try:
        n, N, M, gamma = int(tokens[1]), int(tokens[2]), int(tokens[3]), float(tokens[4])
    except ValueError as exc:
        raise MalformedFileError(f"bad EXT1 header: {exc}") from None
    if M < 1:
        raise MalformedFileError("EXT1 needs at least one height")
    y = _floats(tokens[5:], M, "EXT1 heights")
    rest = tokens[5 + M:]
    blocks = []
    grid = None
    for _ in range(M):
        f, rest = parse_field(rest)
        if (f.grid.n, f.grid.N) != (n, N):
            raise MalformedFileError("FLD1 block does not match the EXT1 header")
        grid = f.grid
        blocks.append(f.values)
    if rest:
        raise MalformedFileError("trailing data after EXT1 blocks")
    return ExtensionData(grid, gamma, y, np.array(blocks))


def write_metric(metric: MetricField, path) -> None:
    g = metric.grid
    iu = np.triu_indices(g.n)
    rows = metric.values.reshape(-1, g.n, g.n)[:, iu[0], iu[1]]
    body = "\n".join(" ".join(_fmt(v) for v in r) for r in rows)
    Path(path).write_text(f"MET1 {g.n} {g.N}\n{body}\n")


def read_metric(path, period: float = 2 * math.pi) -> MetricField:
    tokens = Path(path).read_text().split()
    if len(tokens) < 3 or tokens[0] != "MET1":
        raise MalformedFileError("missing MET1 header")
    try:
        grid = PeriodicGrid(int(tokens[1]), int(tokens[2]), period)
    except ValueError as exc:
        raise MalformedFileError(f"bad MET1 header: {exc}") from None
    n = grid.n
    per = n * (n + 1) // 2
    if len(tokens) - 3 != grid.size * per:
        raise MalformedFileError("wrong number of MET1 entries")
    tri = _floats(tokens[3:], grid.size * per, "MET1 entries").reshape(grid.size, per)
    vals = np.empty((grid.size, n, n))
    iu = np.triu_indices(n)
    vals[:, iu[0], iu[1]] = tri
    vals[:, iu[1], iu[0]] = tri
    try:
        return MetricField(grid, vals.reshape(grid.shape + (n, n)))
    except ValueError as exc:
        raise MalformedFileError(str(exc)) from None


def read_sequence(path) -> np.ndarray:
    """One number per line; blank lines and ``#`` comments are skipped."""
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            out.append(float(line))
        except ValueError:
            raise MalformedFileError(f"line {lineno}: not a number: {line!r}") from None
    return np.array(out, dtype=float)


def parse_config(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    cfg: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise MalformedFileError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise MalformedFileError(f"config line {lineno}: empty key")
        cfg[key.replace("-", "_")] = value
    return cfg


def read_config(path) -> dict[str, str]:
    return parse_config(Path(path).read_text())


def write_csv(path, header: list[str], rows) -> None:
    """Deterministic CSV: shortest round-trip ``repr`` for floats."""
    def cell(v):
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        if isinstance(v, (bool, np.bool_)):
            return "1" if v else "0"
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        return str(v)
    lines = [",".join(header)] + [",".join(cell(v) for v in r) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n")
