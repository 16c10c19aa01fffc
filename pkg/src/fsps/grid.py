"""Periodic cubic grids on [-L/2, L/2)^3 and real scalar fields living on them.

The frequency lattice follows the FFT layout exactly: k = (2*pi/L) * m with
m in {0, 1, ..., n/2-1, -n/2, ..., -1} per axis.  Cell quadrature weight is
h^3 everywhere, which makes the trapezoidal rule exact for bandlimited
periodic integrands.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _fft

SNAPSHOT_MAGIC = b"FSPS"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIIdddd")


class SnapshotError(ValueError):
    """Raised for malformed field snapshot files."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid: n points per axis, box edge L, spacing h = L/n."""

    n: int
    L: float

    def __post_init__(self):
        if self.n < 8 or self.n % 2 != 0:
            raise ValueError(f"grid size n={self.n} must be even and >= 8")
        if not self.L > 0:
            raise ValueError(f"box length L={self.L} must be positive")

    @property
    def h(self) -> float:
        return self.L / self.n

    @property
    def cell_volume(self) -> float:
        return self.h**3

    @property
    def shape(self):
        return (self.n, self.n, self.n)

    @cached_property
    def x1(self) -> np.ndarray:
        """Centered 1-d coordinates, x in [-L/2, L/2)."""
        x = (np.arange(self.n) - self.n // 2) * self.h
        x.setflags(write=False)
        return x

    @cached_property
    def k1(self) -> np.ndarray:
        """1-d frequencies matching the transform layout."""
        k = 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.h)
        k.setflags(write=False)
        return k

    @cached_property
    def r2(self) -> np.ndarray:
        """|x|^2 on the grid."""
        x = self.x1
        out = (x[:, None, None] ** 2 + x[None, :, None] ** 2
               + x[None, None, :] ** 2)
        out.setflags(write=False)
        return out

    @cached_property
    def k2(self) -> np.ndarray:
        """|k|^2 on the frequency lattice."""
        k = self.k1
        out = (k[:, None, None] ** 2 + k[None, :, None] ** 2
               + k[None, None, :] ** 2)
        out.setflags(write=False)
        return out

    def coords(self):
        """Meshgrid (X, Y, Z) of cell centers."""
        x = self.x1
        return np.meshgrid(x, x, x, indexing="ij")

    def k_pow(self, p: float) -> np.ndarray:
        """|k|^p with the zero mode set to 0."""
        k2 = self.k2
        with np.errstate(divide="ignore"):
            out = np.where(k2 > 0.0, k2, 1.0) ** (p / 2.0)
        out[0, 0, 0] = 0.0
        return out

    @property
    def spectral_weight(self) -> float:
        """Parseval weight: sum |u|^2 h^3 = spectral_weight * sum |fft(u)|^2."""
        return self.cell_volume / self.n**3


def make_grid(n: int, L: float) -> Grid:
    return Grid(int(n), float(L))


@dataclass(frozen=True)
class Field:
    """Immutable real scalar samples on a Grid, indexed values[ix, iy, iz]."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != self.grid.shape:
            raise ValueError(f"field shape {v.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        if v.flags.writeable:
            v = v.copy()
            v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def fft(self) -> "SpectralField":
        return SpectralField(self.grid, _fft.fftn(self.values))

    def __add__(self, other: "Field") -> "Field":
        self._check(other)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        self._check(other)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "Field":
        return Field(self.grid, self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)

    def _check(self, other):
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")


@dataclass(frozen=True)
class SpectralField:
    """Complex Fourier coefficients of a real Field (FFT layout)."""

    grid: Grid
    coefficients: np.ndarray = field(repr=False)

    def ifft(self) -> Field:
        return Field(self.grid, _fft.ifftn(self.coefficients).real)


def field_from_function(grid: Grid, f) -> Field:
    X, Y, Z = grid.coords()
    return Field(grid, np.asarray(f(X, Y, Z), dtype=np.float64))


def gaussian_field(grid: Grid, width: float = 1.0, amplitude: float = 1.0) -> Field:
    return Field(grid, amplitude * np.exp(-grid.r2 / (2.0 * width**2)))


def boundary_mass_fraction(u: Field, layers: int = 2) -> float:
    """Fraction of sum(u^2) carried by cells within `layers` of a box face."""
    v2 = u.values**2
    total = float(v2.sum())
    if total == 0.0:
        return 0.0
    n = u.grid.n
    core = v2[layers:n - layers, layers:n - layers, layers:n - layers]
    return float((total - core.sum()) / total)


def radial_profile(u: Field, nbins: int | None = None):
    """Shell-average u over |x| bins of width h.  Returns (r_centers, means)."""
    g = u.grid
    r = np.sqrt(g.r2)
    nbins = nbins or g.n // 2
    idx = np.minimum((r / g.h).astype(np.int64), nbins - 1)
    counts = np.bincount(idx.ravel(), minlength=nbins)
    sums = np.bincount(idx.ravel(), weights=u.values.ravel(), minlength=nbins)
    means = sums / np.maximum(counts, 1)
    centers = (np.arange(nbins) + 0.5) * g.h
    return centers, means


def radial_deviation(u: Field) -> float:
    """Relative L2 deviation of u from its own radial average."""
    g = u.grid
    norm = float(np.sqrt((u.values**2).sum()))
    if norm == 0.0:
        return 0.0
    r = np.sqrt(g.r2)
    nbins = g.n  # fine enough to cover the corner radius sqrt(3)L/2
    idx = np.minimum((r / g.h).astype(np.int64), nbins - 1)
    counts = np.bincount(idx.ravel(), minlength=nbins)
    sums = np.bincount(idx.ravel(), weights=u.values.ravel(), minlength=nbins)
    means = sums / np.maximum(counts, 1)
    dev = u.values - means[idx]
    return float(np.sqrt((dev**2).sum()) / norm)


def save_field(path, u: Field, s: float = 0.0, t: float = 0.0,
               lam: float = 0.0) -> None:
    """Write the binary snapshot: magic, version, n, L, s, t, lambda, then
    n^3 little-endian f64 values with the x index varying fastest."""
    header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, u.grid.n,
                          u.grid.L, s, t, lam)
    payload = np.ascontiguousarray(
        u.values.transpose(2, 1, 0), dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_field(path):
    """Read a snapshot; returns (Field, meta) with meta = {s, t, lambda}."""
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise SnapshotError("truncated snapshot header")
        magic, version, n, L, s, t, lam = _HEADER.unpack(raw)
        if magic != SNAPSHOT_MAGIC:
            raise SnapshotError(f"bad magic {magic!r}")
        if version != SNAPSHOT_VERSION:
            raise SnapshotError(f"unsupported snapshot version {version}")
        data = np.frombuffer(fh.read(n**3 * 8), dtype="<f8")
        if data.size != n**3:
            raise SnapshotError("truncated snapshot payload")
    values = data.reshape(n, n, n).transpose(2, 1, 0)
    return Field(make_grid(n, L), values), {"s": s, "t": t, "lambda": lam}
