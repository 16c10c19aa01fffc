"""Fractional-Laplacian multipliers, Sobolev norms, dilation resampling, and a
real-space principal-value oracle.

The multiplier path defines (-Delta)^a through |k|^(2a) on the FFT lattice
with the zero mode annihilated.  The oracle evaluates the singular integral

    c_a P.V. int (u(x) - u(y)) / |x-y|^(3+2a) dy

directly: exact kernel moments over cells near x (with finite-difference
derivatives of u up to second order), midpoint summation with a curvature
correction farther out over one layer of periodic images, and an analytic
tail for the ball complement.  It shares nothing with the transform path.
"""

from __future__ import annotations

import threading
from math import gamma, pi

import numpy as np

from . import _fft
from .grid import Field, Grid, SpectralField, boundary_mass_fraction


def fractional_laplacian(u: Field, alpha: float) -> Field:
    """(-Delta)^alpha u via the |k|^(2 alpha) multiplier, alpha in (0, 1]."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"order alpha={alpha} outside (0, 1]")
    mult = u.grid.k_pow(2.0 * alpha)
    return Field(u.grid, _fft.ifftn(mult * _fft.fftn(u.values)).real)


def gagliardo_seminorm(u: Field, alpha: float) -> float:
    """|| (-Delta)^(alpha/2) u ||_2 from the weighted spectral sum."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"order alpha={alpha} outside (0, 1]")
    uh = _fft.fftn(u.values)
    s2 = np.sum(u.grid.k_pow(2.0 * alpha) * np.abs(uh) ** 2)
    return float(np.sqrt(s2 * u.grid.spectral_weight))


def lp_norm(u: Field, p: float) -> float:
    if p < 1:
        raise ValueError(f"p={p} must be >= 1")
    return float((np.sum(np.abs(u.values) ** p) * u.grid.cell_volume) ** (1.0 / p))


def hs_norm(u: Field, alpha: float) -> float:
    """Full Sobolev norm sqrt(||u||_2^2 + seminorm^2)."""
    return float(np.hypot(lp_norm(u, 2), gagliardo_seminorm(u, alpha)))


def spectral_gradient(u: Field):
    """(d/dx, d/dy, d/dz) u by i*k multipliers; used for cross-checks."""
    uh = _fft.fftn(u.values)
    k = u.grid.k1
    parts = []
    for ax in range(3):
        shape = [1, 1, 1]
        shape[ax] = u.grid.n
        parts.append(Field(u.grid, _fft.ifftn(1j * k.reshape(shape) * uh).real))
    return tuple(parts)


class DilationOverflowError(ValueError):
    """Dilated support leaks into the periodic boundary layer."""


def _eval_matrix(grid: Grid, tau: float) -> np.ndarray:
    """1-d matrix E[j, m] evaluating the trigonometric interpolant at x_j/tau.

    The FFT phases live on index coordinates, so the evaluation points are
    shifted by L/2 before pairing with the frequency lattice.
    """
    y = grid.x1 / tau + grid.L / 2.0
    return np.exp(1j * np.outer(y, grid.k1)) / grid.n


def dilate(u: Field, tau: float, method: str = "spectral",
           boundary_tol: float = 1e-6) -> Field:
    """Resample u(x/tau) on the same grid.

    Spectral resampling evaluates the trigonometric interpolant exactly at
    the scaled points (three dense 1-d transforms); trilinear is the cheap
    fallback.  Raises DilationOverflowError when the result carries more
    than boundary_tol of its squared mass within two cells of a face.
    """
    if not tau > 0:
        raise ValueError(f"dilation scale tau={tau} must be positive")
    if tau == 1.0:
        return u
    g = u.grid
    # evaluation points leaving the box (tau < 1) wrap periodically; there
    # the true decaying field is below its boundary values, so zero them
    outside = np.abs(g.x1 / tau) > g.L / 2.0 - g.h
    if method == "spectral":
        E = _eval_matrix(g, tau)
        w = _fft.fftn(u.values)
        w = np.tensordot(E, w, axes=(1, 0))
        w = np.tensordot(E, w, axes=(1, 1)).transpose(1, 0, 2)
        w = np.tensordot(E, w, axes=(1, 2)).transpose(1, 2, 0)
        w = w.real
        if outside.any():
            w[outside, :, :] = 0.0
            w[:, outside, :] = 0.0
            w[:, :, outside] = 0.0
        out = Field(g, w)
    elif method == "trilinear":
        idx = (g.x1 / tau) / g.h + g.n // 2
        lo = np.floor(idx).astype(np.int64)
        frac = idx - lo
        vals = np.zeros(g.shape)
        v = u.values
        for bx in (0, 1):
            wx = np.where(bx, frac, 1 - frac)[:, None, None]
            ix = (lo + bx) % g.n
            for by in (0, 1):
                wy = np.where(by, frac, 1 - frac)[None, :, None]
                iy = (lo + by) % g.n
                for bz in (0, 1):
                    wz = np.where(bz, frac, 1 - frac)[None, None, :]
                    iz = (lo + bz) % g.n
                    vals += wx * wy * wz * v[np.ix_(ix, iy, iz)]
        if outside.any():
            vals[outside, :, :] = 0.0
            vals[:, outside, :] = 0.0
            vals[:, :, outside] = 0.0
        out = Field(g, vals)
    else:
        raise ValueError(f"unknown dilation method {method!r}")
    frac_b = boundary_mass_fraction(out)
    if frac_b > boundary_tol:
        raise DilationOverflowError(
            f"dilate(tau={tau}): boundary mass fraction {frac_b:.2e} exceeds "
            f"{boundary_tol:.1e}")
    return out


# ---------------------------------------------------------------------------
# principal-value oracle
# ---------------------------------------------------------------------------

def frac_lap_constant(alpha: float) -> float:
    """Normalization making the singular integral match the |k|^(2a) symbol:
    c_a = 4^a * a * Gamma(3/2 + a) / (pi^(3/2) * Gamma(1 - a))."""
    return 4.0**alpha * alpha * gamma(1.5 + alpha) / (pi**1.5 * gamma(1.0 - alpha))


_TABLE_CACHE: dict = {}
_TABLE_LOCK = threading.Lock()


def _kernel_moment_tables(alpha: float, m: int, ng: int = 12):
    """Moments of |z|^(-3-2a) over unit cells centered at c, |c|_inf <= m:
    T (0th), F (1st, 3 comps), M (2nd, xx yy zz xy xz yz).  The singular
    cell keeps only its integrable second moment (analytic ball radius 1/2
    plus Gauss quadrature on the cube corners)."""
    key = (round(alpha, 12), m, ng)
    with _TABLE_LOCK:
        if key in _TABLE_CACHE:
            return _TABLE_CACHE[key]
    g, w = np.polynomial.legendre.leggauss(ng)
    g = g / 2.0
    w = w / 2.0
    c1 = np.arange(-m, m + 1).astype(float)
    npts = len(c1)
    T = np.zeros((npts,) * 3)
    F = np.zeros((npts,) * 3 + (3,))
    M = np.zeros((npts,) * 3 + (6,))
    beta = (3.0 + 2.0 * alpha) / 2.0
    GX, GY, GZ = np.meshgrid(g, g, g, indexing="ij")
    W3 = (w[:, None, None] * w[None, :, None] * w[None, None, :]).ravel()
    gx, gy, gz = GX.ravel(), GY.ravel(), GZ.ravel()
    for ia in range(npts):
        X = c1[ia] + gx
        for ib in range(npts):
            Y = c1[ib] + gy
            Z = c1[:, None] + gz[None, :]
            R2 = X[None, :] ** 2 + Y[None, :] ** 2 + Z**2
            K = np.where(R2 > 0, R2, 1.0) ** (-beta)
            T[ia, ib, :] = K @ W3
            F[ia, ib, :, 0] = (K * gx) @ W3
            F[ia, ib, :, 1] = (K * gy) @ W3
            F[ia, ib, :, 2] = K @ (gz * W3)
            M[ia, ib, :, 0] = (K * gx * gx) @ W3
            M[ia, ib, :, 1] = (K * gy * gy) @ W3
            M[ia, ib, :, 2] = K @ (gz * gz * W3)
            M[ia, ib, :, 3] = (K * gx * gy) @ W3
            M[ia, ib, :, 4] = (K * gx) @ (gz * W3)
            M[ia, ib, :, 5] = (K * gy) @ (gz * W3)
    ball = 4.0 * pi * 0.5 ** (2.0 - 2 * alpha) / (2.0 - 2 * alpha)
    gg, ww = np.polynomial.legendre.leggauss(24)
    gg = gg / 2.0
    ww = ww / 2.0
    XX, YY, ZZ = np.meshgrid(gg, gg, gg, indexing="ij")
    WW = ww[:, None, None] * ww[None, :, None] * ww[None, None, :]
    RR2 = XX**2 + YY**2 + ZZ**2
    corner = np.sum(np.where(RR2 > 0.25,
                             RR2 ** (-(1.0 + 2 * alpha) / 2.0), 0.0) * WW)
    T[m, m, m] = 0.0
    F[m, m, m] = 0.0
    M[m, m, m] = 0.0
    M[m, m, m, 0] = M[m, m, m, 1] = M[m, m, m, 2] = (ball + corner) / 3.0
    out = (T, F, M)
    with _TABLE_LOCK:
        _TABLE_CACHE[key] = out
    return out


def _d1(w, ax, h):
    """4th-order first derivative on the [2:-2] core of a halo-2 window."""
    def sl(o):
        return tuple(slice(2 + o, w.shape[a] - 2 + o) if a == ax
                     else slice(2, -2) for a in range(3))
    return (-w[sl(2)] + 8 * w[sl(1)] - 8 * w[sl(-1)] + w[sl(-2)]) / (12 * h)


def _d2(w, ax, h):
    def sl(o):
        return tuple(slice(2 + o, w.shape[a] - 2 + o) if a == ax
                     else slice(2, -2) for a in range(3))
    return (-w[sl(2)] + 16 * w[sl(1)] - 30 * w[sl(0)] + 16 * w[sl(-1)]
            - w[sl(-2)]) / (12 * h * h)


def _dmix(w, ax1, ax2, h):
    def sl(o1, o2):
        out = []
        for a in range(3):
            o = o1 if a == ax1 else (o2 if a == ax2 else 0)
            out.append(slice(2 + o, w.shape[a] - 2 + o))
        return tuple(out)
    acc = np.zeros(tuple(s - 4 for s in w.shape))
    coeff = {2: -1.0, 1: 8.0, -1: -8.0, -2: 1.0}
    for o1, c1 in coeff.items():
        for o2, c2 in coeff.items():
            acc += c1 * c2 * w[sl(o1, o2)]
    return acc / (144 * h * h)


def singular_integral_oracle(u: Field, alpha: float, points,
                             images: int = 1) -> np.ndarray:
    """Evaluate c_a P.V. int (u(x)-u(y)) |x-y|^(-3-2a) dy at grid points.

    `points` is a sequence of index triples (ix, iy, iz); at most 32 are
    accepted.  Points in the outer quarter of the box are rejected: the far
    tail assumes the ball complement sits well inside the image layer.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"order alpha={alpha} outside (0, 1)")
    points = [tuple(int(c) for c in p) for p in points]
    if len(points) > 32:
        raise ValueError("oracle accepts at most 32 points")
    g = u.grid
    n, h, L = g.n, g.h, g.L
    m = min(10, n // 2 - 3)
    if m < 2:
        raise ValueError(f"grid n={n} too small for the oracle window")
    for p in points:
        x0 = np.array([g.x1[c % n] for c in p])
        if np.max(np.abs(x0)) > 0.25 * L:
            raise ValueError(
                f"oracle point {p} lies in the boundary layer (|x| > L/4)")
    T, F, M = _kernel_moment_tables(alpha, m)
    c_a = frac_lap_constant(alpha)
    ubar = float(u.values.mean())
    X, Y, Z = g.coords()
    vals = np.empty(len(points))
    beta = 3.0 + 2 * alpha
    offs = np.arange(-images, images + 1) * L
    for ip, p in enumerate(points):
        i, j, k = (c % n for c in p)
        x0 = np.array([g.x1[i], g.x1[j], g.x1[k]])
        ux = u.values[i, j, k]
        ci = np.arange(-m - 2, m + 3)
        win = u.values[np.ix_((i + ci) % n, (j + ci) % n, (k + ci) % n)]
        core = win[2:-2, 2:-2, 2:-2]
        near = np.sum((ux - core) * T) * h ** (-2 * alpha)
        near -= (np.sum(_d1(win, 0, h) * F[..., 0])
                 + np.sum(_d1(win, 1, h) * F[..., 1])
                 + np.sum(_d1(win, 2, h) * F[..., 2])) * h ** (1 - 2 * alpha)
        near -= 0.5 * (np.sum(_d2(win, 0, h) * M[..., 0])
                       + np.sum(_d2(win, 1, h) * M[..., 1])
                       + np.sum(_d2(win, 2, h) * M[..., 2])
                       + 2 * np.sum(_dmix(win, 0, 1, h) * M[..., 3])
                       + 2 * np.sum(_dmix(win, 0, 2, h) * M[..., 4])
                       + 2 * np.sum(_dmix(win, 1, 2, h) * M[..., 5])
                       ) * h ** (2 - 2 * alpha)
        R = (2 * images + 1) * L / 2.0 - np.max(np.abs(x0))
        rcut = (m + 0.5) * h
        curv = (h * h / 24.0) * beta * (beta - 1.0)
        far = 0.0
        for ox in offs:
            for oy in offs:
                for oz in offs:
                    dx = X + ox - x0[0]
                    dy = Y + oy - x0[1]
                    dz = Z + oz - x0[2]
                    inf_norm = np.maximum(np.maximum(abs(dx), abs(dy)), abs(dz))
                    r2 = dx * dx + dy * dy + dz * dz
                    mask = (inf_norm > rcut) & (r2 <= R * R)
                    rr2 = r2[mask]
                    kk = rr2 ** (-beta / 2.0) * (1.0 + curv / rr2)
                    far += np.sum((ux - u.values[mask]) * kk) * h**3
        # beyond the ball the periodic extension averages to the grid mean
        tail = (ux - ubar) * (2.0 * pi / alpha) * R ** (-2.0 * alpha)
        vals[ip] = c_a * (near + far + tail)
    return vals


_DIRECTIONS_26 = None


def _directions():
    """±axes, face diagonals, and corners of the cube (26 unit vectors)."""
    global _DIRECTIONS_26
    if _DIRECTIONS_26 is None:
        dirs = []
        for ix in (-1, 0, 1):
            for iy in (-1, 0, 1):
                for iz in (-1, 0, 1):
                    if ix == iy == iz == 0:
                        continue
                    v = np.array([ix, iy, iz], dtype=float)
                    dirs.append(v / np.linalg.norm(v))
        _DIRECTIONS_26 = np.array(dirs)
    return _DIRECTIONS_26


def radial_anisotropy(u: Field, radii=None) -> float:
    """Direction spread of the trigonometric interpolant over spheres.

    Evaluates u exactly (to its bandwidth) at 26 directions per radius and
    returns rms over samples of (u - sphere mean) / rms(u samples).  Immune
    to radial slope, unlike shell-binned estimators.
    """
    g = u.grid
    if radii is None:
        radii = (np.arange(g.n // 4) + 0.5) * g.h
    dirs = _directions()
    uh = _fft.fftn(u.values)
    k = g.k1
    samples = np.empty((len(radii), len(dirs)))
    for j, r in enumerate(radii):
        pts = r * dirs + g.L / 2.0
        ex = np.exp(1j * pts[:, 0, None] * k[None, :])
        ey = np.exp(1j * pts[:, 1, None] * k[None, :])
        ez = np.exp(1j * pts[:, 2, None] * k[None, :])
        vals = np.einsum("da,db,dc,abc->d", ex, ey, ez, uh,
                         optimize=True).real / g.n**3
        samples[j] = vals
    means = samples.mean(axis=1, keepdims=True)
    num = np.sqrt(np.mean((samples - means) ** 2))
    den = np.sqrt(np.mean(samples**2)) + 1e-300
    return float(num / den)


def to_spectral(u: Field) -> SpectralField:
    return u.fft()
