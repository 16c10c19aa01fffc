"""Concrete nonlinearity families, primitives, truncation, and the positive /
negative-part splitting used by the energy estimates.

Two families ship:

  subcritical_BL : g(t) = -m t + |t|^(p-2) t           (2 < p < 2*_s)
  critical_GN    : g(t) = -a t + b |t|^(2*_s - 2) t + mu |t|^(q-2) t

with 2*_s = 6/(3-2s).  Primitives are closed-form, so energies never need
quadrature; the split-pair primitives are integrated numerically on cached
Gauss nodes as a cross-check path.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import inf, isfinite

import numpy as np
from scipy.optimize import brentq

SUBCRITICAL = "subcritical_BL"
CRITICAL = "critical_GN"


def critical_exponent(s: float) -> float:
    """2*_s = 6 / (3 - 2 s)."""
    return 6.0 / (3.0 - 2.0 * s)


@dataclass(frozen=True)
class NonlinearitySpec:
    kind: str
    s: float
    m: float = 1.0
    p: float = 4.0
    a: float = 1.0
    b: float = 1.0
    mu: float = 1.0
    q: float = 3.0
    tau0: float | None = None   # None: untruncated; inf: negative part zeroed
    strict: bool = True         # False allows out-of-range diagnostics specs

    def __post_init__(self):
        if self.kind not in (SUBCRITICAL, CRITICAL):
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}")
        if not 0.0 < self.s <= 1.0:
            raise ValueError(f"s={self.s} outside (0, 1]")
        if not self.strict:
            return
        two_star = critical_exponent(self.s)
        if self.kind == SUBCRITICAL:
            if not self.m > 0:
                raise ValueError(f"m={self.m} must be positive")
            if not 2.0 < self.p < two_star:
                raise ValueError(
                    f"p={self.p} outside (2, {two_star:g}) for s={self.s}")
        else:
            for name in ("a", "b", "mu"):
                if not getattr(self, name) > 0:
                    raise ValueError(f"{name}={getattr(self, name)} must be positive")
            lo = max(two_star - 2.0, 2.0)
            if not lo < self.q < two_star:
                raise ValueError(
                    f"q={self.q} outside ({lo:g}, {two_star:g}) for s={self.s}")

    @property
    def decay_rate(self) -> float:
        """Linear decay rate at 0 (m for subcritical, a for critical)."""
        return self.m if self.kind == SUBCRITICAL else self.a

    def g(self, tau):
        """Pointwise nonlinearity; respects truncation when tau0 is set."""
        tau = np.asarray(tau, dtype=np.float64)
        if self.kind == SUBCRITICAL:
            raw = -self.m * tau + np.abs(tau) ** (self.p - 2) * tau
        else:
            two_star = critical_exponent(self.s)
            raw = (-self.a * tau + self.b * np.abs(tau) ** (two_star - 2) * tau
                   + self.mu * np.abs(tau) ** (self.q - 2) * tau)
        if self.tau0 is not None:
            raw = np.where(tau <= 0.0, 0.0, raw)
            if isfinite(self.tau0):
                raw = np.where(tau >= self.tau0, 0.0, raw)
        return raw if raw.ndim else float(raw)

    def G(self, tau):
        """Exact primitive with G(0) = 0."""
        tau = np.asarray(tau, dtype=np.float64)
        if self.tau0 is None:
            out = self._G_raw(tau)
        else:
            clipped = np.clip(tau, 0.0, self.tau0 if isfinite(self.tau0) else None)
            out = self._G_raw(clipped)
        return out if out.ndim else float(out)

    def _G_raw(self, tau):
        if self.kind == SUBCRITICAL:
            return -self.m * tau**2 / 2.0 + np.abs(tau) ** self.p / self.p
        two_star = critical_exponent(self.s)
        return (-self.a * tau**2 / 2.0
                + self.b * np.abs(tau) ** two_star / two_star
                + self.mu * np.abs(tau) ** self.q / self.q)

    def to_kv_block(self) -> str:
        tau0 = "none" if self.tau0 is None else repr(self.tau0)
        lines = [f"kind={self.kind}"]
        for name in ("m", "p", "a", "b", "mu", "q", "s"):
            lines.append(f"{name}={getattr(self, name)!r}")
        lines.append(f"tau0={tau0}")
        return "\n".join(lines)


def spec_from_kv_block(text: str) -> NonlinearitySpec:
    kv = {}
    for line in text.strip().splitlines():
        key, _, val = line.partition("=")
        kv[key.strip()] = val.strip()
    tau0 = None if kv.get("tau0", "none") == "none" else float(kv["tau0"])
    return NonlinearitySpec(
        kind=kv["kind"], s=float(kv["s"]), m=float(kv["m"]), p=float(kv["p"]),
        a=float(kv["a"]), b=float(kv["b"]), mu=float(kv["mu"]),
        q=float(kv["q"]), tau0=tau0)


def eval_g(spec: NonlinearitySpec, tau):
    """(g(tau), G(tau))."""
    return spec.g(tau), spec.G(tau)


_BRACKET_GRID = np.geomspace(1e-8, 1e8, 321)


def first_positive_level(spec: NonlinearitySpec) -> float:
    """xi = inf{tau > 0 : G(tau) > 0}, located by bisection after a
    sign bracket on a geometric grid."""
    G = spec._G_raw
    vals = G(_BRACKET_GRID)
    pos = np.nonzero(vals > 0.0)[0]
    if len(pos) == 0:
        raise ValueError("no positive level of G found on [1e-8, 1e8]")
    iright = pos[0]
    if iright == 0:
        return float(_BRACKET_GRID[0])
    lo, hi = _BRACKET_GRID[iright - 1], _BRACKET_GRID[iright]
    return float(brentq(lambda t: G(t), lo, hi, xtol=1e-14, rtol=1e-15))


def truncated(spec: NonlinearitySpec) -> NonlinearitySpec:
    """Zero g above its first zero past xi (if any) and on the negative axis."""
    if spec.kind != SUBCRITICAL:
        raise ValueError("truncation applies to the subcritical family")
    xi = first_positive_level(spec)
    grid = np.geomspace(xi * (1 + 1e-12), 1e8, 257)
    gv = spec.g(grid)
    neg = np.nonzero(gv <= 0.0)[0]
    if len(neg) == 0:
        tau0 = inf
    else:
        i = neg[0]
        if i == 0:
            tau0 = float(grid[0])
        else:
            tau0 = float(brentq(spec.g, grid[i - 1], grid[i], xtol=1e-14))
    return replace(spec, tau0=tau0)


@dataclass(frozen=True)
class SplitPair:
    """g1 = max(g + m tau, 0), g2 = g1 - g, with primitives by Gauss
    quadrature on cached nodes."""

    spec: NonlinearitySpec
    _nodes: np.ndarray
    _weights: np.ndarray

    def g1(self, tau):
        tau = np.asarray(tau, dtype=np.float64)
        out = np.maximum(self.spec.g(tau) + self.spec.decay_rate * tau, 0.0)
        return out if out.ndim else float(out)

    def g2(self, tau):
        tau = np.asarray(tau, dtype=np.float64)
        out = self.g1(tau) - self.spec.g(tau)
        return out if out.ndim else float(out)

    def _primitive(self, f, tau):
        tau = np.asarray(tau, dtype=np.float64)
        scalar = tau.ndim == 0
        tau = np.atleast_1d(tau)
        pts = 0.5 * tau[:, None] * (self._nodes[None, :] + 1.0)
        vals = f(pts) * (0.5 * tau[:, None] * self._weights[None, :])
        out = vals.sum(axis=1)
        return float(out[0]) if scalar else out

    def G1(self, tau):
        return self._primitive(self.g1, tau)

    def G2(self, tau):
        return self._primitive(self.g2, tau)


def split(spec: NonlinearitySpec, quad_points: int = 96) -> SplitPair:
    nodes, weights = np.polynomial.legendre.leggauss(quad_points)
    return SplitPair(spec, nodes, weights)


def smallest_split_constant(spec: NonlinearitySpec, eps: float,
                            taus=None) -> float:
    """Smallest C with g1 <= eps g2 + C tau^(2*_s - 1) on a log tau scan."""
    pair = split(spec)
    if taus is None:
        taus = np.geomspace(1e-6, 1e3, 400)
    two_star = critical_exponent(spec.s)
    need = pair.g1(taus) - eps * pair.g2(taus)
    return float(np.max(np.maximum(need, 0.0) / taus ** (two_star - 1.0)))


@dataclass(frozen=True)
class HypothesisResult:
    name: str
    passed: bool
    witness: float
    detail: str


def verify_hypotheses(spec: NonlinearitySpec, tol: float = 1e-6):
    """Evaluate the growth/sign hypotheses on geometric grids and report
    pass/fail with witness values.  Failures are reported, never raised."""
    results = []
    two_star = critical_exponent(spec.s)
    small = np.geomspace(1e-9, 1e-4, 40)
    big = np.geomspace(1e2, 1e6, 40)
    ratio0 = spec.g(small) / small
    ratio_inf = spec.g(big) / big ** (two_star - 1.0)

    if spec.kind == SUBCRITICAL:
        lim0 = float(ratio0[0])
        results.append(HypothesisResult(
            "H2", bool(lim0 < 0 and np.isfinite(lim0)), lim0,
            f"g(t)/t -> {lim0:.6g} as t -> 0 (expected -m = {-spec.m:g})"))
        limsup = float(np.max(ratio_inf[-8:]))
        results.append(HypothesisResult(
            "H3", bool(limsup <= tol), limsup,
            f"limsup g(t)/t^(2*-1) ~ {limsup:.6g} on t up to 1e6"))
        try:
            xi = first_positive_level(spec)
            results.append(HypothesisResult(
                "H4", True, xi, f"G({xi:.6g}) crosses zero upward"))
        except ValueError:
            results.append(HypothesisResult(
                "H4", False, float("nan"), "no positive level of G found"))
    else:
        lim0 = float(ratio0[0])
        results.append(HypothesisResult(
            "H2'", bool(abs(lim0 + spec.a) <= max(tol, 1e-4 * spec.a)), lim0,
            f"g(t)/t -> {lim0:.6g} (expected -a = {-spec.a:g})"))
        lim_inf = float(ratio_inf[-1])
        results.append(HypothesisResult(
            "H3'", bool(abs(lim_inf - spec.b) <= max(tol, 1e-4 * spec.b)),
            lim_inf, f"g(t)/t^(2*-1) -> {lim_inf:.6g} (expected b = {spec.b:g})"))
        taus = np.geomspace(1e-8, 1e8, 200)
        gap = (spec.g(taus) - spec.b * taus ** (two_star - 1.0) + spec.a * taus
               - spec.mu * taus ** (spec.q - 1.0))
        scale = np.maximum(spec.mu * taus ** (spec.q - 1.0), 1e-300)
        worst = float(np.min(gap / scale))
        results.append(HypothesisResult(
            "H4'", bool(worst >= -1e-12), worst,
            f"min (g - b t^(2*-1) + a t - mu t^(q-1)) / (mu t^(q-1)) = {worst:.3g}"))
    return results
