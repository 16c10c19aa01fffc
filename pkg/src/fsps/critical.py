"""Extremal bubble profiles, the cutoff family, small-scale divergence
verdicts, and the numerical Sobolev-quotient estimate with the strict-gap
check for the constrained kinetic minimum.

The bubble is kappa * eps^(-(3-2s)/2) * (mu^2 + |x / (eps c)|^2)^(-(3-2s)/2)
with c an internal length constant; every Rayleigh quotient computed from it
is invariant in kappa and in the choice of c (they reparametrize amplitude
and eps), so the quotient estimate needs no a-priori constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Field, Grid, radial_profile
from .nonlinearity import critical_exponent
from .solvers import GroundStateResult
from .spectral import gagliardo_seminorm, lp_norm


@dataclass(frozen=True)
class TalentiSpec:
    s: float
    eps: float
    kappa: float = 1.0
    mu_shape: float = 1.0
    scale_const: float = 1.0   # the internal length constant

    def __post_init__(self):
        if not 0.0 < self.s <= 1.0:
            raise ValueError(f"s={self.s} outside (0, 1]")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.mu_shape > 0:
            raise ValueError("mu_shape must be positive")

    @property
    def core_radius(self) -> float:
        return self.eps * self.scale_const * self.mu_shape

    def profile(self, r2):
        """Radial profile as a function of |x|^2."""
        pw = -(3.0 - 2.0 * self.s) / 2.0
        scaled = r2 / (self.eps * self.scale_const) ** 2
        return (self.kappa * self.eps**pw
                * (self.mu_shape**2 + scaled) ** pw)


def talenti_field(spec: TalentiSpec, grid: Grid) -> Field:
    if spec.core_radius < 4.0 * grid.h:
        raise ValueError(
            f"bubble core radius {spec.core_radius:.3g} under-resolved "
            f"(needs >= 4h = {4 * grid.h:.3g})")
    return Field(grid, spec.profile(grid.r2))


def rayleigh_quotient(u: Field, s: float) -> float:
    """seminorm^2 / ||u||_{2*_s}^2; bounded below by the best constant."""
    two_star = critical_exponent(s)
    return gagliardo_seminorm(u, s) ** 2 / lp_norm(u, two_star) ** 2


@dataclass(frozen=True)
class SobolevEstimate:
    value: float
    spread: float          # max - min of the quotient over the eps scan
    eps_at_min: float
    quotients: tuple


def sobolev_constant(s: float, grid: Grid, eps_list=None) -> SobolevEstimate:
    """Minimum Rayleigh quotient of the bubble family over a mid-range eps
    scan; the spread over the scan is reported as the error bar."""
    if eps_list is None:
        lo = 5.0 * grid.h
        hi = grid.L / 10.0
        if hi <= lo:
            raise ValueError("grid leaves no mid-range eps window")
        eps_list = np.geomspace(lo, hi, 9)
    qs = []
    for eps in eps_list:
        u = talenti_field(TalentiSpec(s=s, eps=float(eps)), grid)
        qs.append(rayleigh_quotient(u, s))
    qs = np.array(qs)
    i = int(np.argmin(qs))
    window = qs[max(0, i - 1):i + 2]
    return SobolevEstimate(value=float(qs[i]),
                           spread=float(window.max() - window.min()),
                           eps_at_min=float(eps_list[i]),
                           quotients=tuple(qs))


def quintic_bump(r, r1: float, r2: float):
    """C^2 cutoff: 1 on [0, r1], 0 beyond r2, quintic smoothstep between
    (first and second derivatives vanish at both junctions)."""
    x = np.clip((np.asarray(r, dtype=np.float64) - r1) / (r2 - r1), 0.0, 1.0)
    return 1.0 - x**3 * (10.0 - 15.0 * x + 6.0 * x * x)


@dataclass(frozen=True)
class CutoffFamilyRecord:
    eps: float
    psi_crit_norm: float    # || psi ||_{2*_s}^{2*_s}
    seminorm2: float
    vq_norm: float          # || v ||_q^q
    v2_norm: float          # || v ||_2^2
    gamma_eps: float


def cutoff_family(s: float, q: float, eps_list, grid: Grid,
                  ball_fraction: float = 0.45) -> list[CutoffFamilyRecord]:
    """psi_eps = bump * bubble, v_eps = psi / ||psi||_{2*}, and the record of
    norms plus Gamma_eps = (1/q)||v||_q^q - (1/2)||v||_2^2 for each eps.

    The cutoff balls are scaled to the box: outer radius ball_fraction * L,
    inner radius half of that.
    """
    two_star = critical_exponent(s)
    r2b = ball_fraction * grid.L
    r1b = 0.5 * r2b
    r = np.sqrt(grid.r2)
    bump = quintic_bump(r, r1b, r2b)
    records = []
    for eps in (float(e) for e in eps_list):
        bubble = talenti_field(TalentiSpec(s=s, eps=eps), grid)
        psi = Field(grid, bump * bubble.values)
        crit = lp_norm(psi, two_star)
        v = psi * (1.0 / crit)
        rec = CutoffFamilyRecord(
            eps=eps,
            psi_crit_norm=crit**two_star,
            seminorm2=gagliardo_seminorm(psi, s) ** 2,
            vq_norm=lp_norm(v, q) ** q,
            v2_norm=lp_norm(v, 2) ** 2,
            gamma_eps=lp_norm(v, q) ** q / q - 0.5 * lp_norm(v, 2) ** 2)
        records.append(rec)
    return records


def records_to_csv(records) -> str:
    lines = ["eps,psi_crit_norm,seminorm2,vq_norm,v2_norm,gamma_eps"]
    for r in records:
        row = (r.eps, r.psi_crit_norm, r.seminorm2, r.vq_norm, r.v2_norm,
               r.gamma_eps)
        lines.append(",".join(f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"


def fit_decay_rate(eps, values, limit=None):
    """Exponent fit for values(eps) ~ limit + c eps^beta.

    With a geometric eps ladder and no known limit, consecutive differences
    eliminate it: beta = log(d_i / d_{i+1}) / log(r).  Returns (beta,
    residual) where residual is the spread of the per-triple estimates in
    log space; a residual above 0.1 should invalidate any verdict built on
    the fit.
    """
    eps = np.asarray(eps, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(eps)[::-1]
    eps, values = eps[order], values[order]
    if limit is not None:
        y = np.abs(values - limit)
        coef, res = np.polyfit(np.log(eps), np.log(y), 1, full=True)[:2]
        resid = float(np.sqrt(res[0] / len(eps))) if len(res) else 0.0
        return float(coef[0]), resid
    d = np.abs(np.diff(values))
    if np.any(d == 0):
        raise ValueError("degenerate differences in the rate fit")
    ratios = np.log(eps[:-1] / eps[1:])
    betas = np.log(d[:-1] / d[1:]) / ratios[1:]
    return float(np.mean(betas)), float(np.max(np.abs(betas - np.mean(betas)))
                                        if len(betas) > 1 else 0.0)


@dataclass(frozen=True)
class DivergenceVerdict:
    passed: bool
    ratios: tuple
    fitted_exponent: float
    predicted_exponent: float
    fit_residual: float


def gamma_eps_divergence(records, s: float, q: float) -> DivergenceVerdict:
    """Pass iff Gamma_eps / eps^(3-2s) increases strictly as eps decreases;
    also fits the exponent of Gamma_eps against the prediction
    3 - (3-2s) q / 2 from the small-scale lower bound."""
    if len(records) < 4:
        raise ValueError("need at least 4 records with decreasing eps")
    recs = sorted(records, key=lambda r: -r.eps)
    eps = np.array([r.eps for r in recs])
    gam = np.array([r.gamma_eps for r in recs])
    ratios = gam / eps ** (3.0 - 2.0 * s)
    passed = bool(np.all(np.diff(ratios) > 0))
    with np.errstate(invalid="ignore"):
        good = gam > 0
    if good.sum() >= 2:
        coef, res = np.polyfit(np.log(eps[good]), np.log(gam[good]), 1,
                               full=True)[:2]
        fitted = float(coef[0])
        resid = float(np.sqrt(res[0] / good.sum())) if len(res) else 0.0
    else:
        fitted, resid = float("nan"), float("inf")
    predicted = 3.0 - (3.0 - 2.0 * s) * q / 2.0
    return DivergenceVerdict(passed=passed, ratios=tuple(ratios),
                             fitted_exponent=fitted,
                             predicted_exponent=predicted,
                             fit_residual=resid)


@dataclass(frozen=True)
class StrictGapResult:
    m_value: float
    bound: float
    margin: float
    error_bar: float
    passed: bool


def strict_gap(result: GroundStateResult, s: float,
               sobolev: SobolevEstimate,
               solver_tol: float = 1e-6) -> StrictGapResult:
    """M < (1/2) (2*_s)^((3-2s)/3) S_s with the margin compared against the
    combined error bars (quotient-scan spread plus solver tolerance)."""
    two_star = critical_exponent(s)
    bound = 0.5 * two_star ** ((3.0 - 2.0 * s) / 3.0) * sobolev.value
    M = result.m_level
    margin = bound - M
    bar = (0.5 * two_star ** ((3.0 - 2.0 * s) / 3.0) * sobolev.spread
           + 10.0 * solver_tol * abs(M))
    return StrictGapResult(m_value=M, bound=bound, margin=margin,
                           error_bar=bar, passed=bool(margin > bar))


def radial_monotone_decreasing(u: Field) -> bool:
    """Binned radial profile strictly decreasing out to the half box."""
    centers, means = radial_profile(u)
    vals = means[centers < 0.5 * u.grid.L]
    return bool(np.all(np.diff(vals) < 0))
