"""Energy functionals, their L2 gradients, the Pohozaev balance, and the
dilation-path profile with its threshold scale tau0 and path maximum D_lam.

Energies:
    limit (lam = 0):  L(u)     = 1/2 ||(-D)^(s/2) u||^2 - int G(u)
    coupled:          Gamma(u) = L(u) + (lam/4) int phi_u u^2

The dilation path uses the closed-form scaling laws

    kinetic(u(./tau))  = tau^(3-2s) kinetic(u)
    potential(u(./tau)) = tau^3     potential(u)
    coupling(u(./tau)) = tau^(3+2t) coupling(u)

with the kinetic integral measured once from the input field; grid dilations
serve as spot checks only, so interpolation error never compounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .grid import Field
from .nonlinearity import NonlinearitySpec
from .poisson import PoissonSolution, RieszKernelSpec, solve_poisson
from .spectral import dilate, fractional_laplacian, gagliardo_seminorm


@dataclass(frozen=True)
class ProblemSpec:
    s: float
    t: float
    lam: float
    nonlinearity: NonlinearitySpec

    def __post_init__(self):
        if not 0.0 < self.s <= 1.0:
            raise ValueError(f"s={self.s} outside (0, 1]")
        if not 0.0 < self.t <= 1.0:
            raise ValueError(f"t={self.t} outside (0, 1]")
        if self.lam < 0:
            raise ValueError(f"lam={self.lam} must be >= 0")
        if self.lam > 0 and 2 * self.t + 4 * self.s < 3:
            raise ValueError(
                f"2t+4s = {2 * self.t + 4 * self.s:g} < 3: coupled problem "
                "not well posed")
        if self.nonlinearity.s != self.s:
            raise ValueError("nonlinearity order does not match problem order")

    @property
    def kernel(self) -> RieszKernelSpec:
        return RieszKernelSpec(t=self.t, lam=self.lam)


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    coupling: float
    potential: float

    @property
    def total(self) -> float:
        return self.kinetic + self.coupling - self.potential


def potential_integral(u: Field, spec: ProblemSpec) -> float:
    """V(u) = int G(u)."""
    return float(np.sum(spec.nonlinearity.G(u.values)) * u.grid.cell_volume)


def limit_energy(u: Field, spec: ProblemSpec) -> EnergyBreakdown:
    kin = 0.5 * gagliardo_seminorm(u, spec.s) ** 2
    return EnergyBreakdown(kinetic=kin, coupling=0.0,
                           potential=potential_integral(u, spec))


def full_energy(u: Field, spec: ProblemSpec,
                sol: PoissonSolution | None = None) -> EnergyBreakdown:
    base = limit_energy(u, spec)
    if spec.lam == 0.0:
        return base
    if sol is None:
        sol = solve_poisson(u, spec.kernel)
    coupling = 0.25 * spec.lam * float(
        np.sum(sol.phi.values * u.values**2) * u.grid.cell_volume)
    return EnergyBreakdown(kinetic=base.kinetic, coupling=coupling,
                           potential=base.potential)


def gradient(u: Field, spec: ProblemSpec,
             sol: PoissonSolution | None = None) -> Field:
    """r(u) = (-Delta)^s u + lam phi_u u - g(u), the L2 gradient of the
    energy (of the limit energy when lam = 0)."""
    r = fractional_laplacian(u, spec.s).values - spec.nonlinearity.g(u.values)
    if spec.lam > 0:
        if sol is None:
            sol = solve_poisson(u, spec.kernel)
        r = r + spec.lam * sol.phi.values * u.values
    return Field(u.grid, r)


@dataclass(frozen=True)
class PohozaevReport:
    lhs: float        # ((3-2s)/2) * seminorm^2
    rhs: float        # 3 * int G(u)
    residual: float
    relative: float
    dilation_derivative: float  # d/dtau L(u(./tau)) at tau = 1, closed form


def pohozaev_residual(u: Field, spec: ProblemSpec) -> PohozaevReport:
    sem2 = gagliardo_seminorm(u, spec.s) ** 2
    lhs = 0.5 * (3.0 - 2.0 * spec.s) * sem2
    rhs = 3.0 * potential_integral(u, spec)
    res = lhs - rhs
    scale = max(abs(lhs), abs(rhs))
    rel = res / scale if scale > 0 else 0.0
    return PohozaevReport(lhs=lhs, rhs=rhs, residual=res, relative=rel,
                          dilation_derivative=res)


@dataclass(frozen=True)
class DilationProfile:
    taus: np.ndarray
    L_closed: np.ndarray
    Gamma_closed: np.ndarray
    L_grid: np.ndarray          # NaN where no spot check was taken
    Gamma_grid: np.ndarray
    tau0: float
    D_lam: float
    tau_at_max: float
    kinetic_integral: float     # seminorm^2 of the input field
    coupling_at_one: float      # (lam/4) int phi_U U^2


def closed_form_limit_profile(tau, s: float, kinetic_integral: float):
    """L(U_tau) = (tau^(3-2s)/2 - (3-2s) tau^3 / 6) * int |(-D)^(s/2) U|^2."""
    tau = np.asarray(tau, dtype=np.float64)
    out = (tau ** (3.0 - 2.0 * s) / 2.0
           - (3.0 - 2.0 * s) * tau**3 / 6.0) * kinetic_integral
    return out if out.ndim else float(out)


def dilation_profile(U: Field, spec: ProblemSpec, tau_max: float = None,
                     samples: int = 33, grid_checks: int = 5,
                     pohozaev_gate: float = 1e-2,
                     threshold: float = -2.0) -> DilationProfile:
    """Tabulate the path energies, locate tau0 (first tau with L < threshold,
    by bisection) and D_lam (golden-section refinement of the path maximum).
    """
    rep = pohozaev_residual(U, spec)
    if abs(rep.relative) > pohozaev_gate:
        raise ValueError(
            f"input field fails the Pohozaev gate: |{rep.relative:.3g}| > "
            f"{pohozaev_gate:g}")
    A = gagliardo_seminorm(U, spec.s) ** 2
    s = spec.s
    coupling1 = 0.0
    if spec.lam > 0:
        coupling1 = full_energy(U, spec).coupling

    def L_of(tau):
        return closed_form_limit_profile(tau, s, A)

    def Gamma_of(tau):
        return L_of(tau) + coupling1 * np.asarray(tau) ** (3.0 + 2.0 * spec.t)

    # tau0: smallest tau with L < threshold; L decreases beyond its maximum
    hi = 2.0
    while L_of(hi) > threshold:
        hi *= 1.5
        if hi > 1e6:
            raise ValueError("limit profile never drops below the threshold")
    f = lambda tau: L_of(tau) - threshold
    lo = 1.0
    tau0 = float(brentq(f, lo, hi, xtol=1e-12, rtol=1e-15))
    # box-validity limit of the grid dilation for the spot checks
    if tau_max is None:
        tau_max = tau0
    taus = np.linspace(1e-6, tau_max, samples)
    res = minimize_scalar(lambda tau: -Gamma_of(tau), bracket=None,
                          bounds=(1e-6, tau_max), method="bounded",
                          options={"xatol": 1e-10})
    # golden refinement around the bounded minimum
    gold = minimize_scalar(lambda tau: -Gamma_of(tau),
                           bracket=(max(res.x * 0.9, 1e-6), res.x,
                                    min(res.x * 1.1, tau_max)),
                           method="golden", options={"xtol": 1e-12})
    tau_at_max = float(gold.x)
    D_lam = float(Gamma_of(tau_at_max))

    L_grid = np.full(len(taus), np.nan)
    G_grid = np.full(len(taus), np.nan)
    if grid_checks > 0:
        picks = np.linspace(0.5, min(2.0, tau_max), grid_checks)
        for tau in picks:
            i = int(np.argmin(np.abs(taus - tau)))
            try:
                Ut = dilate(U, float(taus[i]))
            except ValueError:
                continue
            eb = full_energy(Ut, spec)
            L_grid[i] = eb.kinetic - eb.potential
            G_grid[i] = eb.total
    return DilationProfile(
        taus=taus, L_closed=L_of(taus), Gamma_closed=Gamma_of(taus),
        L_grid=L_grid, Gamma_grid=G_grid, tau0=tau0, D_lam=D_lam,
        tau_at_max=tau_at_max, kinetic_integral=A, coupling_at_one=coupling1)


def profile_to_csv(profile: DilationProfile) -> str:
    """CSV with columns tau, L_closed, L_grid, Gamma_closed, Gamma_grid."""
    lines = ["tau,L_closed,L_grid,Gamma_closed,Gamma_grid"]
    for i in range(len(profile.taus)):
        row = (profile.taus[i], profile.L_closed[i], profile.L_grid[i],
               profile.Gamma_closed[i], profile.Gamma_grid[i])
        lines.append(",".join(f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"
