"""Ground states of the limit equation, mountain-pass level estimates, and
warm-started continuation in the coupling parameter.

Both limit solvers run the same constrained minimization: minimize the
kinetic energy T(u) = 1/2 ||(-D)^(s/2) u||_2^2 over {V(u) = 1} by projected
gradient descent in the H^s metric (multiplier 1/(1 + |k|^(2s))) with an
amplitude/dilation retraction, then remove the Lagrange multiplier theta by
the dilation u(./sigma) with sigma = theta^(1/(2s)), and finish with a
Jacobian-free Newton-Krylov polish of the Euler-Lagrange residual.  On the
constraint manifold the limit energy is T - 1, so accepted descent steps
decrease it monotonically.

Continuation solves r(u) = (-D)^s u + lam phi_u u - g(u) = 0 for each lam of
a decreasing ladder, warm-starting from the previous solution (the first
from the limit ground state), with a short damped-descent phase on the
preconditioned residual before the Newton iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import inf

import numpy as np
from scipy.optimize import brentq
from scipy.sparse.linalg import LinearOperator, lgmres

from . import _fft
from .functionals import (EnergyBreakdown, PohozaevReport, ProblemSpec,
                          dilation_profile, full_energy, gradient,
                          pohozaev_residual, potential_integral)
from .grid import Field, Grid, gaussian_field, load_field, radial_deviation
from .nonlinearity import SUBCRITICAL, truncated
from .poisson import solve_poisson
from .spectral import dilate, gagliardo_seminorm, hs_norm, lp_norm


class SolverError(RuntimeError):
    pass


class CollapseError(SolverError):
    """Iterate collapsed to zero: bad initialization."""


class MountainPassGeometryError(SolverError):
    """Path endpoint failed to stay below the mountain-pass threshold."""


@dataclass(frozen=True)
class SolverConfig:
    grad_tol: float = 1e-6
    max_iters: int = 600
    step0: float = 1.0
    step_shrink: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 20
    init: str = "gaussian"          # or "snapshot"
    init_width: float = 1.0
    snapshot_path: str | None = None
    seed: int = 0
    coarse_warmup: bool = True      # solve on n/2 first, spectrally upsample
    descent_tol: float = 3e-5       # hand-off point to the Newton polish
    newton_max_outer: int = 40
    newton_inner_rtol: float = 1e-3
    auto_restart: bool = True       # one retry on a 1.5x box when stalled

    def __post_init__(self):
        if not 0.0 < self.grad_tol <= 1e-2:
            raise ValueError(f"grad_tol={self.grad_tol} outside (0, 1e-2]")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.init not in ("gaussian", "snapshot"):
            raise ValueError(f"unknown init kind {self.init!r}")


@dataclass(frozen=True)
class GroundStateResult:
    U: Field
    energy: float
    theta: float
    sigma0: float
    pohozaev: PohozaevReport
    grad_norm: float
    iters: int
    m_level: float | None = None        # constrained kinetic minimum (critical)
    constraint_value: float = 1.0
    objective_history: tuple = field(default=(), repr=False)


@dataclass(frozen=True)
class BranchRecord:
    lam: float
    u: Field
    phi: Field
    energy: EnergyBreakdown
    hs_dist_to_limit: float
    phi_dt2_norm: float
    grad_norm: float
    pohozaev_rel: float
    iters: int


@dataclass(frozen=True)
class Branch:
    records: tuple
    limit: GroundStateResult
    failed_lam: float | None = None
    diagnostic: str = ""


# ---------------------------------------------------------------------------
# shared machinery
# ---------------------------------------------------------------------------

_PRECOND_CACHE: dict = {}


def _precond(grid: Grid, s: float) -> np.ndarray:
    key = (grid.n, grid.L, round(s, 12))
    P = _PRECOND_CACHE.get(key)
    if P is None:
        P = 1.0 / (1.0 + grid.k_pow(2.0 * s))
        # zero mode of |k|^(2s) is annihilated; keep P(0) = 1
        _PRECOND_CACHE[key] = P
    return P


def _apply_precond(grid: Grid, s: float, v: np.ndarray) -> np.ndarray:
    return _fft.ifftn(_precond(grid, s) * _fft.fftn(v)).real


def _l2(grid: Grid, v: np.ndarray) -> float:
    return float(np.sqrt(np.sum(v * v) * grid.cell_volume))


def _inner(grid: Grid, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum(a * b) * grid.cell_volume)


def _fit_amplitude(grid: Grid, values: np.ndarray, nl, target: float) -> float:
    """Scale c with int G(c * values) = target (bracket + brentq)."""
    def f(c):
        return float(np.sum(nl.G(c * values)) * grid.cell_volume) - target
    lo, hi = 1e-3, 1e-3
    flo = f(lo)
    while f(hi) <= 0.0:
        hi *= 2.0
        if hi > 1e6:
            raise SolverError("could not bracket the constraint amplitude")
    while flo >= 0.0 and lo > 1e-12:
        lo *= 0.5
        flo = f(lo)
    return float(brentq(f, lo, hi, xtol=1e-14, rtol=1e-15))


def _balanced_amplitude(grid: Grid, values: np.ndarray, nl, s: float) -> float:
    """Amplitude A putting A * values on the dilation ridge:
    ((3-2s)/2) * seminorm^2 = 3 * int G.  Keeps the constrained iterate at a
    grid-resolved scale (the constraint level itself is arbitrary)."""
    sem2 = gagliardo_seminorm(Field(grid, values), s) ** 2

    def f(A):
        V = float(np.sum(nl.G(A * values)) * grid.cell_volume)
        return 0.5 * (3.0 - 2.0 * s) * A * A * sem2 - 3.0 * V

    hi = 1.0
    while f(hi) > 0.0:
        hi *= 2.0
        if hi > 1e8:
            raise SolverError("could not bracket the balanced amplitude")
    return float(brentq(f, 1e-8, hi, xtol=1e-12, rtol=1e-14))


def _retract(grid: Grid, values: np.ndarray, nl, target: float) -> np.ndarray:
    """Restore V(u) = target by amplitude rescaling (Newton with brentq
    fallback); falls back to a closed-form dilation when V is already
    positive and the amplitude step is ill-conditioned."""
    V = float(np.sum(nl.G(values)) * grid.cell_volume)
    if abs(V - target) <= 1e-12 * max(1.0, abs(target)):
        return values
    c = 1.0
    for _ in range(12):
        Vc = float(np.sum(nl.G(c * values)) * grid.cell_volume)
        err = Vc - target
        if abs(err) <= 1e-12 * max(1.0, abs(target)):
            return c * values
        dV = float(np.sum(nl.g(c * values) * values) * grid.cell_volume)
        if dV <= 0.0:
            break
        step = err / dV
        if not np.isfinite(step) or abs(step) > 0.5 * c:
            break
        c -= step
        if c <= 0.0:
            c = 1e-3
            break
    return _fit_amplitude(grid, values, nl, target) * values


def _upsample(u: Field, n_new: int) -> Field:
    """Zero-pad the spectrum onto a finer grid with the same box."""
    g = u.grid
    if n_new == g.n:
        return u
    uh = np.fft.fftshift(_fft.fftn(u.values))
    pad = (n_new - g.n) // 2
    big = np.zeros((n_new,) * 3, dtype=complex)
    big[pad:pad + g.n, pad:pad + g.n, pad:pad + g.n] = uh
    big = np.fft.ifftshift(big) * (n_new / g.n) ** 3
    return Field(Grid(n_new, g.L), _fft.ifftn(big).real)


def _constrained_descent(grid: Grid, spec: ProblemSpec, u0: np.ndarray,
                         cfg: SolverConfig, target: float = 1.0,
                         dealias: bool = False):
    """Projected preconditioned descent of T(u) on {V(u) = target}.

    Returns (u, history, iters).  `history` holds the accepted kinetic
    values; on the manifold the limit energy is T - target, so the same
    sequence certifies energy monotonicity.

    With dealias=True every retracted iterate is projected below 2/3 of the
    Nyquist frequency.  Near-critical constraints need this: the lattice
    caps the kinetic cost of a one-cell bubble, so an unfiltered descent can
    lower T by concentrating into unresolvable spikes.
    """
    nl = spec.nonlinearity
    s = spec.s
    mult = grid.k_pow(2.0 * s)
    P = _precond(grid, s)
    w = grid.spectral_weight
    cut2 = (2.0 / 3.0 * np.max(np.abs(grid.k1))) ** 2
    mask = grid.k2 <= cut2

    def smooth(vals):
        if not dealias:
            return vals
        out = _fft.ifftn(mask * _fft.fftn(vals)).real
        return _retract(grid, out, nl, target)

    u = smooth(_retract(grid, u0, nl, target))
    uh = _fft.fftn(u)
    T = 0.5 * float(np.sum(mult * np.abs(uh) ** 2)) * w
    history = [T]
    eta = cfg.step0
    it = 0
    for it in range(1, cfg.max_iters + 1):
        gradT = _fft.ifftn(mult * uh).real
        gv = nl.g(u)
        Pg = _fft.ifftn(P * _fft.fftn(gv)).real
        PgT = _fft.ifftn(P * mult * uh).real
        denom = _inner(grid, gv, Pg)
        theta = _inner(grid, gv, PgT) / denom if denom != 0.0 else 0.0
        d = gradT - theta * gv
        Pd = PgT - theta * Pg
        decrease = _inner(grid, d, Pd)
        gnorm = np.sqrt(max(decrease, 0.0))
        ref = np.sqrt(2.0 * T) + 1e-30
        if gnorm / ref <= cfg.descent_tol:
            break
        accepted = False
        for _ in range(cfg.max_backtracks):
            trial = smooth(_retract(grid, u - eta * Pd, nl, target))
            th = _fft.fftn(trial)
            Tt = 0.5 * float(np.sum(mult * np.abs(th) ** 2)) * w
            if Tt <= T - cfg.armijo * eta * decrease:
                u, uh, T = trial, th, Tt
                history.append(T)
                accepted = True
                break
            eta *= cfg.step_shrink
        if not accepted:
            break  # stalled: line search exhausted
        eta = min(eta * 1.3, 10.0 * cfg.step0)
        if _l2(grid, u) < 1e-8:
            raise CollapseError("iterate collapsed to zero during descent")
    return u, history, it


def _jfnk(grid: Grid, residual_fn, u0: np.ndarray, s: float, m_lin: float,
          target_l2: float, cfg: SolverConfig):
    """Damped Jacobian-free Newton-Krylov on r(u) = 0.

    Directional derivatives by one-sided differences; inner lgmres solves
    are preconditioned by (m_lin + |k|^(2s))^(-1).  Accepts steps by
    residual-norm decrease with halving damping.
    """
    n3 = grid.n**3
    Pk = 1.0 / (m_lin + grid.k_pow(2.0 * s))

    def apply_P(v):
        return _fft.ifftn(Pk * _fft.fftn(v.reshape(grid.shape))).real.ravel()

    M = LinearOperator((n3, n3), matvec=apply_P)
    u = u0.copy()
    r = residual_fn(u)
    rnorm = _l2(grid, r)
    evals = 1
    for outer in range(cfg.newton_max_outer):
        if rnorm <= target_l2:
            break
        norm_u = np.sqrt(np.sum(u * u))
        rvec = r.ravel()

        def matvec(v):
            nonlocal evals
            nv = np.sqrt(np.sum(v * v))
            if nv == 0.0:
                return np.zeros_like(v)
            eps = np.sqrt(np.finfo(float).eps) * (norm_u + 1.0) / nv
            evals += 1
            return ((residual_fn(u + eps * v.reshape(grid.shape)) ).ravel()
                    - rvec) / eps

        A = LinearOperator((n3, n3), matvec=matvec)
        dx, _ = lgmres(A, -rvec, M=M, rtol=cfg.newton_inner_rtol,
                       atol=0.0, maxiter=30)
        dx = dx.reshape(grid.shape)
        step = 1.0
        improved = False
        for _ in range(12):
            trial = u + step * dx
            rt = residual_fn(trial)
            evals += 1
            rtn = _l2(grid, rt)
            if rtn < (1.0 - 1e-4 * step) * rnorm:
                u, r, rnorm = trial, rt, rtn
                improved = True
                break
            step *= 0.5
        if not improved:
            break
    return u, r, rnorm, evals


# ---------------------------------------------------------------------------
# ground states of the limit equation
# ---------------------------------------------------------------------------

def _initial_field(grid: Grid, cfg: SolverConfig) -> Field:
    if cfg.init == "snapshot":
        if not cfg.snapshot_path:
            raise ValueError("snapshot init requires snapshot_path")
        f, _ = load_field(cfg.snapshot_path)
        if f.grid != grid:
            raise ValueError("snapshot grid does not match the requested grid")
        return f
    return gaussian_field(grid, width=cfg.init_width)


def _solve_limit(grid: Grid, spec: ProblemSpec, cfg: SolverConfig,
                 descent_spec: ProblemSpec, v_target: float | None = None,
                 dealias: bool = False):
    """Constrained solve + multiplier removal + Newton polish at lam = 0.

    v_target = None picks the constraint level of the dilation-balanced
    initial profile, which keeps the intermediate minimizer at a resolved
    length scale; the final rescaled field does not depend on the level.
    """
    nl_descent = descent_spec.nonlinearity
    base = _initial_field(grid, cfg).values
    if v_target is None:
        amp0 = _balanced_amplitude(grid, base, nl_descent, spec.s)
        v_target = float(np.sum(nl_descent.G(amp0 * base)) * grid.cell_volume)
        if v_target <= 0:
            raise SolverError("balanced initial profile has nonpositive V")
    iters = 0
    if cfg.coarse_warmup and grid.n >= 32:
        small = Grid(grid.n // 2, grid.L)
        u0 = _initial_field(small, cfg).values
        amp = _fit_amplitude(small, u0, nl_descent, v_target)
        uc, _, it_c = _constrained_descent(small, descent_spec,
                                           amp * u0, cfg,
                                           target=v_target, dealias=dealias)
        base = _upsample(Field(small, uc), grid.n).values
        iters += it_c
    amp = _fit_amplitude(grid, base, nl_descent, v_target)
    u, hist, it = _constrained_descent(grid, descent_spec, amp * base, cfg,
                                       target=v_target, dealias=dealias)
    iters += it
    history = hist  # history of record: the target-grid descent only

    mult = grid.k_pow(2.0 * spec.s)
    frac = _fft.ifftn(mult * _fft.fftn(u)).real
    gv = descent_spec.nonlinearity.g(u)
    theta = _inner(grid, frac, gv) / _inner(grid, gv, gv)
    if theta <= 0:
        raise SolverError(f"nonpositive Lagrange multiplier {theta:.3g}")
    m_level = 0.5 * float(np.sum(mult * np.abs(_fft.fftn(u)) ** 2)
                          ) * grid.spectral_weight
    constraint = float(np.sum(descent_spec.nonlinearity.G(u))
                       * grid.cell_volume)
    sigma = theta ** (1.0 / (2.0 * spec.s))
    U = dilate(Field(grid, u), sigma, boundary_tol=1e-4)

    # polish the unscaled Euler-Lagrange residual with the smooth nonlinearity
    nl = spec.nonlinearity

    def residual(vals):
        return (_fft.ifftn(mult * _fft.fftn(vals)).real - nl.g(vals))

    target = 0.1 * cfg.grad_tol * hs_norm(U, spec.s)
    vals, r, rnorm, evals = _jfnk(grid, residual, U.values, spec.s,
                                  nl.decay_rate, target, cfg)
    U = Field(grid, vals)
    iters += evals
    return U, theta, sigma, m_level, constraint, rnorm, iters, history


def _ground_state(spec: ProblemSpec, grid: Grid, cfg: SolverConfig,
                  descent_spec: ProblemSpec,
                  v_target: float | None = None,
                  dealias: bool = False) -> GroundStateResult:
    attempt_grid = grid
    last_exc = None
    for attempt in range(2):
        try:
            (U, theta, sigma, m_level, constraint, rnorm, iters,
             history) = _solve_limit(attempt_grid, spec, cfg, descent_spec,
                                     v_target=v_target, dealias=dealias)
            rel = rnorm / hs_norm(U, spec.s)
            if rel <= cfg.grad_tol:
                poho = pohozaev_residual(U, spec)
                E = limit_energy_value(U, spec)
                return GroundStateResult(
                    U=U, energy=E, theta=theta, sigma0=sigma,
                    pohozaev=poho, grad_norm=rel, iters=iters,
                    m_level=m_level, constraint_value=constraint,
                    objective_history=tuple(history))
            last_exc = SolverError(
                f"stalled at relative gradient {rel:.3e} > {cfg.grad_tol:g}")
        except CollapseError:
            raise
        except SolverError as exc:
            last_exc = exc
        if not cfg.auto_restart:
            break
        attempt_grid = Grid(grid.n, grid.L * 1.5)
    raise last_exc


def limit_energy_value(U: Field, spec: ProblemSpec) -> float:
    return (0.5 * gagliardo_seminorm(U, spec.s) ** 2
            - potential_integral(U, spec))


def ground_state_subcritical(spec: ProblemSpec, grid: Grid,
                             cfg: SolverConfig) -> GroundStateResult:
    """Positive radial ground state of (-D)^s u = -m u + |u|^(p-2) u.

    Descent runs with the truncated nonlinearity (negative branch zeroed) so
    iterates stay positive; the Newton polish uses the smooth odd extension.
    """
    if spec.nonlinearity.kind != SUBCRITICAL:
        raise ValueError("spec does not carry a subcritical nonlinearity")
    if spec.lam != 0.0:
        raise ValueError("limit solver requires lam = 0")
    descent_spec = replace(spec, nonlinearity=truncated(spec.nonlinearity))
    res = _ground_state(spec, grid, cfg, descent_spec)
    _check_positivity(res.U, 1e-10)
    return res


def ground_state_critical(spec: ProblemSpec, grid: Grid,
                          cfg: SolverConfig) -> GroundStateResult:
    """Constrained minimizer of the kinetic energy on {V = 1}, rescaled by
    sigma0 = ((3-2s) M / 3)^(1/(2s)) to solve the unscaled equation.

    The multiplier removal exponent is 1/(2s): the dilation u(./sigma)
    rescales (-D)^s by sigma^(-2s), so theta = sigma^(2s).  At s = 1 this
    reduces to the familiar square root.
    """
    if spec.nonlinearity.kind == SUBCRITICAL:
        raise ValueError("spec does not carry a critical nonlinearity")
    if spec.lam != 0.0:
        raise ValueError("limit solver requires lam = 0")
    res = _ground_state(spec, grid, cfg, descent_spec=spec, v_target=1.0,
                        dealias=True)
    _check_positivity(res.U, 1e-8)
    # cross-check theta against the dilation-identity value (3-2s) M / 3
    theta_poho = (3.0 - 2.0 * spec.s) * res.m_level / 3.0
    if abs(theta_poho - res.theta) > 0.05 * abs(res.theta):
        raise SolverError(
            f"multiplier mismatch: least-squares {res.theta:.6g} vs "
            f"dilation identity {theta_poho:.6g}")
    return res


def _check_positivity(U: Field, tol_factor: float):
    vmax = float(U.values.max())
    vmin = float(U.values.min())
    if vmax <= 0 or vmin < -tol_factor * vmax:
        raise SolverError(
            f"positivity lost: min={vmin:.3e}, max={vmax:.3e}")


def sobolev_bound_check(result: GroundStateResult, s_order: float,
                        sobolev_constant: float):
    """Strict upper bound (1/2) (2*_s)^((3-2s)/3) S_s for the constrained
    kinetic minimum; returns (M, bound, margin)."""
    two_star = 6.0 / (3.0 - 2.0 * s_order)
    bound = 0.5 * two_star ** ((3.0 - 2.0 * s_order) / 3.0) * sobolev_constant
    M = result.m_level
    return M, bound, bound - M


# ---------------------------------------------------------------------------
# mountain pass
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MountainPassEstimate:
    level: float
    D_lam: float
    taus: np.ndarray
    initial_energies: np.ndarray
    relaxed_energies: np.ndarray
    sweeps: int


def mountain_pass_level(spec: ProblemSpec, U: Field, cfg: SolverConfig,
                        path_points: int = 13, sweeps: int = 2,
                        relax_steps: int = 2,
                        endpoint_margin: float = 0.5) -> MountainPassEstimate:
    """Discrete path-deformation estimate of the min-max level.

    The dilation path is sampled, its endpoint pushed far enough below the
    -2 threshold that the coupling term cannot lift it back, and interior
    points are relaxed by a few preconditioned descent steps (endpoints
    fixed, steps accepted only when the energy drops), so the relaxed path
    maximum can only move down from D_lam.
    """
    profile = dilation_profile(U, spec)
    target = -2.0 - endpoint_margin

    def gamma_closed(tau):
        return (profile.kinetic_integral
                * (tau ** (3 - 2 * spec.s) / 2
                   - (3 - 2 * spec.s) * tau**3 / 6)
                + profile.coupling_at_one * tau ** (3 + 2 * spec.t))

    hi = profile.tau0
    while gamma_closed(hi) > target:
        hi *= 1.25
        if hi > 100.0 * profile.tau0:
            raise MountainPassGeometryError(
                "coupled path energy never drops below the threshold")
    tau_end = float(brentq(lambda t: gamma_closed(t) - target,
                           profile.tau_at_max, hi, xtol=1e-10))
    taus = np.linspace(0.0, tau_end, path_points)
    fields = [Field(U.grid, np.zeros(U.grid.shape))]
    for tau in taus[1:]:
        try:
            fields.append(dilate(U, float(tau), boundary_tol=1e-4))
        except ValueError as exc:
            raise MountainPassGeometryError(
                f"path point tau={tau:.3g} overflows the box") from exc
    energies0 = np.array([full_energy(f, spec).total for f in fields])
    if energies0[-1] > -2.0:
        raise MountainPassGeometryError(
            f"endpoint energy {energies0[-1]:.3g} above -2")
    energies = energies0.copy()
    P = _precond(U.grid, spec.s)
    eta0 = 0.1
    for _ in range(sweeps):
        for j in range(1, path_points - 1):
            f = fields[j]
            for _ in range(relax_steps):
                r = gradient(f, spec).values
                step = eta0
                for _ in range(4):
                    trial = Field(U.grid, f.values - step * _fft.ifftn(
                        P * _fft.fftn(r)).real)
                    et = full_energy(trial, spec).total
                    if et < energies[j]:
                        f, energies[j] = trial, et
                        break
                    step *= 0.25
            fields[j] = f
    return MountainPassEstimate(
        level=float(energies.max()), D_lam=profile.D_lam, taus=taus,
        initial_energies=energies0, relaxed_energies=energies, sweeps=sweeps)


# ---------------------------------------------------------------------------
# continuation in the coupling
# ---------------------------------------------------------------------------

def _solve_coupled(u0: Field, spec: ProblemSpec, cfg: SolverConfig,
                   pre_steps: int = 2):
    """Damped preconditioned residual descent, then Newton-Krylov."""
    grid = u0.grid
    nl = spec.nonlinearity
    mult = grid.k_pow(2.0 * spec.s)
    kernel = spec.kernel

    def residual(vals):
        f = Field(grid, vals)
        sol = solve_poisson(f, kernel)
        return (_fft.ifftn(mult * _fft.fftn(vals)).real
                + spec.lam * sol.phi.values * vals - nl.g(vals))

    u = u0.values.copy()
    r = residual(u)
    merit = _l2(grid, _apply_precond(grid, spec.s, r))
    evals = 1
    eta = 0.5
    for _ in range(pre_steps):
        Pr = _apply_precond(grid, spec.s, r)
        accepted = False
        for _ in range(6):
            trial = u - eta * Pr
            rt = residual(trial)
            evals += 1
            mt = _l2(grid, _apply_precond(grid, spec.s, rt))
            if mt < merit:
                u, r, merit = trial, rt, mt
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            break
    target = 0.1 * cfg.grad_tol * hs_norm(u0, spec.s)
    u, r, rnorm, ev = _jfnk(grid, residual, u, spec.s, nl.decay_rate,
                            target, cfg)
    return Field(grid, u), rnorm, evals + ev


def continue_branch(limit: GroundStateResult, spec: ProblemSpec,
                    lam_list, cfg: SolverConfig) -> Branch:
    """Warm-started solves along a strictly decreasing coupling ladder."""
    lam_list = [float(x) for x in lam_list]
    if len(lam_list) == 0:
        raise ValueError("empty coupling ladder")
    if any(b >= a for a, b in zip(lam_list, lam_list[1:])):
        raise ValueError("coupling ladder must be strictly decreasing")
    if any(x < 0 for x in lam_list):
        raise ValueError("couplings must be nonnegative")
    records = []
    u = limit.U
    for lam in lam_list:
        if lam == 0.0:
            spec0 = replace(spec, lam=0.0)
            rec = BranchRecord(
                lam=0.0, u=limit.U,
                phi=Field(limit.U.grid, np.zeros(limit.U.grid.shape)),
                energy=full_energy(limit.U, spec0),
                hs_dist_to_limit=0.0, phi_dt2_norm=0.0,
                grad_norm=limit.grad_norm,
                pohozaev_rel=limit.pohozaev.relative, iters=0)
            records.append(rec)
            continue
        spec_l = replace(spec, lam=lam)
        try:
            u_new, rnorm, iters = _solve_coupled(u, spec_l, cfg)
        except (SolverError, ValueError) as exc:
            return Branch(records=tuple(records), limit=limit,
                          failed_lam=lam, diagnostic=str(exc))
        rel = rnorm / hs_norm(u_new, spec.s)
        if rel > cfg.grad_tol:
            return Branch(records=tuple(records), limit=limit,
                          failed_lam=lam,
                          diagnostic=f"relative gradient {rel:.3e} above "
                                     f"tolerance {cfg.grad_tol:g}")
        vmax = float(u_new.values.max())
        if float(u_new.values.min()) < -1e-6 * vmax:
            raise SolverError(
                f"positivity lost at lam={lam:g}: "
                f"min={float(u_new.values.min()):.3e}, max={vmax:.3e}")
        sol = solve_poisson(u_new, spec_l.kernel)
        rec = BranchRecord(
            lam=lam, u=u_new, phi=sol.phi,
            energy=full_energy(u_new, spec_l, sol=sol),
            hs_dist_to_limit=hs_norm(u_new - limit.U, spec.s),
            phi_dt2_norm=sol.dt2_seminorm,
            grad_norm=rel,
            pohozaev_rel=pohozaev_residual(u_new, spec_l).relative,
            iters=iters)
        records.append(rec)
        u = u_new
    return Branch(records=tuple(records), limit=limit)


@dataclass(frozen=True)
class BranchReport:
    csv_text: str
    phi_exponent: float | None
    energy_gap_exponent: float | None
    energy_gap_nearest_order: int | None


BRANCH_CSV_HEADER = ("lambda,energy_total,energy_kinetic,energy_coupling,"
                     "energy_potential,hs_dist_to_U,phi_dt2_norm,grad_norm,"
                     "pohozaev_rel,iters")


def branch_report(branch: Branch, limit: GroundStateResult) -> BranchReport:
    lines = [BRANCH_CSV_HEADER]
    for rec in branch.records:
        row = (rec.lam, rec.energy.total, rec.energy.kinetic,
               rec.energy.coupling, rec.energy.potential,
               rec.hs_dist_to_limit, rec.phi_dt2_norm, rec.grad_norm,
               rec.pohozaev_rel)
        lines.append(",".join(f"{v:.17g}" for v in row) + f",{rec.iters}")
    csv_text = "\n".join(lines) + "\n"
    pos = [r for r in branch.records if r.lam > 0]
    phi_exp = gap_exp = nearest = None
    if len(pos) >= 2:
        lams = np.log([r.lam for r in pos])
        phis = np.array([r.phi_dt2_norm for r in pos])
        gaps = np.array([r.energy.total - limit.energy for r in pos])
        if np.all(phis > 0):
            phi_exp = float(np.polyfit(lams, np.log(phis), 1)[0])
        if np.all(gaps > 0):
            gap_exp = float(np.polyfit(lams, np.log(gaps), 1)[0])
            nearest = int(min((1, 2), key=lambda k: abs(gap_exp - k)))
    return BranchReport(csv_text=csv_text, phi_exponent=phi_exp,
                        energy_gap_exponent=gap_exp,
                        energy_gap_nearest_order=nearest)
