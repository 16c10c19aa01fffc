"""Experiment orchestration: dispatch, artifact persistence, and the run
manifest (atomic write, checksums, verdicts)."""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .config import RunConfig
from .critical import (cutoff_family, gamma_eps_divergence, records_to_csv,
                       sobolev_constant, strict_gap)
from .functionals import ProblemSpec, dilation_profile, profile_to_csv
from .grid import Field, Grid, gaussian_field, radial_deviation, save_field
from .nonlinearity import CRITICAL, SUBCRITICAL
from .poisson import RieszKernelSpec, poisson_direct_oracle, solve_poisson
from .solvers import (SolverError, branch_report, continue_branch,
                      ground_state_critical, ground_state_subcritical,
                      mountain_pass_level)
from .spectral import lp_norm, radial_anisotropy


@dataclass(frozen=True)
class RunManifest:
    path: str
    verdicts: dict
    numbers: dict
    artifacts: dict

    @property
    def all_passed(self) -> bool:
        return all(self.verdicts.values())


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_atomic(path: str, data: str | bytes) -> None:
    mode = "wb" if isinstance(data, bytes) else "w"
    tmp = path + ".tmp"
    with open(tmp, mode) as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def _fmt_csv(header, rows) -> str:
    lines = [header]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, str):
                cells.append(v)
            elif isinstance(v, (bool, np.bool_)):
                cells.append("pass" if v else "fail")
            elif isinstance(v, (int, np.integer)):
                cells.append(str(int(v)))
            else:
                cells.append(f"{float(v):.17g}")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _bandlimited(grid: Grid, rng, kmax_frac: float = 0.3) -> Field:
    coeff = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    kmax = kmax_frac * np.max(np.abs(grid.k1))
    coeff[grid.k2 > kmax**2] = 0.0
    vals = np.fft.ifftn(coeff).real
    vals /= np.sqrt(np.mean(vals**2)) + 1e-300
    return Field(grid, vals)


def _problem(cfg: RunConfig, lam: float) -> ProblemSpec:
    return ProblemSpec(s=cfg.s, t=cfg.t, lam=lam,
                       nonlinearity=cfg.nonlinearity)


def run_experiment(cfg: RunConfig) -> RunManifest:
    os.makedirs(cfg.out_dir, exist_ok=True)
    t0 = time.perf_counter()
    timings = {}
    dispatch = {
        "poisson-test": _run_poisson_test,
        "groundstate": _run_groundstate,
        "branch": _run_branch,
        "mpa": _run_mpa,
        "critical-check": _run_critical_check,
    }
    verdicts, numbers, artifacts = dispatch[cfg.experiment](cfg, timings)
    timings["total"] = time.perf_counter() - t0
    checksums = {name: _sha256(os.path.join(cfg.out_dir, name))
                 for name in artifacts}
    manifest = {
        "experiment": cfg.experiment,
        "library_version": __version__,
        "seed": cfg.solver.seed,
        "config_echo": cfg.config_echo,
        "nonlinearity_block": cfg.nonlinearity.to_kv_block(),
        "timings_s": timings,
        "artifacts": checksums,
        "verdicts": verdicts,
        "numbers": numbers,
    }
    path = os.path.join(cfg.out_dir, "run_manifest.json")
    _write_atomic(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return RunManifest(path=path, verdicts=verdicts, numbers=numbers,
                       artifacts=checksums)


def _run_poisson_test(cfg: RunConfig, timings):
    rng = np.random.default_rng(cfg.solver.seed)
    t0 = time.perf_counter()
    # direct-oracle agreement on a small grid
    gsmall = Grid(16, cfg.L / 2)
    u = _bandlimited(gsmall, rng)
    kernel = RieszKernelSpec(t=cfg.t, lam=1.0)
    sol = solve_poisson(u, kernel, boundary_tol=1.0)
    pts = [tuple(rng.integers(0, 16, size=3)) for _ in range(10)]
    direct = poisson_direct_oracle(u, kernel, pts)
    fftv = np.array([sol.phi.values[p] for p in pts])
    scale = np.max(np.abs(direct)) + 1e-300
    oracle_err = float(np.max(np.abs(fftv - direct)) / scale)
    timings["oracle"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    grid = cfg.grid()
    sig = cfg.L / 16.0
    norm = (2 * np.pi * sig**2) ** 0.75
    u = gaussian_field(grid, width=sig, amplitude=1.0 / norm)  # unit L2 mass
    kern1 = RieszKernelSpec(t=1.0, lam=1.0)
    sol1 = solve_poisson(u, kern1)
    from math import erf, pi, sqrt
    r = np.sqrt(grid.r2)
    rs = np.where(r < 1e-12, 1e-12, r)
    exact = np.vectorize(erf)(rs / (sqrt(2) * sig)) / (4 * pi * rs)
    exact[r < 1e-12] = sqrt(2 / pi) / (4 * pi * sig)
    gauss_err = float(np.max(np.abs(sol1.phi.values - exact) / exact))
    phi_min = float(sol1.phi.values.min())
    raddev = sol1.radial_deviation()
    timings["gaussian"] = time.perf_counter() - t0

    verdicts = {
        "oracle_agreement": oracle_err <= 1e-10,
        "gaussian_closed_form": gauss_err <= 1e-3,
        "positivity": phi_min >= -1e-10 * float(sol1.phi.values.max()),
        "radiality": raddev <= 1e-3,
    }
    numbers = {"oracle_rel_err": oracle_err, "gaussian_rel_err": gauss_err,
               "phi_min": phi_min, "phi_radial_deviation": raddev}
    rows = [(k, numbers[n], t, verdicts[k]) for k, n, t in (
        ("oracle_agreement", "oracle_rel_err", 1e-10),
        ("gaussian_closed_form", "gaussian_rel_err", 1e-3),
        ("positivity", "phi_min", 0.0),
        ("radiality", "phi_radial_deviation", 1e-3))]
    _write_atomic(os.path.join(cfg.out_dir, "poisson_test.csv"),
                  _fmt_csv("check,value,tolerance,verdict", rows))
    return verdicts, numbers, ["poisson_test.csv"]


def _solve_limit_for(cfg: RunConfig, timings):
    spec = _problem(cfg, 0.0)
    t0 = time.perf_counter()
    if cfg.nonlinearity.kind == SUBCRITICAL:
        res = ground_state_subcritical(spec, cfg.grid(), cfg.solver)
    else:
        res = ground_state_critical(spec, cfg.grid(), cfg.solver)
    timings["ground_state"] = time.perf_counter() - t0
    return spec, res


def _run_groundstate(cfg: RunConfig, timings):
    spec, res = _solve_limit_for(cfg, timings)
    raddev = radial_anisotropy(res.U)
    verdicts = {
        "converged": res.grad_norm <= cfg.solver.grad_tol,
        "pohozaev_gate": abs(res.pohozaev.relative) <= 10 * cfg.solver.grad_tol,
        "positivity": float(res.U.values.min())
                      >= -1e-6 * float(res.U.values.max()),
        "radiality": raddev <= 1e-3,
    }
    numbers = {
        "energy": res.energy, "theta": res.theta, "sigma0": res.sigma0,
        "grad_norm": res.grad_norm, "pohozaev_rel": res.pohozaev.relative,
        "radial_deviation": raddev, "iters": res.iters,
    }
    if res.m_level is not None:
        numbers["m_level"] = res.m_level
        numbers["constraint_value"] = res.constraint_value
    save_field(os.path.join(cfg.out_dir, "U.fsps"), res.U, s=cfg.s, t=cfg.t,
               lam=0.0)
    prof = dilation_profile(res.U, spec)
    _write_atomic(os.path.join(cfg.out_dir, "dilation_profile.csv"),
                  profile_to_csv(prof))
    numbers["tau0"] = prof.tau0
    numbers["D0"] = prof.D_lam
    rows = [(k, numbers.get(k, float("nan"))) for k in sorted(numbers)]
    _write_atomic(os.path.join(cfg.out_dir, "groundstate.csv"),
                  _fmt_csv("quantity,value", rows))
    return verdicts, numbers, ["groundstate.csv", "dilation_profile.csv",
                               "U.fsps"]


def _run_branch(cfg: RunConfig, timings):
    spec, res = _solve_limit_for(cfg, timings)
    t0 = time.perf_counter()
    spec_c = _problem(cfg, max(cfg.lambdas))
    branch = continue_branch(res, spec_c, cfg.lambdas, cfg.solver)
    timings["continuation"] = time.perf_counter() - t0
    if branch.failed_lam is not None:
        raise SolverError(
            f"continuation failed at lam={branch.failed_lam:g}: "
            f"{branch.diagnostic}")
    report = branch_report(branch, res)
    _write_atomic(os.path.join(cfg.out_dir, "branch.csv"), report.csv_text)
    save_field(os.path.join(cfg.out_dir, "U.fsps"), res.U, s=cfg.s, t=cfg.t)
    last = branch.records[-1]
    save_field(os.path.join(cfg.out_dir, "u_final.fsps"), last.u, s=cfg.s,
               t=cfg.t, lam=last.lam)
    dists = [r.hs_dist_to_limit for r in branch.records if r.lam > 0]
    phis = [r.phi_dt2_norm for r in branch.records if r.lam > 0]
    gaps = [r.energy.total - res.energy for r in branch.records if r.lam > 0]
    verdicts = {
        "hs_dist_decreasing": all(b < a for a, b in zip(dists, dists[1:])),
        "phi_norm_decreasing": all(b < a for a, b in zip(phis, phis[1:])),
        "energy_gap_decreasing": all(b < a for a, b in zip(gaps, gaps[1:])),
        "phi_exponent_linear": (report.phi_exponent is not None
                                and abs(report.phi_exponent - 1.0) <= 0.3),
    }
    numbers = {
        "energy_limit": res.energy,
        "hs_dists": dists, "phi_norms": phis, "energy_gaps": gaps,
        "phi_exponent": report.phi_exponent,
        "energy_gap_exponent": report.energy_gap_exponent,
        "energy_gap_nearest_order": report.energy_gap_nearest_order,
    }
    return verdicts, numbers, ["branch.csv", "U.fsps", "u_final.fsps"]


def _run_mpa(cfg: RunConfig, timings):
    spec, res = _solve_limit_for(cfg, timings)
    prof = dilation_profile(res.U, spec)
    rows = []
    levels = {}
    t0 = time.perf_counter()
    for lam in (0.0,) + tuple(cfg.lambdas):
        spec_l = _problem(cfg, lam)
        est = mountain_pass_level(spec_l, res.U, cfg.solver)
        levels[lam] = est
        rows.append((lam, est.level, est.D_lam, res.energy))
    timings["mpa"] = time.perf_counter() - t0
    _write_atomic(os.path.join(cfg.out_dir, "mpa.csv"),
                  _fmt_csv("lambda,level,D_lambda,E", rows))
    E = res.energy
    tol = max(0.01 * abs(E), 10 * cfg.solver.grad_tol)
    lam_pos = sorted((l for l in levels if l > 0), reverse=True)
    d_gaps = [levels[l].D_lam - E for l in lam_pos]
    verdicts = {
        "level_at_zero": abs(levels[0.0].level - E) <= 0.01 * abs(E),
        "ordering": all(E - tol <= levels[l].level
                        <= levels[l].D_lam + 1e-9 * abs(E) for l in lam_pos),
        "d_lambda_decreasing_to_E": (
            all(b < a for a, b in zip(d_gaps, d_gaps[1:]))
            and (d_gaps[-1] <= 0.02 * abs(E) if d_gaps else True)),
    }
    numbers = {
        "E": E, "levels": {str(l): levels[l].level for l in levels},
        "D_lambdas": {str(l): levels[l].D_lam for l in levels},
        "tau0": prof.tau0, "tau_at_max": prof.tau_at_max,
    }
    return verdicts, numbers, ["mpa.csv"]


def _run_critical_check(cfg: RunConfig, timings):
    if cfg.nonlinearity.kind != CRITICAL:
        raise SolverError("critical-check requires the critical nonlinearity")
    spec, res = _solve_limit_for(cfg, timings)
    grid = cfg.grid()
    t0 = time.perf_counter()
    sob = sobolev_constant(cfg.s, grid)
    gap = strict_gap(res, cfg.s, sob, solver_tol=cfg.solver.grad_tol)
    eps0 = grid.L / 40.0
    eps_list = [eps0 * 2.0**k for k in range(4, -1, -1)]
    records = cutoff_family(cfg.s, cfg.nonlinearity.q, eps_list, grid)
    verdict_div = gamma_eps_divergence(records, cfg.s, cfg.nonlinearity.q)
    timings["critical_tools"] = time.perf_counter() - t0
    _write_atomic(os.path.join(cfg.out_dir, "cutoff_family.csv"),
                  records_to_csv(records))
    save_field(os.path.join(cfg.out_dir, "U.fsps"), res.U, s=cfg.s, t=cfg.t)
    verdicts = {
        "constraint_unit": abs(res.constraint_value - 1.0) <= 1e-8,
        "rescaled_residual": res.grad_norm <= cfg.solver.grad_tol,
        "strict_gap": gap.passed,
        "gamma_eps_divergence": verdict_div.passed,
        "gamma_eps_positive": all(r.gamma_eps > 0 for r in records),
    }
    numbers = {
        "M": gap.m_value, "bound": gap.bound, "margin": gap.margin,
        "error_bar": gap.error_bar, "S_s": sob.value, "S_s_spread": sob.spread,
        "sigma0": res.sigma0, "energy": res.energy,
        "gamma_eps_ratios": list(verdict_div.ratios),
        "gamma_eps_exponent": verdict_div.fitted_exponent,
        "gamma_eps_predicted": verdict_div.predicted_exponent,
    }
    rows = [(k, v) for k, v in sorted(numbers.items())
            if isinstance(v, float)]
    _write_atomic(os.path.join(cfg.out_dir, "critical_check.csv"),
                  _fmt_csv("quantity,value", rows))
    return verdicts, numbers, ["critical_check.csv", "cutoff_family.csv",
                               "U.fsps"]
