"""Run configuration: key=value-with-sections text files, command-line
overrides, and full validation (every error reported, not just the first).
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field

from .grid import Grid
from .nonlinearity import (CRITICAL, SUBCRITICAL, NonlinearitySpec,
                           critical_exponent)
from .solvers import SolverConfig

EXPERIMENTS = ("poisson-test", "groundstate", "branch", "mpa",
               "critical-check")

_KNOWN_KEYS = {
    "run": {"experiment"},
    "grid": {"n", "L"},
    "problem": {"s", "t", "lambdas"},
    "nonlinearity": {"kind", "m", "p", "a", "b", "mu", "q", "tau0"},
    "solver": {"tol", "max_iters", "seed", "init", "init_width",
               "snapshot_path"},
    "output": {"dir"},
}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    n: int
    L: float
    s: float
    t: float
    lambdas: tuple
    nonlinearity: NonlinearitySpec
    solver: SolverConfig
    out_dir: str = "out"
    config_echo: str = ""

    def grid(self) -> Grid:
        return Grid(self.n, self.L)


def _parse_lambdas(text: str):
    items = [tok for tok in text.replace(",", " ").split() if tok]
    return tuple(float(x) for x in items)


def parse_config(text: str, experiment: str | None = None,
                 overrides=(), out_dir: str | None = None,
                 seed: int | None = None) -> RunConfig:
    """Parse and validate; raises ConfigError carrying every violation.

    `overrides` are section.key=value strings that win over file keys;
    `experiment`, `out_dir` and `seed` (command-line flags) win over both.
    """
    errors = []
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"unparseable config: {exc}"]) from exc

    kv = {sec: dict(cp.items(sec)) for sec in cp.sections()}
    for ov in overrides:
        key, sep, val = ov.partition("=")
        if not sep:
            errors.append(f"override {ov!r} is not key=value")
            continue
        sec, dot, name = key.partition(".")
        if not dot:
            sec, name = "run", key
        kv.setdefault(sec, {})[name.strip()] = val.strip()

    for sec, keys in kv.items():
        if sec not in _KNOWN_KEYS:
            errors.append(f"unknown section [{sec}]")
            continue
        for key in keys:
            if key not in _KNOWN_KEYS[sec]:
                errors.append(f"unknown key {key!r} in section [{sec}]")

    def get(sec, key, conv, default=None, required=False):
        raw = kv.get(sec, {}).get(key)
        if raw is None:
            if required:
                errors.append(f"missing required key [{sec}] {key}")
            return default
        try:
            return conv(raw)
        except (TypeError, ValueError):
            errors.append(f"[{sec}] {key}={raw!r} is not a valid "
                          f"{conv.__name__}")
            return default

    exp = experiment or kv.get("run", {}).get("experiment")
    if exp not in EXPERIMENTS:
        errors.append(f"experiment={exp!r} not one of {EXPERIMENTS}")

    n = get("grid", "n", int, default=64)
    L = get("grid", "L", float, default=32.0)
    if n is not None and (n < 8 or n % 2 != 0):
        errors.append(f"grid n={n} must be even and >= 8")
    if L is not None and not L > 0:
        errors.append(f"grid L={L} must be positive")

    s = get("problem", "s", float, default=0.75)
    t = get("problem", "t", float, default=0.5)
    lambdas = get("problem", "lambdas", _parse_lambdas, default=())
    if s is not None and not 0.0 < s <= 1.0:
        errors.append(f"s={s} outside the admissible range (0, 1]")
    if t is not None and not 0.0 < t <= 1.0:
        errors.append(f"t={t} outside the admissible range (0, 1]")
    if s and t and 0 < s <= 1 and 0 < t <= 1:
        if any(x > 0 for x in lambdas) and 2 * t + 4 * s < 3:
            errors.append(f"2t+4s = {2 * t + 4 * s:g} < 3 with positive "
                          "coupling: system not well posed")
    if lambdas:
        if any(b >= a for a, b in zip(lambdas, lambdas[1:])):
            errors.append(f"lambdas={lambdas} must be strictly decreasing")
        if any(x < 0 for x in lambdas):
            errors.append("lambdas must be nonnegative")
    if exp in ("branch", "mpa") and not lambdas:
        errors.append(f"experiment {exp} requires a nonempty lambdas list")

    kind = get("nonlinearity", "kind", str,
               default=CRITICAL if exp == "critical-check" else SUBCRITICAL)
    if kind not in (SUBCRITICAL, CRITICAL):
        errors.append(f"nonlinearity kind={kind!r} unknown")
        kind = SUBCRITICAL
    nl_kwargs = dict(
        m=get("nonlinearity", "m", float, default=1.0),
        p=get("nonlinearity", "p", float, default=4.0),
        a=get("nonlinearity", "a", float, default=1.0),
        b=get("nonlinearity", "b", float, default=1.0),
        mu=get("nonlinearity", "mu", float, default=1.0),
        q=get("nonlinearity", "q", float, default=3.0),
    )
    tau0_raw = kv.get("nonlinearity", {}).get("tau0")
    if tau0_raw not in (None, "none"):
        try:
            nl_kwargs["tau0"] = float(tau0_raw)
        except ValueError:
            errors.append(f"tau0={tau0_raw!r} is not a float or 'none'")
    nl = None
    if s is not None and 0 < s <= 1:
        try:
            nl = NonlinearitySpec(kind=kind, s=s, **nl_kwargs)
        except ValueError as exc:
            errors.append(str(exc))

    tol = get("solver", "tol", float, default=1e-5)
    max_iters = get("solver", "max_iters", int, default=600)
    cfg_seed = get("solver", "seed", int, default=0)
    init = get("solver", "init", str, default="gaussian")
    width = get("solver", "init_width", float, default=1.0)
    snap = get("solver", "snapshot_path", str, default=None)
    if seed is not None:
        cfg_seed = seed
    solver = None
    try:
        solver = SolverConfig(grad_tol=tol, max_iters=max_iters,
                              seed=cfg_seed, init=init, init_width=width,
                              snapshot_path=snap)
    except ValueError as exc:
        errors.append(str(exc))

    out = out_dir or get("output", "dir", str, default="out")

    if errors:
        raise ConfigError(errors)

    echo = io.StringIO()
    echo.write(text.rstrip() + "\n")
    if overrides:
        echo.write("# overrides: " + " ".join(overrides) + "\n")
    return RunConfig(experiment=exp, n=n, L=L, s=s, t=t, lambdas=lambdas,
                     nonlinearity=nl, solver=solver, out_dir=out,
                     config_echo=echo.getvalue())
