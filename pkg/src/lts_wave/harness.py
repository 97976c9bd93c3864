"""Experiment drivers: references, studies and CSV output.

Each experiment takes a validated :class:`ExperimentConfig`, writes one or
more CSV files (``#`` comment header echoing the configuration) into the
output directory and returns an in-memory result object.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
import platform
import sys as _sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from lts_wave import __version__
from lts_wave.cheb import make_stab_params
from lts_wave.fem import LumpedSystem, assemble, error_norms, interpolate
from lts_wave.lts import EnergyObserver, NormObserver, run
from lts_wave.mesh import Mesh, build_interval_mesh, build_lshape_graded, mesh_stats, partition_dofs
from lts_wave.spectral import (
    DENSE_CAP,
    DenseCapExceeded,
    critical_dt_scan,
    lambda_max_AS,
    max_stable_dt,
    spectrum_sweep,
)

EXPERIMENTS = ("converge", "energy", "spectrum", "cfl_table", "instability", "lshape")
DT_RULES = ("factor_of_dt_opt", "factor_of_dt_max", "absolute", "exp_nu_times_hc", "critical")

GAUSS_WIDTH = 400.0
ELLIPTIC_RHS = 100.0
CG_RTOL = 1e-12


class ConfigError(ValueError):
    """Invalid experiment configuration."""


# --------------------------------------------------------------------------
# configuration

_DEFAULTS: dict[str, dict[str, Any]] = {
    "converge": dict(levels=[1 / 40, 1 / 80, 1 / 160, 1 / 320], ps=[2, 5, 17], nu=0.01,
                     dt_rule="exp_nu_times_hc", T=2.0, reference="analytic"),
    "energy": dict(h_c=1 / 320, p=2, nu=0.01, dt_rule="exp_nu_times_hc", T=100.0, stride=1),
    "spectrum": dict(h_c=1 / 40, p=3, nu=0.0, grid=[0.05, 1.2, 231]),
    "cfl_table": dict(h_c=0.01, p=1000, nus=[0.001, 0.01, 0.05, 0.5], scan=12),
    "instability": dict(h_c=1 / 80, p=2, nu=0.01, dt_rule="critical", T=500.0, stride=10,
                        grid=[0.05, 1.0, 951], dt_perturb=0.0, fit_window=[10.0, 500.0]),
    "lshape": dict(N=[10, 20, 40, 80], beta=1.6, nu=0.01, dt_rule="factor_of_dt_max",
                   dt_factor=0.9, T=0.3, control=True),
}


@dataclass
class ExperimentConfig:
    """Parameters of one experiment; unset fields take per-experiment defaults.

    ``levels`` is the 1D ``h_c`` ladder, ``N`` the L-shape ladder and
    ``grid`` a ``[lo, hi, count]`` range of ``dt / h_c``.
    """

    experiment: str
    h_c: float | None = None
    levels: list | None = None
    N: list | None = None
    fine_lo: float = 0.9
    fine_hi: float = 1.0
    p: int | None = None
    ps: list | None = None
    beta: float | None = None
    nu: float | None = None
    nus: list | None = None
    dt_rule: str | None = None
    dt_factor: float = 1.0
    dt_value: float | None = None
    dt_perturb: float = 0.0
    T: float | None = None
    output_dir: str = "out"
    stride: int | None = None
    seed: int = 0
    reference: str | None = None
    scan: int | None = None
    grid: list | None = None
    fit_window: list | None = None
    control: bool | None = None
    critical_kind: str = "one"

    def __post_init__(self):
        exp = self.experiment.replace("-", "_")
        if exp not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        self.experiment = exp
        for key, val in _DEFAULTS[exp].items():
            if getattr(self, key) is None:
                setattr(self, key, list(val) if isinstance(val, list) else val)
        if self.stride is None:
            self.stride = 1
        self.validate()

    def validate(self) -> None:
        exp = self.experiment

        def need(cond, msg):
            if not cond:
                raise ConfigError(f"{exp}: {msg}")

        if self.nu is not None:
            need(0.0 <= self.nu <= 0.5, "nu must lie in [0, 0.5]")
        if self.nus is not None:
            need(all(0.0 <= v <= 0.5 for v in self.nus), "every nu must lie in [0, 0.5]")
        if self.dt_rule is not None:
            need(self.dt_rule in DT_RULES, f"dt_rule must be one of {DT_RULES}")
            if self.dt_rule == "absolute":
                need(self.dt_value is not None and self.dt_value > 0, "absolute dt needs dt_value > 0")
        need(self.dt_factor > 0, "dt_factor must be positive")
        need(self.stride >= 1, "stride must be >= 1")
        if self.T is not None:
            need(self.T > 0, "T must be positive")
        if exp in ("converge", "energy", "spectrum", "cfl_table", "instability"):
            need(0.0 <= self.fine_lo <= self.fine_hi <= 1.0, "fine region must lie in [0, 1]")
        if exp == "converge":
            need(len(self.levels) >= 2, "need at least two mesh levels")
            need(all(h > 0 for h in self.levels), "mesh sizes must be positive")
            need(all(int(p) >= 1 for p in self.ps), "p must be >= 1")
            need(self.reference in ("analytic", "semidiscrete"),
                 "reference must be 'analytic' or 'semidiscrete'")
            need(self.dt_rule != "factor_of_dt_max", "dt rule not supported here")
        if exp in ("energy", "spectrum", "cfl_table", "instability"):
            need(self.h_c is not None and self.h_c > 0, "h_c must be positive")
            need(int(self.p) >= 1, "p must be >= 1")
        if exp in ("spectrum", "instability"):
            need(len(self.grid) == 3 and 0 < self.grid[0] < self.grid[1] and int(self.grid[2]) >= 3,
                 "grid must be [lo, hi, count] with 0 < lo < hi and count >= 3")
        if exp == "instability":
            need(int(self.p) >= 2, "instability needs p >= 2")
            need(self.critical_kind in ("one", "zero", "any"), "critical_kind is one|zero|any")
            need(len(self.fit_window) == 2 and self.fit_window[0] < self.fit_window[1],
                 "fit_window must be [t0, t1]")
        if exp == "cfl_table":
            need(len(self.nus) >= 1, "need at least one nu")
            need(self.scan >= 1, "scan must be >= 1")
        if exp == "lshape":
            need(len(self.N) >= 2 and all(int(n) >= 2 for n in self.N), "N ladder needs >= 2 levels >= 2")
            need(self.beta >= 1.0, "beta must be >= 1")
            need(self.dt_rule in ("factor_of_dt_max", "factor_of_dt_opt", "absolute"),
                 "lshape dt_rule must be factor_of_dt_max, factor_of_dt_opt or absolute")

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def load_config(path, experiment: str | None = None, **overrides) -> ExperimentConfig:
    """Read a TOML file into an :class:`ExperimentConfig`.

    Keys may sit at the top level or in a table named after the
    experiment; the table wins. ``overrides`` that are not None win over both.
    """
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    exp = experiment or raw.get("experiment")
    if exp is None:
        raise ConfigError("config does not name an experiment")
    flat = {k: v for k, v in raw.items() if not isinstance(v, dict)}
    for key in (exp, exp.replace("-", "_"), exp.replace("_", "-")):
        if isinstance(raw.get(key), dict):
            flat.update(raw[key])
    flat.update({k: v for k, v in overrides.items() if v is not None})
    flat["experiment"] = exp
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(flat) - names)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return ExperimentConfig(**flat)


def max_workers(n_tasks: int) -> int:
    """Worker count bounded by ``LTS_WAVE_THREADS`` (default: CPU count)."""
    env = os.environ.get("LTS_WAVE_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(n_tasks, cap))


def _map_ordered(fn, items):
    items = list(items)
    n = max_workers(len(items))
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# CSV and manifest

def write_csv(path, header: Sequence[str], rows, config: ExperimentConfig | None = None,
              notes: Sequence[str] = ()) -> Path:
    """CSV with a ``#`` comment block (config echo and notes) before the header row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if config is not None:
            for key, val in config.as_dict().items():
                fh.write(f"# {key} = {json.dumps(val)}\n")
        for line in notes:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    """Header and data rows of a CSV written by :func:`write_csv`."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def write_manifest(out_dir, config: ExperimentConfig, wall_time: float, outputs: Sequence,
                   extra: dict | None = None) -> Path:
    """Write ``run.json``: config echo, library versions, wall time and outputs."""
    import numba
    import scipy

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = {
        "experiment": config.experiment,
        "config": config.as_dict(),
        "versions": {"lts_wave": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__,
                     "numba": numba.__version__},
        "numba_enabled": os.environ.get("LTS_WAVE_NUMBA", "1"),
        "wall_time_s": wall_time,
        "outputs": [str(Path(o).name) for o in outputs],
    }
    if extra:
        data.update(extra)
    path = out_dir / "run.json"
    path.write_text(json.dumps(data, indent=2, default=_json_default) + "\n", encoding="utf-8")
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    return str(o)


def array_checksum(a: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(a, dtype=np.float64).tobytes()).hexdigest()


# --------------------------------------------------------------------------
# references and initial data

def gaussian(x, width: float = GAUSS_WIDTH):
    x = np.asarray(x, dtype=float)
    return np.exp(-width * (x - 0.5) ** 2)


def gaussian_dx(x, width: float = GAUSS_WIDTH):
    x = np.asarray(x, dtype=float)
    return -2.0 * width * (x - 0.5) * gaussian(x, width)


def dalembert(t: float, f=gaussian, df=gaussian_dx):
    """Exact solution on (0, 1) with Dirichlet ends, zero initial velocity.

    Uses the odd 2-periodic extension of ``f``. Returns ``(u, du/dx)`` as
    callables of ``x``.
    """

    def ext(y):
        y = np.mod(y, 2.0)
        return np.where(y <= 1.0, f(y), -f(2.0 - y))

    def dext(y):
        y = np.mod(y, 2.0)
        return np.where(y <= 1.0, df(y), df(2.0 - y))

    def u(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * (ext(x - t) + ext(x + t))

    def du(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * (dext(x - t) + dext(x + t))

    return u, du


class SemidiscreteReference:
    """Exact time integrator of the lumped semidiscrete system.

    The eigendecomposition of ``D^{-1/2} K D^{-1/2}`` is computed once;
    :meth:`__call__` then evaluates the modal solution at any ``t``.
    """

    def __init__(self, sys: LumpedSystem, cap: int = DENSE_CAP):
        if sys.n_dofs > cap:
            raise DenseCapExceeded(f"{sys.n_dofs} dofs exceed the dense cap {cap}")
        s = sys.sqrt_D
        S = sys.dense_K() / s[:, None] / s[None, :]
        lam, Q = np.linalg.eigh(0.5 * (S + S.T))
        self.sys = sys
        self.lam = np.clip(lam, 0.0, None)
        self.Q = Q

    def __call__(self, u0, v0, t: float) -> np.ndarray:
        s = self.sys.sqrt_D
        a = self.Q.T @ (s * np.asarray(u0, dtype=float))
        b = self.Q.T @ (s * np.asarray(v0, dtype=float))
        r = np.sqrt(self.lam)
        with np.errstate(invalid="ignore", divide="ignore"):
            sinc = np.where(r > 0, np.sin(r * t) / np.where(r > 0, r, 1.0), t)
        return (self.Q @ (np.cos(r * t) * a + sinc * b)) / s


def reference_semidiscrete(sys: LumpedSystem, u0, v0, t: float, cap: int = DENSE_CAP) -> np.ndarray:
    """Semidiscrete solution ``u_S(t)`` from its modal expansion."""
    return SemidiscreteReference(sys, cap)(u0, v0, t)


def elliptic_solve(mesh: Mesh, rhs_const: float, partition=None, rtol: float = CG_RTOL) -> np.ndarray:
    """Solve ``Laplace(w) = rhs_const`` with zero Dirichlet data.

    The lumped weak form ``K w = -rhs_const * D 1`` is solved by Jacobi
    preconditioned CG to relative residual ``rtol``; returns free-node values.
    """
    sys = assemble(mesh, partition)
    b = -float(rhs_const) * sys.D
    if not np.any(b):
        return np.zeros(sys.n_dofs)
    n = sys.n_dofs
    M = sp.diags(1.0 / sys.K.diagonal())
    w, info = _cg(sys.K, b, rtol, 10 * n, M)
    if info != 0:
        raise RuntimeError(f"CG did not converge in {10 * n} iterations")
    return w


def _cg(A, b, rtol, maxiter, M):
    try:
        return spla.cg(A, b, rtol=rtol, atol=0.0, maxiter=maxiter, M=M)
    except TypeError:  # scipy < 1.12 names it tol
        return spla.cg(A, b, tol=rtol, atol=0.0, maxiter=maxiter, M=M)


# --------------------------------------------------------------------------
# time-step rules

def uniform_dt_opt(h_c: float) -> float:
    """Leapfrog optimum ``2 / sqrt(lambda_max)`` on the equidistant ``h_c`` mesh of (0, 1)."""
    return 2.0 / math.sqrt(lambda_max_AS(assemble(build_interval_mesh(h_c, 0.0, 0.0, 1))))


def first_critical(sys: LumpedSystem, p: int, h_c: float, grid, kind: str = "one"):
    """First critical point of the ``nu = 0`` operator on a ``dt / h_c`` grid."""
    lo, hi, n = grid
    pts = critical_dt_scan(sys, p, np.linspace(lo * h_c, hi * h_c, int(n)), nu=0.0)
    if kind != "any":
        pts = [c for c in pts if c.kind == kind]
    if not pts:
        raise RuntimeError("no critical time-step in the scanned range")
    return pts[0]


def land_on(T: float, dt: float) -> float:
    """Largest step ``<= dt`` that divides ``T`` into whole steps."""
    return T / max(1, math.ceil(T / dt - 1e-9))


def choose_dt(cfg: ExperimentConfig, sys: LumpedSystem, h_c: float, p: int, nu: float) -> float:
    rule = cfg.dt_rule
    if rule == "absolute":
        return float(cfg.dt_value)
    if rule == "exp_nu_times_hc":
        return math.exp(-nu) * h_c * cfg.dt_factor
    if rule == "factor_of_dt_opt":
        return cfg.dt_factor * uniform_dt_opt(h_c)
    if rule == "factor_of_dt_max":
        rep = max_stable_dt(sys, p, nu, scan=1, rel_width=1e-3)
        return cfg.dt_factor * rep.dt_max
    if rule == "critical":
        return first_critical(sys, p, h_c, cfg.grid, cfg.critical_kind).dt_root * cfg.dt_factor
    raise ConfigError(f"unknown dt rule {rule!r}")  # pragma: no cover


# --------------------------------------------------------------------------
# convergence

@dataclass(frozen=True)
class ConvergenceRow:
    h: float
    dofs: int
    l2_error: float
    h1_error: float
    observed_rate: float
    h1_rate: float = math.nan
    p: int = 1
    nu: float = 0.0
    dt: float = math.nan
    t_final: float = math.nan


def observed_rates(h, err) -> np.ndarray:
    """``log(e_{i-1}/e_i) / log(h_{i-1}/h_i)``; NaN for the first entry."""
    h = np.asarray(h, dtype=float)
    e = np.asarray(err, dtype=float)
    out = np.full(h.shape, math.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[1:] = np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])
    return out


def _with_rates(rows: list[ConvergenceRow]) -> list[ConvergenceRow]:
    h = [r.h for r in rows]
    r2 = observed_rates(h, [r.l2_error for r in rows])
    r1 = observed_rates(h, [r.h1_error for r in rows])
    return [dataclasses.replace(r, observed_rate=float(a), h1_rate=float(b))
            for r, a, b in zip(rows, r2, r1)]


def _converge_level(cfg: ExperimentConfig, p: int, h: float, ref_fn=None) -> ConvergenceRow:
    mesh = build_interval_mesh(h, cfg.fine_lo, cfg.fine_hi, p)
    sys = assemble(mesh)
    params = make_stab_params(p, cfg.nu)
    u0 = interpolate(mesh, gaussian, sys.partition)
    v0 = np.zeros_like(u0)
    # the error is compared at T itself, not at a rounded multiple of dt
    dt = land_on(cfg.T, choose_dt(cfg, sys, h, p, cfg.nu))
    state = run(sys, params, u0, v0, dt, cfg.T)
    t_end = state.t
    if ref_fn is None:
        u_ex, du_ex = dalembert(t_end)
        l2, h1 = error_norms(mesh, state.u_cur, u_ex, du_ex, partition=sys.partition)
    else:
        l2, h1 = error_norms(mesh, state.u_cur, ref_fn(t_end), partition=sys.partition)
    return ConvergenceRow(h, sys.n_dofs, l2, h1, math.nan, p=p, nu=cfg.nu, dt=dt, t_final=t_end)


def _semidiscrete_ref(cfg: ExperimentConfig, p: int):
    h_ref = min(cfg.levels) / 2.0
    mesh = build_interval_mesh(h_ref, cfg.fine_lo, cfg.fine_hi, p)
    sys = assemble(mesh)
    ref = SemidiscreteReference(sys)
    u0 = interpolate(mesh, gaussian, sys.partition)
    v0 = np.zeros_like(u0)
    return lambda t: (mesh, ref(u0, v0, t))


def convergence_study(cfg: ExperimentConfig) -> dict[int, list[ConvergenceRow]]:
    """Run the 1D Gaussian study for every ``p``; writes ``converge.csv``."""
    out: dict[int, list[ConvergenceRow]] = {}
    tasks = [(int(p), float(h)) for p in cfg.ps for h in sorted(cfg.levels, reverse=True)]
    refs = {}
    if cfg.reference == "semidiscrete":
        refs = {int(p): _semidiscrete_ref(cfg, int(p)) for p in cfg.ps}
    rows = _map_ordered(lambda ph: _converge_level(cfg, ph[0], ph[1], refs.get(ph[0])), tasks)
    for p in cfg.ps:
        out[int(p)] = _with_rates([r for r in rows if r.p == int(p)])
    flat = [r for p in out for r in out[p]]
    write_csv(Path(cfg.output_dir) / "converge.csv",
              ["p", "nu", "h", "dofs", "dt", "t_final", "l2_error", "h1_error",
               "observed_rate", "h1_rate"],
              [[r.p, r.nu, r.h, r.dofs, r.dt, r.t_final, r.l2_error, r.h1_error,
                r.observed_rate, r.h1_rate] for r in flat],
              cfg, notes=[f"reference = {cfg.reference}"])
    return out


# --------------------------------------------------------------------------
# energy

@dataclass
class EnergyTrace:
    steps: np.ndarray
    t: np.ndarray
    E: np.ndarray
    rel_dev: np.ndarray

    @property
    def max_rel_dev(self) -> float:
        return float(np.max(self.rel_dev)) if self.rel_dev.size else 0.0


def relative_deviation(E: np.ndarray) -> np.ndarray:
    """``|E / E[0] - 1|``, defined as zero when ``E[0] == 0``."""
    E = np.asarray(E, dtype=float)
    if E.size == 0 or E[0] == 0.0:
        return np.zeros_like(E)
    return np.abs(E / E[0] - 1.0)


def energy_trace(cfg: ExperimentConfig, u0=None, v0=None) -> EnergyTrace:
    """Record ``E^{n+1/2}`` along a run; writes ``energy.csv``."""
    p = int(cfg.p)
    mesh = build_interval_mesh(cfg.h_c, cfg.fine_lo, cfg.fine_hi, p)
    sys = assemble(mesh)
    params = make_stab_params(p, cfg.nu)
    u0 = interpolate(mesh, gaussian, sys.partition) if u0 is None else np.asarray(u0, float)
    v0 = np.zeros(sys.n_dofs) if v0 is None else np.asarray(v0, float)
    dt = land_on(cfg.T, choose_dt(cfg, sys, cfg.h_c, p, cfg.nu))
    obs = EnergyObserver(sys, params, dt, stride=cfg.stride)
    run(sys, params, u0, v0, dt, cfg.T, observers=[obs])
    E = np.array([s.value for s in obs.samples])
    tr = EnergyTrace(np.array([s.step for s in obs.samples]), np.array(obs.times), E,
                     relative_deviation(E))
    write_csv(Path(cfg.output_dir) / "energy.csv", ["step", "t", "E", "rel_dev"],
              zip(tr.steps, tr.t, tr.E, tr.rel_dev), cfg, notes=[f"dt = {dt!r}"])
    return tr


# --------------------------------------------------------------------------
# spectrum and critical steps

@dataclass
class SpectrumResult:
    dt_grid: np.ndarray
    dt_opt: float
    critical: list


def spectrum(cfg: ExperimentConfig) -> SpectrumResult:
    """Full eigenvalue curves plus critical points; writes ``spectrum.csv`` and ``critical.csv``."""
    p = int(cfg.p)
    mesh = build_interval_mesh(cfg.h_c, cfg.fine_lo, cfg.fine_hi, p)
    sys = assemble(mesh)
    lo, hi, n = cfg.grid
    dts = np.linspace(lo * cfg.h_c, hi * cfg.h_c, int(n))
    out = Path(cfg.output_dir)
    spectrum_sweep(sys, p, cfg.nu, dts, cfg.h_c, out / "spectrum.csv")
    dt_opt = uniform_dt_opt(cfg.h_c)
    crit = critical_dt_scan(sys, p, dts, nu=cfg.nu)
    write_csv(out / "critical.csv",
              ["dt_crit", "dt_crit_over_hc", "dt_crit_over_dt_opt", "dt_root", "kind", "value"],
              [[c.dt, c.dt / cfg.h_c, c.dt / dt_opt, c.dt_root, c.kind, c.value] for c in crit],
              cfg, notes=[f"dt_opt = {dt_opt!r}"])
    return SpectrumResult(dts, dt_opt, crit)


# --------------------------------------------------------------------------
# instability

@dataclass
class InstabilityResult:
    dt: float
    t: np.ndarray
    sup_unstab: np.ndarray
    sup_stab: np.ndarray
    nu_stab: float
    growth: float
    slope: float
    r2: float
    stab_ratio: float
    checksum: str
    sup_u0: float = 1.0

    @property
    def stab_ratio_u0(self) -> float:
        """Largest stabilized sup-norm relative to ``|u^0|_inf`` alone."""
        return float(self.sup_stab.max() / self.sup_u0)


def linear_fit(t, y) -> tuple[float, float]:
    """Least-squares slope of ``y ~ c t`` through the origin and its R^2."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    c = float(t @ y / (t @ t))
    ss_res = float(np.sum((y - c * t) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return c, (1.0 - ss_res / ss_tot if ss_tot > 0 else math.nan)


def instability_demo(cfg: ExperimentConfig) -> InstabilityResult:
    """Run ``nu = 0`` and ``nu = cfg.nu`` from the critical eigenvector.

    The time-step is the first exact crossing ``dt_root``, where the
    unstabilized operator has the eigenvalue ``4 / dt^2`` and leapfrog a
    Jordan block. Growth factors are relative to the sup-norm of the
    two-level initial state ``(u^0, u^1)``. Writes ``instability.csv`` (``t,sup_nu0,sup_nu``) and
    ``critical_vector.csv``; both runs read the same array.
    """
    p = int(cfg.p)
    mesh = build_interval_mesh(cfg.h_c, cfg.fine_lo, cfg.fine_hi, p)
    sys = assemble(mesh)
    crit = first_critical(sys, p, cfg.h_c, cfg.grid, cfg.critical_kind)
    dt = crit.dt_root * cfg.dt_factor * (1.0 + cfg.dt_perturb)
    if cfg.dt_rule == "absolute":
        dt = float(cfg.dt_value)
    out = Path(cfg.output_dir)
    coords = mesh.vertices[sys.partition.free_nodes, 0]
    write_csv(out / "critical_vector.csv", ["x", "eta"], zip(coords, crit.vector), cfg,
              notes=[f"dt_root = {crit.dt_root!r}", f"kind = {crit.kind}"])
    u0 = crit.vector.copy()
    u0.setflags(write=False)
    checksum = array_checksum(u0)
    v0 = np.zeros_like(u0)
    traces = {}
    for nu in (0.0, float(cfg.nu)):
        obs = NormObserver(stride=cfg.stride)
        run(sys, make_stab_params(p, nu), u0, v0, dt, cfg.T, observers=[obs])
        traces[nu] = (np.array([0.0] + obs.times), np.array([np.max(np.abs(u0))] + obs.values))
    t, s0 = traces[0.0]
    s1 = traces[float(cfg.nu)][1]
    # sup-norm of the two-level initial state (u^0, u^1); both runs share it
    init = float(max(s0[0], s0[1]))
    w0, w1 = cfg.fit_window
    win = (t >= w0) & (t <= w1)
    with np.errstate(over="ignore", invalid="ignore"):
        slope, r2 = linear_fit(t[win], s0[win]) if win.sum() >= 2 else (math.nan, math.nan)
    res = InstabilityResult(dt, t, s0, s1, float(cfg.nu), float(s0.max() / init), slope, r2,
                            float(s1.max() / init), checksum, float(s0[0]))
    write_csv(out / "instability.csv", ["t", "sup_nu0", "sup_nu"], zip(t, s0, s1), cfg,
              notes=[f"dt = {dt!r}", f"eta_sha256 = {checksum}", f"slope = {slope!r}",
                     f"r2 = {r2!r}"])
    return res


# --------------------------------------------------------------------------
# stability table

TABLE_NOTE = ("mesh: h_c = {h_c}, fine region [{lo}, {hi}], p = {p}; "
              "dt_opt from the equidistant h_c mesh")


@dataclass
class CflTable:
    reports: list
    dt_opt: float


def cfl_table(cfg: ExperimentConfig, progress: Callable | None = None) -> CflTable:
    """Maximal stable step and margin per ``nu``; writes ``stability.csv`` and ``validated.csv``."""
    p = int(cfg.p)
    mesh = build_interval_mesh(cfg.h_c, cfg.fine_lo, cfg.fine_hi, p)
    sys = assemble(mesh)
    dt_opt = uniform_dt_opt(cfg.h_c)

    def one(nu):
        rep = max_stable_dt(sys, p, float(nu), scan=int(cfg.scan), dt_opt=dt_opt)
        if progress:
            progress(rep)
        return rep

    reports = _map_ordered(one, cfg.nus)
    out = Path(cfg.output_dir)
    note = TABLE_NOTE.format(h_c=cfg.h_c, lo=cfg.fine_lo, hi=cfg.fine_hi, p=p)
    write_csv(out / "stability.csv", ["nu", "dt_max", "dt_opt", "ratio_pct", "min_margin"],
              [[r.nu, r.dt_max, r.dt_opt, r.ratio_pct, r.min_margin] for r in reports], cfg,
              notes=[note])
    rows = []
    for r in reports:
        for dt, lo, hi in r.validated:
            rows.append([r.nu, dt, lo, hi, dt * dt * hi, 4.0 - r.nu / (r.nu + 1.0)])
    write_csv(out / "validated.csv", ["nu", "dt", "lmin_or_certificate", "lmax", "dt2_lmax", "bound"],
              rows, cfg, notes=[note])
    return CflTable(reports, dt_opt)


# --------------------------------------------------------------------------
# L-shape

@dataclass
class LshapeLevel:
    N: int
    beta: float
    p: int
    dofs: int
    n_fine: int
    dt: float
    n_steps: int
    u: np.ndarray = field(repr=False)
    mesh: Mesh = field(repr=False)


@dataclass
class LshapeResult:
    graded: list
    control: list


def _lshape_run(cfg: ExperimentConfig, N: int, beta: float, lts: bool) -> LshapeLevel:
    if lts:
        mesh = build_lshape_graded(N, beta)
        p = max(1, math.ceil(mesh_stats(mesh).ratio_p_bound - 1e-9))
        nu = float(cfg.nu)
    else:
        mesh = build_lshape_graded(N, beta, fine_layers=0)
        p, nu = 1, 0.0
    sys = assemble(mesh)
    w = elliptic_solve(mesh, ELLIPTIC_RHS, sys.partition)
    u0 = np.zeros(sys.n_dofs)
    v0 = -w
    if cfg.dt_rule == "absolute":
        dt0 = float(cfg.dt_value)
    elif cfg.dt_rule == "factor_of_dt_opt" or p == 1:
        dt0 = cfg.dt_factor * 2.0 / math.sqrt(lambda_max_AS(sys))
    else:
        dt0 = cfg.dt_factor * max_stable_dt(sys, p, nu, scan=1, rel_width=1e-3).dt_max
    # land exactly on T so that levels compare at the same time
    dt = land_on(cfg.T, dt0)
    n_steps = int(round(cfg.T / dt))
    state = run(sys, make_stab_params(p, nu), u0, v0, dt, cfg.T)
    return LshapeLevel(N, beta, p, sys.n_dofs, int(sys.fine_mask.sum()), dt, n_steps,
                       state.u_cur, mesh)


def _ladder_rows(levels: list[LshapeLevel], refs: list[LshapeLevel]) -> list[ConvergenceRow]:
    rows = []
    for lev, ref in zip(levels, refs):
        l2, h1 = error_norms(lev.mesh, lev.u, (ref.mesh, ref.u), allow_nonnested=True)
        rows.append(ConvergenceRow(1.0 / lev.N, lev.dofs, l2, h1, math.nan, p=lev.p, dt=lev.dt,
                                   t_final=lev.dt * lev.n_steps))
    return _with_rates(rows)


def lshape_study(cfg: ExperimentConfig) -> LshapeResult:
    """Graded LTS ladder and uniform leapfrog control; writes ``lshape.csv``.

    Level ``N`` is compared with the run on the ``2N`` mesh of the same
    family.
    """
    Ns = sorted(int(n) for n in cfg.N)
    all_N = sorted(set(Ns) | {2 * n for n in Ns})
    jobs = [(n, float(cfg.beta), True) for n in all_N]
    if cfg.control:
        jobs += [(n, 1.0, False) for n in all_N]
    runs = _map_ordered(lambda j: _lshape_run(cfg, *j), jobs)
    graded = {r.N: r for r in runs[: len(all_N)]}
    ctrl = {r.N: r for r in runs[len(all_N):]}
    g_rows = _ladder_rows([graded[n] for n in Ns], [graded[2 * n] for n in Ns])
    c_rows = _ladder_rows([ctrl[n] for n in Ns], [ctrl[2 * n] for n in Ns]) if cfg.control else []
    rows = [["graded", cfg.beta, graded[n].N, r.p, r.dofs, graded[n].n_fine, r.dt, r.l2_error,
             r.h1_error, r.observed_rate, r.h1_rate] for n, r in zip(Ns, g_rows)]
    rows += [["uniform", 1.0, ctrl[n].N, r.p, r.dofs, 0, r.dt, r.l2_error, r.h1_error,
              r.observed_rate, r.h1_rate] for n, r in zip(Ns, c_rows)]
    write_csv(Path(cfg.output_dir) / "lshape.csv",
              ["family", "beta", "N", "p", "dofs", "n_fine", "dt", "l2_error", "h1_error",
               "l2_rate", "h1_rate"], rows, cfg,
              notes=["reference for level N: same family at 2N, nodal prolongation"])
    return LshapeResult(g_rows, c_rows)


# --------------------------------------------------------------------------

def run_experiment(cfg: ExperimentConfig, progress: Callable | None = None):
    """Dispatch ``cfg`` to its driver and write the manifest."""
    t0 = time.perf_counter()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    extra: dict[str, Any] = {}
    if cfg.experiment == "converge":
        res = convergence_study(cfg)
        files = ["converge.csv"]
    elif cfg.experiment == "energy":
        res = energy_trace(cfg)
        files = ["energy.csv"]
        extra["max_rel_dev"] = res.max_rel_dev
    elif cfg.experiment == "spectrum":
        res = spectrum(cfg)
        files = ["spectrum.csv", "critical.csv"]
    elif cfg.experiment == "cfl_table":
        res = cfl_table(cfg, progress)
        files = ["stability.csv", "validated.csv"]
        extra["assumption"] = TABLE_NOTE.format(h_c=cfg.h_c, lo=cfg.fine_lo, hi=cfg.fine_hi, p=cfg.p)
    elif cfg.experiment == "instability":
        res = instability_demo(cfg)
        files = ["instability.csv", "critical_vector.csv"]
        extra.update(eta_sha256=res.checksum, dt=res.dt, growth=res.growth, r2=res.r2,
                     stab_ratio=res.stab_ratio)
    else:
        res = lshape_study(cfg)
        files = ["lshape.csv"]
    write_manifest(out, cfg, time.perf_counter() - t0, files, extra)
    return res
