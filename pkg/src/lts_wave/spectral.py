"""Spectral analysis of the stabilized local time-stepping operator.

The operator ``A^{S,p,nu} = A P^dt(Pi_f A)`` is self-adjoint in the lumped
inner product, so all eigen computations run on its symmetrized form
``D^{1/2} A^{S,p,nu} D^{-1/2}``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla
from scipy.optimize import brentq, minimize_scalar

from lts_wave import _kernels
from lts_wave.cheb import StabParams, eval_P, make_stab_params, reduced_stage_values
from lts_wave.fem import LumpedSystem, apply_AS

DENSE_CAP = 2000
TANGENCY_EPS = 1e-6
STABLE_REL = 1e-12
BISECT_REL_WIDTH = 1e-6
LANCZOS_MAX_STEPS = 400


class DenseCapExceeded(ValueError):
    pass


class EigenSolverError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class StabilizedOperator:
    """Matrix-free ``A^{S,p,nu}`` for a fixed time-step."""

    sys: LumpedSystem
    params: StabParams
    dt: float

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def n(self) -> int:
        return self.sys.n_dofs

    @cached_property
    def _stage_at_zero(self) -> np.ndarray:
        s = np.asarray(reduced_stage_values(self.params, self.dt, 0.0), dtype=float).reshape(-1)
        s = s.copy()
        s[-1] = 1.0  # the full polynomial is exactly 1 at zero
        return s

    @cached_property
    def _fine_blocks(self):
        sys = self.sys
        K_ff = sys.K_ff.copy()
        K_ff.sort_indices()
        dinv_f = 1.0 / sys.D[sys.fine_idx]
        return K_ff, sys.K_fc, dinv_f

    def poly(self, v) -> np.ndarray:
        """``P^dt(Pi_f A) v`` by the stage recursion."""
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.n:
            raise ValueError("dimension mismatch")
        sys, par = self.sys, self.params
        y = self._stage_at_zero[par.p] * v
        if par.p == 1 or sys.fine_idx.size == 0:
            return np.array(v, dtype=float)
        fi, ci = sys.fine_idx, sys.coarse_idx
        K_ff, K_fc, dinv = self._fine_blocks
        vf = np.ascontiguousarray(v[fi])
        g = K_fc @ v[ci]
        g = g * (dinv if v.ndim == 1 else dinv[:, None])
        if v.ndim == 1 and _kernels.numba_enabled():
            nf = fi.size
            bufs = [np.empty(nf) for _ in range(4)]
            yf = _kernels.poly_fine_jit(K_ff.indptr, K_ff.indices, K_ff.data, dinv, vf, g,
                                        self._stage_at_zero, par.p, par.delta, par.omega,
                                        self.dt, par.beta, par.beta_half, *bufs)
        else:
            yf = _kernels.poly_fine_numpy(K_ff, dinv, vf, g, self._stage_at_zero, par.p,
                                          par.delta, par.omega, self.dt, par.beta,
                                          par.beta_half)
        y[fi] = yf
        return y

    def apply(self, v) -> np.ndarray:
        return apply_AS(self.sys, self.poly(v))

    def apply_sym(self, q) -> np.ndarray:
        """``D^{1/2} A^{S,p,nu} D^{-1/2} q``."""
        q = np.asarray(q, dtype=float)
        s = self.sys.sqrt_D if q.ndim == 1 else self.sys.sqrt_D[:, None]
        return s * self.apply(q / s)


def apply_stabilized(op: StabilizedOperator, v) -> np.ndarray:
    """``A^{S,p,nu} v``: p fine matvecs for the polynomial, then one ``A``."""
    return op.apply(v)


def dense_stabilized(op: StabilizedOperator, cap: int = DENSE_CAP) -> np.ndarray:
    """Materialize ``A^{S,p,nu}`` by applying it to the identity."""
    n = op.n
    if n > cap:
        raise DenseCapExceeded(f"{n} dofs exceed the dense cap {cap}")
    return op.apply(np.eye(n))


def _dense_sym(op: StabilizedOperator, cap: int = DENSE_CAP) -> np.ndarray:
    A = dense_stabilized(op, cap)
    s = op.sys.sqrt_D
    S = s[:, None] * A / s[None, :]
    return 0.5 * (S + S.T)


def dense_spectrum(op: StabilizedOperator, cap: int = DENSE_CAP, vectors: bool = False):
    """All eigenvalues (and optionally T-orthonormal eigenvectors) of ``A^{S,p,nu}``."""
    S = _dense_sym(op, cap)
    if not vectors:
        return sla.eigh(S, eigvals_only=True)
    lam, Q = sla.eigh(S)
    return lam, Q / op.sys.sqrt_D[:, None]


def extreme_eigs(op: StabilizedOperator, tol: float = 1e-8, maxiter: int | None = None,
                 cap: int = DENSE_CAP, v0=None, which: str = "both"):
    """Smallest and largest eigenvalue of ``A^{S,p,nu}``.

    Dense under ``cap``. Otherwise Lanczos on the symmetrized operator gives
    ``lambda_max``; ``lambda_min`` comes from Lanczos on the shifted operator
    ``lambda_max I - A``, so its accuracy is relative to ``lambda_max``.
    ``which`` is ``"both"``, ``"max"`` or ``"min"``; the skipped endpoint is
    returned as NaN.

    Raises
    ------
    EigenSolverError
        If the Ritz residual is still above ``tol`` after ``maxiter`` steps.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = op.n
    if n <= cap:
        lam = dense_spectrum(op, cap)
        lo = lam[0] if which in ("both", "min") else math.nan
        hi = lam[-1] if which in ("both", "max") else math.nan
        return float(lo), float(hi)
    steps = maxiter or LANCZOS_MAX_STEPS
    top = _lanczos_checked(op.apply_sym, n, tol, steps, v0)
    hi = top.theta_max
    if which == "max":
        return math.nan, hi
    shifted = _lanczos_checked(lambda v: hi * v - op.apply_sym(v), n, tol, steps, None)
    lo = hi - shifted.theta_max
    return lo, (hi if which == "both" else math.nan)


def _lanczos_checked(matvec, n, tol, steps, v0):
    res = lanczos_extremes(matvec, n, tol=tol, max_steps=steps, v0=v0)
    if res.residual_max > tol * abs(res.theta_max) and res.steps < n:
        raise EigenSolverError(
            f"Lanczos residual {res.residual_max:.2e} above tolerance after {res.steps} steps")
    return res


@dataclass(frozen=True)
class LanczosResult:
    theta_min: float
    theta_max: float
    vec_max: np.ndarray
    residual_max: float
    steps: int


def lanczos_extremes(matvec, n: int, *, tol: float = 1e-8, max_steps: int = 300,
                     min_steps: int = 20, v0=None, seed: int = 0, stop=None) -> LanczosResult:
    """Symmetric Lanczos with full reorthogonalization.

    Runs until the residual of the largest Ritz pair drops below
    ``tol * |theta_max|`` (checked every 10 steps), ``stop(theta_max,
    residual)`` returns True, or ``max_steps`` is reached. No restarts: the
    Krylov basis is kept, so memory is ``max_steps * n`` doubles.
    """
    k_max = min(max_steps, n)
    Q = np.empty((k_max + 1, n))
    alpha = np.empty(k_max)
    beta = np.empty(k_max)
    q = np.random.default_rng(seed).standard_normal(n) if v0 is None else np.array(v0, float)
    Q[0] = q / np.linalg.norm(q)
    k = 0
    th, S = None, None
    for j in range(k_max):
        w = matvec(Q[j])
        alpha[j] = Q[j] @ w
        for _ in range(2):
            w -= Q[: j + 1].T @ (Q[: j + 1] @ w)
        beta[j] = np.linalg.norm(w)
        k = j + 1
        breakdown = beta[j] <= 1e-14 * max(abs(alpha[: j + 1]).max(), 1.0)
        if breakdown or k == k_max or (k >= min_steps and k % 10 == 0):
            th, S = sla.eigh_tridiagonal(alpha[:k], beta[: k - 1])
            res = abs(beta[j] * S[-1, -1])
            if breakdown or res <= tol * max(abs(th[-1]), 1e-300):
                break
            if stop is not None and stop(th[-1], res):
                break
        Q[k] = w / beta[j]
    if th is None:  # pragma: no cover - loop always evaluates at k == k_max
        th, S = sla.eigh_tridiagonal(alpha[:k], beta[: k - 1])
    res = abs(beta[k - 1] * S[-1, -1])
    vec = Q[:k].T @ S[:, -1]
    return LanczosResult(float(th[0]), float(th[-1]), vec, float(res), k)


def lambda_max_AS(sys: LumpedSystem, tol: float = 1e-10) -> float:
    """Largest eigenvalue of ``A^S``.

    Dense under the cap, otherwise Lanczos. When the top of the spectrum is
    clustered the Lanczos residual stalls; ARPACK on the sparse symmetrized
    matrix ``D^{-1/2} K D^{-1/2}`` is the fallback.
    """
    op = StabilizedOperator(sys, make_stab_params(1, 0.0), 1.0)
    try:
        return extreme_eigs(op, tol=tol, which="max")[1]
    except EigenSolverError:
        pass
    s = 1.0 / sys.sqrt_D
    S = sys.K.multiply(s[:, None]).multiply(s[None, :]).tocsr()
    v0 = np.random.default_rng(0).standard_normal(sys.n_dofs)
    try:
        lam = spla.eigsh(S, k=1, which="LA", tol=tol, v0=v0, return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise EigenSolverError(f"ARPACK did not converge: {exc}") from exc
    return float(lam[0])


def fine_block_spectrum(sys: LumpedSystem, full: bool = True, cap: int = DENSE_CAP) -> np.ndarray:
    """Eigenvalues of the fine block ``D_f^-1 K_ff``, ascending.

    Tridiagonal blocks (1D meshes) are solved exactly at any size. For large
    non-tridiagonal blocks only the extreme pair is computed.
    """
    fi = sys.fine_idx
    if fi.size == 0:
        return np.empty(0)
    s = 1.0 / np.sqrt(sys.D[fi])
    S = sys.K_ff.multiply(s[:, None]).multiply(s[None, :]).tocsr()
    if fi.size <= cap:
        return sla.eigh(S.toarray(), eigvals_only=True)
    off = S.diagonal(1)
    if S.nnz == fi.size + 2 * off.size:
        d = S.diagonal()
        if full:
            return sla.eigvalsh_tridiagonal(d, off)
        n = fi.size
        hi = sla.eigvalsh_tridiagonal(d, off, select="i", select_range=(n - 1, n - 1))
        lo = sla.eigvalsh_tridiagonal(d, off, select="i", select_range=(0, 0))
        return np.concatenate([lo, hi])
    lo = spla.eigsh(S, k=1, which="SA", return_eigenvectors=False, tol=1e-10)
    hi = spla.eigsh(S, k=1, which="LA", return_eigenvectors=False, tol=1e-10)
    return np.concatenate([lo, hi])


def positivity_certificate(params: StabParams, dt: float, fine_eigs: np.ndarray) -> float:
    """``min_j P(dt^2 mu_j)`` over the fine-block eigenvalues ``mu_j``.

    The Schur complement of the fine block is the same for ``A^{S,p,nu}``
    and ``A^S``, so by Sylvester's law ``A^{S,p,nu}`` is positive definite
    exactly when this minimum is positive.
    """
    if fine_eigs.size == 0 or params.p == 1:
        return math.inf
    with np.errstate(over="ignore", invalid="ignore"):
        vals = np.asarray(eval_P(params, dt * dt * fine_eigs)) / (dt * dt * fine_eigs)
    # overflow happens only far below -1 in the Chebyshev argument, where
    # T_p has the sign (-1)^p
    vals = np.where(np.isnan(vals), -math.inf if params.p % 2 == 0 else math.inf, vals)
    return float(np.min(vals))


@dataclass(frozen=True)
class StabilityReport:
    """Maximal stable time-step and related spectral diagnostics."""

    p: int
    nu: float
    dt_opt: float
    dt_max: float
    ratio_pct: float
    min_margin: float
    critical_dts: np.ndarray = field(default_factory=lambda: np.empty(0))
    critical_vectors: list = field(default_factory=list)
    scan_dts: np.ndarray = field(default_factory=lambda: np.empty(0))
    scan_lmax: np.ndarray = field(default_factory=lambda: np.empty(0))
    scan_lmin_positive: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=bool))
    validated: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))


class _StabilityProbe:
    """Stability test for one ``(sys, params)`` at varying ``dt``."""

    def __init__(self, sys, params, tol, cap):
        self.sys, self.params, self.tol, self.cap = sys, params, tol, cap
        self.dense = sys.n_dofs <= cap
        self.fine_eigs = None if self.dense else fine_block_spectrum(sys, full=params.nu == 0.0)
        self._v0 = None
        self._rng = np.random.default_rng(0)
        self.validated = []

    def eigs(self, dt):
        """(lambda_min or certificate, lambda_max) of ``A^{S,p,nu}`` at ``dt``."""
        op = StabilizedOperator(self.sys, self.params, dt)
        if self.dense:
            lo, hi = extreme_eigs(op, cap=self.cap)
            self.validated.append((dt, lo, hi))
            return lo, hi
        cert = positivity_certificate(self.params, dt, self.fine_eigs)
        if not cert > 0.0:
            # lower endpoint already fails; skip the expensive upper one
            return cert, math.nan
        limit = 4.0 * (1.0 - STABLE_REL) / (dt * dt)
        # a Ritz value is a lower bound for lambda_max, so crossing decides
        res = lanczos_extremes(op.apply_sym, op.n, tol=self.tol, max_steps=LANCZOS_MAX_STEPS,
                               v0=self._v0, stop=lambda th, r: th > limit)
        converged = res.residual_max <= self.tol * abs(res.theta_max) or res.steps >= op.n
        decided = res.theta_max > limit or limit - res.theta_max > res.residual_max
        if not (converged or decided):
            raise EigenSolverError(
                f"Lanczos undecided at dt={dt!r}: residual {res.residual_max:.2e} "
                f"after {res.steps} steps")
        # warm start, mixed with noise so clustered modes stay reachable
        noise = self._rng.standard_normal(op.n)
        self._v0 = res.vec_max / np.linalg.norm(res.vec_max) + 0.3 * noise / np.linalg.norm(noise)
        self.validated.append((dt, cert, res.theta_max))
        return cert, res.theta_max

    def stable(self, dt):
        lo, hi = self.eigs(dt)
        if self.dense:
            return _is_stable(lo, hi, dt), lo, hi
        # lo is the sign certificate here, not an eigenvalue
        return lo > 0.0 and _is_stable(math.inf, hi, dt), lo, hi


def _is_stable(lo, hi, dt):
    dt2 = dt * dt
    return dt2 * hi <= 4.0 * (1.0 - STABLE_REL) and dt2 * lo >= 4.0 * STABLE_REL


def max_stable_dt(sys: LumpedSystem, p: int, nu: float, scan: int = 200, *,
                  dt_opt: float | None = None, reference_sys: LumpedSystem | None = None,
                  tol: float = 1e-10, cap: int = DENSE_CAP, rel_width: float = BISECT_REL_WIDTH,
                  progress=None) -> StabilityReport:
    """Largest ``dt`` with the spectrum of ``dt^2 A^{S,p,nu}`` inside ``(0, 4)``.

    Parameters
    ----------
    scan : int
        Number of equispaced time-steps in ``(0, dt_max]`` on which the
        margin ``1 - dt^2 lambda_max / 4`` is sampled. Stable steps visited
        by the bisection enter the minimum as well.
    dt_opt, reference_sys
        The leapfrog optimum ``2 / sqrt(lambda_max(A^S))`` is taken from
        ``reference_sys`` (typically the equidistant coarse mesh) when given,
        else from ``sys`` itself.
    rel_width : float
        Bisection stops once the bracket is this narrow relative to its
        upper end.

    Notes
    -----
    Above the dense cap the lower endpoint is certified through the fine-block
    eigenvalues (see :func:`positivity_certificate`) and the upper one by
    Lanczos; below the cap both come from a dense eigensolve. Lanczos Ritz
    values bound ``lambda_max`` from below, so inside a tight eigenvalue
    cluster the recorded margin can be slightly optimistic.

    The bisection assumes that stability is monotone in ``dt``. Without
    damping it is not: near critical time-steps short intervals below
    ``dt_max`` are unstable, and a scan step landing there makes
    ``min_margin`` negative.
    """
    params = make_stab_params(p, nu)
    if dt_opt is None:
        dt_opt = 2.0 / math.sqrt(lambda_max_AS(reference_sys or sys))
    probe = _StabilityProbe(sys, params, tol, cap)
    hi_dt = 1.5 * dt_opt
    lo_dt = None
    # grow the bracket until its upper end is unstable
    for _ in range(60):
        if not probe.stable(hi_dt)[0]:
            break
        lo_dt, hi_dt = hi_dt, 2.0 * hi_dt
    else:
        raise EigenSolverError("no unstable time-step found")
    if lo_dt is None:
        lo_dt = _stable_start(probe, hi_dt)
    while hi_dt - lo_dt > rel_width * hi_dt:
        mid = 0.5 * (lo_dt + hi_dt)
        if probe.stable(mid)[0]:
            lo_dt = mid
        else:
            hi_dt = mid
        if progress:
            progress(mid)
    dt_max = lo_dt
    dts = np.linspace(dt_max / scan, dt_max, scan)
    lmax = np.empty(scan)
    lpos = np.empty(scan, dtype=bool)
    probe._v0 = None
    for i, dt in enumerate(dts):
        lo, hi = probe.eigs(dt)
        lmax[i] = hi
        lpos[i] = lo > 0.0
        if progress:
            progress(dt)
    # every stable time-step met during bisection or scan, up to dt_max
    val = np.array(probe.validated, dtype=float).reshape(-1, 3)
    val = val[(val[:, 0] <= dt_max) & (val[:, 1] > 0.0)]
    val = val[np.argsort(val[:, 0], kind="stable")]
    margin = float(np.min(1.0 - val[:, 0] ** 2 * val[:, 2] / 4.0))
    return StabilityReport(p=p, nu=nu, dt_opt=dt_opt, dt_max=dt_max,
                           ratio_pct=100.0 * dt_max / dt_opt, min_margin=margin,
                           scan_dts=dts, scan_lmax=lmax, scan_lmin_positive=lpos,
                           validated=val)


def _stable_start(probe, hi_dt):
    """A stable lower bracket end; halves ``hi_dt`` until stable."""
    dt = hi_dt
    for _ in range(60):
        dt *= 0.5
        if probe.stable(dt)[0]:
            return dt
    raise EigenSolverError("no stable time-step found")


@dataclass(frozen=True)
class CriticalPoint:
    """A time-step where an eigenvalue curve reaches 0 or 1.

    ``dt`` is the refined extremum of the distance to the threshold and
    ``value`` that (signed) distance. A negative value means the curve
    crosses the threshold on a short interval; ``dt_root`` is then the
    first crossing, where the eigenvalue equals the threshold exactly.
    For a tangency ``dt_root == dt``.
    """

    dt: float
    dt_root: float
    kind: str             # "zero" or "one"
    value: float
    vector: np.ndarray    # eigenvector at dt_root, sup-norm 1


def _normalized_extremes(sys, params, dt, cap):
    op = StabilizedOperator(sys, params, dt)
    lam = dense_spectrum(op, cap) * (dt * dt / 4.0)
    return lam[0], lam[-1]


def critical_dt_scan(sys: LumpedSystem, p: int, grid, nu: float = 0.0,
                     eps: float = TANGENCY_EPS, cap: int = DENSE_CAP) -> list[CriticalPoint]:
    """Time-steps at which an eigenvalue curve of ``(dt^2/4) A^{S,p,nu}`` reaches 0 or 1.

    The signed distances ``lambda_min`` and ``1 - lambda_max`` are sampled
    on ``grid``; every interior local minimum is refined by bounded scalar
    minimization and kept if the refined distance is at most ``eps``.
    Returned points are sorted by ``dt``.
    """
    params = make_stab_params(p, nu)
    grid = np.asarray(grid, dtype=float)
    ext = np.array([_normalized_extremes(sys, params, dt, cap) for dt in grid])
    found = []
    for kind, col in (("zero", 0), ("one", 1)):

        def dist(dt, col=col):
            e = _normalized_extremes(sys, params, dt, cap)[col]
            return e if col == 0 else 1.0 - e

        f = ext[:, 0] if col == 0 else 1.0 - ext[:, 1]
        for i in range(1, len(grid) - 1):
            if not (f[i] <= f[i - 1] and f[i] <= f[i + 1]):
                continue
            a, b = grid[i - 1], grid[i + 1]
            res = minimize_scalar(dist, bounds=(a, b), method="bounded",
                                  options={"xatol": 1e-15 * grid[i]})
            if res.fun > eps:
                continue
            root = float(res.x)
            if res.fun < 0.0:
                # walk left until the curve is back below the threshold
                j = i - 1
                while j > 0 and f[j] <= 0.0:
                    j -= 1
                a = grid[j]
                if dist(a) > 0.0:
                    root = brentq(dist, a, res.x, xtol=1e-16 * a, rtol=4 * np.finfo(float).eps)
            found.append((float(res.x), root, kind, float(res.fun)))
    found.sort()
    out = []
    for dt, root, kind, val in found:
        if out and abs(dt - out[-1].dt) <= 1e-9 * dt:
            continue
        vec = _critical_vector(sys, params, root, kind, cap)
        out.append(CriticalPoint(dt, root, kind, val, vec))
    return out


def _critical_vector(sys, params, dt, kind, cap):
    lam, V = dense_spectrum(StabilizedOperator(sys, params, dt), cap, vectors=True)
    v = V[:, 0] if kind == "zero" else V[:, -1]
    v = v / np.max(np.abs(v))
    j = np.argmax(np.abs(v))
    return v * np.sign(v[j])


def block_identity_check(sys: LumpedSystem, params: StabParams, dt: float,
                         cap: int = DENSE_CAP) -> tuple[float, float]:
    """Deviation of ``inv(A^{S,p,nu}) - inv(A^S)`` outside its fine-fine block.

    Returns ``(max_abs_offblock, ff_T_norm)``; the second value is the
    lumped-norm of the fine-fine block of the difference.
    """
    n = sys.n_dofs
    if n > cap:
        raise DenseCapExceeded(f"{n} dofs exceed the dense cap {cap}")
    A = dense_stabilized(StabilizedOperator(sys, params, dt), cap)
    A0 = apply_AS(sys, np.eye(n))
    try:
        diff = np.linalg.inv(A) - np.linalg.inv(A0)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("stabilized operator is singular") from exc
    fm = sys.fine_mask
    off = ~np.outer(fm, fm)
    dev = float(np.max(np.abs(diff[off]))) if off.any() else 0.0
    fi = sys.fine_idx
    if fi.size == 0:
        return dev, 0.0
    s = np.sqrt(sys.D[fi])
    B = s[:, None] * diff[np.ix_(fi, fi)] / s[None, :]
    return dev, float(np.linalg.norm(B, 2))


def spectrum_sweep(sys: LumpedSystem, p: int, nu: float, dt_grid, h_c: float,
                   path=None, cap: int = DENSE_CAP) -> np.ndarray:
    """All eigenvalues of ``(dt^2/4) A^{S,p,nu}`` per grid point.

    Returns an array of shape ``(len(dt_grid), n_dofs)``; with ``path`` the
    rows ``dt_over_hc,eig_index,value`` are also written as CSV.
    """
    params = make_stab_params(p, nu)
    dt_grid = np.asarray(dt_grid, dtype=float)
    out = np.empty((dt_grid.size, sys.n_dofs))
    for i, dt in enumerate(dt_grid):
        out[i] = dense_spectrum(StabilizedOperator(sys, params, dt), cap) * dt * dt / 4.0
    if path is not None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["dt_over_hc", "eig_index", "value"])
            for i, dt in enumerate(dt_grid):
                for j, v in enumerate(out[i]):
                    w.writerow([repr(dt / h_c), j, repr(float(v))])
    return out


@dataclass(frozen=True)
class CflDiagnostic:
    """Sufficient time-step bounds of the analysis (never used to pick ``dt``)."""

    dt_full: float        # bound from the nu-dependent condition
    dt_weak: float        # bound from the weaker condition
    mode: str             # "constants" or "spectral-surrogate"
    weak_implied: bool    # nu / (nu + 1) <= 4 e^-nu


def theoretical_cfl(sys: LumpedSystem, p: int, nu: float, h_c: float, *, c_cont=None,
                    c_coer=None, c_inv=None) -> CflDiagnostic:
    """Evaluate the analytic CFL conditions.

    The full condition reads
    ``(3 + C_cont / c_coer) C_cont C_inv^2 (dt / h_c)^2 <= nu / (nu + 1)`` and
    the weaker one ``C_cont C_inv^2 (dt / h_c)^2 <= (1 + delta) omega / p^2``.
    Without user constants, ``C_cont C_inv^2`` is replaced by
    ``lambda_max(A^S) h_c^2 / p^2`` and ``C_cont / c_coer`` by 1.
    """
    params = make_stab_params(p, nu)
    if None not in (c_cont, c_coer, c_inv):
        mode = "constants"
        cc = c_cont * c_inv**2
        ratio = c_cont / c_coer
    else:
        mode = "spectral-surrogate"
        cc = lambda_max_AS(sys) * h_c**2 / p**2
        ratio = 1.0
    dt_full = h_c * math.sqrt(nu / (nu + 1.0) / ((3.0 + ratio) * cc))
    dt_weak = h_c * math.sqrt((1.0 + params.delta) * params.omega / p**2 / cc)
    return CflDiagnostic(dt_full, dt_weak, mode, weak_cfl_implied(nu))


def weak_cfl_implied(nu: float) -> bool:
    """Scalar inequality ``nu / (nu + 1) <= 4 e^-nu``."""
    return nu / (nu + 1.0) <= 4.0 * math.exp(-nu)
