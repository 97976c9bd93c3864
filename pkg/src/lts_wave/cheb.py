"""Damped Chebyshev polynomials driving the local time-stepping recursion.

The stabilized polynomial of degree ``p`` is

    P(y) = 2 * (1 - T_p(delta - y / omega) / T_p(delta)),
    delta = 1 + nu / p**2,  omega = 2 T_p'(delta) / T_p(delta),

and its reduced form ``P(dt**2 x) / (dt**2 x)`` is what the integrator
applies to the fine-region operator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NU_MAX = 0.5
# below this |dt^2 x| the reduced polynomial returns its analytic limit
_REDUCED_ZERO = 1e-300
BOUND_SLACK = 1e-10


def cheb_eval(p: int, x):
    """Chebyshev polynomial of the first kind ``T_p(x)``.

    Uses the three-term recurrence so that values for ``|x| > 1`` and at
    integer-friendly points are exact where the arithmetic allows.
    Accepts scalars or arrays.
    """
    if p < 0:
        raise ValueError("degree must be non-negative")
    x = np.asarray(x, dtype=float)
    t_prev = np.ones_like(x)
    if p == 0:
        return _scalar_or_array(t_prev)
    t = x.copy()
    for _ in range(1, p):
        t_prev, t = t, 2.0 * x * t - t_prev
    return _scalar_or_array(t)


def cheb_deriv(p: int, x, m: int = 1):
    """m-th derivative of ``T_p`` at ``x``.

    Differentiating the recurrence m times gives
    ``T_{k+1}^(j) = 2 x T_k^(j) + 2 j T_k^(j-1) - T_{k-1}^(j)``,
    which is run for all orders ``j <= m`` simultaneously.
    """
    if p < 0 or m < 0:
        raise ValueError("degree and derivative order must be non-negative")
    x = np.asarray(x, dtype=float)
    if m == 0:
        return cheb_eval(p, x)
    if m > p:
        return _scalar_or_array(np.zeros_like(x))
    shape = (m + 1,) + x.shape
    prev = np.zeros(shape)          # T_0 and its derivatives
    prev[0] = 1.0
    cur = np.zeros(shape)           # T_1
    cur[0] = x
    if m >= 1:
        cur[1] = 1.0
    orders = np.arange(m + 1, dtype=float).reshape((m + 1,) + (1,) * x.ndim)
    for _ in range(1, p):
        nxt = 2.0 * x * cur - prev
        nxt[1:] += 2.0 * orders[1:] * cur[:-1]
        prev, cur = cur, nxt
    return _scalar_or_array(cur[m])


def _scalar_or_array(a):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a


@dataclass(frozen=True)
class StabParams:
    """Coefficient bundle of the damped Chebyshev polynomial for one ``(p, nu)``.

    ``beta[k-1]`` holds beta_k = T_{k-1}(delta)/T_{k+1}(delta) and
    ``beta_half[k-1]`` holds beta_{k+1/2} = T_k(delta)/T_{k+1}(delta)
    for k = 1..p-1.
    """

    p: int
    nu: float
    delta: float
    omega: float
    beta: np.ndarray
    beta_half: np.ndarray
    t_delta: float  # T_p(delta), kept for the bound checks

    def __post_init__(self):
        self.beta.setflags(write=False)
        self.beta_half.setflags(write=False)


def make_stab_params(p: int, nu: float) -> StabParams:
    """Build the stabilization coefficients for step ratio ``p`` and damping ``nu``."""
    if int(p) != p or p < 1:
        raise ValueError(f"p must be a positive integer, got {p!r}")
    if not 0.0 <= nu <= NU_MAX:
        raise ValueError(f"nu must lie in [0, {NU_MAX}], got {nu!r}")
    p = int(p)
    nu = float(nu)
    delta = 1.0 + nu / p**2
    # T_0..T_p at delta
    t = np.empty(p + 1)
    t[0] = 1.0
    t[1] = delta
    for k in range(1, p):
        t[k + 1] = 2.0 * delta * t[k] - t[k - 1]
    omega = 2.0 * cheb_deriv(p, delta, 1) / t[p]
    k = np.arange(1, p)
    beta = t[k - 1] / t[k + 1]
    beta_half = t[k] / t[k + 1]
    return StabParams(p, nu, delta, float(omega), beta, beta_half, float(t[p]))


def eval_P(params: StabParams, y):
    """Damped Chebyshev polynomial ``P_{p,nu}(y)`` by its closed form."""
    y = np.asarray(y, dtype=float)
    arg = params.delta - y / params.omega
    return _scalar_or_array(2.0 * (1.0 - cheb_eval(params.p, arg) / params.t_delta))


def eval_P_reduced(params: StabParams, dt: float, x):
    """Reduced polynomial ``P(dt^2 x) / (dt^2 x)`` with limit 1 at ``x = 0``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    y = dt * dt * np.asarray(x, dtype=float)
    small = np.abs(y) < _REDUCED_ZERO
    safe = np.where(small, 1.0, y)
    out = np.where(small, 1.0, np.asarray(eval_P(params, safe)) / safe)
    return _scalar_or_array(out)


def reduced_stage_values(params: StabParams, dt: float, x, k_max: int | None = None):
    """Stage polynomials ``P_{p,nu,k}^dt(x)`` for k = 0..k_max (default p).

    Returns an array of shape ``(k_max + 1,) + shape(x)``.
    """
    p = params.p
    k_max = p if k_max is None else k_max
    x = np.asarray(x, dtype=float)
    out = np.zeros((k_max + 1,) + x.shape)
    if k_max == 0:
        return out
    d, om = params.delta, params.omega
    out[1] = 2.0 / (om * d)
    shift = d - dt * dt * x / om
    for k in range(1, k_max):
        bk = params.beta[k - 1]
        bh = params.beta_half[k - 1]
        out[k + 1] = 2.0 * bh * shift * out[k] - bk * out[k - 1] + 4.0 / om * bh
    return out


def eval_P_recursive(params: StabParams, dt: float, x):
    """Reduced polynomial evaluated by the three-term stage recursion."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return _scalar_or_array(reduced_stage_values(params, dt, x)[params.p])


@dataclass(frozen=True)
class PolyBoundsReport:
    """Sampled extremes of the damped polynomial against their analytic bounds."""

    sup_abs_P: float
    sup_P_over_x: float
    inf_P_over_x: float
    sup_diff_quot: float
    grid_size: int
    all_pass: bool
    failures: tuple = ()


def verify_bounds(params: StabParams, dt: float = 1.0, grid_size: int = 10_000) -> PolyBoundsReport:
    """Sample the polynomial bounds on uniform grids and report violations.

    Checked, each with absolute slack ``BOUND_SLACK``:

    * ``|P(x)/x| <= 1`` on ``(0, 2 delta omega]``
    * ``P(x)/x >= 2 nu / ((2 + nu)^2 omega)`` on ``(0, (1 + delta) omega]``
    * ``|P| <= 4 - 2 nu / (1 + nu)`` on ``[0, (1 + delta) omega]``
    * ``|(1 - P^dt(x)) / (x P^dt(x))| <= dt^2 (nu + 1) / (2 nu)`` for
      ``dt^2 x`` in ``(0, (1 + delta) omega)``, only when ``nu > 0``
    * ``2 p^2 e^-nu <= omega <= 2 p^2`` and ``T_p(delta) >= 1 + nu``

    The diff-quotient supremum is reported in the ``dt``-scaled form.
    """
    if grid_size < 100:
        raise ValueError("grid_size must be at least 100")
    p, nu, d, om = params.p, params.nu, params.delta, params.omega
    failures = []

    x = np.linspace(0.0, 2.0 * d * om, grid_size + 1)[1:]
    ratio = np.asarray(eval_P(params, x)) / x
    sup_ratio = float(np.max(np.abs(ratio)))
    if sup_ratio > 1.0 + BOUND_SLACK:
        failures.append("sup|P/x|")

    x = np.linspace(0.0, (1.0 + d) * om, grid_size + 1)
    vals = np.asarray(eval_P(params, x))
    sup_abs = float(np.max(np.abs(vals)))
    if sup_abs > 4.0 - 2.0 * nu / (1.0 + nu) + BOUND_SLACK:
        failures.append("sup|P|")
    ratio = vals[1:] / x[1:]
    inf_ratio = float(min(1.0, np.min(ratio)))  # P'(0) = 1 at the left end
    if inf_ratio < 2.0 * nu / ((2.0 + nu) ** 2 * om) - BOUND_SLACK:
        failures.append("inf P/x")

    if nu > 0.0:
        y = np.linspace(0.0, (1.0 + d) * om, grid_size + 2)[1:-1]
        py = np.asarray(eval_P(params, y))
        quot = np.abs((1.0 - py / y) / py)
        sup_quot = float(np.max(quot)) * dt * dt
        if sup_quot > dt * dt * (nu + 1.0) / (2.0 * nu) + BOUND_SLACK:
            failures.append("diff quotient")
    else:
        sup_quot = float("nan")

    two_p2 = 2.0 * p * p
    if not two_p2 * np.exp(-nu) - BOUND_SLACK <= om <= two_p2 + BOUND_SLACK:
        failures.append("omega bounds")
    if params.t_delta < 1.0 + nu - BOUND_SLACK:
        failures.append("T_p(delta) lower bound")

    return PolyBoundsReport(
        sup_abs_P=sup_abs,
        sup_P_over_x=sup_ratio,
        inf_P_over_x=inf_ratio,
        sup_diff_quot=sup_quot,
        grid_size=grid_size,
        all_pass=not failures,
        failures=tuple(failures),
    )
