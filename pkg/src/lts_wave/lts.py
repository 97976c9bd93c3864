"""Stabilized leapfrog local time-stepping integrator.

Per global step of size ``dt``, the coarse contribution ``w = A Pi_c u`` is
formed once and the fine region is advanced by ``p`` damped Chebyshev
sub-steps. Rows of ``K`` that do not touch a fine dof reduce to a plain
leapfrog update and are handled without the sub-step loop.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from lts_wave import _kernels
from lts_wave.cheb import StabParams
from lts_wave.fem import LumpedSystem, apply_AS, t_inner
from lts_wave.spectral import StabilizedOperator

ENERGY_EVERY_STEP_LIMIT = 10_000


@dataclass
class WaveState:
    """Two-level state ``(u^{n-1}, u^n)`` after ``step`` completed global steps."""

    u_prev: np.ndarray
    u_cur: np.ndarray
    step: int
    dt: float

    @property
    def t(self) -> float:
        return self.step * self.dt


@dataclass(frozen=True)
class EnergySample:
    step: int
    value: float
    kinetic: float
    potential_cross: float


def _vec(sys: LumpedSystem, v, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (sys.n_dofs,):
        raise ValueError(f"{name} has shape {v.shape}, expected ({sys.n_dofs},)")
    return v


def initial_state(sys: LumpedSystem, u0, v0, dt: float, params: StabParams | None = None,
                  stabilized_start: bool = False) -> WaveState:
    """Starting step ``u^1 = u0 + dt v0 - dt^2/2 A u0``.

    With ``stabilized_start`` the operator ``A^{S,p,nu}`` replaces ``A``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    u0 = _vec(sys, u0, "u0")
    v0 = _vec(sys, v0, "v0")
    if stabilized_start:
        if params is None:
            raise ValueError("stabilized start needs params")
        Au = StabilizedOperator(sys, params, dt).apply(u0)
    else:
        Au = apply_AS(sys, u0)
    return WaveState(u0.copy(), u0 + dt * v0 - 0.5 * dt * dt * Au, 1, float(dt))


class LTSStepper:
    """Reusable stepper with preallocated work vectors.

    ``n_coarse_applies`` and ``n_fine_applies`` count evaluations of
    ``A Pi_c`` and ``A Pi_f`` (one and ``p`` per step).
    """

    def __init__(self, sys: LumpedSystem, params: StabParams, dt: float,
                 use_numba: bool | None = None):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.sys, self.params, self.dt = sys, params, float(dt)
        self.use_numba = _kernels.numba_enabled() if use_numba is None else use_numba
        self.n_coarse_applies = 0
        self.n_fine_applies = 0
        p = params.p
        self._c1 = dt * dt / (params.omega * params.delta)
        self._c2 = 2.0 * dt * dt / params.omega
        self._dt2 = dt * dt
        self._K_c = sys.K[:, sys.coarse_idx].tocsr()
        self._dinv = 1.0 / sys.D
        act = sys.active_rows if p > 1 else np.empty(0, dtype=np.int64)
        self._act = act
        self._Kaf = sys.K_active_fine if act.size else None
        self._fine_pos = sys.fine_pos_in_active if act.size else None
        self._dinv_act = self._dinv[act]
        m, nf = act.size, sys.fine_idx.size
        self._bufs = [np.empty(m) for _ in range(3)] + [np.empty(nf), np.empty(m)]
        self._w = np.empty(sys.n_dofs)

    def step(self, u_prev: np.ndarray, u_cur: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """Return ``u^{n+1}`` (written to ``out`` if given)."""
        sys, par = self.sys, self.params
        w = self._w
        np.multiply(self._K_c @ u_cur[sys.coarse_idx], self._dinv, out=w)
        self.n_coarse_applies += 1
        if out is None:
            out = np.empty_like(u_cur)
        # rows without fine coupling: plain leapfrog
        np.subtract(2.0 * u_cur - self._dt2 * w, u_prev, out=out)
        if par.p == 1:
            if sys.fine_idx.size:
                out -= self._dt2 * apply_AS(sys, np.where(sys.fine_mask, u_cur, 0.0))
                self.n_fine_applies += 1
            return out
        act = self._act
        if act.size == 0:
            return out
        wa = w[act]
        ua = u_cur[act]
        Kaf = self._Kaf
        if self.use_numba:
            z_prev, z_cur, z_next, zf, m = self._bufs
            zp = _kernels.lts_substeps_jit(Kaf.indptr, Kaf.indices, Kaf.data, self._dinv_act,
                                           self._fine_pos, wa, ua, par.p, self._c1, self._c2,
                                           par.beta, par.beta_half, z_prev, z_cur, z_next, zf, m)
        else:
            zp = _kernels.lts_substeps_numpy(Kaf, self._dinv_act, self._fine_pos, wa, ua,
                                             par.p, self._c1, self._c2, par.beta,
                                             par.beta_half)
        self.n_fine_applies += par.p
        out[act] = 2.0 * zp - u_prev[act]
        return out

    def advance(self, state: WaveState) -> WaveState:
        u_next = self.step(state.u_prev, state.u_cur)
        return WaveState(state.u_cur, u_next, state.step + 1, state.dt)


def lts_step(sys: LumpedSystem, params: StabParams, state: WaveState) -> WaveState:
    """One global step of the stabilized scheme."""
    _vec(sys, state.u_cur, "u_cur")
    _vec(sys, state.u_prev, "u_prev")
    return LTSStepper(sys, params, state.dt).advance(state)


def discrete_energy(sys: LumpedSystem, params: StabParams, u_cur, u_next, dt: float,
                    step: int = 0, op: StabilizedOperator | None = None) -> EnergySample:
    """``1/2 [ |(u_next - u_cur)/dt|_T^2 + (A^{S,p,nu} u_next, u_cur)_T ]``."""
    u_cur = _vec(sys, u_cur, "u_cur")
    u_next = _vec(sys, u_next, "u_next")
    if op is None:
        op = StabilizedOperator(sys, params, dt)
    v = (u_next - u_cur) / dt
    kin = 0.5 * t_inner(sys, v, v)
    pot = 0.5 * t_inner(sys, op.apply(u_next), u_cur)
    return EnergySample(step, kin + pot, kin, pot)


def energy_stride(n_steps: int) -> int:
    return 1 if n_steps <= ENERGY_EVERY_STEP_LIMIT else 10


class Observer:
    """Base class; ``__call__(step, t, state)`` is invoked on each selected step."""

    stride = 1

    def __call__(self, step: int, t: float, state: WaveState) -> None:  # pragma: no cover
        raise NotImplementedError

    def close(self) -> None:
        pass


@dataclass
class EnergyObserver(Observer):
    """Records ``E^{n+1/2}`` of consecutive iterates."""

    sys: LumpedSystem
    params: StabParams
    dt: float
    stride: int = 1
    samples: list = field(default_factory=list)
    times: list = field(default_factory=list)

    def __post_init__(self):
        self._op = StabilizedOperator(self.sys, self.params, self.dt)

    def __call__(self, step, t, state):
        # state holds (u^{n}, u^{n+1}) with n = step - 1
        e = discrete_energy(self.sys, self.params, state.u_prev, state.u_cur, self.dt,
                            step=step - 1, op=self._op)
        self.samples.append(e)
        self.times.append((step - 0.5) * self.dt)


@dataclass
class NormObserver(Observer):
    """Records ``max |u|`` over the free dofs."""

    stride: int = 1
    times: list = field(default_factory=list)
    values: list = field(default_factory=list)

    def __call__(self, step, t, state):
        self.times.append(t)
        self.values.append(float(np.max(np.abs(state.u_cur))))


class SnapshotObserver(Observer):
    """Writes rows ``t,node_x[,node_y],u`` at every selected step."""

    def __init__(self, sys: LumpedSystem, path, stride: int = 1):
        self.stride = stride
        self._coords = sys.mesh.vertices[sys.partition.free_nodes]
        self._fh = open(Path(path), "w", newline="")
        self._w = csv.writer(self._fh)
        cols = ["node_x"] if self._coords.shape[1] == 1 else ["node_x", "node_y"]
        self._w.writerow(["t", *cols, "u"])

    def __call__(self, step, t, state):
        for xy, u in zip(self._coords, state.u_cur):
            self._w.writerow([repr(t), *map(repr, xy.tolist()), repr(float(u))])

    def close(self):
        self._fh.close()


def run(sys: LumpedSystem, params: StabParams, u0, v0, dt: float, T: float,
        observers: list[Observer] | tuple = (), stabilized_start: bool = False,
        use_numba: bool | None = None, callback: Callable | None = None) -> WaveState:
    """Integrate to ``N dt`` with ``N = round(T / dt)``.

    Observers see the state after the starting step and after every later
    step whose index is a multiple of their ``stride``.
    """
    if T < dt * (1.0 - 1e-12):
        raise ValueError("T must be at least dt")
    n_steps = int(round(T / dt))
    state = initial_state(sys, u0, v0, dt, params, stabilized_start)
    stepper = LTSStepper(sys, params, dt, use_numba=use_numba)
    for obs in observers:
        obs(1, state.t, state)
    u_prev, u_cur = state.u_prev.copy(), state.u_cur.copy()
    spare = np.empty_like(u_cur)
    try:
        for n in range(2, n_steps + 1):
            stepper.step(u_prev, u_cur, out=spare)
            u_prev, u_cur, spare = u_cur, spare, u_prev
            for obs in observers:
                if n % obs.stride == 0 or n == n_steps:
                    obs(n, n * dt, WaveState(u_prev, u_cur, n, dt))
            if callback is not None:
                callback(n)
    finally:
        for obs in observers:
            obs.close()
    out = WaveState(u_prev.copy(), u_cur.copy(), n_steps, float(dt))
    out.stepper = stepper
    return out
