import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lts_wave import (
    WaveState,
    apply_AS,
    assemble,
    build_interval_mesh,
    discrete_energy,
    initial_state,
    lts_step,
    make_stab_params,
    run,
)
from lts_wave import _kernels
from lts_wave.lts import EnergyObserver, LTSStepper, NormObserver, SnapshotObserver, energy_stride

from helpers import NU_GRID, dense_oracle, random_system, top_eig_AS


def _random_case(seed):
    rng = np.random.default_rng(seed)
    sys = random_system(rng)
    p = int(rng.integers(1, 7))
    nu = float(rng.choice(NU_GRID))
    dt = float(rng.uniform(0.1, 1.0)) * 2.0 / np.sqrt(top_eig_AS(sys))
    u_prev, u_cur = rng.standard_normal((2, sys.n_dofs))
    return sys, p, nu, dt, u_prev, u_cur


@given(seed=st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_step_matches_dense_two_step_formula(seed):
    sys, p, nu, dt, u_prev, u_cur = _random_case(seed)
    state = lts_step(sys, make_stab_params(p, nu), WaveState(u_prev, u_cur, 1, dt))
    ref = 2 * u_cur - u_prev - dt * dt * dense_oracle(sys, p, nu, dt) @ u_cur
    assert np.linalg.norm(state.u_cur - ref) <= 1e-11 * np.linalg.norm(ref)
    assert state.step == 2
    np.testing.assert_array_equal(state.u_prev, u_cur)


@pytest.mark.parametrize("seed", range(8))
def test_numba_and_numpy_paths_agree(seed):
    sys, p, nu, dt, u_prev, u_cur = _random_case(seed)
    p = max(p, 2)
    par = make_stab_params(p, nu)
    a = LTSStepper(sys, par, dt, use_numba=True).step(u_prev, u_cur)
    b = LTSStepper(sys, par, dt, use_numba=False).step(u_prev, u_cur)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13 * np.abs(b).max())


def test_p1_is_plain_leapfrog():
    rng = np.random.default_rng(1)
    sys = random_system(rng)
    dt = 0.5 / np.sqrt(top_eig_AS(sys))
    u_prev, u_cur = rng.standard_normal((2, sys.n_dofs))
    out = LTSStepper(sys, make_stab_params(1, 0.2), dt).step(u_prev, u_cur)
    np.testing.assert_allclose(out, 2 * u_cur - u_prev - dt * dt * apply_AS(sys, u_cur), rtol=1e-13)


def test_no_fine_region_is_plain_leapfrog():
    sys = assemble(build_interval_mesh(0.1, 0.0, 0.0, 1))
    rng = np.random.default_rng(2)
    u_prev, u_cur = rng.standard_normal((2, sys.n_dofs))
    dt = 0.05
    out = LTSStepper(sys, make_stab_params(4, 0.01), dt).step(u_prev, u_cur)
    np.testing.assert_allclose(out, 2 * u_cur - u_prev - dt * dt * apply_AS(sys, u_cur), rtol=1e-13)


def test_apply_counts():
    sys = assemble(build_interval_mesh(0.1, 0.5, 1.0, 3))
    st_ = LTSStepper(sys, make_stab_params(3, 0.01), 0.05)
    u = np.ones(sys.n_dofs)
    for _ in range(4):
        st_.step(u, u)
    assert st_.n_coarse_applies == 4
    assert st_.n_fine_applies == 12


def test_initial_state_taylor_step():
    rng = np.random.default_rng(4)
    sys = random_system(rng)
    u0, v0 = rng.standard_normal((2, sys.n_dofs))
    dt = 0.01
    s = initial_state(sys, u0, v0, dt)
    np.testing.assert_allclose(s.u_cur, u0 + dt * v0 - 0.5 * dt * dt * apply_AS(sys, u0))
    assert s.step == 1 and s.t == pytest.approx(dt)
    par = make_stab_params(3, 0.05)
    s2 = initial_state(sys, u0, v0, dt, par, stabilized_start=True)
    A = dense_oracle(sys, 3, 0.05, dt)
    np.testing.assert_allclose(s2.u_cur, u0 + dt * v0 - 0.5 * dt * dt * A @ u0, rtol=1e-10)


def test_initial_state_rejects():
    sys = assemble(build_interval_mesh(0.1, 0.5, 1.0, 2))
    z = np.zeros(sys.n_dofs)
    with pytest.raises(ValueError):
        initial_state(sys, z, z, 0.0)
    with pytest.raises(ValueError):
        initial_state(sys, z[:-1], z, 0.1)
    with pytest.raises(ValueError):
        initial_state(sys, z, z, 0.1, stabilized_start=True)


@pytest.mark.parametrize("nu", [0.0, 0.01, 0.3])
def test_energy_conserved_on_random_system(nu):
    rng = np.random.default_rng(11)
    sys = random_system(rng)
    p = 4
    dt = 0.8 * 2 / np.sqrt(top_eig_AS(sys))
    # stay below the spectral limit of the stabilized operator
    lam = np.linalg.eigvals(dense_oracle(sys, p, nu, dt)).real.max()
    dt = min(dt, 0.95 * 2 / np.sqrt(lam))
    par = make_stab_params(p, nu)
    u0 = rng.standard_normal(sys.n_dofs)
    obs = EnergyObserver(sys, par, dt)
    run(sys, par, u0, np.zeros_like(u0), dt, 2000 * dt, observers=[obs])
    E = np.array([s.value for s in obs.samples])
    assert E[0] > 0
    assert np.max(np.abs(E / E[0] - 1)) < 1e-11
    assert len(E) == 2000


def test_energy_formula():
    rng = np.random.default_rng(5)
    sys = random_system(rng)
    par = make_stab_params(3, 0.1)
    dt = 0.3 / np.sqrt(top_eig_AS(sys))
    u, w = rng.standard_normal((2, sys.n_dofs))
    e = discrete_energy(sys, par, u, w, dt)
    A = dense_oracle(sys, 3, 0.1, dt)
    v = (w - u) / dt
    ref = 0.5 * (sys.D @ (v * v) + (A @ w) @ (sys.D * u))
    assert e.value == pytest.approx(ref, rel=1e-10)
    assert e.value == pytest.approx(e.kinetic + e.potential_cross)


def test_run_step_count_and_observers(tmp_path):
    sys = assemble(build_interval_mesh(0.1, 0.5, 1.0, 2))
    par = make_stab_params(2, 0.01)
    u0 = np.sin(np.pi * sys.mesh.vertices[sys.partition.free_nodes, 0])
    norms = NormObserver(stride=3)
    snap = SnapshotObserver(sys, tmp_path / "snap.csv", stride=5)
    seen = []
    st_ = run(sys, par, u0, np.zeros_like(u0), 0.05, 1.0, observers=[norms, snap],
              callback=seen.append)
    assert st_.step == 20
    assert st_.t == pytest.approx(1.0)
    assert norms.times[0] == pytest.approx(0.05)
    assert norms.times[-1] == pytest.approx(1.0)
    assert seen == list(range(2, 21))
    lines = (tmp_path / "snap.csv").read_text().splitlines()
    assert lines[0] == "t,node_x,u"
    # starting step, steps 5, 10, 15, 20
    assert len(lines) == 1 + 5 * sys.n_dofs
    assert st_.stepper.n_coarse_applies == 19


def test_run_matches_repeated_lts_step():
    rng = np.random.default_rng(8)
    sys = random_system(rng)
    par = make_stab_params(3, 0.05)
    dt = 0.4 / np.sqrt(top_eig_AS(sys))
    u0, v0 = rng.standard_normal((2, sys.n_dofs))
    out = run(sys, par, u0, v0, dt, 10 * dt)
    s = initial_state(sys, u0, v0, dt)
    for _ in range(9):
        s = lts_step(sys, par, s)
    np.testing.assert_allclose(out.u_cur, s.u_cur, rtol=1e-12, atol=1e-12)


def test_run_rejects_short_horizon():
    sys = assemble(build_interval_mesh(0.1, 0.5, 1.0, 2))
    z = np.zeros(sys.n_dofs)
    with pytest.raises(ValueError):
        run(sys, make_stab_params(2, 0.0), z, z, 0.1, 0.05)


def test_env_var_selects_numpy(monkeypatch):
    monkeypatch.setenv("LTS_WAVE_NUMBA", "0")
    assert not _kernels.numba_enabled()
    sys = assemble(build_interval_mesh(0.1, 0.5, 1.0, 2))
    assert not LTSStepper(sys, make_stab_params(2, 0.0), 0.05).use_numba
    monkeypatch.setenv("LTS_WAVE_NUMBA", "1")
    assert _kernels.numba_enabled()


def test_energy_stride_rule():
    assert energy_stride(10_000) == 1
    assert energy_stride(10_001) == 10
