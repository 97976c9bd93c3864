import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lts_wave import (
    StabilizedOperator,
    assemble,
    block_identity_check,
    build_interval_mesh,
    critical_dt_scan,
    dense_stabilized,
    extreme_eigs,
    make_stab_params,
    max_stable_dt,
    spectrum_sweep,
)
from lts_wave.cheb import eval_P
from lts_wave.spectral import (
    DenseCapExceeded,
    EigenSolverError,
    dense_spectrum,
    fine_block_spectrum,
    lambda_max_AS,
    lanczos_extremes,
    positivity_certificate,
    theoretical_cfl,
    weak_cfl_implied,
)

from helpers import NU_GRID, dense_oracle, random_system, top_eig_AS


@given(seed=st.integers(0, 2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_dense_operator_matches_power_series(seed):
    rng = np.random.default_rng(seed)
    sys = random_system(rng)
    p = int(rng.integers(1, 7))
    nu = float(rng.choice(NU_GRID))
    dt = float(rng.uniform(0.1, 1.2)) * 2 / np.sqrt(top_eig_AS(sys))
    A = dense_stabilized(StabilizedOperator(sys, make_stab_params(p, nu), dt))
    ref = dense_oracle(sys, p, nu, dt)
    np.testing.assert_allclose(A, ref, rtol=1e-10, atol=1e-10 * np.abs(ref).max())
    # self-adjoint in the lumped inner product
    DA = sys.D[:, None] * A
    np.testing.assert_allclose(DA, DA.T, rtol=1e-10, atol=1e-10 * np.abs(DA).max())


def test_single_fine_element_against_scalar_polynomial():
    # when Pi_f A restricted to the fine dofs is diagonalizable with the coarse
    # coupling dropped, P acts through the scalar polynomial on its eigenvalues
    sys = assemble(build_interval_mesh(0.25, 0.5, 1.0, 2))
    par = make_stab_params(2, 0.1)
    dt = 0.1
    op = StabilizedOperator(sys, par, dt)
    fi = sys.fine_idx
    A = sys.dense_K() / sys.D[:, None]
    Aff = A[np.ix_(fi, fi)]
    mu, V = np.linalg.eig(Aff)
    v = np.zeros(sys.n_dofs)
    v[fi] = V[:, 0].real
    y = op.poly(v)
    expected = eval_P(par, dt * dt * mu[0].real) / (dt * dt * mu[0].real)
    # Pi_f A v = mu v on the fine part, the coarse part of v is zero
    assert np.allclose(y[fi], expected * v[fi], rtol=1e-12)


def test_poly_accepts_matrix_argument():
    rng = np.random.default_rng(2)
    sys = random_system(rng)
    op = StabilizedOperator(sys, make_stab_params(4, 0.05), 0.01)
    V = rng.standard_normal((sys.n_dofs, 3))
    np.testing.assert_allclose(op.apply(V)[:, 2], op.apply(V[:, 2]), rtol=1e-12)


def test_dense_cap():
    sys = assemble(build_interval_mesh(0.01, 0.5, 1.0, 2))
    op = StabilizedOperator(sys, make_stab_params(2, 0.0), 0.001)
    with pytest.raises(DenseCapExceeded):
        dense_stabilized(op, cap=10)


def test_lanczos_matches_dense():
    rng = np.random.default_rng(0)
    n = 300
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = np.concatenate([rng.uniform(0, 1, n - 3), [5.0, 7.0, 11.0]])
    M = (Q * lam) @ Q.T
    res = lanczos_extremes(lambda v: M @ v, n, tol=1e-12, max_steps=200)
    assert res.theta_max == pytest.approx(11.0, rel=1e-10)
    assert res.residual_max <= 1e-12 * 11.0
    assert res.theta_min >= lam.min() - 1e-12


def test_lanczos_stop_callback():
    M = np.diag(np.arange(1.0, 401.0))
    res = lanczos_extremes(lambda v: M @ v, 400, tol=1e-14, max_steps=300,
                           stop=lambda th, r: th > 100.0)
    assert res.theta_max > 100.0
    assert res.steps < 300


def test_extreme_eigs_lanczos_path_matches_dense():
    sys = assemble(build_interval_mesh(1 / 50, 0.8, 1.0, 4))
    op = StabilizedOperator(sys, make_stab_params(4, 0.05), 0.01)
    lo_d, hi_d = extreme_eigs(op)
    lo_l, hi_l = extreme_eigs(op, cap=10, tol=1e-10)
    assert hi_l == pytest.approx(hi_d, rel=1e-9)
    assert lo_l == pytest.approx(lo_d, abs=1e-7 * hi_d)
    assert math.isnan(extreme_eigs(op, which="max")[0])


def test_extreme_eigs_reports_failure():
    sys = assemble(build_interval_mesh(1 / 50, 0.8, 1.0, 4))
    op = StabilizedOperator(sys, make_stab_params(4, 0.05), 0.01)
    with pytest.raises(EigenSolverError):
        extreme_eigs(op, cap=10, tol=1e-15, maxiter=20)


def test_lambda_max_uniform_interval():
    n = 40
    sys = assemble(build_interval_mesh(1 / n, 0.0, 0.0, 1))
    exact = 4 * n * n * math.sin((n - 1) * math.pi / (2 * n)) ** 2
    assert lambda_max_AS(sys) == pytest.approx(exact, rel=1e-12)


def test_fine_block_spectrum_tridiagonal_path():
    sys = assemble(build_interval_mesh(0.01, 0.5, 1.0, 50))
    mu = fine_block_spectrum(sys, cap=10)
    Kff = sys.K_ff.toarray()
    d = np.sqrt(sys.D[sys.fine_idx])
    ref = np.linalg.eigvalsh(Kff / d[:, None] / d[None, :])
    np.testing.assert_allclose(mu, ref, rtol=1e-9)


@pytest.mark.parametrize("seed", range(6))
def test_positivity_certificate_matches_lambda_min_sign(seed):
    rng = np.random.default_rng(seed)
    sys = random_system(rng)
    p = int(rng.integers(2, 7))
    nu = float(rng.choice(NU_GRID))
    par = make_stab_params(p, nu)
    mu = fine_block_spectrum(sys)
    base = 2 / np.sqrt(top_eig_AS(sys))
    for f in (0.3, 0.8, 1.5, 3.0, 6.0):
        dt = f * base
        cert = positivity_certificate(par, dt, mu)
        lmin = dense_spectrum(StabilizedOperator(sys, par, dt))[0]
        if abs(lmin) > 1e-8 * abs(dense_spectrum(StabilizedOperator(sys, par, dt))[-1]):
            assert (cert > 0) == (lmin > 0), (f, cert, lmin)


@pytest.mark.parametrize("nu", [0.0, 0.05, 0.5])
def test_max_stable_dt_small_system(nu):
    sys = assemble(build_interval_mesh(1 / 20, 0.8, 1.0, 3))
    ref = assemble(build_interval_mesh(1 / 20, 0.0, 0.0, 1))
    rep = max_stable_dt(sys, 3, nu, scan=20, reference_sys=ref)
    par = make_stab_params(3, nu)

    def top(dt):
        return dense_spectrum(StabilizedOperator(sys, par, dt))

    lam = top(rep.dt_max)
    assert rep.dt_max**2 * lam[-1] <= 4.0 and lam[0] > 0
    lam_hi = top(rep.dt_max * (1 + 1e-5))
    assert rep.dt_max**2 * (1 + 1e-5) ** 2 * lam_hi[-1] > 4.0 * (1 - 1e-9) or lam_hi[0] <= 0
    assert rep.ratio_pct == pytest.approx(100 * rep.dt_max / rep.dt_opt)
    assert rep.dt_opt == pytest.approx(2 / np.sqrt(lambda_max_AS(ref)))
    assert rep.validated.shape[1] == 3
    assert rep.min_margin < 1
    if nu > 0:
        assert rep.min_margin >= 0
    # the margin is the minimum over the validated steps
    v = rep.validated
    assert rep.min_margin == pytest.approx(np.min(1 - v[:, 0] ** 2 * v[:, 2] / 4))


def test_stabilization_bound_on_top_eigenvalue():
    # dt^2 lambda_max <= 4 - nu / (nu + 1) at every validated step
    sys = assemble(build_interval_mesh(1 / 20, 0.8, 1.0, 4))
    for nu in (0.05, 0.2, 0.5):
        rep = max_stable_dt(sys, 4, nu, scan=30)
        v = rep.validated
        assert np.all(v[:, 0] ** 2 * v[:, 2] <= 4 - nu / (nu + 1) + 1e-9)


def test_critical_scan_finds_crossing_for_unstabilized_p3():
    h = 1 / 40
    sys = assemble(build_interval_mesh(h, 0.9, 1.0, 3))
    pts = critical_dt_scan(sys, 3, np.linspace(0.05 * h, 0.75 * h, 141), nu=0.0)
    ones = [c for c in pts if c.kind == "one"]
    assert ones
    c = ones[0]
    assert c.dt / h == pytest.approx(0.5042, abs=2e-4)
    # at the first crossing the top normalized eigenvalue is exactly 1
    lam = dense_spectrum(StabilizedOperator(sys, make_stab_params(3, 0.0), c.dt_root))
    assert lam[-1] * c.dt_root**2 / 4 == pytest.approx(1.0, abs=1e-12)
    assert c.dt_root <= c.dt
    assert np.max(np.abs(c.vector)) == pytest.approx(1.0)


def test_critical_scan_empty_with_damping():
    h = 1 / 40
    sys = assemble(build_interval_mesh(h, 0.9, 1.0, 3))
    pts = critical_dt_scan(sys, 3, np.linspace(0.05 * h, 0.75 * h, 141), nu=0.01)
    assert pts == []


def test_block_identity_small():
    rng = np.random.default_rng(9)
    sys = random_system(rng)
    par = make_stab_params(3, 0.1)
    dt = 0.5 / np.sqrt(top_eig_AS(sys))
    dev, ff = block_identity_check(sys, par, dt)
    assert dev < 1e-10
    assert ff <= (par.nu + 1) / (2 * par.nu) * dt * dt


def test_spectrum_sweep_writes_csv(tmp_path):
    h = 0.1
    sys = assemble(build_interval_mesh(h, 0.5, 1.0, 2))
    grid = np.linspace(0.1 * h, h, 4)
    out = spectrum_sweep(sys, 2, 0.0, grid, h, tmp_path / "s.csv")
    assert out.shape == (4, sys.n_dofs)
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "dt_over_hc,eig_index,value"
    assert len(lines) == 1 + 4 * sys.n_dofs


def test_weak_cfl_implied_on_grid():
    for nu in np.linspace(0, 0.5, 11):
        assert weak_cfl_implied(float(nu))


def test_theoretical_cfl_returns_positive_bounds():
    sys = assemble(build_interval_mesh(0.1, 0.5, 1.0, 2))
    d = theoretical_cfl(sys, 2, 0.1, 0.1)
    assert d.dt_full > 0 and d.dt_weak > 0


def test_max_stable_dt_grows_bracket():
    # dt_opt of the refined mesh itself is far below the stability limit
    sys = assemble(build_interval_mesh(1 / 20, 0.8, 1.0, 3))
    rep = max_stable_dt(sys, 3, 0.05, scan=5)
    assert rep.ratio_pct > 150.0
    lam = dense_spectrum(StabilizedOperator(sys, make_stab_params(3, 0.05), rep.dt_max * 1.001))
    assert (rep.dt_max * 1.001) ** 2 * lam[-1] > 4.0 or lam[0] <= 0
