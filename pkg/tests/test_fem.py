import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given, settings
from hypothesis import strategies as st

from lts_wave import (
    apply_AS,
    assemble,
    build_interval_mesh,
    build_lshape_graded,
    error_norms,
    interpolate,
    project_coarse,
    project_fine,
    t_inner,
)
from lts_wave.fem import is_nested, prolongate

from helpers import random_system

# first Dirichlet eigenvalue of the L-shape with side 2 (known to 10 digits)
LSHAPE_LAMBDA1_SIDE2 = 9.6397238440


@pytest.mark.parametrize("n", [5, 16, 40])
def test_uniform_interval_eigenvalues(n):
    h = 1.0 / n
    sys = assemble(build_interval_mesh(h, 0.0, 0.0, 1))
    lam = np.sort(np.linalg.eigvals(apply_AS(sys, np.eye(sys.n_dofs))).real)
    k = np.arange(1, n)
    np.testing.assert_allclose(lam, np.sort(4 / h**2 * np.sin(k * np.pi * h / 2) ** 2), rtol=1e-12)


def test_speed_scales_stiffness():
    m = build_interval_mesh(0.1, 0.5, 1.0, 2)
    a = assemble(m)
    b = assemble(m.with_speed(3.0))
    np.testing.assert_allclose(b.K.toarray(), 9 * a.K.toarray())
    np.testing.assert_allclose(b.D, a.D)


def test_lshape_first_eigenvalue():
    sys = assemble(build_lshape_graded(20, 1.0, fine_layers=0))
    lam = spla.eigsh(sys.K, k=1, M=sp.diags(sys.D), sigma=0, return_eigenvectors=False)[0]
    assert lam == pytest.approx(4 * LSHAPE_LAMBDA1_SIDE2, rel=5e-3)


def test_lumped_mass_sums_to_area():
    m = build_lshape_graded(6, 1.5)
    sys = assemble(m)
    lump_all = np.zeros(m.n_vertices)
    np.add.at(lump_all, m.elements.ravel(), np.repeat(m.measures() / 3, 3))
    np.testing.assert_allclose(lump_all[sys.partition.free_nodes], sys.D)
    assert lump_all.sum() == pytest.approx(0.75)


@given(seed=st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_operator_self_adjoint_and_positive(seed):
    rng = np.random.default_rng(seed)
    sys = random_system(rng)
    K = sys.K.toarray()
    np.testing.assert_allclose(K, K.T, atol=1e-14 * np.abs(K).max())
    u, v = rng.standard_normal((2, sys.n_dofs))
    assert t_inner(sys, apply_AS(sys, u), v) == pytest.approx(t_inner(sys, u, apply_AS(sys, v)),
                                                              rel=1e-10, abs=1e-10)
    assert np.linalg.eigvalsh(K).min() > 0
    assert np.all(sys.D > 0)


def test_projections_are_T_orthogonal_splitting():
    rng = np.random.default_rng(3)
    sys = random_system(rng)
    u = rng.standard_normal(sys.n_dofs)
    np.testing.assert_array_equal(project_fine(sys, u) + project_coarse(sys, u), u)
    assert t_inner(sys, project_fine(sys, u), project_coarse(sys, u)) == 0.0
    U = rng.standard_normal((sys.n_dofs, 3))
    np.testing.assert_array_equal(project_fine(sys, U)[:, 1], project_fine(sys, U[:, 1]))


def test_length_mismatch_raises():
    sys = assemble(build_interval_mesh(0.1, 0.5, 1.0, 2))
    with pytest.raises(ValueError):
        apply_AS(sys, np.ones(sys.n_dofs + 1))


def test_interpolation_error_second_order():
    f = lambda x: np.sin(np.pi * x)
    df = lambda x: np.pi * np.cos(np.pi * x)
    errs = []
    for n in (20, 40, 80):
        m = build_interval_mesh(1.0 / n, 0.0, 0.0, 1)
        errs.append(error_norms(m, interpolate(m, f), f, df))
    l2 = [e[0] for e in errs]
    h1 = [e[1] for e in errs]
    assert np.log2(l2[0] / l2[1]) == pytest.approx(2.0, abs=0.02)
    assert np.log2(h1[1] / h1[2]) == pytest.approx(1.0, abs=0.02)


def test_error_norms_against_exact_integral():
    n = 10
    m = build_interval_mesh(1.0 / n, 0.0, 0.0, 1)
    f = lambda x: x * (1 - x)
    l2, _ = error_norms(m, interpolate(m, f), f)
    h = 1.0 / n
    # e(s) = s (h - s) on each element; integral of e^2 = h^5 / 30
    assert l2 == pytest.approx(np.sqrt(n * h**5 / 30), rel=1e-12)


def test_error_norms_mesh_reference_2d():
    f = lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y)
    coarse = build_lshape_graded(4, 1.0)
    fine = build_lshape_graded(8, 1.0)
    assert is_nested(coarse, fine)
    l2_mesh, _ = error_norms(coarse, interpolate(coarse, f), (fine, interpolate(fine, f)))
    l2_ex, _ = error_norms(coarse, interpolate(coarse, f), f)
    assert 0.3 * l2_ex < l2_mesh < 1.5 * l2_ex


def test_nonnested_reference_needs_flag():
    f = lambda x, y: x * y
    a = build_lshape_graded(4, 1.6)
    b = build_lshape_graded(8, 1.6)
    assert not is_nested(a, b)
    with pytest.raises(ValueError):
        error_norms(a, interpolate(a, f), (b, interpolate(b, f)))
    l2, h1 = error_norms(a, interpolate(a, f), (b, interpolate(b, f)), allow_nonnested=True)
    assert np.isfinite(l2) and np.isfinite(h1)


def test_prolongation_reproduces_linear_functions():
    m = build_lshape_graded(5, 1.3)
    full = 2.0 + 3.0 * m.vertices[:, 0] - m.vertices[:, 1]
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 0.5, (50, 2))
    np.testing.assert_allclose(prolongate(m, full, pts), 2 + 3 * pts[:, 0] - pts[:, 1], atol=1e-12)
