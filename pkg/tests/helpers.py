"""Shared builders and independent oracles for the test suite."""

from __future__ import annotations

import numpy as np
from numpy.polynomial import Chebyshev, Polynomial

from lts_wave import Mesh, assemble, build_lshape_graded

NU_GRID = (0.0, 0.01, 0.05, 0.1, 0.25, 0.5)


def random_interval_mesh(rng: np.random.Generator, n_el: int | None = None) -> Mesh:
    """Interval mesh with random node spacing, speeds and fine set.

    At least one element is fine and at least one is coarse.
    """
    if n_el is None:
        n_el = int(rng.integers(4, 41))
    widths = rng.uniform(0.3, 1.0, n_el)
    x = np.concatenate([[0.0], np.cumsum(widths)])
    x /= x[-1]
    fine = rng.random(n_el) < rng.uniform(0.2, 0.6)
    if not fine.any():
        fine[rng.integers(n_el)] = True
    if fine.all():
        fine[0] = False
    elements = np.column_stack([np.arange(n_el), np.arange(1, n_el + 1)]).astype(np.int64)
    return Mesh(1, x.reshape(-1, 1), elements, fine, rng.uniform(0.5, 2.0, n_el),
                np.array([0, n_el], dtype=np.int64))


def random_lshape_mesh(rng: np.random.Generator) -> Mesh:
    """Small graded L-shape (at most 40 dofs) with a random fine layer count."""
    N = int(rng.integers(3, 5))
    beta = float(rng.uniform(1.0, 2.0))
    mesh = build_lshape_graded(N, beta, fine_layers=int(rng.integers(1, N)))
    return mesh.with_speed(rng.uniform(0.5, 2.0, mesh.n_elements))


def random_system(rng: np.random.Generator):
    mesh = random_interval_mesh(rng) if rng.random() < 0.7 else random_lshape_mesh(rng)
    return assemble(mesh)


def reduced_poly_coeffs(p: int, nu: float) -> np.ndarray:
    """Power-basis coefficients of ``P(y) / y`` built with numpy.polynomial.

    ``P(y) = 2 (1 - T_p(delta - y / omega) / T_p(delta))`` with ``delta`` and
    ``omega`` recomputed here from the Chebyshev series.
    """
    Tp = Chebyshev.basis(p)
    delta = 1.0 + nu / p**2
    t_delta = Tp(delta)
    omega = 2.0 * Tp.deriv()(delta) / t_delta
    shifted = Tp.convert(kind=Polynomial)(Polynomial([delta, -1.0 / omega]))
    P = 2.0 - 2.0 * shifted / t_delta
    return P.coef[1:]


def dense_oracle(sys, p: int, nu: float, dt: float) -> np.ndarray:
    """``A P^dt(Pi_f A)`` from explicit matrix powers."""
    A = sys.dense_K() / sys.D[:, None]
    X = dt * dt * (sys.fine_mask[:, None] * A)
    coef = reduced_poly_coeffs(p, nu)
    poly = np.zeros_like(A)
    power = np.eye(sys.n_dofs)
    for c in coef:
        poly += c * power
        power = power @ X
    return A @ poly


def top_eig_AS(sys) -> float:
    A = sys.dense_K() / sys.D[:, None]
    return float(np.max(np.linalg.eigvals(A).real))
