"""Mass-lumped P1 finite elements.

Dirichlet vertices are eliminated at assembly, so every vector here lives on
the free vertices of a :class:`~lts_wave.mesh.DofPartition`. The wave
operator is ``A = D^-1 K`` with ``K`` the stiffness matrix of
``a(u, v) = (c^2 grad u, grad v)`` and ``D`` the vertex-quadrature mass.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from lts_wave.mesh import DofPartition, Mesh, partition_dofs

# 3-point Gauss rule on [0, 1]
_GAUSS_X = 0.5 + 0.5 * np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
_GAUSS_W = np.array([5.0, 8.0, 5.0]) / 18.0
# mid-edge rule on the reference triangle, barycentric coordinates, weights sum to 1
_MIDEDGE_BARY = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])


@dataclass(frozen=True, eq=False)
class LumpedSystem:
    """Assembled stiffness ``K`` (CSR, free x free) and lumped mass diagonal ``D``."""

    mesh: Mesh
    partition: DofPartition
    K: sp.csr_matrix
    D: np.ndarray

    @property
    def n_dofs(self) -> int:
        return self.D.shape[0]

    @cached_property
    def fine_mask(self) -> np.ndarray:
        return np.asarray(self.partition.fine_mask)

    @cached_property
    def fine_idx(self) -> np.ndarray:
        return self.partition.fine_index

    @cached_property
    def coarse_idx(self) -> np.ndarray:
        return self.partition.coarse_index

    @cached_property
    def coarse_mask(self) -> np.ndarray:
        return ~self.fine_mask

    @cached_property
    def K_ff(self) -> sp.csr_matrix:
        return self.K[self.fine_idx][:, self.fine_idx].tocsr()

    @cached_property
    def K_fc(self) -> sp.csr_matrix:
        return self.K[self.fine_idx][:, self.coarse_idx].tocsr()

    @cached_property
    def active_rows(self) -> np.ndarray:
        """Rows of ``K`` coupled to at least one fine dof (fine dofs and their neighbours)."""
        cols = self.K[:, self.fine_idx].tocsr()
        return np.flatnonzero(np.diff(cols.indptr) > 0)

    @cached_property
    def K_active_fine(self) -> sp.csr_matrix:
        K = self.K[self.active_rows][:, self.fine_idx].tocsr()
        K.sort_indices()
        return K

    @cached_property
    def fine_pos_in_active(self) -> np.ndarray:
        return np.searchsorted(self.active_rows, self.fine_idx)

    @cached_property
    def sqrt_D(self) -> np.ndarray:
        return np.sqrt(self.D)

    def dense_K(self) -> np.ndarray:
        return self.K.toarray()


def assemble(mesh: Mesh, partition: DofPartition | None = None) -> LumpedSystem:
    """Assemble ``K`` with exact P1 gradients and ``D`` by vertex quadrature."""
    if partition is None:
        partition = partition_dofs(mesh)
    if partition.n_dofs == 0:
        raise ValueError("mesh has no free nodes")
    meas = mesh.measures()
    if np.any(meas <= 0.0):
        raise ValueError("zero-measure element")
    els = mesh.elements
    nv = els.shape[1]
    c2 = mesh.speed**2
    if mesh.dim == 1:
        ke = (c2 / meas)[:, None, None] * np.array([[1.0, -1.0], [-1.0, 1.0]])
    else:
        grads = _p1_gradients(mesh.vertices, els, meas)
        ke = (c2 * meas)[:, None, None] * np.einsum("eik,ejk->eij", grads, grads)
    lump = np.zeros(mesh.n_vertices)
    np.add.at(lump, els.reshape(-1), np.repeat(meas / nv, nv))

    dof_of = np.full(mesh.n_vertices, -1, dtype=np.int64)
    dof_of[partition.free_nodes] = np.arange(partition.n_dofs)
    rows = np.repeat(dof_of[els], nv, axis=1).reshape(-1)
    cols = np.tile(dof_of[els], (1, nv)).reshape(-1)
    vals = ke.reshape(-1)
    keep = (rows >= 0) & (cols >= 0)
    n = partition.n_dofs
    K = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    K.sum_duplicates()
    K = ((K + K.T) * 0.5).tocsr()
    K.sort_indices()
    D = lump[partition.free_nodes]
    return LumpedSystem(mesh, partition, K, D)


def _p1_gradients(vertices, elements, areas):
    """Gradients of the three barycentric functions, shape (n_el, 3, 2)."""
    p = vertices[elements]
    x, y = p[..., 0], p[..., 1]
    g = np.empty(elements.shape + (2,))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        g[:, i, 0] = y[:, j] - y[:, k]
        g[:, i, 1] = x[:, k] - x[:, j]
    return g / (2.0 * areas)[:, None, None]


def _check_len(sys: LumpedSystem, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[0] != sys.n_dofs:
        raise ValueError(f"vector length {v.shape[0]} does not match {sys.n_dofs} dofs")
    return v


def apply_AS(sys: LumpedSystem, v) -> np.ndarray:
    """``A v = D^-1 K v``; ``v`` may carry extra columns."""
    v = _check_len(sys, v)
    Kv = sys.K @ v
    return Kv / sys.D if v.ndim == 1 else Kv / sys.D[:, None]


def project_fine(sys: LumpedSystem, v) -> np.ndarray:
    v = _check_len(sys, v)
    return np.where(sys.fine_mask if v.ndim == 1 else sys.fine_mask[:, None], v, 0.0)


def project_coarse(sys: LumpedSystem, v) -> np.ndarray:
    v = _check_len(sys, v)
    return np.where(sys.coarse_mask if v.ndim == 1 else sys.coarse_mask[:, None], v, 0.0)


def t_inner(sys: LumpedSystem, u, v) -> float:
    """Lumped inner product ``sum_z d_z u_z v_z``."""
    u = _check_len(sys, u)
    v = _check_len(sys, v)
    return float(np.dot(sys.D * u, v))


def t_norm(sys: LumpedSystem, u) -> float:
    return float(np.sqrt(max(t_inner(sys, u, u), 0.0)))


def interpolate(mesh: Mesh, f, partition: DofPartition | None = None) -> np.ndarray:
    """Nodal interpolant at the free vertices; ``f(x)`` in 1D, ``f(x, y)`` in 2D."""
    if partition is None:
        partition = partition_dofs(mesh)
    pts = mesh.vertices[partition.free_nodes]
    vals = f(*pts.T)
    return np.array(np.broadcast_to(np.asarray(vals, dtype=float), (partition.n_dofs,)))


def expand(mesh: Mesh, partition: DofPartition, u) -> np.ndarray:
    """Nodal vector on all vertices, zero on Dirichlet nodes."""
    full = np.zeros(mesh.n_vertices)
    full[partition.free_nodes] = u
    return full


def error_norms(mesh: Mesh, u_h, ref, ref_grad=None, *, partition: DofPartition | None = None,
                allow_nonnested: bool = False) -> tuple[float, float]:
    """L2 and H1 norms of ``u_h - ref``.

    ``ref`` is either an analytic field (``f(x)`` / ``f(x, y)``, with optional
    ``ref_grad`` returning the gradient components) or a pair
    ``(ref_mesh, ref_values)`` of a finer mesh and its free-node vector. In
    the second case ``u_h`` is prolongated onto ``ref_mesh`` and the P1
    difference is integrated exactly there. A reference mesh that does not
    refine ``mesh`` is rejected unless ``allow_nonnested`` is set, in which
    case the prolongation is the nodal interpolant on the finer mesh.

    The H1 value is the full norm ``sqrt(L2^2 + |.|_1^2)``; it is NaN for an
    analytic reference without gradient.
    """
    if partition is None:
        partition = partition_dofs(mesh)
    full = expand(mesh, partition, np.asarray(u_h, dtype=float))
    if isinstance(ref, tuple):
        ref_mesh, ref_vals = ref
        if ref_mesh.dim != mesh.dim:
            raise ValueError("reference mesh dimension differs")
        if not allow_nonnested and not is_nested(mesh, ref_mesh):
            raise ValueError("reference mesh is not a refinement of the mesh")
        ref_part = partition_dofs(ref_mesh)
        fine_full = expand(ref_mesh, ref_part, np.asarray(ref_vals, dtype=float))
        diff = prolongate(mesh, full, ref_mesh.vertices) - fine_full
        return _p1_norms(ref_mesh, diff)
    return _quadrature_norms(mesh, full, ref, ref_grad)


def _p1_norms(mesh: Mesh, e_full: np.ndarray) -> tuple[float, float]:
    e = e_full[mesh.elements]
    meas = mesh.measures()
    if mesh.dim == 1:
        l2 = meas / 3.0 * (e[:, 0] ** 2 + e[:, 0] * e[:, 1] + e[:, 1] ** 2)
        semi = (e[:, 1] - e[:, 0]) ** 2 / meas
    else:
        l2 = meas / 12.0 * ((e**2).sum(axis=1) + e.sum(axis=1) ** 2)
        grads = _p1_gradients(mesh.vertices, mesh.elements, meas)
        g = np.einsum("ei,eik->ek", e, grads)
        semi = meas * (g**2).sum(axis=1)
    l2s = float(l2.sum())
    return float(np.sqrt(l2s)), float(np.sqrt(l2s + semi.sum()))


def _quadrature_norms(mesh, full, ref, ref_grad):
    meas = mesh.measures()
    e_vals = full[mesh.elements]
    pts = mesh.vertices[mesh.elements]
    if mesh.dim == 1:
        lam = np.column_stack([1.0 - _GAUSS_X, _GAUSS_X])         # (q, 2)
        xq = pts[:, :, 0] @ lam.T                                    # (e, q)
        uq = e_vals @ lam.T
        w = meas[:, None] * _GAUSS_W[None, :]
        r = np.asarray(ref(xq), dtype=float)
        l2 = float(np.sum(w * (uq - r) ** 2))
        if ref_grad is None:
            return float(np.sqrt(l2)), float("nan")
        du = ((e_vals[:, 1] - e_vals[:, 0]) / meas)[:, None]
        g = np.asarray(ref_grad(xq), dtype=float)
        semi = float(np.sum(w * (du - g) ** 2))
    else:
        xq = np.einsum("qi,eid->eqd", _MIDEDGE_BARY, pts)
        uq = e_vals @ _MIDEDGE_BARY.T
        w = meas[:, None] * np.full(3, 1.0 / 3.0)[None, :]
        r = np.asarray(ref(xq[..., 0], xq[..., 1]), dtype=float)
        l2 = float(np.sum(w * (uq - r) ** 2))
        if ref_grad is None:
            return float(np.sqrt(l2)), float("nan")
        grads = _p1_gradients(mesh.vertices, mesh.elements, meas)
        du = np.einsum("ei,eik->ek", e_vals, grads)
        gx, gy = ref_grad(xq[..., 0], xq[..., 1])
        semi = float(np.sum(w * ((du[:, None, 0] - gx) ** 2 + (du[:, None, 1] - gy) ** 2)))
    return float(np.sqrt(l2)), float(np.sqrt(l2 + semi))


def locate_points(mesh: Mesh, points: np.ndarray, tol: float = 1e-10):
    """Host element and barycentric coordinates for each 2D point."""
    points = np.asarray(points, dtype=float)
    pts = mesh.vertices[mesh.elements]
    tree = cKDTree(pts.mean(axis=1))
    host = np.full(len(points), -1, dtype=np.int64)
    bary = np.zeros((len(points), 3))
    todo = np.arange(len(points))
    k = 8
    while todo.size:
        k_eff = min(k, mesh.n_elements)
        _, cand = tree.query(points[todo], k=k_eff)
        cand = cand.reshape(len(todo), k_eff)
        b = _barycentric(pts[cand], points[todo][:, None, :])    # (m, k, 3)
        ok = b.min(axis=2) >= -tol
        found = ok.any(axis=1)
        first = ok.argmax(axis=1)
        idx = todo[found]
        host[idx] = cand[found, first[found]]
        bary[idx] = b[found, first[found]]
        todo = todo[~found]
        if k_eff == mesh.n_elements and todo.size:
            raise ValueError("points outside the mesh")
        k *= 4
    return host, bary


def _barycentric(tri, x):
    a, b, c = tri[..., 0, :], tri[..., 1, :], tri[..., 2, :]
    v0, v1, v2 = b - a, c - a, x - a
    den = v0[..., 0] * v1[..., 1] - v1[..., 0] * v0[..., 1]
    l1 = (v2[..., 0] * v1[..., 1] - v1[..., 0] * v2[..., 1]) / den
    l2 = (v0[..., 0] * v2[..., 1] - v2[..., 0] * v0[..., 1]) / den
    return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)


def prolongate(mesh: Mesh, full: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Evaluate the P1 function with nodal values ``full`` at ``points``."""
    if mesh.dim == 1:
        return np.interp(np.asarray(points).reshape(-1), mesh.vertices[:, 0], full)
    host, bary = locate_points(mesh, points)
    return np.einsum("ni,ni->n", full[mesh.elements[host]], bary)


def is_nested(coarse: Mesh, fine: Mesh, tol: float = 1e-10) -> bool:
    """True if every element of ``fine`` lies inside one element of ``coarse``."""
    if coarse.dim == 1:
        cv = coarse.vertices[:, 0]
        fv = fine.vertices[:, 0]
        pos = np.searchsorted(fv, cv)
        pos = np.clip(pos, 0, len(fv) - 1)
        return bool(np.all(np.abs(fv[pos] - cv) <= tol))
    pts = fine.vertices[fine.elements]
    host, _ = locate_points(coarse, pts.mean(axis=1), tol)
    b = _barycentric(coarse.vertices[coarse.elements[host]][:, None], pts)
    return bool(np.all(b.min(axis=2) >= -tol))
