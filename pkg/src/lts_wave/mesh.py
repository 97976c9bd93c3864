"""Simplicial meshes with a marked fine region.

Two generators are provided: a 1D interval mesh whose fine part has spacing
``h_c / p``, and a 2D L-shaped domain graded toward the reentrant corner.
Vertex indices are 0-based and vertices are stored in lexicographic order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_SPACING_TOL = 1e-9

# L-shape: reentrant corner and the boundary points cut into six equal triangles
LSHAPE_CENTER = (0.5, 0.5)
LSHAPE_RIM = (
    (1.0, 0.5), (1.0, 0.0), (0.5, 0.0), (0.0, 0.0), (0.0, 0.5), (0.0, 1.0), (0.5, 1.0),
)
LSHAPE_AREA = 0.75


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming simplicial mesh.

    Attributes
    ----------
    dim : int
        1 (intervals) or 2 (triangles).
    vertices : ndarray, shape (n_vertices, dim)
    elements : ndarray of int, shape (n_elements, dim + 1)
    fine_flag : ndarray of bool, shape (n_elements,)
    speed : ndarray, shape (n_elements,)
        Element-wise constant wave speed.
    dirichlet_nodes : ndarray of int
        Sorted vertex indices carrying homogeneous Dirichlet conditions.
    """

    dim: int
    vertices: np.ndarray
    elements: np.ndarray
    fine_flag: np.ndarray
    speed: np.ndarray
    dirichlet_nodes: np.ndarray

    def __post_init__(self):
        for name in ("vertices", "elements", "fine_flag", "speed", "dirichlet_nodes"):
            getattr(self, name).setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    def measures(self) -> np.ndarray:
        """Length (1D) or area (2D) of every element."""
        return element_measures(self.vertices, self.elements)

    def with_speed(self, speed) -> "Mesh":
        """Copy with a new wave speed, either a constant, an array or a field.

        A callable is evaluated at element centroids.
        """
        if callable(speed):
            centroids = self.vertices[self.elements].mean(axis=1)
            values = np.asarray(speed(*centroids.T), dtype=float)
        else:
            values = np.broadcast_to(np.asarray(speed, dtype=float), (self.n_elements,))
        values = np.array(values, dtype=float)
        if np.any(values <= 0):
            raise ValueError("wave speed must be positive")
        return _make_mesh(self.dim, self.vertices, self.elements, self.fine_flag,
                          values, self.dirichlet_nodes)


def element_measures(vertices: np.ndarray, elements: np.ndarray) -> np.ndarray:
    pts = vertices[elements]
    if vertices.shape[1] == 1:
        return pts[:, 1, 0] - pts[:, 0, 0]
    e1 = pts[:, 1] - pts[:, 0]
    e2 = pts[:, 2] - pts[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _make_mesh(dim, vertices, elements, fine_flag, speed, dirichlet) -> Mesh:
    vertices = np.array(vertices, dtype=float).reshape(-1, dim)
    elements = np.array(elements, dtype=np.int64).reshape(-1, dim + 1)
    fine_flag = np.array(fine_flag, dtype=bool).reshape(-1)
    speed = np.array(speed, dtype=float).reshape(-1)
    dirichlet = np.unique(np.asarray(dirichlet, dtype=np.int64))
    if fine_flag.shape[0] != elements.shape[0] or speed.shape[0] != elements.shape[0]:
        raise ValueError("fine_flag and speed need one entry per element")
    if np.any(element_measures(vertices, elements) <= 0.0):
        raise ValueError("mesh has an element with non-positive measure")
    return Mesh(dim, vertices, elements, fine_flag, speed, dirichlet)


def _count_cells(length: float, h: float) -> int:
    if length == 0.0:
        return 0
    n = round(length / h)
    if n < 1 or abs(n * h - length) > _SPACING_TOL * max(1.0, length):
        raise ValueError(f"spacing {h!r} does not divide segment length {length!r}")
    return n


def build_interval_mesh(h_c: float, fine_lo: float, fine_hi: float, p: int,
                        speed: float = 1.0, length: float = 1.0) -> Mesh:
    """Interval mesh of ``(0, length)`` with spacing ``h_c`` outside and ``h_c/p`` inside ``[fine_lo, fine_hi]``.

    Both end points are Dirichlet nodes. ``fine_lo == fine_hi`` gives a
    uniform mesh with an empty fine region.
    """
    if p < 1 or int(p) != p:
        raise ValueError("p must be a positive integer")
    if not 0.0 <= fine_lo <= fine_hi <= length:
        raise ValueError("need 0 <= fine_lo <= fine_hi <= length")
    if h_c <= 0:
        raise ValueError("h_c must be positive")
    h_f = h_c / p
    segments = [
        (0.0, fine_lo, _count_cells(fine_lo, h_c), False),
        (fine_lo, fine_hi, _count_cells(fine_hi - fine_lo, h_f), True),
        (fine_hi, length, _count_cells(length - fine_hi, h_c), False),
    ]
    coords = [0.0]
    flags = []
    for lo, hi, n, fine in segments:
        for i in range(1, n + 1):
            coords.append(hi if i == n else lo + (hi - lo) * i / n)
        flags.extend([fine] * n)
    n_el = len(flags)
    if n_el == 0:
        raise ValueError("empty mesh")
    elements = np.column_stack([np.arange(n_el), np.arange(1, n_el + 1)])
    return _make_mesh(1, coords, elements, flags, np.full(n_el, float(speed)),
                      [0, n_el])


def build_lshape_graded(N: int, beta: float = 1.0, fine_layers: int | None = None,
                        speed: float = 1.0) -> Mesh:
    """Triangulation of the L-shape ``(0,1)^2 minus [0.5,1)x(0.5,1]`` graded toward (0.5, 0.5).

    The domain is cut into six equal triangles sharing the corner. On each
    corner edge, layer ``k`` sits at relative distance ``(k/N)**beta``; the
    ``k + 1`` nodes of a layer are equally spaced along its chord and the strip
    between layers ``k-1`` and ``k`` is split into ``2k - 1`` triangles.

    Elements of the first ``fine_layers`` strips (default ``floor(sqrt(N))``)
    form the fine region. All boundary nodes are Dirichlet.
    """
    if N < 2 or int(N) != N:
        raise ValueError("N must be an integer >= 2")
    if beta < 1.0:
        raise ValueError("beta must be >= 1")
    N = int(N)
    if fine_layers is None:
        fine_layers = math.isqrt(N)
    center = np.array(LSHAPE_CENTER)
    t = (np.arange(N + 1) / N) ** beta

    points = []
    tris = []
    strip = []
    offset = 0
    for a, b in zip(LSHAPE_RIM[:-1], LSHAPE_RIM[1:]):
        ra = np.array(a) - center
        rb = np.array(b) - center
        # local numbering: layer k, position j -> k(k+1)/2 + j
        for k in range(N + 1):
            if k == 0:
                points.append(center.copy())
                continue
            for j in range(k + 1):
                s = j / k
                points.append(center + t[k] * ((1.0 - s) * ra + s * rb))
        for k in range(1, N + 1):
            lo = (k - 1) * k // 2 + offset
            hi = k * (k + 1) // 2 + offset
            for j in range(k):
                tris.append((lo + j, hi + j, hi + j + 1))
                strip.append(k)
            for j in range(k - 1):
                tris.append((lo + j, hi + j + 1, lo + j + 1))
                strip.append(k)
        offset += (N + 1) * (N + 2) // 2

    points = np.array(points)
    keys = np.round(points, 12)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    # np.unique on rows sorts lexicographically by (x, y)
    vertices = np.zeros_like(uniq)
    vertices[inverse] = points
    elements = inverse[np.array(tris)]
    area = element_measures(vertices, elements)
    flip = area < 0
    elements[flip] = elements[flip][:, [0, 2, 1]]
    strip = np.array(strip)
    fine = strip <= fine_layers
    dirichlet = boundary_nodes(elements)
    return _make_mesh(2, vertices, elements, fine, np.full(len(elements), float(speed)),
                      dirichlet)


def boundary_facets(elements: np.ndarray) -> np.ndarray:
    """Facets that belong to exactly one element (sorted vertex tuples)."""
    facets = _all_facets(elements)
    uniq, counts = np.unique(facets, axis=0, return_counts=True)
    return uniq[counts == 1]


def _all_facets(elements: np.ndarray) -> np.ndarray:
    nv = elements.shape[1]
    if nv == 2:
        return elements.reshape(-1, 1)
    facets = np.concatenate([elements[:, [0, 1]], elements[:, [1, 2]], elements[:, [2, 0]]])
    return np.sort(facets, axis=1)


def boundary_nodes(elements: np.ndarray) -> np.ndarray:
    return np.unique(boundary_facets(elements))


def facet_counts(mesh: Mesh) -> np.ndarray:
    """Number of elements sharing each distinct facet."""
    _, counts = np.unique(_all_facets(mesh.elements), axis=0, return_counts=True)
    return counts


@dataclass(frozen=True, eq=False)
class DofPartition:
    """Split of the free (non-Dirichlet) vertices into coarse and fine sets.

    ``free_nodes[i]`` is the mesh vertex of degree of freedom ``i``; a dof is
    fine iff its vertex touches a fine element.
    """

    free_nodes: np.ndarray
    fine_mask: np.ndarray

    def __post_init__(self):
        self.free_nodes.setflags(write=False)
        self.fine_mask.setflags(write=False)

    @property
    def n_dofs(self) -> int:
        return self.free_nodes.shape[0]

    @property
    def counts(self) -> tuple[int, int]:
        n_f = int(np.count_nonzero(self.fine_mask))
        return self.n_dofs - n_f, n_f

    @property
    def fine_index(self) -> np.ndarray:
        return np.flatnonzero(self.fine_mask)

    @property
    def coarse_index(self) -> np.ndarray:
        return np.flatnonzero(~self.fine_mask)


def partition_dofs(mesh: Mesh) -> DofPartition:
    free = np.setdiff1d(np.arange(mesh.n_vertices), mesh.dirichlet_nodes)
    touched = np.zeros(mesh.n_vertices, dtype=bool)
    touched[np.unique(mesh.elements[mesh.fine_flag])] = True
    return DofPartition(free, touched[free])


@dataclass(frozen=True)
class MeshStats:
    h_max: float
    h_c: float
    h_f: float
    quasi_uniformity_c: float
    shape_regularity: float
    ratio_p_bound: float


def element_diameters(mesh: Mesh) -> np.ndarray:
    pts = mesh.vertices[mesh.elements]
    if mesh.dim == 1:
        return pts[:, 1, 0] - pts[:, 0, 0]
    edges = np.stack([pts[:, 1] - pts[:, 0], pts[:, 2] - pts[:, 1], pts[:, 0] - pts[:, 2]], axis=1)
    return np.linalg.norm(edges, axis=2).max(axis=1)


def mesh_stats(mesh: Mesh) -> MeshStats:
    """Mesh sizes, coarse quasi-uniformity and shape regularity.

    ``ratio_p_bound`` is the smallest coarse diameter over the smallest
    diameter overall, a lower bound for a sensible step ratio ``p``.
    """
    h = element_diameters(mesh)
    coarse = ~mesh.fine_flag
    h_c = float(h[coarse].max()) if coarse.any() else 0.0
    h_f = float(h[mesh.fine_flag].max()) if mesh.fine_flag.any() else 0.0
    qu = float(h[coarse].max() / h[coarse].min()) if coarse.any() else 1.0
    ratio = float(h[coarse].min() / h.min()) if coarse.any() else 1.0
    if mesh.dim == 1:
        gamma = 1.0
    else:
        pts = mesh.vertices[mesh.elements]
        lengths = np.linalg.norm(
            np.stack([pts[:, 1] - pts[:, 0], pts[:, 2] - pts[:, 1], pts[:, 0] - pts[:, 2]], axis=1),
            axis=2,
        )
        inball = 4.0 * mesh.measures() / lengths.sum(axis=1)
        gamma = float(np.max(h / inball))
    return MeshStats(float(h.max()), h_c, h_f, qu, gamma, ratio)


def write_mesh(mesh: Mesh, path) -> None:
    """Write the plain-text mesh format (17 significant digits)."""
    lines = [f"{mesh.dim} {mesh.n_vertices} {mesh.n_elements}"]
    for v in mesh.vertices:
        lines.append(" ".join(f"{c:.17g}" for c in v))
    for el, fine, c in zip(mesh.elements, mesh.fine_flag, mesh.speed):
        lines.append(" ".join(str(int(i)) for i in el) + f" {int(fine)} {c:.17g}")
    lines.append(" ".join(str(int(i)) for i in mesh.dirichlet_nodes))
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    lines = Path(path).read_text().split("\n")
    dim, nv, ne = (int(s) for s in lines[0].split())
    verts = np.array([[float(s) for s in lines[1 + i].split()] for i in range(nv)]).reshape(nv, dim)
    rows = [lines[1 + nv + i].split() for i in range(ne)]
    elements = np.array([[int(s) for s in r[: dim + 1]] for r in rows], dtype=np.int64)
    fine = np.array([r[dim + 1] == "1" for r in rows])
    speed = np.array([float(r[dim + 2]) for r in rows])
    tail = lines[1 + nv + ne] if len(lines) > 1 + nv + ne else ""
    dirichlet = np.array([int(s) for s in tail.split()], dtype=np.int64)
    return _make_mesh(dim, verts, elements, fine, speed, dirichlet)
