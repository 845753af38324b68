"""P1 finite elements on rectangles with a raised bottom edge.

Meshes are structured: column ``i`` sits at ``x_i = i T / n_x`` and its
vertices are spread between the bottom ``b(x_i) = -h(x_i)`` and the top ``R``.
Every quad is split along the same diagonal.  With periodic ``x`` the last
column is identified with the first one through ``dof_map``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateDomainError, InputError
from .geometry import PeriodicShape, PerturbationProfile, RectangleSpec, profile_eval
from .linalg import EigenPairs, SPDFactor, SparseSymMatrix, generalized_lowest_modes

__all__ = [
    "TriMesh",
    "AssembledPair",
    "CellSolution",
    "build_mesh",
    "graded_levels",
    "layer_levels",
    "assemble",
    "eigen_lowest",
    "boundary_load",
    "solve_neumann_source",
    "solve_cell_problem",
    "write_mesh",
]

_GAUSS2 = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    bottom_edges: np.ndarray
    dof_map: np.ndarray
    n_x: int
    n_y: int
    periodic: bool
    spec: RectangleSpec
    profile: PerturbationProfile | None = field(default=None, repr=False)

    @property
    def n_dof(self) -> int:
        return int(self.dof_map.max()) + 1

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def dof_coords(self) -> np.ndarray:
        """Coordinates of one representative vertex per degree of freedom."""
        _, first = np.unique(self.dof_map, return_index=True)
        return self.vertices[first]

    @property
    def bottom_vertices(self) -> np.ndarray:
        return np.append(self.bottom_edges[:, 0], self.bottom_edges[-1, 1])

    def expected_area(self) -> float:
        """Area below ``R`` and above the polyline through the bottom vertices."""
        p = self.vertices[self.bottom_vertices]
        return float(np.sum(np.diff(p[:, 0]) * (self.spec.R - 0.5 * (p[1:, 1] + p[:-1, 1]))))


def graded_levels(n_y: int, first: float | None = None) -> np.ndarray:
    """Normalized vertical levels in ``[0, 1]``.

    Uniform unless ``first`` is given; then the levels grow geometrically
    from a first cell of relative height ``first``.
    """
    if n_y < 2:
        raise InputError("n_y must be >= 2")
    if first is None or first * n_y >= 1.0:
        return np.linspace(0.0, 1.0, n_y + 1)
    lo, hi = 1.0, 2.0
    while first * (hi**n_y - 1) / (hi - 1) < 1.0:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if first * (mid**n_y - 1) / (mid - 1) < 1.0:
            lo = mid
        else:
            hi = mid
    q = 0.5 * (lo + hi)
    s = np.concatenate([[0.0], np.cumsum(first * q ** np.arange(n_y))])
    return s / s[-1]


def layer_levels(first: float, coarsest: float, growth: float = 1.1) -> np.ndarray:
    """Normalized levels refined toward ``s = 0``.

    Cells start at relative height ``first``, grow by ``growth`` per level
    until they reach ``coarsest`` and stay uniform after that.
    """
    if not 0 < first <= coarsest < 1 or growth < 1:
        raise InputError("need 0 < first <= coarsest < 1 and growth >= 1")
    steps = [first]
    while steps[-1] * growth < coarsest and sum(steps) < 1.0:
        steps.append(steps[-1] * growth)
    rest = 1.0 - sum(steps)
    if rest > 0:
        n_rest = max(1, math.ceil(rest / coarsest))
        steps += [rest / n_rest] * n_rest
    s = np.concatenate([[0.0], np.cumsum(steps)])
    return s / s[-1]


def build_mesh(
    spec: RectangleSpec,
    profile: PerturbationProfile | None,
    n_x: int,
    n_y: int,
    levels: np.ndarray | None = None,
    blend: float | None = None,
) -> TriMesh:
    """Structured triangulation of ``{b(x) < y < R}``.

    Parameters
    ----------
    spec : RectangleSpec
    profile : PerturbationProfile or None
        ``None`` means the unperturbed rectangle.
    n_x, n_y : int
        Cells in each direction.
    levels : array, optional
        ``n_y + 1`` increasing values from 0 to 1; vertex ``j`` of a column
        sits at ``b + (R - b) * levels[j]``.  Defaults to uniform spacing.
    blend : float, optional
        Confine the bottom displacement to ``0 <= y < blend``: vertex ``j``
        sits at ``Y + b (1 - Y / blend)^2`` with ``Y = R levels[j]`` below
        ``blend`` and at ``Y`` above.  Rows above ``blend`` then coincide with
        those of the unperturbed mesh.  Needs ``blend >= 2 max b``.
    """
    if n_x < 2 or n_y < 2:
        raise InputError("n_x and n_y must be >= 2")
    s = np.linspace(0.0, 1.0, n_y + 1) if levels is None else np.asarray(levels, float)
    if s.shape != (n_y + 1,) or s[0] != 0.0 or s[-1] != 1.0 or np.any(np.diff(s) <= 0):
        raise InputError("levels must increase strictly from 0 to 1 with n_y + 1 entries")
    if profile is not None and abs(profile.T - spec.T) > 1e-12 * spec.T:
        raise InputError("profile width does not match the rectangle")
    x = np.linspace(0.0, spec.T, n_x + 1)
    if profile is None:
        b = np.zeros_like(x)
    else:
        if profile.depth >= spec.R:
            raise DegenerateDomainError(f"depth {profile.depth} reaches the top edge R = {spec.R}")
        if profile.kind == "oscillation":
            N = profile.params["N"]
            if n_x % N or n_x // N < 16:
                raise InputError(f"oscillation mesh needs n_x a multiple of N*p with p >= 16 (N={N})")
        kinks = profile.breakpoints
        on_grid = np.abs(kinks * n_x / spec.T - np.round(kinks * n_x / spec.T))
        if profile.kind == "oscillation" and np.any(on_grid > 1e-9):
            raise InputError("profile breakpoints must be mesh vertices")
        b = -np.asarray(profile_eval(profile, x)[0])
    if spec.periodic and abs(b[0] - b[-1]) > 1e-12:
        raise InputError("periodic mesh needs b(0) = b(T)")
    if blend is None:
        Y = b[None, :] + (spec.R - b)[None, :] * s[:, None]
    else:
        if not 0 < blend <= spec.R or 2.0 * b.max() > blend:
            raise InputError(f"blend height {blend} must lie in (2 max b, R]")
        Y0 = spec.R * s[:, None]
        chi = np.clip(1.0 - Y0 / blend, 0.0, None) ** 2
        Y = Y0 + b[None, :] * chi
    X = np.broadcast_to(x[None, :], Y.shape)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    nc = n_x + 1
    jj, ii = np.meshgrid(np.arange(n_y), np.arange(n_x), indexing="ij")
    v00 = (jj * nc + ii).ravel()
    v10 = v00 + 1
    v11 = v00 + nc + 1
    v01 = v00 + nc
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * len(v00), 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper
    bottom = np.column_stack([np.arange(n_x), np.arange(1, n_x + 1)])

    if spec.periodic:
        row = np.arange(nc)
        row[-1] = 0
        dof_map = (np.arange(n_y + 1)[:, None] * n_x + row[None, :]).ravel()
    else:
        dof_map = np.arange(vertices.shape[0])
    mesh = TriMesh(vertices, triangles, bottom, dof_map, n_x, n_y, spec.periodic, spec, profile)
    if np.any(mesh.areas <= 0):
        raise DegenerateDomainError("mesh has non-positive triangle areas")
    return mesh


def write_mesh(path, mesh: TriMesh) -> None:
    """Dump vertices and triangles as plain text for external viewers."""
    out = [f"vertices {len(mesh.vertices)}"]
    out += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    out.append(f"triangles {len(mesh.triangles)}")
    out += [f"{a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    Path(path).write_text("\n".join(out) + "\n")


@dataclass(frozen=True, eq=False)
class AssembledPair:
    """Stiffness ``K``, mass ``M`` and ``A = K + M`` (the form of ``1 - Delta``)."""

    A: SparseSymMatrix
    M: SparseSymMatrix
    K: SparseSymMatrix

    @cached_property
    def factor(self) -> SPDFactor:
        return SPDFactor(self.A)


def _local_matrices(mesh: TriMesh):
    p = mesh.vertices[mesh.triangles]
    area = mesh.areas
    # gradients of barycentric coordinates: rotate opposite edges
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    grads = np.stack([-e[..., 1], e[..., 0]], axis=-1) / (2.0 * area[:, None, None])
    k_loc = area[:, None, None] * np.einsum("tik,tjk->tij", grads, grads)
    m_ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    m_loc = area[:, None, None] * m_ref[None]
    return k_loc, m_loc


def _scatter(mesh: TriMesh, local: np.ndarray) -> sp.csr_matrix:
    dofs = mesh.dof_map[mesh.triangles]
    rows = np.repeat(dofs, 3, axis=1).ravel()
    cols = np.tile(dofs, (1, 3)).ravel()
    n = mesh.n_dof
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble(mesh: TriMesh) -> AssembledPair:
    """Exact P1 stiffness and mass matrices; Neumann conditions are natural."""
    k_loc, m_loc = _local_matrices(mesh)
    K = _scatter(mesh, k_loc)
    M = _scatter(mesh, m_loc)
    A = (K + M).tocsr()
    return AssembledPair(SparseSymMatrix.from_full(A), SparseSymMatrix.from_full(M), SparseSymMatrix.from_full(K))


def eigen_lowest(pair: AssembledPair, n_modes: int, tol: float = 1e-10) -> EigenPairs:
    """Lowest Neumann eigenvalues ``Lambda`` of ``K v = Lambda M v``.

    Computed as ``A v = (Lambda + 1) M v`` so that the operator is definite.
    """
    pairs = generalized_lowest_modes(pair.A, pair.M, n_modes, tol=tol, factor=pair.factor)
    return EigenPairs(pairs.values - 1.0, pairs.vectors, gram="mass")


def _bottom_geometry(mesh: TriMesh):
    ends = mesh.vertices[mesh.bottom_edges]
    tangent = ends[:, 1] - ends[:, 0]
    length = np.hypot(tangent[:, 0], tangent[:, 1])
    # outward normal of a bottom edge traversed left to right
    normal = np.column_stack([tangent[:, 1], -tangent[:, 0]]) / length[:, None]
    return ends, length, normal


def boundary_load(mesh: TriMesh, flux_g: Callable) -> np.ndarray:
    """``l_i = int g psi_i dS`` over the bottom chain, two Gauss points per edge.

    ``flux_g(x, y, n_x, n_y)`` receives quadrature points and the outward unit
    normal of the edge they lie on.
    """
    ends, length, normal = _bottom_geometry(mesh)
    load = np.zeros(mesh.n_dof)
    dofs = mesh.dof_map[mesh.bottom_edges]
    for t in _GAUSS2:
        pts = (1 - t) * ends[:, 0] + t * ends[:, 1]
        g = np.asarray(flux_g(pts[:, 0], pts[:, 1], normal[:, 0], normal[:, 1]), float)
        w = 0.5 * length * g
        np.add.at(load, dofs[:, 0], w * (1 - t))
        np.add.at(load, dofs[:, 1], w * t)
    return load


def solve_neumann_source(pair: AssembledPair, mesh: TriMesh, flux_g: Callable) -> np.ndarray:
    """Solve ``(1 - Delta) u = 0`` with ``du/dn = g`` on the bottom chain, zero flux elsewhere."""
    load = boundary_load(mesh, flux_g)
    if not np.any(load):
        return np.zeros_like(load)
    return pair.factor.solve(load)


@dataclass(frozen=True, eq=False)
class CellSolution:
    """Periodic harmonic corrector ``V`` above one period of ``eta``.

    ``V`` is stored in the zero-mean gauge.  ``eta1`` is the boundary
    integral of ``V eta'`` and ``energy`` the Dirichlet integral of ``V``;
    the two agree by Green's formula.  ``decay_ratio`` compares the
    oscillation of ``V`` on ``Y in [L/2, L]`` to that on ``[L/4, L/2]``.
    """

    eta0: float
    eta1: float
    V: np.ndarray
    L: float
    decay_ratio: float
    energy: float
    mesh: TriMesh = field(repr=False)
    truncation_warning: bool = False
    neumann_data: str = "eta'/sqrt(1+eta'^2)"


def solve_cell_problem(eta: PeriodicShape, L: float | None = None, n_x: int = 64, n_y: int = 192,
                       levels: np.ndarray | None = None) -> CellSolution:
    """Solve the periodic cell problem on the strip truncated at ``Y = L``.

    ``-Delta V = 0`` for ``eta(X) < Y < L``, periodic in ``X``, with
    ``dV/dn = eta' / sqrt(1 + eta'^2)`` on ``Y = eta(X)`` and zero flux at
    ``Y = L``.  The singular Neumann system is solved with one node pinned
    and the result shifted to zero mean.
    """
    if L is None:
        L = 3.0 * (1.0 + eta.max)
    if L < 4.0 * eta.max or L <= eta.max:
        raise InputError(f"truncation height L={L} must be at least 4 max(eta)")
    spec = RectangleSpec(1.0, L, "periodic")
    profile = PerturbationProfile.oscillation(1.0, eta, 1.0) if not eta.is_constant else None
    if eta.is_constant:
        # a flat bottom: shift the strip so the mesh starts at Y = eta
        profile = PerturbationProfile.uniform_shift(1.0, eta.values[0], samples=n_x) if eta.values[0] > 0 else None
    mesh = _cell_mesh(spec, profile, eta, n_x, n_y, levels)
    k_loc, m_loc = _local_matrices(mesh)
    K = _scatter(mesh, k_loc)
    M = _scatter(mesh, m_loc)

    def data(x, y, nx, ny):
        s = eta.slope(x) if not eta.is_constant else np.zeros_like(x)
        return s / np.sqrt(1.0 + s * s)

    load = boundary_load(mesh, data)
    # the edge slope equals eta' on aligned meshes, so the load integrates eta' exactly
    defect = abs(load.sum())
    if defect > 1e-10:
        raise InputError(f"Neumann data violates the compatibility condition (|int G dS| = {defect:.2e})")
    load = load - load.mean()
    V = np.zeros(mesh.n_dof)
    if np.any(load):
        keep = np.arange(1, mesh.n_dof)
        Kr = K[keep][:, keep]
        V[keep] = SPDFactor(Kr).solve(load[keep])
    mass = np.asarray(M.sum(axis=1)).ravel()
    V = V - (mass @ V) / mass.sum()
    eta1 = float(V @ load)
    energy = float(V @ (K @ V))
    ratio = _decay_ratio(mesh, V, L)
    warn = bool(ratio > math.exp(-math.pi * L / 4.0))
    return CellSolution(eta.mean, eta1, V, L, ratio, energy, mesh, warn)


def _cell_mesh(spec, profile, eta, n_x, n_y, levels):
    if profile is not None and profile.kind == "oscillation" and n_x < 16:
        raise InputError("cell mesh needs at least 16 cells per period")
    if profile is not None and profile.kind == "oscillation":
        X = eta.nodes * n_x
        if np.any(np.abs(X - np.round(X)) > 1e-9):
            raise InputError("eta breakpoints must fall on mesh columns")
    return build_mesh(spec, profile, n_x, n_y, levels)


def _decay_ratio(mesh: TriMesh, V: np.ndarray, L: float) -> float:
    y = mesh.dof_coords[:, 1]
    top = np.isclose(y, L)
    osc = np.abs(V - V[top].mean())
    upper = osc[(y >= L / 2) & (y <= L)]
    lower = osc[(y >= L / 4) & (y <= L / 2)]
    if lower.size == 0 or lower.max() == 0.0:
        return 0.0
    return float(upper.max() / lower.max())
