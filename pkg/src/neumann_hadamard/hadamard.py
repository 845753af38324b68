"""First-order eigenvalue corrections on a reference cluster.

Three routes produce a symmetric ``J x J`` matrix whose eigenvalues predict
the shifts ``Lambda_k - Lambda_m`` of the perturbed eigenvalues:

``boundary``
    the Hadamard integral of ``h (grad phi . grad psi - Lambda phi psi)``
    along the bottom edge;
``volume``
    the nested-domain formula built from the Neumann solutions ``v_phi`` on
    the perturbed mesh, mapped to the eigenvalue scale by
    ``kappa = -lam^2 tau``;
``homogenized``
    the two-scale formula for oscillating bottoms, which adds the
    ``eta_1`` corrector term to the averaged boundary integral.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ClusterResolutionError, InputError
from .fem import AssembledPair, CellSolution, TriMesh, solve_neumann_source
from .geometry import PerturbationProfile, SpectralCluster, trace_grad_gram, trace_gram
from .linalg import dense_sym_eigen

__all__ = [
    "CorrectionMatrix",
    "CorrectionReport",
    "boundary_correction",
    "volume_correction",
    "homogenized_correction",
    "predict",
    "select_cluster",
    "kappa_from_tau",
]

_GAUSS4_X = np.array([-0.8611363115940526, -0.3399810435848563, 0.3399810435848563, 0.8611363115940526])
_GAUSS4_W = np.array([0.3478548451374538, 0.6521451548625461, 0.6521451548625461, 0.3478548451374538])


def kappa_from_tau(tau, lam):
    """Map a resolvent-scale shift ``tau = 1/mu - 1/lam`` to the eigenvalue scale."""
    return -(lam**2) * np.asarray(tau)


@dataclass(frozen=True)
class CorrectionMatrix:
    kind: str
    entries: np.ndarray
    asymmetry_defect: float
    gram: np.ndarray
    tau: np.ndarray | None = None

    def eigenvalues(self) -> np.ndarray:
        return dense_sym_eigen(self.entries).values


@dataclass(frozen=True)
class CorrectionReport:
    Lambda_m: float
    kappa_values: np.ndarray
    predicted_Lambda: np.ndarray
    fem_Lambda: np.ndarray
    remainders: np.ndarray
    d_hat: float


def _symmetrize(mat: np.ndarray) -> tuple[np.ndarray, float]:
    defect = float(np.max(np.abs(mat - mat.T))) if mat.size else 0.0
    return 0.5 * (mat + mat.T), defect


def boundary_correction(cluster: SpectralCluster, profile: PerturbationProfile) -> CorrectionMatrix:
    """Hadamard matrix ``int_0^T h (phi_i' phi_j' - Lambda phi_i phi_j)(x, 0) dx``.

    Composite 4-point Gauss on every sample interval of the profile, so kinks
    of piecewise-linear profiles never fall inside a panel.
    """
    modes = cluster.modes
    a, b = profile.x[:-1], profile.x[1:]
    half = 0.5 * (b - a)
    pts = (0.5 * (a + b))[:, None] + half[:, None] * _GAUSS4_X[None, :]
    wts = half[:, None] * _GAUSS4_W[None, :]
    h = np.interp(pts, profile.x, profile.h)
    w = (h * wts).ravel()
    pts = pts.ravel()
    tr = np.array([md.trace(pts) for md in modes])
    dtr = np.array([md.trace_dx(pts) for md in modes])
    Lam = cluster.Lambda
    mat = (dtr * w) @ dtr.T - Lam * (tr * w) @ tr.T
    mat, defect = _symmetrize(mat)
    return CorrectionMatrix("boundary", mat, defect, np.eye(len(modes)), -mat / cluster.lam**2)


def _normal_flux(mode, lam):
    def g(x, y, nx, ny):
        gx, gy = mode.grad(x, y)
        return -(nx * gx + ny * gy) / lam

    return g


def volume_solutions(cluster: SpectralCluster, mesh: TriMesh, pair: AssembledPair) -> np.ndarray:
    """Columns ``v_i``: ``(1 - Delta) v = 0`` with ``dv/dn = -lam^{-1} dphi_i/dn`` on the bottom."""
    return np.column_stack([solve_neumann_source(pair, mesh, _normal_flux(md, cluster.lam)) for md in cluster.modes])


def volume_correction(
    cluster: SpectralCluster, mesh: TriMesh, pair: AssembledPair, quadratic: bool = True
) -> CorrectionMatrix:
    """Nested-domain correction ``tau_ij = int (lam v_i v_j + v_i phi_j)`` on the perturbed mesh.

    The closed-form ``phi_j`` enter through nodal interpolation.  Returned
    ``entries`` are on the eigenvalue scale, ``kappa = -lam^2 tau``.

    Parameters
    ----------
    quadratic : bool
        Keep the ``lam v_i v_j`` term.  It is second order in the
        perturbation but can carry a large constant; ``False`` drops it.
    """
    lam = cluster.lam
    V = volume_solutions(cluster, mesh, pair)
    xy = mesh.dof_coords
    Phi = np.column_stack([md.value(xy[:, 0], xy[:, 1]) for md in cluster.modes])
    MV = pair.M @ V
    tau = MV.T @ Phi
    if quadratic:
        tau = tau + lam * (V.T @ MV)
    tau, defect = _symmetrize(tau)
    return CorrectionMatrix("volume", kappa_from_tau(tau, lam), defect, np.eye(cluster.multiplicity), tau)


def homogenized_correction(cluster: SpectralCluster, cell: CellSolution, delta: float) -> CorrectionMatrix:
    """Two-scale correction ``-delta (eta0 + eta1) G' + delta Lambda eta0 G``.

    ``G`` and ``G'`` are the closed-form trace Gram matrices of the cluster
    modes and their tangential derivatives on ``y = 0``.
    """
    if delta <= 0:
        raise InputError("delta must be positive")
    modes = cluster.modes
    G = trace_gram(modes)
    Gd = trace_grad_gram(modes)
    mat = -delta * (cell.eta0 + cell.eta1) * Gd + delta * cluster.Lambda * cell.eta0 * G
    mat, defect = _symmetrize(mat)
    return CorrectionMatrix("homogenized", mat, defect, np.eye(len(modes)), -mat / cluster.lam**2)


def select_cluster(cluster: SpectralCluster, fem_values, offset: int | None = None) -> np.ndarray:
    """The ``J`` perturbed eigenvalues belonging to the reference cluster.

    Accepts them only if exactly ``J`` values fall in the window bounded by
    the midpoints to the neighbouring reference eigenvalues and the computed
    spectrum reaches past the window.  With ``offset`` (the number of
    reference eigenvalues below the cluster, with multiplicity) a failed
    window falls back to the values at positions ``offset .. offset + J - 1``
    of the sorted spectrum, provided those exist.
    """
    vals = np.sort(np.asarray(getattr(fem_values, "values", fem_values), float))
    Lam = cluster.Lambda
    J = cluster.multiplicity
    lo = -np.inf if cluster.lam_prev is None else 0.5 * (Lam + cluster.lam_prev - 1.0)
    hi = np.inf if cluster.lam_next is None else 0.5 * (Lam + cluster.lam_next - 1.0)
    inside = vals[(vals > lo) & (vals < hi)]
    if len(inside) == J and not (np.isfinite(hi) and vals[-1] < hi):
        return inside
    if offset is not None and len(vals) > offset + J:
        return vals[offset : offset + J]
    if np.isfinite(hi) and vals[-1] < hi and len(inside) < J:
        raise ClusterResolutionError("computed spectrum stops inside the cluster window; request more modes")
    raise ClusterResolutionError(f"expected {J} eigenvalues near {Lam:.6g}, found {len(inside)} in ({lo:.6g}, {hi:.6g})")


def predict(
    cluster: SpectralCluster, corr: CorrectionMatrix, fem_truth, d_hat: float, offset: int | None = None
) -> CorrectionReport:
    """Pair predicted and computed eigenvalues in ascending order."""
    kappa = corr.eigenvalues()
    fem = select_cluster(cluster, fem_truth, offset)
    predicted = cluster.Lambda + kappa
    return CorrectionReport(cluster.Lambda, kappa, predicted, fem, np.abs(fem - predicted), float(d_hat))
