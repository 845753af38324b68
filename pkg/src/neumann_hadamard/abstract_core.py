"""Finite-dimensional model of two nearby self-adjoint operators on two subspaces.

An instance lives in ``R^N``.  ``H1`` and ``H2`` are spanned by orthonormal
column bases ``Q1`` and ``Q2``; the positive definite operators ``K1`` and
``K2`` are stored in those coordinates.  With ``S = Q2^T Q1`` (the projector
onto ``H2`` restricted to ``H1``), everything reduces to small dense matrices:

* ``B = K2 S - S K1`` maps ``H1`` coordinates to ``H2`` coordinates,
* the proximity constants are extremal eigenvalues of Gram forms,
* the cluster correction ``tau`` is the spectrum of a ``J x J`` pencil.

The eigenvalues of ``K1`` are written ``1/lam_k`` with ``lam_1 < lam_2 < ...``,
so cluster ``m = 1`` holds the largest eigenvalue of ``K1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateProjectionError, InputError
from .geometry import SpectralCluster
from .linalg import dense_pencil_eigen, dense_sym_eigen

__all__ = [
    "InstanceConfig",
    "AbstractInstance",
    "ProximityConstants",
    "TauSpectrum",
    "ClusterVerdict",
    "build_instance",
    "extract_cluster",
    "proximity_constants",
    "operator_B",
    "reduced_tau_spectrum",
    "verify_cluster",
]

GAP_TOL = 1e-9


@dataclass(frozen=True)
class InstanceConfig:
    """Parameters of the seeded instance generator.

    ``k1_spectrum`` lists the eigenvalues of ``K1`` (the ``1/lam_k``) in
    descending order; ``None`` means ``1, 1/2, ..., 1/n1``.
    """

    N: int = 12
    n1: int = 8
    n2: int = 8
    k1_spectrum: tuple | None = None
    perturbation_scale: float = 1e-3
    overlap_angle: float = 0.0

    def spectrum(self) -> np.ndarray:
        if self.k1_spectrum is None:
            return 1.0 / np.arange(1, self.n1 + 1, dtype=float)
        return np.asarray(self.k1_spectrum, dtype=float)


@dataclass(frozen=True)
class AbstractInstance:
    N: int
    basis1: np.ndarray
    basis2: np.ndarray
    K1: np.ndarray
    K2: np.ndarray
    seed: int
    pd_shift: float = 0.0
    config: InstanceConfig | None = None

    @property
    def S(self) -> np.ndarray:
        """``S : H1 -> H2`` in basis coordinates."""
        return self.basis2.T @ self.basis1


@dataclass(frozen=True)
class ProximityConstants:
    epsilon: float
    sigma: float
    epsilon_from_sigma: float
    rho: float
    eps_operator: float = 0.0
    eps_subspace: float = 0.0
    b_constant: float = math.nan


@dataclass(frozen=True)
class TauSpectrum:
    tau_values: np.ndarray
    gram_condition: float
    asymmetry: float


@dataclass(frozen=True)
class ClusterVerdict:
    mu_values: np.ndarray
    tau_values: np.ndarray
    remainders: np.ndarray
    bound_ratio: float
    count_ok: bool
    projector_residuals: np.ndarray
    constants: ProximityConstants | None = None
    window: tuple = field(default=(math.nan, math.nan))


def _givens_frame(N: int, n1: int, angles: np.ndarray) -> np.ndarray:
    g = np.eye(N)
    for i, theta in enumerate(angles):
        p, q = i, n1 + i
        c, s = math.cos(theta), math.sin(theta)
        gp, gq = g[:, p].copy(), g[:, q].copy()
        g[:, p] = c * gp + s * gq
        g[:, q] = -s * gp + c * gq
    return g


def _random_orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    return q * d


def build_instance(seed: int, config: InstanceConfig = InstanceConfig()) -> AbstractInstance:
    """Seeded instance ``(H1, H2, K1, K2)``.

    ``H1`` is spanned by the first ``n1`` canonical directions.  ``H2`` is the
    span of the first ``n2`` columns of a product of Givens rotations, each
    mixing direction ``i`` of ``H1`` with complement direction ``n1 + i`` by
    ``overlap_angle`` times a seeded factor in ``[0.5, 1]``.  ``K1 = V D V^T``
    with seeded orthogonal ``V``; ``K2 = S K1 S^T + t E`` with ``E`` seeded,
    symmetric, of unit spectral norm.  If ``K2`` fails to be positive definite
    the smallest shift ``delta I`` restoring it is added and recorded.
    """
    cfg = config
    N, n1, n2 = int(cfg.N), int(cfg.n1), int(cfg.n2)
    if not (1 <= n1 <= N and 1 <= n2 <= N):
        raise InputError(f"need 1 <= n1, n2 <= N, got N={N}, n1={n1}, n2={n2}")
    d = cfg.spectrum()
    if d.shape != (n1,):
        raise InputError(f"k1_spectrum must have n1={n1} entries, got {d.size}")
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise InputError("k1_spectrum must be positive")
    if np.any(np.diff(d) > 0):
        raise InputError("k1_spectrum must be listed in descending order")
    t = float(cfg.perturbation_scale)
    rng = np.random.default_rng(seed)
    n_rot = min(n1, N - n1)
    factors = rng.uniform(0.5, 1.0, size=n_rot)
    frame = _givens_frame(N, n1, cfg.overlap_angle * factors)
    Q1 = np.eye(N)[:, :n1]
    Q2 = frame[:, :n2]
    V = _random_orthogonal(rng, n1)
    K1 = (V * d) @ V.T
    K1 = 0.5 * (K1 + K1.T)
    E = rng.standard_normal((n2, n2))
    E = E + E.T
    E /= np.max(np.abs(dense_sym_eigen(E).values))
    S = Q2.T @ Q1
    K2 = S @ K1 @ S.T + t * E
    K2 = 0.5 * (K2 + K2.T)
    low = dense_sym_eigen(K2).values[0]
    shift = 0.0
    if low <= 0.0:
        # smallest shift that leaves a margin of the K1 floor scale
        shift = -low + 1e-3 * d[-1]
        K2 = K2 + shift * np.eye(n2)
    return AbstractInstance(N, Q1, Q2, K1, K2, int(seed), shift, cfg)


def _distinct_groups(values_desc: np.ndarray, gap_tol: float) -> list[list[int]]:
    groups: list[list[int]] = []
    for i, v in enumerate(values_desc):
        if groups and abs(values_desc[groups[-1][0]] - v) <= gap_tol * (1.0 + abs(v)):
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def _k1_structure(inst: AbstractInstance, gap_tol: float = GAP_TOL):
    pairs = dense_sym_eigen(inst.K1)
    vals = pairs.values[::-1]
    vecs = pairs.vectors[:, ::-1]
    return vals, vecs, _distinct_groups(vals, gap_tol)


def extract_cluster(inst: AbstractInstance, m: int, gap_tol: float = GAP_TOL) -> SpectralCluster:
    """The ``m``-th distinct eigenvalue of ``K1`` (counted from the largest)."""
    vals, vecs, groups = _k1_structure(inst, gap_tol)
    if not 1 <= m <= len(groups):
        raise InputError(f"cluster index m={m} outside 1..{len(groups)}")
    g = groups[m - 1]
    lam = 1.0 / float(np.mean(vals[g]))
    prev = 1.0 / float(np.mean(vals[groups[m - 2]])) if m >= 2 else None
    nxt = 1.0 / float(np.mean(vals[groups[m]])) if m < len(groups) else None
    return SpectralCluster(m, lam, vecs[:, g].copy(), prev, nxt)


def _sum_space(inst: AbstractInstance, cluster: SpectralCluster):
    vals, vecs, groups = _k1_structure(inst)
    idx = [i for g in groups[: cluster.index] for i in g]
    lams = [1.0 / float(np.mean(vals[g])) for g in groups[: cluster.index]]
    return vecs[:, idx], np.array(lams)


def operator_B(inst: AbstractInstance) -> np.ndarray:
    """Matrix of ``B = K2 S - S K1`` from ``H1`` to ``H2`` coordinates."""
    S = inst.S
    return inst.K2 @ S - S @ inst.K1


def _top(a: np.ndarray) -> float:
    if a.size == 0:
        return 0.0
    return float(max(dense_sym_eigen(0.5 * (a + a.T)).values[-1], 0.0))


def proximity_constants(inst: AbstractInstance, cluster: SpectralCluster) -> ProximityConstants:
    """Sharp ``epsilon``, ``sigma``, the ``sigma``-based bound for ``epsilon``, and ``rho``.

    Every constant is the largest eigenvalue of a symmetric Gram form, so it
    is the smallest value for which the defining inequality holds.
    """
    S = inst.S
    D = inst.K2 - S @ inst.K1 @ S.T
    eps_op = _top(D.T @ D)
    Xsum, lams = _sum_space(inst, cluster)
    Q1, Q2 = inst.basis1, inst.basis2
    # ambient residual of the orthogonal projection onto H2; avoids the cancellation in I - (SX)^T SX
    amb_x = Q1 @ Xsum
    resid = amb_x - Q2 @ (Q2.T @ amb_x)
    eps_sub = _top(resid.T @ resid)
    eps = max(eps_op, eps_sub)

    amb = Q2 @ inst.K2 @ Q2.T - Q1 @ inst.K1 @ Q1.T
    sigma = _top(amb.T @ amb)
    eps_sigma = sigma * max(1.0, 4.0 * float(np.sum(lams**2)))

    lam = cluster.lam
    BX = operator_B(inst) @ cluster.basis
    KBX = inst.K2 @ BX
    bb = BX.T @ BX
    rho = _top(lam * (KBX.T @ KBX) + eps * lam * bb)
    b_const = _top(bb) / eps if eps > 0 else math.nan
    return ProximityConstants(eps, sigma, eps_sigma, rho, eps_op, eps_sub, b_const)


def reduced_tau_spectrum(inst: AbstractInstance, cluster: SpectralCluster) -> TauSpectrum:
    """Eigenvalues of ``tau <S phi, S psi> = lam <B phi, K2 S psi>`` on the cluster.

    Raises
    ------
    DegenerateProjectionError
        If the projected basis ``S X_m`` is numerically rank deficient.
    """
    X = cluster.basis
    SX = inst.S @ X
    BX = operator_B(inst) @ X
    G = SX.T @ SX
    R = cluster.lam * (BX.T @ (inst.K2 @ SX))
    asym = float(np.max(np.abs(R - R.T))) if R.size else 0.0
    R = 0.5 * (R + R.T)
    g_vals = dense_sym_eigen(G).values
    if g_vals[0] <= 1e-12 * max(g_vals[-1], 1.0):
        raise DegenerateProjectionError(f"projected cluster basis is degenerate (smallest Gram eigenvalue {g_vals[0]:.3e})")
    tau = dense_pencil_eigen(R, G).values
    return TauSpectrum(tau, float(g_vals[-1] / g_vals[0]), asym)


def _window(cluster: SpectralCluster) -> tuple[float, float]:
    # resolvent scale: the cluster sits at 1/lam, neighbours at 1/lam_prev (above) and 1/lam_next (below)
    c = 1.0 / cluster.lam
    up = None if cluster.lam_prev is None else 1.0 / cluster.lam_prev
    down = None if cluster.lam_next is None else 1.0 / cluster.lam_next
    if up is None and down is None:
        return -math.inf, math.inf
    if up is None:
        up = c + (c - down)
    if down is None:
        down = c - (up - c)
    return 0.5 * (c + down), 0.5 * (c + up)


def verify_cluster(inst: AbstractInstance, cluster: SpectralCluster) -> ClusterVerdict:
    """Compare the exact eigenvalues of ``K2`` near ``1/lam_m`` with ``1/lam_m + tau_k``.

    Counting uses the open window between the midpoints to the neighbouring
    eigenvalues of ``K1``.  When the count is wrong no pairing is attempted and
    the remainders are NaN.
    """
    J = cluster.multiplicity
    const = proximity_constants(inst, cluster)
    lo, hi = _window(cluster)
    k2 = dense_sym_eigen(inst.K2)
    inside = np.flatnonzero((k2.values > lo) & (k2.values < hi))
    count_ok = len(inside) == J
    nan = np.full(J, np.nan)
    if not count_ok:
        return ClusterVerdict(nan, nan, nan, math.nan, False, nan, const, (lo, hi))
    tau = reduced_tau_spectrum(inst, cluster).tau_values
    mu_inv = k2.values[inside]
    shift = np.sort(mu_inv - 1.0 / cluster.lam)
    rem = np.abs(shift - tau)
    denom = const.rho + np.abs(tau) * const.epsilon
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(denom > 0, rem / np.where(denom > 0, denom, 1.0), np.where(rem > 0, np.inf, 0.0))
    U = k2.vectors[:, inside]
    q, _ = np.linalg.qr(inst.S @ cluster.basis)
    resid = np.linalg.norm(U - q @ (q.T @ U), axis=0) / np.linalg.norm(U, axis=0)
    mu = 1.0 / (1.0 / cluster.lam + shift)
    return ClusterVerdict(mu, tau, rem, float(np.max(ratios)), True, resid, const, (lo, hi))
