"""Reference rectangles, their closed-form Neumann spectra, and bottom-edge perturbations.

The reference domain is ``0 < x < T, 0 < y < R`` with Neumann conditions on
the top and bottom edges and either Neumann or periodic conditions in ``x``.
A perturbed domain keeps the top and lateral edges and raises the bottom edge
to ``y = b(x) = -h(x) >= 0``; ``h`` is the signed normal displacement of the
bottom edge (negative means the domain shrinks).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import InputError

__all__ = [
    "RectangleSpec",
    "ReferenceMode",
    "SpectralCluster",
    "PeriodicShape",
    "PerturbationProfile",
    "reference_spectrum",
    "cluster_at",
    "profile_eval",
    "distance_proxy",
    "trace_gram",
    "trace_grad_gram",
    "sawtooth",
    "read_profile",
    "write_profile",
]

DEFAULT_SAMPLES = 4096


@dataclass(frozen=True)
class RectangleSpec:
    T: float = 1.0
    R: float = 1.0
    bc_x: str = "neumann"

    def __post_init__(self):
        if not (math.isfinite(self.T) and math.isfinite(self.R) and self.T > 0 and self.R > 0):
            raise InputError(f"rectangle sides must be finite and positive, got T={self.T}, R={self.R}")
        if self.bc_x not in ("neumann", "periodic"):
            raise InputError(f"bc_x must be 'neumann' or 'periodic', got {self.bc_x!r}")

    @property
    def periodic(self) -> bool:
        return self.bc_x == "periodic"


@dataclass(frozen=True)
class ReferenceMode:
    """Separable L2-normalized Neumann eigenfunction of the reference rectangle.

    ``phi(x, y) = X_j(x) Y_k(y)`` with ``Y_k = c cos(pi k y / R)`` and
    ``X_j`` a cosine (or, for periodic ``x``, a sine) of frequency ``omega``.
    """

    j: int
    k: int
    parity: str
    spec: RectangleSpec

    def __post_init__(self):
        if self.j < 0 or self.k < 0:
            raise InputError("mode indices must be nonnegative")
        if self.parity not in ("cos", "sin"):
            raise InputError(f"parity must be 'cos' or 'sin', got {self.parity!r}")
        if self.parity == "sin" and (not self.spec.periodic or self.j == 0):
            raise InputError("sine modes exist only for periodic x with j >= 1")

    @property
    def omega(self) -> float:
        factor = 2.0 if self.spec.periodic else 1.0
        return factor * math.pi * self.j / self.spec.T

    @property
    def kappa_y(self) -> float:
        return math.pi * self.k / self.spec.R

    @property
    def Lambda(self) -> float:
        return self.omega**2 + self.kappa_y**2

    @property
    def cx(self) -> float:
        return math.sqrt((1.0 if self.j == 0 else 2.0) / self.spec.T)

    @property
    def cy(self) -> float:
        return math.sqrt((1.0 if self.k == 0 else 2.0) / self.spec.R)

    def _x_parts(self, x):
        w = self.omega
        if self.parity == "cos":
            return self.cx * np.cos(w * x), -self.cx * w * np.sin(w * x), -(w**2) * self.cx * np.cos(w * x)
        return self.cx * np.sin(w * x), self.cx * w * np.cos(w * x), -(w**2) * self.cx * np.sin(w * x)

    def _y_parts(self, y):
        q = self.kappa_y
        return self.cy * np.cos(q * y), -self.cy * q * np.sin(q * y), -(q**2) * self.cy * np.cos(q * y)

    def value(self, x, y):
        return self._x_parts(np.asarray(x, float))[0] * self._y_parts(np.asarray(y, float))[0]

    def grad(self, x, y):
        """Return ``(phi_x, phi_y)`` at the given points."""
        X, dX, _ = self._x_parts(np.asarray(x, float))
        Y, dY, _ = self._y_parts(np.asarray(y, float))
        return dX * Y, X * dY

    def laplacian(self, x, y):
        X, _, d2X = self._x_parts(np.asarray(x, float))
        Y, _, d2Y = self._y_parts(np.asarray(y, float))
        return d2X * Y + X * d2Y

    def trace(self, x):
        """``phi(x, 0)``."""
        return self.value(x, 0.0)

    def trace_dx(self, x):
        """``d/dx phi(x, 0)``; equals the full gradient there since ``phi_y(x, 0) = 0``."""
        return self._x_parts(np.asarray(x, float))[1] * self.cy

    @property
    def trace_sq_integral(self) -> float:
        """Closed form of the integral of ``phi(x, 0)^2`` over ``[0, T]``."""
        return self.cy**2

    @property
    def trace_dx_sq_integral(self) -> float:
        return self.cy**2 * self.omega**2

    def label(self) -> str:
        tag = f"({self.j},{self.k})"
        return tag if self.parity == "cos" else tag + "s"


def trace_gram(modes: Sequence[ReferenceMode]) -> np.ndarray:
    """Closed-form matrix of the integrals of ``phi_i(x, 0) phi_j(x, 0)`` over ``[0, T]``."""
    n = len(modes)
    out = np.zeros((n, n))
    for a, ma in enumerate(modes):
        for b, mb in enumerate(modes):
            if ma.j == mb.j and ma.parity == mb.parity:
                out[a, b] = ma.cy * mb.cy
    return out


def trace_grad_gram(modes: Sequence[ReferenceMode]) -> np.ndarray:
    """Closed-form matrix of the integrals of ``phi_i'(x, 0) phi_j'(x, 0)`` over ``[0, T]``."""
    n = len(modes)
    out = np.zeros((n, n))
    for a, ma in enumerate(modes):
        for b, mb in enumerate(modes):
            if ma.j == mb.j and ma.parity == mb.parity:
                out[a, b] = ma.cy * mb.cy * ma.omega**2
    return out


@dataclass(frozen=True)
class SpectralCluster:
    """One eigenvalue of the reference operator together with an orthonormal eigenbasis.

    ``lam`` is the eigenvalue of ``1 - Delta`` (so the resolvent eigenvalue is
    ``1/lam`` and the Laplacian eigenvalue is ``lam - 1``).  ``basis`` is
    either a coordinate matrix with orthonormal columns or a tuple of
    closed-form :class:`ReferenceMode` objects.  ``lam_prev``/``lam_next`` are
    the neighbouring distinct eigenvalues; ``None`` stands for "no neighbour"
    (for ``m = 1`` the gap below is infinite).
    """

    index: int
    lam: float
    basis: object
    lam_prev: float | None = None
    lam_next: float | None = None

    @property
    def multiplicity(self) -> int:
        if isinstance(self.basis, np.ndarray):
            return self.basis.shape[1]
        return len(self.basis)

    @property
    def Lambda(self) -> float:
        return self.lam - 1.0

    @property
    def modes(self) -> tuple:
        if isinstance(self.basis, np.ndarray):
            raise TypeError("cluster holds coordinate vectors, not closed-form modes")
        return tuple(self.basis)


def reference_spectrum(spec: RectangleSpec, count: int) -> list[ReferenceMode]:
    """The ``count`` smallest Neumann eigenpairs of the rectangle, with multiplicity.

    Ties are ordered by smaller ``k`` first, then cosine before sine.
    """
    if count < 1:
        raise InputError("count must be >= 1")
    modes = []
    for j in range(count + 1):
        for k in range(count + 1):
            modes.append(ReferenceMode(j, k, "cos", spec))
            if spec.periodic and j >= 1:
                modes.append(ReferenceMode(j, k, "sin", spec))
    scale = max(1.0, max(m.Lambda for m in modes))

    def key(m):
        return (round(m.Lambda / scale, 11), m.k, m.parity != "cos", m.j)

    modes.sort(key=key)
    return modes[:count]


def _group(values: Sequence[float], gap_tol: float) -> list[list[int]]:
    groups: list[list[int]] = []
    for i, v in enumerate(values):
        if groups and abs(v - values[groups[-1][0]]) <= gap_tol * (1.0 + abs(v)):
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def cluster_at(modes: Sequence[ReferenceMode], m: int, gap_tol: float = 1e-9) -> SpectralCluster:
    """The ``m``-th distinct eigenvalue (``m = 1`` is ``Lambda = 0``) as a cluster.

    The mode list must extend past the cluster so that its multiplicity and
    upper neighbour are known.
    """
    if m < 1:
        raise InputError("cluster index m starts at 1")
    lams = [md.Lambda for md in modes]
    groups = _group(lams, gap_tol)
    if len(groups) <= m:
        raise InputError(f"need modes beyond cluster {m}; only {len(groups)} distinct values present")
    members = groups[m - 1]
    lam = lams[members[0]] + 1.0
    prev = lams[groups[m - 2][0]] + 1.0 if m >= 2 else None
    nxt = lams[groups[m][0]] + 1.0
    return SpectralCluster(m, lam, tuple(modes[i] for i in members), prev, nxt)


@dataclass(frozen=True)
class PeriodicShape:
    """A nonnegative 1-periodic piecewise-linear function ``eta`` on ``[0, 1]``."""

    nodes: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.nodes, float)
        v = np.asarray(self.values, float)
        object.__setattr__(self, "nodes", x)
        object.__setattr__(self, "values", v)
        if x.ndim != 1 or x.shape != v.shape or len(x) < 2:
            raise InputError("eta needs matching 1-D node and value arrays")
        if abs(x[0]) > 1e-14 or abs(x[-1] - 1.0) > 1e-14 or np.any(np.diff(x) <= 0):
            raise InputError("eta nodes must increase strictly from 0 to 1")
        if abs(v[0] - v[-1]) > 1e-14:
            raise InputError("eta must be periodic: eta(0) = eta(1)")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise InputError("eta must be finite and nonnegative")

    def value(self, X):
        return np.interp(np.mod(X, 1.0), self.nodes, self.values)

    def slope(self, X):
        Xm = np.mod(np.asarray(X, float), 1.0)
        seg = np.clip(np.searchsorted(self.nodes, Xm, side="right") - 1, 0, len(self.nodes) - 2)
        return self.slopes[seg]

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.nodes)

    @property
    def mean(self) -> float:
        """``eta_0``: exact integral over one period."""
        return float(np.sum(0.5 * (self.values[1:] + self.values[:-1]) * np.diff(self.nodes)))

    @property
    def max(self) -> float:
        return float(self.values.max())

    @property
    def lipschitz(self) -> float:
        return float(np.abs(self.slopes).max())

    @property
    def is_constant(self) -> bool:
        return bool(np.all(self.values == self.values[0]))


def sawtooth(amplitude: float = 1.0) -> PeriodicShape:
    """``eta(X) = 2 a X`` on ``[0, 1/2]`` and ``2 a (1 - X)`` on ``[1/2, 1]``."""
    return PeriodicShape(np.array([0.0, 0.5, 1.0]), np.array([0.0, amplitude, 0.0]))


@dataclass(frozen=True)
class PerturbationProfile:
    """Signed bottom-edge displacement ``h <= 0`` sampled on ``[0, T]``.

    Samples are nodes of a piecewise-linear interpolant.  ``params`` keeps the
    family parameters (``c``, ``d``, ``delta``/``eta``) when known.
    """

    kind: str
    T: float
    x: np.ndarray
    h: np.ndarray
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        x = np.asarray(self.x, float)
        h = np.asarray(self.h, float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "h", h)
        if self.kind not in ("uniform_shift", "smooth", "oscillation", "samples"):
            raise InputError(f"unknown profile kind {self.kind!r}")
        if x.ndim != 1 or x.shape != h.shape or len(x) < 2:
            raise InputError("profile needs matching 1-D sample arrays")
        if abs(x[0]) > 1e-12 or abs(x[-1] - self.T) > 1e-12 * max(1.0, self.T) or np.any(np.diff(x) <= 0):
            raise InputError("profile nodes must increase strictly from 0 to T")
        if not np.all(np.isfinite(h)):
            raise InputError("profile values must be finite")
        if np.any(h > 0):
            raise InputError("profile must satisfy h <= 0 (nested perturbation, bottom edge raised)")

    @classmethod
    def uniform_shift(cls, T: float, c: float, samples: int = DEFAULT_SAMPLES):
        if c < 0:
            raise InputError("uniform shift depth must be nonnegative")
        x = np.linspace(0.0, T, samples + 1)
        return cls("uniform_shift", T, x, np.full_like(x, -float(c)), {"c": float(c)})

    @classmethod
    def smooth(cls, T: float, g: Callable, d: float, samples: int = DEFAULT_SAMPLES):
        """``h = -d g(x)`` with ``g >= 0`` sampled on a uniform grid."""
        if d < 0:
            raise InputError("amplitude d must be nonnegative")
        x = np.linspace(0.0, T, samples + 1)
        gv = np.asarray(g(x), float)
        if np.any(gv < 0):
            raise InputError("smooth profile shape g must be nonnegative")
        return cls("smooth", T, x, -d * gv, {"d": float(d)})

    @classmethod
    def oscillation(cls, T: float, eta: PeriodicShape, delta: float, refine: int = 8):
        """``h(x) = -delta * eta(x / delta)``; ``T / delta`` must be an integer.

        Every breakpoint of ``eta`` is a sample node, and each linear piece is
        split into ``refine`` sub-intervals.
        """
        n_periods = T / delta
        N = int(round(n_periods))
        if delta <= 0 or N < 1 or abs(n_periods - N) > 1e-9 * n_periods:
            raise InputError(f"T / delta must be a positive integer, got {n_periods}")
        local = np.concatenate(
            [np.linspace(a, b, refine + 1)[:-1] for a, b in zip(eta.nodes[:-1], eta.nodes[1:])]
        )
        X = (np.arange(N)[:, None] + local[None, :]).ravel()
        X = np.append(X, float(N))
        x = X * (T / N)
        x[-1] = T
        h = -delta * eta.value(X)
        h[-1] = h[0]
        return cls("oscillation", T, x, h, {"delta": float(delta), "eta": eta, "N": N})

    @property
    def depth(self) -> float:
        return float(-self.h.min())

    @property
    def breakpoints(self) -> np.ndarray:
        """Sample nodes where the slope changes (plus the end points)."""
        s = np.diff(self.h) / np.diff(self.x)
        kinks = np.flatnonzero(np.abs(np.diff(s)) > 1e-9 * max(1.0, np.abs(s).max())) + 1
        return np.concatenate([[self.x[0]], self.x[kinks], [self.x[-1]]])

    def scaled(self, s: float) -> "PerturbationProfile":
        return PerturbationProfile(self.kind, self.T, self.x, s * self.h, dict(self.params))


def profile_eval(p: PerturbationProfile, x):
    """Value and slope of the profile at ``x`` in ``[0, T]``.

    Slopes are taken from the segment to the right of a node (left at ``x = T``).
    Oscillation profiles are evaluated through ``eta`` with periodic wrap-around.
    """
    xa = np.asarray(x, float)
    if np.any(xa < -1e-12) or np.any(xa > p.T * (1 + 1e-12)):
        raise InputError(f"x outside [0, {p.T}]")
    if p.kind == "oscillation" and "eta" in p.params:
        delta = p.params["delta"]
        eta = p.params["eta"]
        X = xa / delta
        h = -delta * eta.value(X)
        Xs = np.where(xa >= p.T, X - 1e-12, X)
        dh = -eta.slope(Xs)
    else:
        h = np.interp(xa, p.x, p.h)
        seg = np.clip(np.searchsorted(p.x, xa, side="right") - 1, 0, len(p.x) - 2)
        dh = (np.diff(p.h) / np.diff(p.x))[seg]
    if np.ndim(x) == 0:
        return float(h), float(dh)
    return h, dh


def distance_proxy(p: PerturbationProfile) -> float:
    """``d_hat``: sup-norm of the boundary-graph difference, ``max |h|`` over samples."""
    return float(np.max(np.abs(p.h)))


def write_profile(path, spec: RectangleSpec, p: PerturbationProfile) -> None:
    """Plain text: ``kind T R bc_x`` then one ``x h`` pair per line."""
    lines = [f"{p.kind} {spec.T!r} {spec.R!r} {spec.bc_x}"]
    lines += [f"{xi!r} {hi!r}" for xi, hi in zip(p.x.tolist(), p.h.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_profile(path) -> tuple[RectangleSpec, PerturbationProfile]:
    text = Path(path).read_text().split("\n")
    rows = [ln.split() for ln in text if ln.strip()]
    if not rows or len(rows[0]) != 4:
        raise InputError("profile header must be 'kind T R bc_x'")
    kind, T, R, bc = rows[0]
    spec = RectangleSpec(float(T), float(R), bc)
    try:
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    except ValueError as exc:
        raise InputError(f"bad profile data line: {exc}") from exc
    if data.ndim != 2 or len(data) < 2:
        raise InputError("profile file needs at least two samples")
    params = {"c": float(-data[0, 1])} if kind == "uniform_shift" else {}
    prof = PerturbationProfile(kind if kind != "oscillation" else "samples", spec.T, data[:, 0], data[:, 1], params)
    if prof.depth >= spec.R:
        raise InputError("profile depth reaches the top edge")
    return spec, prof
