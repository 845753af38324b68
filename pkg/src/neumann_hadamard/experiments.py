"""Convergence studies: configuration, sweeps, slope fits and CSV output.

Each ``run_*`` function takes a :class:`StudyConfig` and returns a
:class:`StudyResult` holding CSV rows, named :class:`SlopeFit` objects and a
flat ``summary`` dictionary.  :func:`write_outputs` serializes a result; the
output is byte-identical for identical configurations.
"""

from __future__ import annotations

import configparser
import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import abstract_core as ac
from .errors import ClusterResolutionError, InputError, StudyInconclusiveError
from .fem import assemble, build_mesh, eigen_lowest, layer_levels, solve_cell_problem, write_mesh
from .geometry import (
    PeriodicShape,
    PerturbationProfile,
    RectangleSpec,
    cluster_at,
    distance_proxy,
    reference_spectrum,
    sawtooth,
)
from .hadamard import boundary_correction, homogenized_correction, select_cluster, volume_correction
from .svgplot import loglog_svg

__all__ = [
    "StudyConfig",
    "SlopeFit",
    "StudyResult",
    "CSV_HEADERS",
    "fit_loglog_slope",
    "load_config",
    "parse_config",
    "default_config",
    "PRESETS",
    "run_study",
    "run_rect_study",
    "run_perturb_study",
    "run_sharpness_study",
    "run_abstract_verify",
    "run_abstract_sweep",
    "run_cell_study",
    "write_outputs",
    "aitken_limit",
    "richardson_limit",
]

CSV_HEADERS = {
    "perturb": "d,mode,Lambda_ref,Lambda_fem,kappa_boundary,kappa_volume,remainder_boundary,remainder_volume,fem_limited",
    "sharpness": "delta,mode,Lambda_fem,kappa_boundary,kappa_homogenized,remainder_boundary,remainder_homogenized",
    "abstract": "seed,epsilon,sigma,rho,tau_max,remainder_max,bound_ratio,count_ok",
    "rect": "n,index,Lambda_exact,Lambda_fem,rel_error",
    "cell": "n_x,n_y,L,eta0,eta1,energy,decay_ratio",
}

NEUMANN_DATA_CONVENTION = "dV/dn = eta'/sqrt(1+eta'^2)"
STUDIES = ("abstract", "rect", "perturb", "sharpness", "cell")
FEM_MARGIN = 10.0


@dataclass(frozen=True)
class StudyConfig:
    study: str = "perturb"
    # geometry
    T: float = 1.0
    R: float = 1.0
    bc_x: str = "neumann"
    # profile family and sweep
    family: str = "smooth"
    amplitude: float = 1.0
    sweep: tuple = (0.04, 0.02, 0.01, 0.005)
    # FEM
    resolutions: tuple = (64, 128, 256)
    volume: bool = True
    volume_resolution: int = 128
    cells_per_period: tuple = (16, 32, 64)
    coarse: float = 0.01
    growth: float = 1.1
    blend_factor: float = 4.0
    cell_resolutions: tuple = (256, 512, 1024)
    cell_L: float = 0.0
    rect_modes: int = 5
    # clusters
    m: int = 2
    control_m: int = 2
    # abstract family
    n_instances: int = 100
    seed: int = 0
    N: int = 20
    n1: int = 12
    n2: int = 12
    t: float = 1e-3
    overlap_angle: float = 1e-3
    t_sweep: tuple = (1e-2, 1e-3, 1e-4, 1e-5)
    sweep_seed: int = 7
    # execution
    threads: int = 1
    dump_mesh: str = ""

    def __post_init__(self):
        if self.study not in STUDIES:
            raise InputError(f"unknown study {self.study!r}; expected one of {', '.join(STUDIES)}")
        if self.study in ("perturb", "sharpness"):
            _check_sweep(self.sweep, "sweep")
        if self.study == "abstract":
            _check_sweep(self.t_sweep, "t_sweep")
        if self.study in ("rect", "perturb"):
            _check_doubling(self.resolutions, "resolutions", minimum=1)
        if self.study == "sharpness":
            _check_doubling(self.cells_per_period, "cells_per_period", minimum=2)
        if self.study == "cell":
            _check_doubling(self.cell_resolutions, "cell_resolutions", minimum=3)
        if self.threads < 1:
            raise InputError("threads must be >= 1")

    @property
    def rectangle(self) -> RectangleSpec:
        return RectangleSpec(self.T, self.R, self.bc_x)


def _check_sweep(values, name):
    v = np.asarray(values, float)
    if v.size < 3:
        raise InputError(f"{name} needs at least 3 points for a slope fit")
    if np.any(v <= 0) or np.any(np.diff(v) >= 0):
        raise InputError(f"{name} must be positive and strictly decreasing")


def _check_doubling(values, name, minimum):
    v = list(values)
    if len(v) < minimum:
        raise InputError(f"{name} needs at least {minimum} entries")
    if any(b != 2 * a for a, b in zip(v[:-1], v[1:])):
        raise InputError(f"{name} must double from one entry to the next, got {v}")


# --- config files -----------------------------------------------------------

_SECTIONS = {
    "study": ("study", "threads"),
    "geometry": ("T", "R", "bc_x"),
    "profile": ("family", "amplitude", "sweep"),
    "mesh": (
        "resolutions",
        "volume",
        "volume_resolution",
        "cells_per_period",
        "coarse",
        "growth",
        "blend_factor",
        "cell_resolutions",
        "cell_L",
        "rect_modes",
    ),
    "cluster": ("m", "control_m"),
    "abstract": ("n_instances", "seed", "N", "n1", "n2", "t", "overlap_angle", "t_sweep", "sweep_seed"),
}


def _convert(name: str, text: str):
    default = StudyConfig.__dataclass_fields__[name].default
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(text)
            return low in ("true", "yes", "1")
        if isinstance(default, tuple):
            items = [s for s in text.replace(",", " ").split() if s]
            if all(isinstance(x, int) for x in default):
                return tuple(int(s) for s in items)
            return tuple(_number(s) for s in items)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return _number(text)
        return text
    except ValueError as exc:
        raise InputError(f"bad value for {name!r}: {text!r}") from exc


def _number(s: str) -> float:
    # accept fractions such as 1/64
    if "/" in s:
        a, b = s.split("/")
        return float(a) / float(b)
    return float(s)


PRESETS = {
    "abstract": {},
    "rect": {"resolutions": (16, 32, 64)},
    "perturb": {},
    "sharpness": {
        "bc_x": "periodic",
        "family": "sawtooth",
        "sweep": (1 / 8, 1 / 16, 1 / 32, 1 / 64),
        "m": 3,
        "control_m": 2,
    },
    "cell": {"family": "sawtooth"},
}


def default_config(study: str, **overrides) -> StudyConfig:
    """Defaults for ``study`` with ``overrides`` applied on top."""
    if study not in PRESETS:
        raise InputError(f"unknown study {study!r}; expected one of {', '.join(STUDIES)}")
    values = dict(PRESETS[study])
    values.update({k: v for k, v in overrides.items() if v is not None})
    return StudyConfig(study=study, **values)


def parse_config(text: str, default_study: str = "perturb", **overrides) -> StudyConfig:
    """Parse ``[section]`` / ``key = value`` text; unknown sections or keys are errors.

    Unset keys take the per-study defaults from :data:`PRESETS`.
    """
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise InputError(f"malformed config: {exc}") from exc
    values = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise InputError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SECTIONS[section]:
                raise InputError(f"unknown key {key!r} in [{section}]")
            values[key] = _convert(key, raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    study = values.pop("study", default_study)
    return default_config(study, **values)


def load_config(path, default_study: str = "perturb", **overrides) -> StudyConfig:
    return parse_config(Path(path).read_text(), default_study, **overrides)


# --- slope fits ---------------------------------------------------------------


@dataclass(frozen=True)
class SlopeFit:
    """Least-squares line through ``(ln d, ln value)``."""

    points: tuple
    slope: float
    intercept: float
    r2: float

    def predict(self, d):
        return np.exp(self.intercept) * np.asarray(d, float) ** self.slope


def fit_loglog_slope(points) -> SlopeFit:
    """Ordinary least squares on ``(ln d, ln value)`` pairs.

    Raises
    ------
    InputError
        Fewer than three points, or a nonpositive ``d`` or value.
    """
    pts = [(float(d), float(v)) for d, v in points]
    if len(pts) < 3:
        raise InputError("slope fit needs at least 3 points")
    arr = np.array(pts)
    if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
        raise InputError("slope fit needs positive finite d and values")
    x, y = np.log(arr[:, 0]), np.log(arr[:, 1])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return SlopeFit(tuple((math.log(d), math.log(v)) for d, v in pts), float(slope), float(intercept), min(max(r2, 0.0), 1.0))


def richardson_limit(h, values) -> float:
    """Limit as ``h -> 0`` of values with an expansion ``a + b h + c h^2 + ...``.

    ``h`` must halve from one entry to the next; each level of the table
    removes one power of ``h``.
    """
    h = np.asarray(h, float)
    col = np.asarray(values, float)
    if len(h) < 2 or not np.allclose(h[1:] / h[:-1], 0.5, rtol=1e-9):
        raise InputError("Richardson extrapolation needs a halving sequence of at least two steps")
    k = 1
    while len(col) > 1:
        col = (2.0**k * col[1:] - col[:-1]) / (2.0**k - 1.0)
        k += 1
    return float(col[0])


def aitken_limit(values) -> tuple[float, float]:
    """Limit and observed order from the last three entries of a doubling sequence."""
    a, b, c = (float(v) for v in values[-3:])
    r = (c - b) / (b - a)
    if not 0 < r < 1:
        raise InputError(f"sequence is not contracting (ratio {r:.3g})")
    return c + (c - b) * r / (1.0 - r), -math.log2(r)


# --- results --------------------------------------------------------------------


@dataclass
class StudyResult:
    study: str
    rows: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    extra_csv: dict = field(default_factory=dict)

    def column(self, name, **where):
        return [r[name] for r in self.rows if all(r[k] == v for k, v in where.items())]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def _csv_text(header: str, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = header.split(",")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in cols])
    return buf.getvalue()


def write_outputs(result: StudyResult, out_dir) -> list[Path]:
    """CSV, one SVG per fit, and a ``key = value`` summary file."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    path = out / f"{result.study}.csv"
    path.write_text(_csv_text(CSV_HEADERS[result.study], result.rows))
    written.append(path)
    for name, (header, rows) in sorted(result.extra_csv.items()):
        p = out / f"{result.study}_{name}.csv"
        p.write_text(_csv_text(header, rows))
        written.append(p)
    for name, fit in sorted(result.fits.items()):
        p = out / f"{result.study}_{name}.svg"
        p.write_text(loglog_svg(fit, title=f"{result.study}: {name}"))
        written.append(p)
    lines = [f"{k} = {_fmt(v)}" for k, v in sorted(result.summary.items())]
    for name, fit in sorted(result.fits.items()):
        lines.append(f"fit.{name}.slope = {_fmt(fit.slope)}")
        lines.append(f"fit.{name}.r2 = {_fmt(fit.r2)}")
    p = out / f"{result.study}_summary.txt"
    p.write_text("\n".join(lines) + "\n")
    written.append(p)
    return written


def _pool_map(fn, items, threads):
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        # map keeps sweep order regardless of completion order
        return list(ex.map(fn, items))


# --- helpers ---------------------------------------------------------------------


def _cluster_setup(spec: RectangleSpec, m: int):
    modes = reference_spectrum(spec, 60)
    cluster = cluster_at(modes, m)
    offset = sum(1 for md in modes if md.Lambda < cluster.Lambda * (1 - 1e-9) - 1e-12)
    return cluster, offset


def _smooth_shape(T):
    return lambda x: 0.5 * (1.0 - np.cos(2.0 * np.pi * np.asarray(x) / T))


def make_profile(cfg: StudyConfig, value: float) -> PerturbationProfile:
    if cfg.family == "uniform_shift":
        return PerturbationProfile.uniform_shift(cfg.T, value)
    if cfg.family == "smooth":
        return PerturbationProfile.smooth(cfg.T, _smooth_shape(cfg.T), value)
    if cfg.family == "sawtooth":
        return PerturbationProfile.oscillation(cfg.T, sawtooth(cfg.amplitude), value)
    raise InputError(f"unknown profile family {cfg.family!r}")


def _mode_labels(cluster, corr) -> list[str]:
    # label each correction eigenvector by its dominant reference mode
    modes = cluster.modes
    if len(modes) == 1:
        return [modes[0].label()]
    from .linalg import dense_sym_eigen

    vecs = dense_sym_eigen(corr.entries).vectors
    return [modes[int(np.argmax(np.abs(vecs[:, k])))].label() for k in range(len(modes))]


def _richardson(values):
    """Extrapolated value and error estimate from eigenvalues at doubling resolutions."""
    vals = np.asarray(values, float)
    if len(vals) == 1:
        return vals[0], np.full(vals.shape[1:], np.inf)
    ext = (4.0 * vals[1:] - vals[:-1]) / 3.0
    if len(ext) == 1:
        return ext[0], np.abs(vals[1] - vals[0]) / 3.0
    return ext[-1], np.abs(ext[-1] - ext[-2])


def _fit_or_none(points):
    pts = [(d, v) for d, v in points if v > 0 and np.isfinite(v)]
    if len(pts) < 3:
        return None
    return fit_loglog_slope(pts)


# --- rect --------------------------------------------------------------------------


def run_rect_study(cfg: StudyConfig) -> StudyResult:
    """FEM Neumann eigenvalues of the unperturbed rectangle against the closed form."""
    spec = cfg.rectangle
    k = cfg.rect_modes
    exact = np.array([md.Lambda for md in reference_spectrum(spec, k + 1)])
    res = StudyResult("rect")
    errs = []
    for n in cfg.resolutions:
        mesh = build_mesh(spec, None, max(2, round(n * spec.T)), max(2, round(n * spec.R)))
        vals = eigen_lowest(assemble(mesh), k + 1).values
        rel = np.abs(vals[1:] - exact[1:]) / exact[1:]
        errs.append(float(rel.max()))
        for i in range(1, k + 1):
            res.rows.append(dict(n=n, index=i, Lambda_exact=exact[i], Lambda_fem=vals[i], rel_error=rel[i - 1]))
    res.summary["max_rel_error_finest"] = errs[-1]
    if len(cfg.resolutions) >= 3:
        res.fits["error_vs_h"] = fit_loglog_slope([(1.0 / n, e) for n, e in zip(cfg.resolutions, errs)])
    return res


# --- perturb -----------------------------------------------------------------------


def run_perturb_study(cfg: StudyConfig) -> StudyResult:
    """Boundary and volume predictions against Richardson-extrapolated FEM eigenvalues."""
    spec = cfg.rectangle
    cluster, offset = _cluster_setup(spec, cfg.m)
    J = cluster.multiplicity
    n_modes = offset + J + 2

    def one(d):
        prof = make_profile(cfg, d)
        kb_mat = boundary_correction(cluster, prof)
        labels = _mode_labels(cluster, kb_mat)
        kb = kb_mat.eigenvalues()
        fem = []
        kv = np.full(J, np.nan)
        for n in cfg.resolutions:
            mesh = build_mesh(spec, prof, max(2, round(n * spec.T)), max(2, round(n * spec.R)))
            pair = assemble(mesh)
            fem.append(select_cluster(cluster, eigen_lowest(pair, n_modes), offset))
            if cfg.volume and n == cfg.volume_resolution:
                kv = volume_correction(cluster, mesh, pair).eigenvalues()
        if cfg.volume and not np.all(np.isfinite(kv)):
            n = cfg.volume_resolution
            mesh = build_mesh(spec, prof, max(2, round(n * spec.T)), max(2, round(n * spec.R)))
            kv = volume_correction(cluster, mesh, assemble(mesh)).eigenvalues()
        truth, err = _richardson(fem)
        return d, distance_proxy(prof), labels, kb, kv, truth, err

    res = StudyResult("perturb")
    outcomes = _pool_map(one, list(cfg.sweep), cfg.threads)
    worst_b, worst_v, shifts, gaps = [], [], [], []
    for d, d_hat, labels, kb, kv, truth, err in outcomes:
        rem_b = np.abs(truth - (cluster.Lambda + kb))
        rem_v = np.abs(truth - (cluster.Lambda + kv))
        limited = err * FEM_MARGIN > rem_b
        for k in range(J):
            res.rows.append(
                dict(
                    d=d_hat,
                    mode=labels[k],
                    Lambda_ref=cluster.Lambda,
                    Lambda_fem=truth[k],
                    kappa_boundary=kb[k],
                    kappa_volume=kv[k],
                    remainder_boundary=rem_b[k],
                    remainder_volume=rem_v[k],
                    fem_limited=bool(limited[k]),
                )
            )
        clean = ~limited
        if np.any(clean):
            worst_b.append((d_hat, float(rem_b[clean].max())))
            worst_v.append((d_hat, float(rem_v[clean].max())))
        shifts.append((d_hat, float(np.max(np.abs(truth - cluster.Lambda)))))
        if cfg.volume:
            gaps.append((d_hat, float(np.max(np.abs(kb - kv)))))
    if not worst_b:
        raise StudyInconclusiveError("every sweep row is FEM-limited; use finer resolutions")
    for name, pts in (("remainder_boundary", worst_b), ("remainder_volume", worst_v), ("shift", shifts), ("kappa_gap", gaps)):
        fit = _fit_or_none(pts)
        if fit is not None:
            res.fits[name] = fit
    res.summary.update(
        cluster_Lambda=cluster.Lambda,
        cluster_J=J,
        resolutions=" ".join(map(str, cfg.resolutions)),
        volume_resolution=cfg.volume_resolution if cfg.volume else "off",
        fem_limited_rows=sum(r["fem_limited"] for r in res.rows),
        max_shift_over_dhat=max(s / d for d, s in shifts),
        family=cfg.family,
    )
    return res


# --- cell ------------------------------------------------------------------------------


def _cell_levels(n_x, L):
    return layer_levels(1.0 / (n_x * L), 1.0 / (16.0 * L), 1.1)


def cell_sequence(eta: PeriodicShape, resolutions, L: float | None = None):
    """Cell solutions on graded strips at each ``n_x`` in ``resolutions``."""
    L = L or 3.0 * (1.0 + eta.max)
    out = []
    for n in resolutions:
        lv = _cell_levels(n, L)
        out.append(solve_cell_problem(eta, L, n, len(lv) - 1, lv))
    return out


def extrapolated_eta1(eta: PeriodicShape, resolutions=(256, 512, 1024), L: float | None = None):
    sols = cell_sequence(eta, resolutions, L)
    if eta.is_constant:
        return 0.0, sols
    limit, _ = aitken_limit([s.eta1 for s in sols])
    return limit, sols


def run_cell_study(cfg: StudyConfig) -> StudyResult:
    """Self-convergence of ``eta1`` for the configured periodic shape."""
    eta = _shape_from(cfg)
    L = cfg.cell_L or None
    sols = cell_sequence(eta, cfg.cell_resolutions, L)
    res = StudyResult("cell")
    for n, s in zip(cfg.cell_resolutions, sols):
        res.rows.append(
            dict(n_x=n, n_y=s.mesh.n_y, L=s.L, eta0=s.eta0, eta1=s.eta1, energy=s.energy, decay_ratio=s.decay_ratio)
        )
    eta1 = np.array([s.eta1 for s in sols])
    res.summary.update(
        neumann_data=NEUMANN_DATA_CONVENTION,
        eta0=sols[-1].eta0,
        eta1_finest=float(eta1[-1]),
        identity_defect=max(abs(s.eta1 - s.energy) / max(abs(s.energy), 1e-300) for s in sols),
        truncation_warning=any(s.truncation_warning for s in sols),
    )
    if not eta.is_constant:
        limit, order = aitken_limit(eta1)
        res.summary.update(eta1_extrapolated=limit, observed_order=order)
        diffs = np.abs(np.diff(eta1))
        fit = _fit_or_none(list(zip(np.array(cfg.cell_resolutions[1:], float) ** -1, diffs)))
        if fit is not None:
            res.fits["eta1_increment"] = fit
    return res


def _shape_from(cfg: StudyConfig) -> PeriodicShape:
    if cfg.family == "sawtooth":
        return sawtooth(cfg.amplitude)
    if cfg.family == "constant":
        return PeriodicShape(np.array([0.0, 1.0]), np.array([cfg.amplitude, cfg.amplitude]))
    raise InputError(f"cell study needs family 'sawtooth' or 'constant', got {cfg.family!r}")


# --- sharpness -----------------------------------------------------------------------


def _oscillation_shift(cfg, spec, prof, delta, p, clusters, n_modes):
    """Cluster shifts ``Lambda - Lambda_ref`` from the perturbed minus the flat mesh."""
    eta_max = prof.depth / delta if delta > 0 else 0.0
    N = prof.params["N"]
    n_x = p * N
    lv = layer_levels(delta / (p * spec.R), cfg.coarse, cfg.growth)
    blend = min(spec.R, cfg.blend_factor * delta * max(eta_max, 1e-12))
    mesh = build_mesh(spec, prof, n_x, len(lv) - 1, lv, blend=blend)
    flat = build_mesh(spec, None, n_x, len(lv) - 1, lv)
    ev = eigen_lowest(assemble(mesh), n_modes).values
    ev0 = eigen_lowest(assemble(flat), n_modes).values
    out = []
    for cluster, offset in clusters:
        fallback = False
        try:
            sel = select_cluster(cluster, ev)
        except ClusterResolutionError:
            sel = select_cluster(cluster, ev, offset)
            fallback = True
        ref = select_cluster(cluster, ev0, offset)
        out.append((sel - ref, fallback))
    return out


def run_sharpness_study(cfg: StudyConfig) -> StudyResult:
    """Boundary-only versus homogenized predictions for an oscillating bottom."""
    spec = cfg.rectangle
    if not spec.periodic:
        raise InputError("sharpness study needs bc_x = periodic")
    eta = _shape_from(cfg)
    if eta.is_constant:
        raise InputError("eta is constant: eta1 = 0 and there is no defect to measure")
    eta1, cells = extrapolated_eta1(eta, cfg.cell_resolutions, cfg.cell_L or None)
    main = _cluster_setup(spec, cfg.m)
    control = _cluster_setup(spec, cfg.control_m)
    clusters = [main, control]
    n_modes = max(off + c.multiplicity for c, off in clusters) + 3

    def one(delta):
        prof = make_profile(cfg, delta)
        per_p = [_oscillation_shift(cfg, spec, prof, delta, p, clusters, n_modes) for p in cfg.cells_per_period]
        out = []
        for ci, (cluster, _) in enumerate(clusters):
            shifts = np.array([pp[ci][0] for pp in per_p])
            ext = 2.0 * shifts[1:] - shifts[:-1]
            truth = ext[-1]
            err = np.abs(ext[-1] - ext[-2]) if len(ext) > 1 else np.abs(shifts[-1] - shifts[-2])
            fallback = any(pp[ci][1] for pp in per_p)
            out.append((truth, err, fallback))
        return delta, prof, out

    outcomes = _pool_map(one, list(cfg.sweep), cfg.threads)
    res = StudyResult("sharpness")
    cell = replace(cells[-1], eta1=eta1)
    pts = {"boundary": [], "homogenized": [], "control_boundary": [], "control_homogenized": [], "shift": []}
    defect_rows = []
    fem_err = 0.0
    fallbacks = 0
    for delta, prof, out in outcomes:
        for ci, (cluster, _) in enumerate(clusters):
            if ci == 1 and cfg.control_m == cfg.m:
                continue
            truth_shift, err, fb = out[ci]
            fallbacks += int(fb)
            fem_err = max(fem_err, float(np.max(err)))
            kb_mat = boundary_correction(cluster, prof)
            kb = kb_mat.eigenvalues()
            kh = homogenized_correction(cluster, cell, delta).eigenvalues()
            labels = _mode_labels(cluster, kb_mat) if ci == 1 else _mode_labels(
                cluster, homogenized_correction(cluster, cell, delta)
            )
            shift = np.sort(truth_shift)
            rb = np.abs(shift - kb)
            rh = np.abs(shift - kh)
            for k in range(cluster.multiplicity):
                res.rows.append(
                    dict(
                        delta=delta,
                        mode=labels[k],
                        Lambda_fem=cluster.Lambda + shift[k],
                        kappa_boundary=kb[k],
                        kappa_homogenized=kh[k],
                        remainder_boundary=rb[k],
                        remainder_homogenized=rh[k],
                    )
                )
            tag = "" if ci == 0 else "control_"
            pts[tag + "boundary"].append((delta, float(rb.max())))
            pts[tag + "homogenized"].append((delta, float(rh.max())))
            if ci == 0:
                pts["shift"].append((delta, float(np.abs(shift).max())))
                defect_rows.append((delta, shift, kb, kh, cluster))
    for name, p in pts.items():
        fit = _fit_or_none(p)
        if fit is not None:
            res.fits[name] = fit

    # first-order defect at the smallest delta, and from a two-term fit over the sweep
    delta, shift, kb, kh, cluster = defect_rows[-1]
    grad = float(max(md.trace_dx_sq_integral for md in cluster.modes))
    expected = eta1 * grad
    matrix_defect = float(np.max(np.abs(kh - kb))) / delta
    ds = np.array([r[0] for r in defect_rows])
    fem_defect = np.array([np.max(np.abs(r[1] - r[2])) for r in defect_rows]) / ds
    try:
        limit = richardson_limit(ds[-3:], fem_defect[-3:])
    except InputError:
        limit = math.nan
    fb, fh = res.fits.get("boundary"), res.fits.get("homogenized")
    res.summary.update(
        neumann_data=NEUMANN_DATA_CONVENTION,
        eta0=eta.mean,
        eta1=eta1,
        eta1_finest_cell=cells[-1].eta1,
        cluster_Lambda=cluster.Lambda,
        cluster_J=cluster.multiplicity,
        control_Lambda=clusters[1][0].Lambda,
        expected_defect=expected,
        matrix_defect=matrix_defect,
        matrix_defect_rel_error=abs(matrix_defect - expected) / expected,
        fem_defect_smallest_delta=float(fem_defect[-1]),
        fem_defect_extrapolated=limit,
        fem_defect_rel_error=abs(limit - expected) / expected,
        fem_error_estimate=fem_err,
        window_fallback_rows=fallbacks,
        ordering_ok=bool(fb is not None and fh is not None and fb.slope < fh.slope),
        cells_per_period=" ".join(map(str, cfg.cells_per_period)),
        max_shift_over_dhat=max(s / d for d, s in pts["shift"]),
    )
    return res


# --- abstract ----------------------------------------------------------------------------


def _instance_config(cfg: StudyConfig, t: float | None = None) -> ac.InstanceConfig:
    return ac.InstanceConfig(
        cfg.N, cfg.n1, cfg.n2, None, cfg.t if t is None else t, cfg.overlap_angle
    )


def run_abstract_verify(cfg: StudyConfig) -> StudyResult:
    """Verify the cluster asymptotics over a seeded family of instances."""
    icfg = _instance_config(cfg)

    def one(case):
        seed = cfg.seed + case
        inst = ac.build_instance(seed, icfg)
        cluster = ac.extract_cluster(inst, cfg.m)
        return seed, inst, ac.verify_cluster(inst, cluster)

    res = StudyResult("abstract")
    ratios = []
    for seed, inst, v in _pool_map(one, range(cfg.n_instances), cfg.threads):
        c = v.constants
        res.rows.append(
            dict(
                seed=seed,
                epsilon=c.epsilon,
                sigma=c.sigma,
                rho=c.rho,
                tau_max=float(np.max(np.abs(v.tau_values))) if v.count_ok else math.nan,
                remainder_max=float(np.max(v.remainders)) if v.count_ok else math.nan,
                bound_ratio=v.bound_ratio,
                count_ok=v.count_ok,
                eps_ok=c.epsilon <= c.epsilon_from_sigma * (1 + 1e-12),
                pd_shift=inst.pd_shift,
                projector_over_sqrt_eps=float(np.max(v.projector_residuals) / math.sqrt(c.epsilon))
                if c.epsilon > 0 and v.count_ok
                else math.nan,
                b_constant=c.b_constant,
            )
        )
        ratios.append(v.bound_ratio)
    r = np.array([x for x in ratios if np.isfinite(x)])
    res.summary.update(
        instances=cfg.n_instances,
        count_ok_fraction=sum(x["count_ok"] for x in res.rows) / cfg.n_instances,
        eps_ok_fraction=sum(x["eps_ok"] for x in res.rows) / cfg.n_instances,
        bound_ratio_max=float(r.max()) if r.size else math.nan,
        bound_ratio_median=float(np.median(r)) if r.size else math.nan,
        projector_constant_max=float(np.nanmax([x["projector_over_sqrt_eps"] for x in res.rows])),
        b_constant_max=float(np.nanmax([x["b_constant"] for x in res.rows])),
        pd_shifts=sum(x["pd_shift"] > 0 for x in res.rows),
    )
    res.rows.append(
        dict(seed="max", epsilon=max(x["epsilon"] for x in res.rows), sigma=max(x["sigma"] for x in res.rows),
             rho=max(x["rho"] for x in res.rows), tau_max=np.nanmax([x["tau_max"] for x in res.rows]),
             remainder_max=np.nanmax([x["remainder_max"] for x in res.rows]),
             bound_ratio=res.summary["bound_ratio_max"], count_ok=res.summary["count_ok_fraction"] == 1.0)
    )
    sweep = run_abstract_sweep(cfg)
    res.fits.update(sweep.fits)
    res.extra_csv.update(sweep.extra_csv)
    return res


def run_abstract_sweep(cfg: StudyConfig) -> StudyResult:
    """Scale the perturbation of one instance and fit ``max|tau|`` and the remainder against ``t``."""
    res = StudyResult("abstract")
    rows, taus, rems = [], [], []
    for t in cfg.t_sweep:
        inst = ac.build_instance(cfg.sweep_seed, replace(_instance_config(cfg, t), overlap_angle=0.0))
        v = ac.verify_cluster(inst, ac.extract_cluster(inst, cfg.m))
        tau, rem = float(np.max(np.abs(v.tau_values))), float(np.max(v.remainders))
        rows.append(dict(t=t, tau_max=tau, remainder_max=rem))
        taus.append((t, tau))
        rems.append((t, rem))
    res.fits["tau_vs_t"] = fit_loglog_slope(taus)
    res.fits["remainder_vs_t"] = fit_loglog_slope(rems)
    res.extra_csv["t_sweep"] = ("t,tau_max,remainder_max", rows)
    return res


def dump_first_mesh(cfg: StudyConfig, path) -> None:
    """Write the mesh of the first sweep point (coarsest resolution) as plain text."""
    spec = cfg.rectangle
    if cfg.study == "rect":
        n = cfg.resolutions[0]
        mesh = build_mesh(spec, None, max(2, round(n * spec.T)), max(2, round(n * spec.R)))
    elif cfg.study == "perturb":
        n = cfg.resolutions[0]
        mesh = build_mesh(spec, make_profile(cfg, cfg.sweep[0]), max(2, round(n * spec.T)), max(2, round(n * spec.R)))
    elif cfg.study == "sharpness":
        delta, p = cfg.sweep[0], cfg.cells_per_period[0]
        prof = make_profile(cfg, delta)
        lv = layer_levels(delta / (p * spec.R), cfg.coarse, cfg.growth)
        blend = min(spec.R, cfg.blend_factor * prof.depth)
        mesh = build_mesh(spec, prof, p * prof.params["N"], len(lv) - 1, lv, blend=blend)
    elif cfg.study == "cell":
        mesh = cell_sequence(_shape_from(cfg), cfg.cell_resolutions[:1], cfg.cell_L or None)[0].mesh
    else:
        raise InputError("the abstract study has no mesh")
    write_mesh(path, mesh)


def run_study(cfg: StudyConfig) -> StudyResult:
    if cfg.dump_mesh:
        dump_first_mesh(cfg, cfg.dump_mesh)
    return {
        "abstract": run_abstract_verify,
        "rect": run_rect_study,
        "perturb": run_perturb_study,
        "sharpness": run_sharpness_study,
        "cell": run_cell_study,
    }[cfg.study](cfg)
