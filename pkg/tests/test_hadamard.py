import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from neumann_hadamard.errors import ClusterResolutionError, InputError
from neumann_hadamard.fem import CellSolution, assemble, build_mesh, eigen_lowest
from neumann_hadamard.geometry import (
    PerturbationProfile,
    RectangleSpec,
    SpectralCluster,
    cluster_at,
    reference_spectrum,
    sawtooth,
)
from neumann_hadamard.hadamard import (
    boundary_correction,
    homogenized_correction,
    kappa_from_tau,
    predict,
    select_cluster,
    volume_correction,
)

PI2 = math.pi**2
SQUARE = RectangleSpec(1.0, 1.0)
PERIODIC = RectangleSpec(1.0, 1.0, "periodic")


def pi2_cluster():
    return cluster_at(reference_spectrum(SQUARE, 10), 2)


def fake_cell(eta0, eta1):
    return CellSolution(eta0, eta1, np.zeros(1), 6.0, 0.0, eta1, None)


def volume_oracle(c, quadratic=True):
    """Closed-form volume correction for mode (0,1) under a uniform shift by ``c``.

    ``v = A cosh(y - 1)`` solves ``(1 - Delta) v = 0`` on ``[c, 1]`` with the
    prescribed flux at ``y = c``; the correction integrals are 1-D.
    """
    lam = PI2 + 1.0
    flux = -math.sqrt(2) * math.pi * math.sin(math.pi * c) / lam
    A = flux / math.sinh(1 - c)
    lin = quad(lambda y: A * math.cosh(y - 1) * math.sqrt(2) * math.cos(math.pi * y), c, 1, epsabs=1e-14)[0]
    sq = quad(lambda y: (A * math.cosh(y - 1)) ** 2, c, 1, epsabs=1e-16)[0]
    tau = lin + (lam * sq if quadratic else 0.0)
    return -(lam**2) * tau


def test_kappa_sign_bridge():
    assert kappa_from_tau(1e-3, 2.0) == pytest.approx(-4e-3)


def test_zero_profile_gives_zero_matrices():
    cl = pi2_cluster()
    prof = PerturbationProfile.uniform_shift(1.0, 0.0)
    np.testing.assert_array_equal(boundary_correction(cl, prof).entries, 0.0)
    mesh = build_mesh(SQUARE, prof, 16, 16)
    np.testing.assert_allclose(volume_correction(cl, mesh, assemble(mesh)).entries, 0.0, atol=1e-14)


@pytest.mark.parametrize("c", [0.005, 0.01, 0.02])
def test_boundary_uniform_shift_closed_form(c):
    corr = boundary_correction(pi2_cluster(), PerturbationProfile.uniform_shift(1.0, c))
    # basis order: (1,0) then (0,1); the x-mode has zero trace derivative integral along y=0 weighted by h
    np.testing.assert_allclose(np.diag(corr.entries), [0.0, 2 * c * PI2], atol=1e-12)
    assert corr.entries[0, 1] == pytest.approx(0.0, abs=1e-14)


def test_boundary_uniform_shift_x_mode_matches_fem():
    # the (1,0) eigenvalue of [0,1] x [c,1] is exactly pi^2, so its first-order shift is zero
    c = 0.005
    cl = pi2_cluster()
    mesh = build_mesh(SQUARE, PerturbationProfile.uniform_shift(1.0, c), 64, 64)
    vals = eigen_lowest(assemble(mesh), 3).values
    ref = eigen_lowest(assemble(build_mesh(SQUARE, None, 64, 64)), 3).values
    assert vals[1] - ref[1] == pytest.approx(0.0, abs=1e-6)
    assert boundary_correction(cl, PerturbationProfile.uniform_shift(1.0, c)).eigenvalues()[0] == pytest.approx(0.0)


@pytest.mark.parametrize("c", [0.005, 0.01])
def test_volume_matches_closed_form_oracle(c):
    cl = pi2_cluster()
    mesh = build_mesh(SQUARE, PerturbationProfile.uniform_shift(1.0, c), 128, 128)
    pair = assemble(mesh)
    full = volume_correction(cl, mesh, pair)
    linear = volume_correction(cl, mesh, pair, quadratic=False)
    assert full.entries[1, 1] == pytest.approx(volume_oracle(c), rel=1e-2)
    assert linear.entries[1, 1] == pytest.approx(volume_oracle(c, quadratic=False), rel=1e-2)
    # the linear part alone tends to the boundary value 2 c pi^2
    assert linear.entries[1, 1] == pytest.approx(2 * c * PI2, rel=0.15)


def test_volume_matrix_diagonal_for_uniform_shift():
    cl = pi2_cluster()
    mesh = build_mesh(SQUARE, PerturbationProfile.uniform_shift(1.0, 0.01), 128, 128)
    corr = volume_correction(cl, mesh, assemble(mesh), quadratic=False)
    assert abs(corr.entries[0, 1]) <= 1e-3 * np.linalg.norm(corr.entries)


def test_homogenized_constant_eta_matches_boundary():
    delta, c = 1 / 8, 0.4
    cl = cluster_at(reference_spectrum(PERIODIC, 12), 3)
    hom = homogenized_correction(cl, fake_cell(c, 0.0), delta).entries
    bnd = boundary_correction(cl, PerturbationProfile.uniform_shift(1.0, delta * c)).entries
    np.testing.assert_allclose(hom, bnd, atol=1e-12)


def test_homogenized_pure_y_mode_ignores_eta1():
    delta = 1 / 16
    cl = cluster_at(reference_spectrum(PERIODIC, 12), 2)
    for eta1 in (0.0, 0.3):
        kappa = homogenized_correction(cl, fake_cell(0.5, eta1), delta).eigenvalues()
        np.testing.assert_allclose(kappa, [delta * PI2 * 0.5 * 2.0])


def test_homogenized_sawtooth_x_modes():
    delta, eta1 = 1 / 32, 0.322
    cl = cluster_at(reference_spectrum(PERIODIC, 12), 3)
    kappa = np.diag(homogenized_correction(cl, fake_cell(0.5, eta1), delta).entries)
    lam = 4 * PI2
    expected_x = -delta * (0.5 + eta1) * lam + delta * lam * 0.5
    np.testing.assert_allclose(kappa, [expected_x, expected_x, delta * lam * 0.5 * 2.0], rtol=1e-12)


def test_boundary_oscillation_kills_x_pair_at_first_order():
    cl = cluster_at(reference_spectrum(PERIODIC, 12), 3)
    kappa = boundary_correction(cl, PerturbationProfile.oscillation(1.0, sawtooth(), 1 / 16)).eigenvalues()
    np.testing.assert_allclose(kappa[:2], 0.0, atol=1e-10)


def test_homogenized_rejects_bad_delta():
    with pytest.raises(InputError):
        homogenized_correction(pi2_cluster(), fake_cell(0.5, 0.3), 0.0)


def test_predict_uniform_shift_remainder():
    c = 0.01
    cl = pi2_cluster()
    prof = PerturbationProfile.uniform_shift(1.0, c)
    mesh = build_mesh(SQUARE, prof, 128, 128)
    fem = eigen_lowest(assemble(mesh), 5)
    rep = predict(cl, boundary_correction(cl, prof), fem, c)
    np.testing.assert_allclose(rep.predicted_Lambda - rep.Lambda_m, rep.kappa_values, rtol=0, atol=1e-14)
    flat = eigen_lowest(assemble(build_mesh(SQUARE, None, 128, 128)), 3).values[1]
    fem_err = abs(flat - PI2)
    assert rep.remainders[1] == pytest.approx(3 * c**2 * PI2, abs=2 * fem_err + 4 * c**3 * PI2)


def test_select_cluster_window_and_offset():
    cl = pi2_cluster()
    vals = np.array([0.0, PI2 - 0.1, PI2 + 0.2, 2 * PI2 + 0.1])
    np.testing.assert_allclose(select_cluster(cl, vals), vals[1:3])
    crowded = np.array([0.0, PI2, PI2, 1.45 * PI2, 2 * PI2])
    with pytest.raises(ClusterResolutionError):
        select_cluster(cl, crowded)
    np.testing.assert_allclose(select_cluster(cl, crowded, offset=1), [PI2, PI2])
    with pytest.raises(ClusterResolutionError):
        select_cluster(cl, np.array([0.0, PI2]))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 0.05), st.floats(0.0, 0.05), st.integers(1, 3))
def test_boundary_basis_invariance(a, b, k):
    # reordering the cluster basis is an orthogonal change of basis
    cl = cluster_at(reference_spectrum(PERIODIC, 12), 3)
    prof = PerturbationProfile.smooth(1.0, lambda x: a * np.sin(np.pi * x) ** 2 + b * np.sin(k * np.pi * x) ** 4, 1.0)
    perm = SpectralCluster(cl.index, cl.lam, tuple(reversed(cl.modes)), cl.lam_prev, cl.lam_next)
    e1 = boundary_correction(cl, prof).eigenvalues()
    e2 = boundary_correction(perm, prof).eigenvalues()
    np.testing.assert_allclose(e1, e2, atol=1e-10)
    m = boundary_correction(cl, prof).entries
    np.testing.assert_allclose(m, m.T, atol=0)


def test_boundary_linear_in_profile():
    cl = pi2_cluster()
    g = lambda x: 0.5 * (1 - np.cos(2 * np.pi * x))
    m1 = boundary_correction(cl, PerturbationProfile.smooth(1.0, g, 0.01)).entries
    m2 = boundary_correction(cl, PerturbationProfile.smooth(1.0, g, 0.03)).entries
    np.testing.assert_allclose(m2, 3 * m1, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(np.diag(m1), [-0.197392088 / 4, 0.394784176 / 4], rtol=1e-6)
