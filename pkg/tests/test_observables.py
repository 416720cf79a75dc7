import math
import warnings

import numpy as np
import pytest
import scipy.linalg as la
from scipy.integrate import trapezoid
from hypothesis import given, settings
from hypothesis import strategies as st

from kerrmech import fock as F
from kerrmech import observables as O
from kerrmech.semiclassical import PhysicalParams


def random_dm(D, rng, rank=None):
    X = rng.normal(size=(D, rank or D)) + 1j * rng.normal(size=(D, rank or D))
    rho = X @ X.conj().T
    return rho / np.trace(rho)


def displaced_parity(rho, alpha, big=90):
    """W(alpha) = (2/pi) Tr[D+(alpha) rho D(alpha) P], on an enlarged space."""
    n = rho.shape[0]
    R = np.zeros((big, big), dtype=complex)
    R[:n, :n] = rho
    a = np.diag(np.sqrt(np.arange(1, big)), 1)
    D = la.expm(alpha * a.conj().T - np.conj(alpha) * a)
    M = D.conj().T @ R @ D
    return 2 / np.pi * np.sum((-1) ** np.arange(big) * np.diag(M).real)


# --- moments ------------------------------------------------------------------


def test_expect_fock_and_dimension_check():
    d = F.FockConfig(6)
    a = F.ladder_op(d)
    assert O.expect(F.fock_dm(d, 3), a.dag() @ a) == pytest.approx(3)
    with pytest.raises(F.DimensionError):
        O.expect(F.fock_dm(d, 3), F.ladder_op(F.FockConfig(5)))


def test_expect_hermitian_is_real():
    rng = np.random.default_rng(0)
    d = F.FockConfig(4, 3)
    rho = F.DensityMatrix(d, random_dm(d.dim, rng))
    a, b = F.ladder_op(d), F.ladder_op(d, "mechanical")
    for op in (a.dag() @ a, a + a.dag(), b.dag() @ b @ a.dag() @ a):
        assert abs(O.expect(rho, op).imag) <= 1e-9


def test_thermal_phonons():
    d = F.FockConfig(2, 60)
    rho = F.DensityMatrix(d, np.kron(F.fock_dm(d.optical, 0).matrix, F.thermal_dm(60, 0.8)))
    b = F.ladder_op(d, "mechanical")
    assert O.expect(rho, b.dag() @ b).real == pytest.approx(0.8, rel=1e-10)
    assert O.phonon_number(rho) == pytest.approx(0.8, rel=1e-10)


def test_g2_examples():
    assert O.g2_zero(F.coherent_dm(50, 1.3 - 0.4j)) == pytest.approx(1.0, abs=1e-8)
    assert O.g2_zero(F.fock_dm(F.FockConfig(4), 1)) == 0.0
    thermal = F.DensityMatrix(F.FockConfig(120), F.thermal_dm(120, 2.0))
    assert O.g2_zero(thermal) == pytest.approx(2.0, abs=1e-6)
    assert O.g2_zero(F.fock_dm(F.FockConfig(4), 0)) is None


@settings(max_examples=50, deadline=None)
@given(re=st.floats(-3, 3), im=st.floats(-3, 3))
def test_g2_coherent_property(re, im):
    alpha = complex(re, im)
    if abs(alpha) < 0.05:
        return
    assert O.g2_zero(F.coherent_dm(70, alpha, normalize=False)) == pytest.approx(1.0, abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(nbar=st.floats(0.01, 3))
def test_g2_thermal_property(nbar):
    rho = F.DensityMatrix(F.FockConfig(200), F.thermal_dm(200, nbar))
    assert O.g2_zero(rho) == pytest.approx(2.0, abs=1e-6)


# --- partial trace --------------------------------------------------------------


def test_partial_trace_product():
    rng = np.random.default_rng(1)
    ra, rb = random_dm(4, rng), random_dm(3, rng)
    rho = F.DensityMatrix(F.FockConfig(4, 3), np.kron(ra, rb))
    np.testing.assert_allclose(O.partial_trace_optical(rho).matrix, ra, atol=1e-14)


def test_partial_trace_correlated():
    N = 4
    d = F.FockConfig(N, N)
    rho = np.zeros((d.dim, d.dim))
    for n in range(N):
        rho[n * N + n, n * N + n] = 1 / N
    out = O.partial_trace_optical(F.DensityMatrix(d, rho))
    np.testing.assert_allclose(out.matrix, np.eye(N) / N)


def test_partial_trace_requires_mechanics():
    with pytest.raises(F.DimensionError):
        O.partial_trace_optical(F.fock_dm(F.FockConfig(3), 0))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_partial_trace_commutes_with_optical_expectations(seed):
    rng = np.random.default_rng(seed)
    d = F.FockConfig(4, 3)
    rho = F.DensityMatrix(d, random_dm(d.dim, rng))
    red = O.partial_trace_optical(rho)
    assert red.trace() == pytest.approx(1.0, abs=1e-12)
    Xa = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    full = F.FockOperator(d, np.kron(Xa, np.eye(3)))
    assert O.expect(rho, full) == pytest.approx(O.expect(red, F.FockOperator(d.optical, Xa)), abs=1e-10)


# --- fidelity --------------------------------------------------------------------


def test_fidelity_examples():
    d = F.FockConfig(5)
    assert O.fidelity(F.fock_dm(d, 2), F.fock_dm(d, 2)) == pytest.approx(1.0, abs=1e-8)
    assert O.fidelity(F.fock_dm(d, 0), F.fock_dm(d, 1)) == pytest.approx(0.0, abs=1e-8)


@pytest.mark.parametrize("alpha,nbar", [(0.5, 0.3), (1.0 + 1.0j, 1.2), (-0.7j, 2.0)])
def test_fidelity_coherent_vs_thermal(alpha, nbar):
    N = 80
    coh = F.coherent_dm(N, alpha)
    th = F.DensityMatrix(F.FockConfig(N), F.thermal_dm(N, nbar))
    # closed form: <alpha|rho_th|alpha> = exp(-|alpha|^2/(1+nbar)) / (1+nbar)
    expected = math.sqrt(math.exp(-abs(alpha) ** 2 / (1 + nbar)) / (1 + nbar))
    assert O.fidelity(coh, th) == pytest.approx(expected, abs=1e-7)
    assert O.fidelity(th, coh) == pytest.approx(expected, abs=1e-7)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), r1=st.integers(1, 6), r2=st.integers(1, 6))
def test_fidelity_bounds_and_symmetry(seed, r1, r2):
    rng = np.random.default_rng(seed)
    d = F.FockConfig(6)
    a = F.DensityMatrix(d, random_dm(6, rng, r1))
    b = F.DensityMatrix(d, random_dm(6, rng, r2))
    f = O.fidelity(a, b)
    assert -1e-12 <= f <= 1 + 1e-9
    assert f == pytest.approx(O.fidelity(b, a), abs=1e-7)
    assert O.fidelity(a, a) == pytest.approx(1.0, abs=1e-8)


def test_fidelity_rejects_non_psd():
    d = F.FockConfig(2)
    bad = F.DensityMatrix(d, np.diag([1.1, -0.1]))
    with pytest.raises(ValueError):
        O.fidelity(bad, F.fock_dm(d, 0))
    with pytest.raises(F.DimensionError):
        O.fidelity(F.fock_dm(d, 0), F.fock_dm(F.FockConfig(3), 0))


# --- Wigner ----------------------------------------------------------------------


def test_wigner_vacuum():
    w = O.wigner(F.fock_dm(F.FockConfig(10), 0))
    centre = w.values[60, 60]
    assert w.re_axis[60] == 0 and w.im_axis[60] == 0
    assert centre == pytest.approx(2 / math.pi, rel=1e-12)
    pts = w.points()
    np.testing.assert_allclose(w.values, 2 / math.pi * np.exp(-2 * np.abs(pts) ** 2), atol=1e-12)


def test_wigner_coherent_peak():
    alpha = 1.2 - 0.8j
    w = O.wigner(F.coherent_dm(30, alpha), points=241)
    peak = O.local_maxima(w)[0]
    assert abs(peak - alpha) < 0.05
    assert w.total() == pytest.approx(1.0, abs=2e-2)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), re=st.floats(-2, 2), im=st.floats(-2, 2))
def test_wigner_matches_displaced_parity(seed, re, im):
    rng = np.random.default_rng(seed)
    rho = random_dm(10, rng)
    alpha = complex(re, im)
    got = O._wigner_values(rho, np.array([alpha]))[0]
    assert got == pytest.approx(displaced_parity(rho, alpha), abs=1e-10)


def test_wigner_marginal_is_quadrature_distribution():
    x = np.linspace(-3.5, 3.5, 71)
    y = np.linspace(-7, 7, 561)
    p = PhysicalParams.from_dimensionless(y=1.5, z=0.26, chi=0.08, sideband=30, q_m=300)
    steady = F.steady_state(F.liouvillian_kerr(p, F.FockConfig(20)))
    states = [F.fock_dm(F.FockConfig(10), 0), F.coherent_dm(30, 0.8 + 0.5j), steady]
    for rho in states:
        xs = np.linspace(-6.5, 2.5, 91) if rho is steady else x  # steady-state lobes sit at Re alpha < 0
        w = O.wigner(rho, re_axis=xs, im_axis=y)
        marg = trapezoid(w.values, y, axis=0)
        ref = O.quadrature_distribution(rho, xs)
        assert np.abs(marg - ref).max() <= 0.01 * ref.max()


def test_wigner_small_grid_warns():
    with pytest.warns(RuntimeWarning):
        O.wigner(F.coherent_dm(20, 2.0), re_axis=np.linspace(-1, 1, 41))


def test_wigner_requires_optical_state():
    with pytest.raises(F.DimensionError):
        O.wigner(F.fock_dm(F.FockConfig(3, 3), 0))


def test_lobe_weights_split():
    d = F.FockConfig(40)
    a1, a2 = -0.5 + 1.3j, -3.0 - 1.3j
    mix = 0.36 * F.coherent_dm(40, a1).matrix + 0.64 * F.coherent_dm(40, a2).matrix
    w = O.wigner(F.DensityMatrix(d, mix), points=161)
    lo, up = O.lobe_weights(w, (a1, a2))
    assert lo + up == pytest.approx(1.0, abs=0.02)
    assert lo == pytest.approx(0.36, abs=0.01)
    assert up == pytest.approx(0.64, abs=0.01)


def test_lobe_weights_overlap_warns():
    w = O.wigner(F.coherent_dm(20, 0.0))
    with pytest.warns(RuntimeWarning):
        O.lobe_weights(w, (0.0, 0.5))


def test_lobe_weights_follow_drive():
    # Kerr twin at the benchmark point: upper-lobe weight grows with z across the window
    centers = (-0.544 + 1.291j, -2.992 - 1.354j)
    weights = []
    for z in (0.05, 0.20, 0.24, 0.28, 0.32, 0.6):
        p = PhysicalParams.from_dimensionless(y=1.5, z=z, chi=0.08, sideband=30, q_m=300)
        rho = F.steady_state(F.liouvillian_kerr(p, F.FockConfig(30)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            weights.append(O.lobe_weights(O.wigner(rho, points=101), centers))
    uppers = [u for _, u in weights]
    assert weights[0][0] > 0.95
    assert uppers[-1] > 0.95
    assert all(b >= a - 1e-9 for a, b in zip(uppers, uppers[1:]))
    for lo, up in weights:
        assert lo + up == pytest.approx(1.0, abs=0.02)
