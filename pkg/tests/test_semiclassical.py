import math
import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from kerrmech.semiclassical import (
    UNCONDITIONALLY_STABLE,
    Y_THRESHOLD,
    Z_THRESHOLD,
    BranchIndex,
    NcRegime,
    PhysicalParams,
    Region,
    Stability,
    ValidityWarning,
    bistability_window,
    branch_state,
    classify_branch,
    critical_occupation,
    critical_power,
    cubic,
    drift_matrix,
    mean_field_branches,
    mean_field_roots,
    nc_asymptotic,
    optical_damping,
    region_classify,
    rh_coefficients,
    to_dimensionless,
)

# high-precision (mpmath, 40 digits) reference values
ROOTS_15_026 = [0.15690618896739246, 0.47993537761847336, 0.86315843341413418]
ROOTS_15_030 = [0.21520358482037653, 0.38908367696508296, 0.89571273821454051]
WINDOW_15 = (0.18195861825602283, 0.31804138174397717, 0.29587585476806849, 0.70412414523193151)
LAM_C_BENCH = 3.3568518910204374  # y=1.5, omega_m/kappa=30, Q_m=300
Z_C_BENCH = 92.087534794634394
LAM_C_SB10 = 0.88842041964010445  # y=1.5, omega_m/kappa=10, Q_m=1000
Z_C_SB10 = 0.29019440128923671

BENCH = dict(y=1.5, chi=0.08, sideband=30.0, q_m=300.0)

finite = dict(allow_nan=False, allow_infinity=False)


def bench(z, **kw):
    return PhysicalParams.from_dimensionless(z=z, **{**BENCH, **kw})


# --- parameters --------------------------------------------------------------


def test_to_dimensionless_bench():
    z = 0.26
    p = PhysicalParams(g0=1.549, omega_m=30.0, gamma_m=0.1, delta0=-1.5, eps=math.sqrt(z / 0.08))
    d = to_dimensionless(p)
    assert d.chi == pytest.approx(0.08, rel=1e-3)
    assert d.y == 1.5
    assert d.sideband == 30.0


def test_to_dimensionless_arithmetic():
    p = PhysicalParams(g0=1.0, omega_m=10.0, gamma_m=0.01, delta0=0.0, eps=0.0, kappa=2.0)
    d = to_dimensionless(p)
    assert d.chi == pytest.approx(0.05, rel=1e-15)
    assert d.z == 0.0


@pytest.mark.parametrize(
    "field,value",
    [("kappa", -1.0), ("kappa", 0.0), ("omega_m", 0.0), ("gamma_m", -0.1), ("eps", -1.0), ("n_th", -0.5), ("g0", math.nan)],
)
def test_physical_params_rejects(field, value):
    kw = dict(g0=0.1, omega_m=10.0, gamma_m=0.01, delta0=-1.0, eps=1.0)
    kw[field] = value
    with pytest.raises(ValueError):
        PhysicalParams(**kw)


def test_low_q_warns():
    with pytest.warns(ValidityWarning):
        PhysicalParams(g0=0.1, omega_m=1.0, gamma_m=0.5, delta0=0.0, eps=0.0)


@settings(max_examples=200, deadline=None)
@given(
    y=st.floats(-3, 3, **finite),
    z=st.floats(0, 5, **finite),
    chi=st.floats(1e-3, 2, **finite),
    s=st.floats(0.1, 100, **finite),
    q=st.floats(10, 1e5, **finite),
)
def test_dimensionless_round_trip(y, z, chi, s, q):
    d = to_dimensionless(PhysicalParams.from_dimensionless(y=y, z=z, chi=chi, sideband=s, q_m=q))
    assert d.y == pytest.approx(y, rel=1e-12, abs=1e-15)
    assert d.z == pytest.approx(z, rel=1e-12, abs=1e-15)
    assert d.chi == pytest.approx(chi, rel=1e-12)
    assert d.sideband == pytest.approx(s, rel=1e-12)
    assert d.q_m == pytest.approx(q, rel=1e-12)


# --- roots and window --------------------------------------------------------


def test_roots_three():
    np.testing.assert_allclose(mean_field_roots(1.5, 0.26), ROOTS_15_026, rtol=1e-13)
    np.testing.assert_allclose(mean_field_roots(1.5, 0.30), ROOTS_15_030, rtol=1e-13)


def test_roots_single_below_threshold():
    r = mean_field_roots(0.5, 0.05)
    assert len(r) == 1
    assert r[0] == pytest.approx(0.18863445766568419, rel=1e-13)


def test_roots_undriven():
    for y in (-2.0, 0.0, 1.5, 10.0):
        assert list(mean_field_roots(y, 0.0)) == [0.0]


@settings(max_examples=500, deadline=None)
@given(y=st.floats(-5, 5, **finite), z=st.floats(0, 10, **finite))
def test_roots_residual_and_order(y, z):
    r = mean_field_roots(y, z)
    assert len(r) in (1, 3)
    assert np.all(np.diff(r) > 0)
    assert np.all(np.abs(cubic(r, y, z)) <= 1e-10 * max(1.0, z))
    assert np.all(r >= 0)


@settings(max_examples=300, deadline=None)
@given(y=st.floats(Y_THRESHOLD + 1e-3, 5, **finite), t=st.floats(0.01, 0.99))
def test_roots_interleave_turning_points(y, t):
    zm, zp, lm, lp = bistability_window(y)
    z = zm + t * (zp - zm)
    r = mean_field_roots(y, z)
    assume(len(r) == 3)
    assert r[0] < lm < r[1] < lp < r[2]


def test_window_threshold():
    zm, zp, lm, lp = bistability_window(Y_THRESHOLD)
    assert zm == pytest.approx(Z_THRESHOLD, abs=1e-12)
    assert zp == pytest.approx(Z_THRESHOLD, abs=1e-12)
    assert Z_THRESHOLD == pytest.approx(1 / (6 * math.sqrt(3)), abs=1e-15)


def test_window_values():
    np.testing.assert_allclose(bistability_window(1.5), WINDOW_15, rtol=1e-13)
    assert bistability_window(0.5) is None


@settings(max_examples=200, deadline=None)
@given(y=st.floats(Y_THRESHOLD + 1e-6, 20, **finite))
def test_window_ordering(y):
    zm, zp, lm, lp = bistability_window(y)
    assert zm < zp and lm < lp


def test_kerr_shift_mapping_example():
    # Kerr medium: lam [(2 lam - y + chi)^2 + 1/4] = z  <=>  optomechanical cubic at y - chi
    y, z, chi = 1.6, 0.26, 0.1
    kerr = np.polynomial.Polynomial([0, 0.25, 0, 0]) + np.polynomial.Polynomial([0, 1]) * np.polynomial.Polynomial([chi - y, 2]) ** 2 - z
    real = np.sort(kerr.roots()[np.abs(kerr.roots().imag) < 1e-9].real)
    np.testing.assert_allclose(mean_field_roots(y - chi, z), real, atol=1e-9)


# --- branches ----------------------------------------------------------------


def test_branch_bench_upper():
    p = bench(0.26)
    branches = mean_field_branches(p)
    assert [b.branch_index for b in branches] == [BranchIndex.LOWER, BranchIndex.MIDDLE, BranchIndex.UPPER]
    up = branches[2]
    assert up.nbar == pytest.approx(ROOTS_15_026[2] / 0.08, rel=1e-12)
    assert up.delta_eff == pytest.approx(2 * ROOTS_15_026[2] - 1.5, rel=1e-12)
    assert up.a_bar == pytest.approx(-2.992 - 1.354j, abs=2e-3)
    assert branches[0].a_bar == pytest.approx(-0.544 + 1.291j, abs=2e-3)
    assert [b.stability for b in branches] == [Stability.STABLE, Stability.UNSTABLE_C1, Stability.STABLE]


@settings(max_examples=200, deadline=None)
@given(
    y=st.floats(-3, 3, **finite),
    z=st.floats(1e-6, 2, **finite),
    chi=st.floats(1e-3, 1, **finite),
    s=st.floats(0.1, 100, **finite),
    q=st.floats(10, 1e5, **finite),
)
def test_branch_invariants(y, z, chi, s, q):
    p = PhysicalParams.from_dimensionless(y=y, z=z, chi=chi, sideband=s, q_m=q)
    for b in mean_field_branches(p):
        assert abs(b.a_bar) ** 2 == pytest.approx(b.nbar, rel=1e-10)
        assert abs(b.g_eff) ** 2 == pytest.approx(p.kappa * p.omega_m * chi * b.nbar, rel=1e-10)
        assert b.delta_eff == pytest.approx(p.kappa * (2 * chi * b.nbar - y), rel=1e-10, abs=1e-12)
        # substituting back into the optical steady-state equation
        lhs = (1j * b.delta_eff - p.kappa / 2) * b.a_bar
        assert abs(lhs - p.eps) <= 1e-9 * max(1.0, p.eps)
        assert b.b_bar == pytest.approx(1j * p.g0 * b.nbar / complex(p.gamma_m / 2, p.omega_m), rel=1e-12)


def test_branch_empty_and_linear():
    p = bench(0.0)
    b = branch_state(p, 0.0)
    assert b.a_bar == 0 and b.b_bar == 0
    lin = PhysicalParams(g0=0.0, omega_m=10.0, gamma_m=0.01, delta0=-0.7, eps=1.3)
    b = mean_field_branches(lin)[0]
    assert b.a_bar == pytest.approx(1.3 / complex(-0.5, -0.7), rel=1e-14)
    assert b.nbar == pytest.approx(1.3**2 / (0.49 + 0.25), rel=1e-14)


def test_branch_rejects_negative():
    with pytest.raises(ValueError):
        branch_state(bench(0.26), -0.1)


# --- stability ---------------------------------------------------------------


def test_middle_root_c1_negative():
    p = bench(0.26)
    mid = mean_field_branches(p)[1]
    assert mid.nbar == pytest.approx(6.0, abs=0.01)
    assert mid.c1 < 0
    assert mid.stability is Stability.UNSTABLE_C1


def test_decoupled_is_stable():
    p = PhysicalParams(g0=0.0, omega_m=5.0, gamma_m=0.01, delta0=0.3, eps=1.0)
    b = mean_field_branches(p)[0]
    c1, c2 = rh_coefficients(b, p)
    assert c1 == pytest.approx(p.omega_m * (b.delta_eff**2 + 0.25))
    assert c2 > 0
    ev = np.linalg.eigvals(drift_matrix(b, p))
    np.testing.assert_allclose(
        sorted(ev, key=lambda v: (v.real, v.imag)),
        sorted([0.5 + 1j * b.delta_eff, 0.5 - 1j * b.delta_eff, 0.005 + 5j, 0.005 - 5j], key=lambda v: (v.real, v.imag)),
        atol=1e-12,
    )


def _random_params(rng):
    return PhysicalParams.from_dimensionless(
        y=rng.uniform(-3, 3),
        z=rng.uniform(0, 2),
        chi=10 ** rng.uniform(-3, 0),
        sideband=10 ** rng.uniform(-1, 2),
        q_m=10 ** rng.uniform(1, 5),
    )


def test_drift_matrix_conjugate_symmetry():
    rng = np.random.default_rng(3)
    swap = np.array([1, 0, 3, 2])
    for _ in range(200):
        p = _random_params(rng)
        for b in mean_field_branches(p):
            A = drift_matrix(b, p)
            np.testing.assert_allclose(A[np.ix_(swap, swap)], A.conj(), atol=1e-12)
            ev = np.linalg.eigvals(A)
            gap = np.abs(ev[:, None] - ev.conj()[None, :]).min(axis=1)
            assert gap.max() <= 1e-8 * max(1.0, np.abs(ev).max())


def test_c2_positive_for_red_effective_detuning():
    rng = np.random.default_rng(4)
    seen = 0
    for _ in range(2000):
        p = _random_params(rng)
        for b in mean_field_branches(p):
            if b.delta_eff <= 0:
                assert b.c2 > 0
                seen += 1
    assert seen > 100


def test_c1_sign_identity_three_roots():
    rng = np.random.default_rng(5)
    seen = 0
    for _ in range(2000):
        p = _random_params(rng)
        branches = mean_field_branches(p)
        if len(branches) != 3:
            continue
        _, _, lm, lp = bistability_window(p.y)
        for b in branches:
            lam = b.lam
            assert np.sign(b.c1) == np.sign((lp - lam) * (lm - lam))
            seen += 1
    assert seen > 300


def test_kerr_classification_upper_stable():
    for z in (0.26, 0.30, 1.0, 200.0):
        b = mean_field_branches(bench(z))[-1]
        assert classify_branch(b, kerr=True) is Stability.STABLE


def test_bench_upper_unstable_beyond_nc():
    b = mean_field_branches(bench(100.0))[-1]
    assert b.nbar > LAM_C_BENCH / 0.08
    assert b.stability is Stability.UNSTABLE_C2
    b = mean_field_branches(bench(80.0))[-1]
    assert b.stability is Stability.STABLE


# --- critical occupation -----------------------------------------------------


def test_critical_occupation_bench():
    assert critical_occupation(1.5, 30, 300) == pytest.approx(LAM_C_BENCH, rel=1e-10)
    assert critical_power(1.5, 30, 300) == pytest.approx(Z_C_BENCH, rel=1e-9)


def test_critical_occupation_sideband10():
    assert critical_occupation(1.5, 10, 1000) == pytest.approx(LAM_C_SB10, rel=1e-10)
    assert critical_power(1.5, 10, 1000) == pytest.approx(Z_C_SB10, rel=1e-9)
    est = nc_asymptotic(1.5, 10, 1000, NcRegime.IB_IIA)
    assert abs(est - LAM_C_SB10) / LAM_C_SB10 < 0.10


@settings(max_examples=200, deadline=None)
@given(
    y=st.floats(0.01, 5, **finite),
    s=st.floats(0.05, 200, **finite),
    q=st.floats(10, 1e6, **finite),
)
def test_critical_occupation_lower_bound(y, s, q):
    lam = critical_occupation(y, s, q)
    assert lam >= y / 2 - 1e-12
    if math.isfinite(lam):
        p = PhysicalParams.from_dimensionless(y=y, z=cubic(lam, y, 0.0), chi=1.0, sideband=s, q_m=q)
        assert abs(rh_coefficients(branch_state(p, lam), p)[1]) <= 1e-6 * max(1.0, s**4)


def test_asymptotic_bench_within_15_percent():
    est = nc_asymptotic(1.5, 30, 300, NcRegime.IB_IIA)
    assert est == pytest.approx(3.75, rel=1e-12)
    assert abs(est - LAM_C_BENCH) / LAM_C_BENCH < 0.15


def test_asymptotic_regimes():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        assert nc_asymptotic(0.7, 1e-9, 1.0, NcRegime.IA) == pytest.approx(0.35, rel=1e-6)
        assert nc_asymptotic(1e-6, 0.01, 10, NcRegime.TINY_SIDEBAND) is None
    # IIb: kappa >> omega_m with (kappa/omega_m)/(8 Q_m) term
    exact = critical_occupation(1.5, 0.1, 1e3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        approx = nc_asymptotic(1.5, 0.1, 1e3, NcRegime.IIB)
    assert abs(approx - exact) / exact < 0.15


def test_unconditionally_stable_sentinel():
    # vanishing detuning: the upper branch never turns unstable
    assert critical_occupation(1e-6, 0.01, 10) == UNCONDITIONALLY_STABLE
    assert critical_power(1e-6, 0.01, 10) == math.inf


# --- regions -----------------------------------------------------------------


@pytest.mark.parametrize(
    "y,z,region",
    [(0.5, 0.05, Region.I), (1.5, 0.26, Region.II), (1.5, 0.30, Region.III), (1.5, 1.0, Region.IV)],
)
def test_region_examples(y, z, region):
    assert region_classify(y, z, 10, 1000) is region


def test_region_boundary_is_single_root_region():
    zm, zp, _, _ = bistability_window(1.5)
    assert region_classify(1.5, zp, 10, 1000) in (Region.I, Region.IV)


@settings(max_examples=100, deadline=None)
@given(
    y=st.floats(0, 3, **finite),
    z=st.floats(0, 1, **finite),
    chi=st.floats(1e-3, 1, **finite),
    s=st.floats(0.1, 100, **finite),
    q=st.floats(10, 1e4, **finite),
)
def test_region_independent_of_chi(y, z, chi, s, q):
    p = PhysicalParams.from_dimensionless(y=y, z=z, chi=chi, sideband=s, q_m=q)
    branches = mean_field_branches(p)
    try:
        expected = region_classify(y, z, s, q)
    except RuntimeError:
        return
    assume(all(abs(b.c2) > 1e-6 and abs(b.c1) > 1e-6 for b in branches))
    top = branches[-1].stability
    if len(branches) == 3:
        assert expected is (Region.II if top is Stability.STABLE else Region.III)
    else:
        assert expected is (Region.I if top is Stability.STABLE else Region.IV)


# --- optical damping ---------------------------------------------------------


def test_optical_damping_zero_coupling():
    p = PhysicalParams(g0=0.0, omega_m=10.0, gamma_m=0.01, delta0=-10.0, eps=1.0)
    gopt, gtot = optical_damping(mean_field_branches(p)[0], p)
    assert gopt == 0.0 and gtot == p.gamma_m


def test_optical_damping_cooling_sign():
    p = PhysicalParams(g0=0.01, omega_m=10.0, gamma_m=1e-4, delta0=-10.0, eps=5.0)
    b = mean_field_branches(p)[0]
    assert b.delta_eff < 0
    assert optical_damping(b, p)[0] > 0
