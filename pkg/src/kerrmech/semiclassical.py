"""Mean-field bistability and linear stability of the driven optomechanical cavity.

All rates are measured in units of the cavity decay rate ``kappa`` (which
defaults to 1).  The dimensionless variables follow the usual conventions

    chi = g0**2 / (omega_m * kappa)      nonlinearity
    y   = -delta0 / kappa                detuning (positive = red)
    z   = chi * (eps / kappa)**2         driving power

and the scaled occupation ``lam = chi * nbar`` solves the cubic

    p(lam) = 4 lam**3 - 4 y lam**2 + (y**2 + 1/4) lam - z = 0.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

__all__ = [
    "Y_THRESHOLD",
    "Z_THRESHOLD",
    "UNCONDITIONALLY_STABLE",
    "ValidityWarning",
    "BracketError",
    "Stability",
    "BranchIndex",
    "Region",
    "NcRegime",
    "PhysicalParams",
    "DimensionlessParams",
    "MeanFieldBranch",
    "to_dimensionless",
    "cubic",
    "cubic_derivative",
    "mean_field_roots",
    "bistability_window",
    "branch_state",
    "mean_field_branches",
    "rh_coefficients",
    "drift_matrix",
    "classify_branch",
    "c2_of_occupation",
    "critical_occupation",
    "nc_asymptotic",
    "critical_power",
    "region_classify",
    "optical_damping",
]

#: Minimal detuning for three mean-field solutions.
Y_THRESHOLD = math.sqrt(3.0) / 2.0
#: Minimal driving power for three mean-field solutions.
Z_THRESHOLD = 1.0 / (6.0 * math.sqrt(3.0))
#: Returned by :func:`critical_occupation` when c2 never changes sign.
UNCONDITIONALLY_STABLE = math.inf

_DISC_RTOL = 1e-12
_TIE_ATOL = 1e-12


class ValidityWarning(UserWarning):
    """A parameter lies outside the regime where an approximation holds."""


class BracketError(RuntimeError):
    """Root bracketing for the critical occupation failed."""


class Stability(str, Enum):
    STABLE = "stable"
    UNSTABLE_C1 = "unstable_c1"
    UNSTABLE_C2 = "unstable_c2"


class BranchIndex(str, Enum):
    LOWER = "lower"
    MIDDLE = "middle"
    UPPER = "upper"
    ONLY = "only"


class Region(str, Enum):
    """Labels of the (y, z) stability diagram.

    I: unique stable solution. II: bistable, lower and upper stable.
    III: three solutions, only the lower one stable. IV: unique unstable.
    """

    I = "I"  # noqa: E741
    II = "II"
    III = "III"
    IV = "IV"


class NcRegime(str, Enum):
    IA = "Ia"
    IB_IIA = "Ib_IIa"
    IIB = "IIb"
    TINY_SIDEBAND = "tiny_sideband"


@dataclass(frozen=True)
class PhysicalParams:
    """Rates defining one optomechanical instance, all in units of ``kappa``."""

    g0: float
    omega_m: float
    gamma_m: float
    delta0: float
    eps: float
    n_th: float = 0.0
    kappa: float = 1.0

    def __post_init__(self):
        for name in ("g0", "omega_m", "gamma_m", "delta0", "eps", "n_th", "kappa"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.kappa <= 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.omega_m <= 0:
            raise ValueError(f"omega_m must be positive, got {self.omega_m}")
        if self.gamma_m <= 0:
            raise ValueError(f"gamma_m must be positive, got {self.gamma_m}")
        if self.eps < 0:
            raise ValueError(f"eps must be non-negative, got {self.eps}")
        if self.n_th < 0:
            raise ValueError(f"n_th must be non-negative, got {self.n_th}")
        if self.q_m < 10:
            warnings.warn(
                f"Q_m = {self.q_m:.3g} is not large; the amplitude-damping model "
                "assumes Q_m >> 1",
                ValidityWarning,
                stacklevel=3,
            )

    @property
    def q_m(self) -> float:
        return self.omega_m / self.gamma_m

    @property
    def sideband(self) -> float:
        return self.omega_m / self.kappa

    @property
    def kerr(self) -> float:
        """Kerr coefficient g0**2 / omega_m of the equivalent medium."""
        return self.g0**2 / self.omega_m

    @property
    def chi(self) -> float:
        return self.g0**2 / (self.omega_m * self.kappa)

    @property
    def y(self) -> float:
        return -self.delta0 / self.kappa

    @property
    def z(self) -> float:
        return self.chi * (self.eps / self.kappa) ** 2

    @classmethod
    def from_dimensionless(
        cls,
        y: float,
        z: float,
        chi: float,
        sideband: float,
        q_m: float,
        n_th: float = 0.0,
        kappa: float = 1.0,
    ) -> "PhysicalParams":
        """Build rates from (y, z, chi, omega_m/kappa, Q_m)."""
        if chi <= 0:
            raise ValueError(f"chi must be positive, got {chi}")
        if z < 0:
            raise ValueError(f"z must be non-negative, got {z}")
        omega_m = sideband * kappa
        return cls(
            g0=math.sqrt(chi * omega_m * kappa),
            omega_m=omega_m,
            gamma_m=omega_m / q_m,
            delta0=-y * kappa,
            eps=kappa * math.sqrt(z / chi),
            n_th=n_th,
            kappa=kappa,
        )


@dataclass(frozen=True)
class DimensionlessParams:
    chi: float
    y: float
    z: float
    sideband: float
    q_m: float


def to_dimensionless(p: PhysicalParams) -> DimensionlessParams:
    return DimensionlessParams(chi=p.chi, y=p.y, z=p.z, sideband=p.sideband, q_m=p.q_m)


# ---------------------------------------------------------------------------
# the cubic


def cubic(lam, y, z):
    """p(lam) = 4 lam^3 - 4 y lam^2 + (y^2 + 1/4) lam - z."""
    return ((4.0 * lam - 4.0 * y) * lam + (y * y + 0.25)) * lam - z


def cubic_derivative(lam, y):
    return (12.0 * lam - 8.0 * y) * lam + (y * y + 0.25)


def _polish(lam: float, y: float, z: float, steps: int = 3) -> float:
    # Newton steps accepted only while they shrink the residual; near a
    # double root p' vanishes and a raw step would overshoot.
    res = abs(cubic(lam, y, z))
    for _ in range(steps):
        d = cubic_derivative(lam, y)
        if d == 0.0:
            break
        trial = lam - cubic(lam, y, z) / d
        trial_res = abs(cubic(trial, y, z))
        if trial_res >= res:
            break
        lam, res = trial, trial_res
    return lam


def mean_field_roots(y: float, z: float) -> np.ndarray:
    """Real roots of the mean-field cubic in ascending order.

    Returns one or three values of ``lam = chi * nbar``.  On the degenerate
    boundary z = z_+/-(y) only the simple root is returned, so boundary
    points fall into the adjacent single-solution region.
    """
    if z < 0:
        raise ValueError(f"z must be non-negative, got {z}")
    if z == 0:
        return np.array([0.0])

    # depressed cubic t^3 + P t + Q with lam = t + y/3
    P = 1.0 / 16.0 - y * y / 12.0
    Q = y**3 / 108.0 + y / 48.0 - z / 4.0
    shift = y / 3.0
    a3 = 4.0 * P**3
    b2 = 27.0 * Q * Q
    disc = a3 + b2  # negative -> three distinct real roots
    scale = abs(a3) + b2

    if abs(disc) <= _DISC_RTOL * scale:
        if abs(P) <= _DISC_RTOL * max(1.0, y * y):
            ts = [0.0]
        else:
            ts = [3.0 * Q / P]
    elif disc < 0:
        r = 2.0 * math.sqrt(-P / 3.0)
        arg = 3.0 * Q / (P * r)
        theta = math.acos(max(-1.0, min(1.0, arg))) / 3.0
        ts = [r * math.cos(theta - 2.0 * math.pi * k / 3.0) for k in range(3)]
    else:
        sq = math.sqrt(disc / 108.0)
        ts = [float(np.cbrt(-Q / 2.0 + sq)) + float(np.cbrt(-Q / 2.0 - sq))]

    roots = sorted(_polish(t + shift, y, z) for t in ts)
    return np.array(roots)


def bistability_window(y: float):
    """Driving-power window with three mean-field solutions.

    Returns ``(z_minus, z_plus, lam_minus, lam_plus)`` where ``lam_pm`` are the
    scaled occupations chi*n_pm at the turning points, or ``None`` when
    ``y`` does not exceed the threshold sqrt(3)/2.
    """
    if y < Y_THRESHOLD:
        return None
    s = max(y * y - 0.75, 0.0)
    root = math.sqrt(s)
    base = y * (y * y + 3.0 * Y_THRESHOLD**2)
    z_minus = (base - s * root) / 27.0
    z_plus = (base + s * root) / 27.0
    lam_minus = (2.0 * y - root) / 6.0
    lam_plus = (2.0 * y + root) / 6.0
    return z_minus, z_plus, lam_minus, lam_plus


# ---------------------------------------------------------------------------
# branches and stability


@dataclass(frozen=True)
class MeanFieldBranch:
    """One mean-field solution with its linear-stability data."""

    lam: float
    nbar: float
    a_bar: complex
    b_bar: complex
    g_eff: complex
    delta_eff: float
    branch_index: BranchIndex
    c1: float = field(default=math.nan)
    c2: float = field(default=math.nan)
    stability: Stability | None = None


def rh_coefficients(b: MeanFieldBranch, p: PhysicalParams) -> tuple[float, float]:
    """Routh-Hurwitz coefficients (c1, c2); stable iff both are positive."""
    g2 = abs(b.g_eff) ** 2
    return _rh(g2, b.delta_eff, p.kappa, p.gamma_m, p.omega_m)


def _rh(g2, delta, kappa, gamma_m, omega_m):
    d2 = delta * delta
    w2 = omega_m * omega_m
    s2 = (kappa + gamma_m) ** 2
    c1 = 4.0 * g2 * delta + omega_m * (d2 + kappa * kappa / 4.0)
    c2 = kappa * gamma_m * math.fsum(
        [(d2 - w2) ** 2, 0.5 * (d2 + w2) * s2, s2 * s2 / 16.0]
    ) - 4.0 * g2 * delta * omega_m * s2
    return c1, c2


def classify_branch(b: MeanFieldBranch, kerr: bool = False) -> Stability:
    """Stability verdict from the Routh-Hurwitz coefficients of ``b``.

    With ``kerr=True`` only c1 is used, which is the complete criterion for
    the equivalent Kerr medium.  Values within 1e-12 of zero count as
    unstable.
    """
    if math.isnan(b.c1) or math.isnan(b.c2):
        raise ValueError("branch has no Routh-Hurwitz coefficients")
    if b.c1 <= _TIE_ATOL:
        return Stability.UNSTABLE_C1
    if kerr:
        return Stability.STABLE
    if b.c2 <= _TIE_ATOL:
        return Stability.UNSTABLE_C2
    return Stability.STABLE


def branch_state(
    p: PhysicalParams, lam: float, index: BranchIndex | str = BranchIndex.ONLY
) -> MeanFieldBranch:
    """Amplitudes, effective parameters and stability for the root ``lam``.

    For ``g0 = 0`` the cavity is linear, ``lam`` is ignored and the empty-
    nonlinearity solution a = eps / (i delta0 - kappa/2) is returned.
    """
    if lam < 0:
        raise ValueError(f"lam must be non-negative, got {lam}")
    index = BranchIndex(index)
    kappa = p.kappa
    chi = p.chi
    if chi == 0.0:
        a_bar = p.eps / complex(-kappa / 2.0, p.delta0)
        nbar = abs(a_bar) ** 2
        lam = 0.0
    else:
        nbar = lam / chi
        phi = math.atan(4.0 * lam - 2.0 * p.y)
        a_bar = -complex(math.cos(phi), math.sin(phi)) * math.sqrt(nbar)
    b_bar = 1j * p.g0 * nbar / complex(p.gamma_m / 2.0, p.omega_m)
    g_eff = p.g0 * a_bar
    delta_eff = p.delta0 + 2.0 * nbar * p.g0**2 / p.omega_m
    c1, c2 = _rh(abs(g_eff) ** 2, delta_eff, kappa, p.gamma_m, p.omega_m)
    partial = MeanFieldBranch(
        lam=lam,
        nbar=nbar,
        a_bar=complex(a_bar),
        b_bar=complex(b_bar),
        g_eff=complex(g_eff),
        delta_eff=delta_eff,
        branch_index=index,
        c1=c1,
        c2=c2,
    )
    return replace(partial, stability=classify_branch(partial))


def _label_roots(y: float, roots) -> list[BranchIndex]:
    if len(roots) == 3:
        return [BranchIndex.LOWER, BranchIndex.MIDDLE, BranchIndex.UPPER]
    window = bistability_window(y)
    if window is None or window[0] == window[1]:
        return [BranchIndex.ONLY]
    lam_minus, lam_plus = window[2], window[3]
    lam = roots[0]
    if lam <= lam_minus:
        return [BranchIndex.LOWER]
    if lam >= lam_plus:
        return [BranchIndex.UPPER]
    return [BranchIndex.ONLY]


def mean_field_branches(p: PhysicalParams) -> list[MeanFieldBranch]:
    """All mean-field solutions of ``p``, ascending in occupation.

    A unique solution above threshold is labelled as the continuation of
    the lower or upper branch, so branch labels stay consistent along a
    power sweep; below threshold it is labelled ``only``.
    """
    if p.chi == 0.0:
        return [branch_state(p, 0.0, BranchIndex.ONLY)]
    roots = mean_field_roots(p.y, p.z)
    labels = _label_roots(p.y, roots)
    return [branch_state(p, float(lam), lab) for lam, lab in zip(roots, labels)]


def drift_matrix(b: MeanFieldBranch, p: PhysicalParams) -> np.ndarray:
    """Drift matrix of the linearised fluctuations in the basis (d+, d, c+, c).

    The fluctuation vector obeys du/dt = -A u - u_in, so the branch is stable
    when every eigenvalue of A has a positive real part.
    """
    g = b.g_eff
    gc = g.conjugate()
    k2 = p.kappa / 2.0
    gm2 = p.gamma_m / 2.0
    d = b.delta_eff
    w = p.omega_m
    return np.array(
        [
            [k2 + 1j * d, 0.0, 1j * gc, 1j * gc],
            [0.0, k2 - 1j * d, -1j * g, -1j * g],
            [1j * g, 1j * gc, gm2 - 1j * w, 0.0],
            [-1j * g, -1j * gc, 0.0, gm2 + 1j * w],
        ],
        dtype=complex,
    )


# ---------------------------------------------------------------------------
# critical occupation


def c2_of_occupation(lam, y: float, sideband: float, q_m: float):
    """c2 as a function of lam = chi*nbar in units kappa = 1 (vectorised)."""
    lam = np.asarray(lam, dtype=float)
    w = sideband
    gm = w / q_m
    delta = 2.0 * lam - y
    g2 = w * lam
    d2 = delta * delta
    s2 = (1.0 + gm) ** 2
    return gm * ((d2 - w * w) ** 2 + 0.5 * (d2 + w * w) * s2 + s2 * s2 / 16.0) - (
        4.0 * g2 * delta * w * s2
    )


def _c2_scalar(lam: float, y: float, sideband: float, q_m: float) -> float:
    w = sideband
    gm = w / q_m
    delta = 2.0 * lam - y
    d2 = delta * delta
    s2 = (1.0 + gm) ** 2
    return math.fsum(
        [
            gm * (d2 - w * w) ** 2,
            gm * 0.5 * (d2 + w * w) * s2,
            gm * s2 * s2 / 16.0,
            -4.0 * w * lam * delta * w * s2,
        ]
    )


def _c2_polynomial(y: float, sideband: float, q_m: float) -> np.polynomial.Polynomial:
    P = np.polynomial.Polynomial
    w = sideband
    gm = w / q_m
    s2 = (1.0 + gm) ** 2
    delta = P([-y, 2.0])
    lam = P([0.0, 1.0])
    d2 = delta * delta
    return gm * ((d2 - w * w) ** 2 + 0.5 * (d2 + w * w) * s2 + s2 * s2 / 16.0) - (
        4.0 * w * lam * delta * w * s2
    )


def _nc_formula(y: float, radicand: float) -> float:
    return 0.25 * (y + math.sqrt(y * y + radicand))


def critical_occupation(
    y: float, sideband: float, q_m: float, iterations: int = 200
) -> float:
    """Scaled critical occupation chi*n_c: the smallest root of c2 above y/2.

    Returns :data:`UNCONDITIONALLY_STABLE` (``inf``) when c2 stays positive
    over the whole search range.  Raises :class:`BracketError` if a sign
    change cannot be bracketed.
    """
    if sideband <= 0 or q_m <= 0:
        raise ValueError("sideband and q_m must be positive")
    lo = y / 2.0 if y > 0 else 0.0
    estimate = max(
        _nc_formula(y, 2.0 * q_m * sideband),
        _nc_formula(y, 2.0 * sideband**3 / q_m),
        _nc_formula(y, 1.0 / (8.0 * sideband * q_m)),
    )
    hi = lo + 10.0 * max(1.0, estimate)

    f_lo = _c2_scalar(lo, y, sideband, q_m)
    if not math.isfinite(f_lo):
        raise BracketError(f"c2 is not finite at the lower bound {lo}")
    if f_lo <= 0:
        raise BracketError(f"c2 = {f_lo} is not positive at the lower bound {lo}")

    # negative segments of the quartic lie between consecutive real roots;
    # sampling roots and their midpoints cannot miss one.
    rts = _c2_polynomial(y, sideband, q_m).roots()
    real = sorted(
        float(r.real)
        for r in rts
        if abs(r.imag) <= 1e-9 * max(1.0, abs(r.real)) and lo < r.real < hi
    )
    probes = [lo, *real, hi]
    probes = sorted(set(probes + [0.5 * (a + b) for a, b in zip(probes, probes[1:])]))
    a = lo
    b = None
    for x in probes[1:]:
        if _c2_scalar(x, y, sideband, q_m) <= 0:
            b = x
            break
        a = x
    if b is None:
        return UNCONDITIONALLY_STABLE
    for _ in range(iterations):
        mid = 0.5 * (a + b)
        if mid in (a, b):
            break
        if _c2_scalar(mid, y, sideband, q_m) > 0:
            a = mid
        else:
            b = mid
    if not (_c2_scalar(a, y, sideband, q_m) > 0 >= _c2_scalar(b, y, sideband, q_m)):
        raise BracketError(f"lost the sign change of c2 in [{a}, {b}]")
    return 0.5 * (a + b)


def nc_asymptotic(
    y: float, sideband: float, q_m: float, regime: NcRegime | str
) -> float | None:
    """Closed-form approximations of chi*n_c in the four damping regimes.

    For ``tiny_sideband`` the value returned is chi*n', the end of the
    unstable segment of the upper branch, or ``None`` when the branch is
    unconditionally stable.
    """
    regime = NcRegime(regime)
    gm = sideband / q_m  # gamma_m / kappa
    if regime is NcRegime.IA:
        if not sideband > gm > 1.0:
            _warn_regime(regime, "omega_m > gamma_m > kappa")
        return _nc_formula(y, 2.0 * q_m * sideband)
    if regime is NcRegime.IB_IIA:
        if not sideband > 1.0 > gm:
            _warn_regime(regime, "omega_m > kappa > gamma_m")
        return _nc_formula(y, 2.0 * sideband**3 / q_m)
    if regime is NcRegime.IIB:
        if not 1.0 > sideband > 1.0 / q_m:
            _warn_regime(regime, "1 > omega_m/kappa > 1/Q_m")
        return _nc_formula(y, 1.0 / (8.0 * sideband * q_m))
    if not q_m * sideband < 1.0:
        _warn_regime(regime, "omega_m/kappa << 1/Q_m")
    qs = q_m * sideband
    if y <= 0:
        return None
    radicand = qs * qs - 1.0 / (32.0 * y * y)
    if radicand < 0:
        return None
    return y * (0.5 + qs + math.sqrt(radicand))


def _warn_regime(regime: NcRegime, condition: str) -> None:
    warnings.warn(
        f"regime {regime.value} assumes {condition}", ValidityWarning, stacklevel=3
    )


def critical_power(y: float, sideband: float, q_m: float) -> float:
    """Driving power z_c at which the upper branch reaches n_c (inf if none)."""
    lam_c = critical_occupation(y, sideband, q_m)
    if math.isinf(lam_c):
        return math.inf
    return cubic(lam_c, y, 0.0)


def region_classify(y: float, z: float, sideband: float, q_m: float) -> Region:
    """Region of the (y, z) diagram; independent of chi, so chi = 1 is used."""
    p = PhysicalParams.from_dimensionless(y=y, z=z, chi=1.0, sideband=sideband, q_m=q_m)
    branches = mean_field_branches(p)
    top = branches[-1].stability
    if len(branches) == 3:
        if top is Stability.STABLE:
            return Region.II
        if top is Stability.UNSTABLE_C2:
            return Region.III
    else:
        if top is Stability.STABLE:
            return Region.I
        if top is Stability.UNSTABLE_C2:
            return Region.IV
    raise RuntimeError(
        f"unexpected stability pattern {[b.stability for b in branches]} at y={y}, z={z}"
    )


def optical_damping(b: MeanFieldBranch, p: PhysicalParams) -> tuple[float, float]:
    """Optically induced mechanical damping and the total damping rate.

    Uses the weak-coupling self-energy evaluated at the mechanical frequency;
    returns ``(gamma_opt, gamma_m + gamma_opt)``.
    """
    g2 = abs(b.g_eff) ** 2
    if math.sqrt(g2) >= p.kappa or p.gamma_m >= p.kappa:
        warnings.warn(
            "optical damping assumes |g|, gamma_m < kappa", ValidityWarning, stacklevel=2
        )

    def susceptibility(omega):
        return 1.0 / complex(p.kappa / 2.0, -(b.delta_eff + omega))

    w = p.omega_m
    sigma = -1j * g2 * (susceptibility(w) - susceptibility(-w).conjugate())
    gamma_opt = -2.0 * sigma.imag
    return gamma_opt, p.gamma_m + gamma_opt
