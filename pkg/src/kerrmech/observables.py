"""Observables of optical and optomechanical density matrices.

Phase-space conventions: ``alpha = Re + i Im`` with ``a|alpha> = alpha|alpha>``,
so a coherent state's Wigner function is ``(2/pi) exp(-2|alpha - alpha0|^2)``
and integrates to one over ``d Re d Im``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
from scipy import ndimage, special
from scipy.integrate import trapezoid

from .fock import DensityMatrix, DimensionError, FockConfig, FockOperator, ladder_op

__all__ = [
    "expect",
    "photon_number",
    "phonon_number",
    "optical_amplitude",
    "amplitude_squared",
    "g2_zero",
    "partial_trace_optical",
    "fidelity",
    "WignerGrid",
    "wigner",
    "default_axis",
    "local_maxima",
    "lobe_weights",
    "quadrature_distribution",
]

G2_MIN_PHOTONS = 1e-9
PSD_TOL = 1e-8


def expect(rho: DensityMatrix, op: FockOperator) -> complex:
    """Tr[rho O]."""
    if rho.dims != op.dims:
        raise DimensionError(f"dimension mismatch: {rho.dims} vs {op.dims}")
    # Tr[rho O] = sum_ij rho_ij O_ji
    O = op.matrix.tocoo()
    return complex(np.sum(rho.matrix[O.col, O.row] * O.data))


def _number_diag(dims: FockConfig, mode: str) -> np.ndarray:
    if mode == "optical":
        n = np.arange(dims.n_a, dtype=float)
        return np.repeat(n, dims.n_b) if dims.has_mechanics else n
    if not dims.has_mechanics:
        raise DimensionError("no mechanical mode in a Kerr-only space (n_b = 0)")
    return np.tile(np.arange(dims.n_b, dtype=float), dims.n_a)


def photon_number(rho: DensityMatrix) -> float:
    return float(np.dot(np.diag(rho.matrix).real, _number_diag(rho.dims, "optical")))


def phonon_number(rho: DensityMatrix) -> float:
    return float(np.dot(np.diag(rho.matrix).real, _number_diag(rho.dims, "mechanical")))


def optical_amplitude(rho: DensityMatrix) -> complex:
    return expect(rho, ladder_op(rho.dims, "optical"))


def amplitude_squared(rho: DensityMatrix) -> float:
    return abs(optical_amplitude(rho)) ** 2


def g2_zero(rho: DensityMatrix) -> float | None:
    """<a+a+aa>/<a+a>^2, or ``None`` when <a+a> < 1e-9 (vacuum-dominated)."""
    pops = np.diag(rho.matrix).real
    n = _number_diag(rho.dims, "optical")
    mean = float(np.dot(pops, n))
    if mean < G2_MIN_PHOTONS:
        return None
    return float(np.dot(pops, n * (n - 1.0))) / mean**2


def partial_trace_optical(rho: DensityMatrix) -> DensityMatrix:
    """Trace out the mechanical mode."""
    d = rho.dims
    if not d.has_mechanics:
        raise DimensionError("state has no mechanical mode to trace out")
    r = rho.matrix.reshape(d.n_a, d.n_b, d.n_a, d.n_b)
    return DensityMatrix(d.optical, np.einsum("imjm->ij", r))


def _psd_sqrt(m: np.ndarray, tol: float = PSD_TOL) -> np.ndarray:
    w, v = la.eigh(0.5 * (m + m.conj().T))
    if w.min() < -tol:
        raise ValueError(f"matrix is not positive semidefinite (eigenvalue {w.min():.3g})")
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def fidelity(rho1: DensityMatrix, rho2: DensityMatrix) -> float:
    """Tr sqrt(sqrt(rho2) rho1 sqrt(rho2)) (Uhlmann fidelity, not squared)."""
    if rho1.dims != rho2.dims:
        raise DimensionError(f"dimension mismatch: {rho1.dims} vs {rho2.dims}")
    s = _psd_sqrt(rho2.matrix)
    _psd_sqrt(rho1.matrix)  # validates rho1
    inner = s @ rho1.matrix @ s
    w = la.eigvalsh(0.5 * (inner + inner.conj().T))
    return float(min(1.0, np.sum(np.sqrt(np.clip(w, 0.0, None)))))


@dataclass(frozen=True)
class WignerGrid:
    """Wigner function sampled on a rectangular grid, ``values[i_im, i_re]``."""

    re_axis: np.ndarray
    im_axis: np.ndarray
    values: np.ndarray

    @property
    def cell_area(self) -> float:
        return float((self.re_axis[1] - self.re_axis[0]) * (self.im_axis[1] - self.im_axis[0]))

    def total(self) -> float:
        return float(trapezoid(trapezoid(self.values, self.re_axis, axis=1), self.im_axis))

    def points(self) -> np.ndarray:
        re, im = np.meshgrid(self.re_axis, self.im_axis)
        return re + 1j * im


def default_axis(n_a: int, points: int = 121) -> np.ndarray:
    half = math.sqrt(n_a)
    return np.linspace(-half, half, points)


def _wigner_values(rho: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    # Displaced-parity series summed in closed form:
    #   W = (2/pi) e^{-B/2} sum_{m<=n} c_mn (-1)^m sqrt(m!/n!) A^{n-m} L_m^{n-m}(B)
    # with A = 2 alpha, B = |A|^2 and c_mn = rho_mm or 2 Re(rho_mn ...).
    N = rho.shape[0]
    A = 2.0 * alpha
    B = np.abs(A) ** 2
    logabs = np.log(np.where(B > 0, np.abs(A), 1.0))
    phase = np.exp(1j * np.angle(A))
    lg = np.array([math.lgamma(k + 1.0) for k in range(N)])
    W = np.zeros(alpha.shape)
    for k in range(N):  # k = n - m
        if k == 0:
            env = np.exp(-0.5 * B)
        else:
            env = np.where(B > 0, np.exp(k * logabs - 0.5 * B), 0.0)
        ph = phase**k
        acc = np.zeros(alpha.shape, dtype=complex)
        for m in range(N - k):
            c = rho[m, m + k]
            if c == 0:
                continue
            coef = (-1) ** m * math.exp(0.5 * (lg[m] - lg[m + k]))
            acc += c * coef * special.eval_genlaguerre(m, k, B)
        term = (acc * ph).real * env
        W += term if k == 0 else 2.0 * term
    return W * (2.0 / math.pi)


def wigner(
    rho: DensityMatrix,
    re_axis: np.ndarray | None = None,
    im_axis: np.ndarray | None = None,
    points: int = 121,
    mass_tol: float = 1e-3,
) -> WignerGrid:
    """Wigner function of an optical-only state on a uniform grid.

    The default grid spans ``|Re alpha|, |Im alpha| <= sqrt(n_a)`` with
    ``points`` samples per axis.  Warns when more than ``mass_tol`` of the
    normalisation lies outside the grid.
    """
    if rho.dims.has_mechanics:
        raise DimensionError("wigner expects an optical-only state; use partial_trace_optical")
    re_axis = default_axis(rho.dims.n_a, points) if re_axis is None else np.asarray(re_axis, float)
    im_axis = re_axis if im_axis is None else np.asarray(im_axis, float)
    re, im = np.meshgrid(re_axis, im_axis)
    w = WignerGrid(re_axis, im_axis, _wigner_values(rho.matrix, re + 1j * im))
    if len(re_axis) > 1 and len(im_axis) > 1:
        missing = 1.0 - w.total()
        if missing > mass_tol:
            warnings.warn(
                f"Wigner grid misses {missing:.3g} of the normalisation; enlarge the grid",
                RuntimeWarning,
                stacklevel=2,
            )
    return w


def local_maxima(w: WignerGrid, rel_threshold: float = 0.1) -> list[complex]:
    """Grid points that are 3x3 local maxima above ``rel_threshold * max(W)``."""
    v = w.values
    peak = v.max()
    mask = (v == ndimage.maximum_filter(v, size=3, mode="nearest")) & (v > rel_threshold * peak)
    pts, vals = w.points()[mask], v[mask]
    return [complex(z) for z in pts[np.argsort(-vals, kind="stable")]]


def lobe_weights(w: WignerGrid, centers: tuple[complex, complex], min_separation: float = 1.0):
    """Integral of W over the half-planes nearer to each of two centers.

    Returns ``(p_first, p_second)``; their sum is the grid normalisation and
    is not forced to one.
    """
    c1, c2 = complex(centers[0]), complex(centers[1])
    if abs(c1 - c2) <= min_separation:
        warnings.warn(
            f"lobe centers only {abs(c1 - c2):.3g} apart; weights are not meaningful",
            RuntimeWarning,
            stacklevel=2,
        )
    pts = w.points()
    nearer_first = np.abs(pts - c1) <= np.abs(pts - c2)
    v = w.values * w.cell_area
    return float(v[nearer_first].sum()), float(v[~nearer_first].sum())


def _hermite_functions(n: int, x: np.ndarray) -> np.ndarray:
    # Normalised eigenfunctions of X = (a + a+)/2, by the stable three-term recursion.
    u = math.sqrt(2.0) * np.asarray(x, float)
    out = np.empty((n,) + u.shape)
    out[0] = (2.0 / math.pi) ** 0.25 * np.exp(-0.5 * u**2)
    if n > 1:
        out[1] = math.sqrt(2.0) * u * out[0]
    for k in range(2, n):
        out[k] = math.sqrt(2.0 / k) * u * out[k - 1] - math.sqrt((k - 1) / k) * out[k - 2]
    return out


def quadrature_distribution(rho: DensityMatrix, x: np.ndarray) -> np.ndarray:
    """Probability density of X = (a + a+)/2 (the Re alpha marginal of W)."""
    if rho.dims.has_mechanics:
        raise DimensionError("quadrature_distribution expects an optical-only state")
    psi = _hermite_functions(rho.dims.n_a, x)
    return np.einsum("mx,mn,nx->x", psi, rho.matrix, psi).real
