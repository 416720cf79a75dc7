"""Truncated Fock-space operators, master equations and steady states.

The composite space is ordered optical-major: basis state ``|n, m>`` (photon
number ``n``, phonon number ``m``) has index ``n * n_b + m``.  A Kerr-only
space has ``n_b = 0`` and index ``n``.  Density matrices are vectorised by
column stacking, ``vec(rho)[i + D*j] = rho[i, j]``.
"""

from __future__ import annotations

import logging
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .semiclassical import PhysicalParams

log = logging.getLogger(__name__)

__all__ = [
    "MAX_LIOUVILLE_DIM_ENV",
    "DEFAULT_MAX_LIOUVILLE_DIM",
    "DimensionError",
    "SteadyStateError",
    "DegenerateSteadyStateError",
    "ResourceCapError",
    "FockConfig",
    "FockOperator",
    "DensityMatrix",
    "Liouvillian",
    "ladder_op",
    "identity_op",
    "build_hamiltonian_om",
    "build_hamiltonian_kerr",
    "collapse_ops_om",
    "collapse_ops_kerr",
    "build_liouvillian",
    "liouvillian_om",
    "liouvillian_kerr",
    "max_liouville_dim",
    "available_backends",
    "steady_state",
    "kernel_dimension",
    "refine_steady_state",
    "ConvergenceResult",
    "convergence_study",
    "polaron_check",
    "fock_dm",
    "coherent_dm",
    "thermal_dm",
]

MAX_LIOUVILLE_DIM_ENV = "KERRMECH_MAX_LIOUVILLE_DIM"
DEFAULT_MAX_LIOUVILLE_DIM = 250_000
_REFINE_TOL = 1e-13
_ROUNDOFF = 1e-14


class DimensionError(ValueError):
    """Operands live on different truncated spaces."""


class SteadyStateError(RuntimeError):
    """The steady-state solve failed.

    ``residuals`` holds the residual history of the attempt, when there is one.
    """

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals or [])


class DegenerateSteadyStateError(SteadyStateError):
    """The Liouvillian kernel is not one-dimensional."""


class ResourceCapError(MemoryError):
    """Requested Liouville dimension exceeds the configured cap."""


@dataclass(frozen=True)
class FockConfig:
    """Truncation of the optical (``n_a``) and mechanical (``n_b``) modes."""

    n_a: int
    n_b: int = 0

    def __post_init__(self):
        if int(self.n_a) != self.n_a or int(self.n_b) != self.n_b:
            raise ValueError("truncations must be integers")
        if self.n_a < 2:
            raise ValueError(f"n_a must be at least 2, got {self.n_a}")
        if self.n_b < 0 or self.n_b == 1:
            raise ValueError(f"n_b must be 0 (no mechanics) or at least 2, got {self.n_b}")

    @property
    def has_mechanics(self) -> bool:
        return self.n_b > 0

    @property
    def dim(self) -> int:
        return self.n_a * max(1, self.n_b)

    @property
    def liouville_dim(self) -> int:
        return self.dim**2

    @property
    def optical(self) -> "FockConfig":
        return FockConfig(self.n_a, 0)


def _require_same(d1: FockConfig, d2: FockConfig) -> None:
    if d1 != d2:
        raise DimensionError(f"dimension mismatch: {d1} vs {d2}")


@dataclass(frozen=True, eq=False)
class FockOperator:
    """Sparse operator on a truncated Fock space."""

    dims: FockConfig
    matrix: sp.csr_matrix

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=complex)
        if m.shape != (self.dims.dim, self.dims.dim):
            raise DimensionError(f"matrix shape {m.shape} does not match {self.dims}")
        object.__setattr__(self, "matrix", m)

    def dag(self) -> "FockOperator":
        return FockOperator(self.dims, self.matrix.conj().T.tocsr())

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        diff = self.matrix - self.matrix.conj().T
        return diff.nnz == 0 or float(np.abs(diff.data).max()) <= atol

    def _coerce(self, other) -> sp.csr_matrix:
        if isinstance(other, FockOperator):
            _require_same(self.dims, other.dims)
            return other.matrix
        raise TypeError(f"unsupported operand {type(other).__name__}")

    def __add__(self, other):
        return FockOperator(self.dims, self.matrix + self._coerce(other))

    def __sub__(self, other):
        return FockOperator(self.dims, self.matrix - self._coerce(other))

    def __matmul__(self, other):
        return FockOperator(self.dims, self.matrix @ self._coerce(other))

    def __mul__(self, scalar):
        if isinstance(scalar, FockOperator):
            return NotImplemented
        return FockOperator(self.dims, self.matrix * complex(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return FockOperator(self.dims, -self.matrix)

    def commutator(self, other: "FockOperator") -> "FockOperator":
        return self @ other - other @ self


def identity_op(dims: FockConfig) -> FockOperator:
    return FockOperator(dims, sp.identity(dims.dim, dtype=complex, format="csr"))


def _annihilation(n: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, n, dtype=float)), 1, format="csr", dtype=complex)


def ladder_op(dims: FockConfig, mode: str = "optical") -> FockOperator:
    """Annihilation operator of ``mode`` ("optical" or "mechanical")."""
    if mode == "optical":
        a = _annihilation(dims.n_a)
        if dims.has_mechanics:
            a = sp.kron(a, sp.identity(dims.n_b), format="csr")
        return FockOperator(dims, a)
    if mode == "mechanical":
        if not dims.has_mechanics:
            raise DimensionError("no mechanical mode in a Kerr-only space (n_b = 0)")
        return FockOperator(dims, sp.kron(sp.identity(dims.n_a), _annihilation(dims.n_b), format="csr"))
    raise ValueError(f"unknown mode {mode!r}")


def build_hamiltonian_om(p: PhysicalParams, dims: FockConfig) -> FockOperator:
    """H = w_m b+b - D0 a+a - g0 a+a (b + b+) + i eps (a - a+)."""
    if not dims.has_mechanics:
        raise DimensionError("optomechanical Hamiltonian needs n_b >= 2")
    a = ladder_op(dims, "optical")
    b = ladder_op(dims, "mechanical")
    n = a.dag() @ a
    H = (
        p.omega_m * (b.dag() @ b)
        - p.delta0 * n
        - p.g0 * (n @ (b + b.dag()))
        + 1j * p.eps * (a - a.dag())
    )
    return H


def build_hamiltonian_kerr(p: PhysicalParams, dims: FockConfig) -> FockOperator:
    """H = -D0 a+a - (g0^2/w_m)(a+a)^2 + i eps (a - a+) on an optical-only space."""
    if dims.has_mechanics:
        raise DimensionError("Kerr Hamiltonian lives on an optical-only space (n_b = 0)")
    a = ladder_op(dims, "optical")
    n = a.dag() @ a
    return -p.delta0 * n - p.kerr * (n @ n) + 1j * p.eps * (a - a.dag())


def collapse_ops_om(p: PhysicalParams, dims: FockConfig) -> list[tuple[FockOperator, float]]:
    a = ladder_op(dims, "optical")
    b = ladder_op(dims, "mechanical")
    ops = [(a, p.kappa), (b, (p.n_th + 1.0) * p.gamma_m)]
    if p.n_th > 0:
        ops.append((b.dag(), p.n_th * p.gamma_m))
    return ops


def collapse_ops_kerr(p: PhysicalParams, dims: FockConfig) -> list[tuple[FockOperator, float]]:
    return [(ladder_op(dims, "optical"), p.kappa)]


@dataclass(frozen=True, eq=False)
class Liouvillian:
    """Superoperator acting on column-stacked density matrices."""

    dims: FockConfig
    superop: sp.csr_matrix

    def apply(self, rho) -> np.ndarray:
        r = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
        D = self.dims.dim
        out = self.superop @ r.reshape(-1, order="F")
        return out.reshape(D, D, order="F")


def build_liouvillian(
    H: FockOperator, collapse: Sequence[tuple[FockOperator, float]] = ()
) -> Liouvillian:
    """L[rho] = -i[H, rho] + sum_k rate_k D[o_k] rho, as a sparse superoperator."""
    dims = H.dims
    eye = sp.identity(dims.dim, dtype=complex, format="csr")
    h = H.matrix
    L = -1j * (sp.kron(eye, h) - sp.kron(h.T, eye))
    for op, rate in collapse:
        _require_same(dims, op.dims)
        if rate < 0:
            raise ValueError(f"negative dissipation rate {rate}")
        if rate == 0:
            continue
        o = op.matrix
        oo = (o.conj().T @ o).tocsr()
        L = L + rate * (sp.kron(o.conj(), o) - 0.5 * sp.kron(eye, oo) - 0.5 * sp.kron(oo.T, eye))
    L = L.tocsr()
    _prune(L)
    return Liouvillian(dims, L)


def _prune(M: sp.csr_matrix) -> None:
    # drop cancellation leftovers; they perturb pivot selection in the solvers
    if M.nnz:
        M.data[np.abs(M.data) <= _ROUNDOFF * np.abs(M.data).max()] = 0
    M.eliminate_zeros()


def liouvillian_om(p: PhysicalParams, dims: FockConfig) -> Liouvillian:
    return build_liouvillian(build_hamiltonian_om(p, dims), collapse_ops_om(p, dims))


def liouvillian_kerr(p: PhysicalParams, dims: FockConfig) -> Liouvillian:
    return build_liouvillian(build_hamiltonian_kerr(p, dims), collapse_ops_kerr(p, dims))


# ---------------------------------------------------------------------------
# density matrices


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Dense density matrix on a truncated Fock space."""

    dims: FockConfig
    matrix: np.ndarray
    info: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.dims.dim, self.dims.dim):
            raise DimensionError(f"matrix shape {m.shape} does not match {self.dims}")
        object.__setattr__(self, "matrix", m)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def eigvals(self) -> np.ndarray:
        return la.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))

    def check(self, atol: float = 1e-9, psd_tol: float = 1e-8) -> None:
        """Raise ``ValueError`` unless trace, hermiticity and positivity hold."""
        if abs(self.trace() - 1.0) > atol:
            raise ValueError(f"trace {self.trace()} differs from 1")
        herm = float(np.abs(self.matrix - self.matrix.conj().T).max())
        if herm > atol:
            raise ValueError(f"not Hermitian (max deviation {herm:.3g})")
        lo = float(self.eigvals().min())
        if lo < -psd_tol:
            raise ValueError(f"smallest eigenvalue {lo:.3g} below -{psd_tol}")

    @classmethod
    def from_array(cls, arr, dims: FockConfig, check: bool = True) -> "DensityMatrix":
        rho = cls(dims, arr)
        if check:
            rho.check()
        return rho


def _clean_state(rho: np.ndarray, psd_tol: float = 1e-8) -> tuple[np.ndarray, float]:
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real
    w, v = la.eigh(rho)
    lo = float(w.min())
    if lo < -psd_tol:
        warnings.warn(
            f"steady state has eigenvalue {lo:.3g} below -{psd_tol}; clipping",
            RuntimeWarning,
            stacklevel=3,
        )
    if lo < 0:
        w = np.clip(w, 0.0, None)
        rho = (v * w) @ v.conj().T
        rho = 0.5 * (rho + rho.conj().T)
        rho = rho / np.trace(rho).real
    return rho, lo


def fock_dm(dims: FockConfig, n: int, m: int = 0) -> DensityMatrix:
    idx = n * dims.n_b + m if dims.has_mechanics else n
    rho = np.zeros((dims.dim, dims.dim), dtype=complex)
    rho[idx, idx] = 1.0
    return DensityMatrix(dims, rho)


def coherent_amplitudes(n: int, alpha: complex) -> np.ndarray:
    """Fock amplitudes exp(-|a|^2/2) a^k / sqrt(k!) for k < n (not renormalised)."""
    k = np.arange(n)
    logfact = np.array([math.lgamma(j + 1.0) for j in k])
    if alpha == 0:
        out = np.zeros(n, dtype=complex)
        out[0] = 1.0
        return out
    mag = np.exp(-0.5 * abs(alpha) ** 2 + k * math.log(abs(alpha)) - 0.5 * logfact)
    return mag * np.exp(1j * k * np.angle(alpha))


def coherent_dm(n_a: int, alpha: complex, normalize: bool = True) -> DensityMatrix:
    psi = coherent_amplitudes(n_a, alpha)
    if normalize:
        psi = psi / np.linalg.norm(psi)
    return DensityMatrix(FockConfig(n_a), np.outer(psi, psi.conj()))


def thermal_dm(n: int, nbar: float) -> np.ndarray:
    """Diagonal thermal populations on ``n`` levels, renormalised."""
    if nbar == 0:
        p = np.zeros(n)
        p[0] = 1.0
        return np.diag(p).astype(complex)
    x = nbar / (1.0 + nbar)
    p = x ** np.arange(n)
    return np.diag(p / p.sum()).astype(complex)


# ---------------------------------------------------------------------------
# steady state


def max_liouville_dim() -> int:
    raw = os.environ.get(MAX_LIOUVILLE_DIM_ENV)
    if raw is None:
        return DEFAULT_MAX_LIOUVILLE_DIM
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{MAX_LIOUVILLE_DIM_ENV} must be an integer, got {raw!r}") from None
    if value <= 0:
        raise ValueError(f"{MAX_LIOUVILLE_DIM_ENV} must be positive")
    return value


def _trace_row_system(L: Liouvillian) -> sp.csc_matrix:
    # Row 0 (the rho_00 balance equation) is a linear combination of the
    # other diagonal rows, so it is swapped for the trace functional.
    D = L.dims.dim
    M = L.superop.tocsr(copy=True)
    start, stop = M.indptr[0], M.indptr[1]
    M.data[start:stop] = 0.0
    M.eliminate_zeros()
    trace_row = sp.csr_matrix(
        (np.ones(D, dtype=complex), (np.zeros(D, dtype=int), np.arange(D) * (D + 1))),
        shape=M.shape,
    )
    return (M + trace_row).tocsc()


def _hermitian_system(L: Liouvillian) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Real form of the trace-augmented system on Hermitian matrices.

    Unknowns are the D real diagonal entries followed by the real and the
    imaginary parts of the strict upper triangle, so there are D^2 real
    unknowns.  Returns ``(R, T)`` with ``vec(rho) = T @ x``.  Because L
    preserves Hermiticity, the diagonal rows and the upper-triangle rows are
    enough.
    """
    D = L.dims.dim
    N = D * D
    iu, ju = np.triu_indices(D, 1)
    npair = len(iu)
    diag = np.arange(D)
    p_re = D + np.arange(npair)
    p_im = D + npair + np.arange(npair)
    upper = iu + D * ju
    lower = ju + D * iu
    rows = np.concatenate([diag * (D + 1), upper, lower, upper, lower])
    cols = np.concatenate([diag, p_re, p_re, p_im, p_im])
    vals = np.concatenate(
        [np.ones(D + 2 * npair), np.full(npair, 1j), np.full(npair, -1j)]
    )
    T = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))
    LT = (L.superop @ T).tocsr()
    R = sp.vstack(
        [LT[diag * (D + 1)].real, LT[upper].real, LT[upper].imag], format="csr"
    )
    start, stop = R.indptr[0], R.indptr[1]
    R.data[start:stop] = 0.0
    R.eliminate_zeros()
    trace_row = sp.csr_matrix((np.ones(D), (np.zeros(D, dtype=int), diag)), shape=(N, N))
    R = (R + trace_row).tocsr()
    _prune(R)
    R.sort_indices()  # pardiso requires sorted column indices
    return R, T


def _locate_mkl() -> None:
    # pypardiso only searches its own prefix for the MKL runtime; pip may put
    # it elsewhere (e.g. /usr/local/lib for a system-wide install).
    if "PYPARDISO_MKL_RT" in os.environ:
        return
    import glob
    import site
    import sys

    prefixes = {sys.prefix, sys.base_prefix, sys.exec_prefix, "/usr/local", "/usr"}
    user_base = getattr(site, "USER_BASE", None)
    if user_base:
        prefixes.add(user_base)
    for prefix in sorted(prefixes):
        for name in ("libmkl_rt.so*", "libmkl_rt*.dylib", "mkl_rt*.dll"):
            hits = sorted(glob.glob(os.path.join(prefix, "lib", name)))
            hits += sorted(glob.glob(os.path.join(prefix, "Library", "bin", name)))
            if hits:
                os.environ["PYPARDISO_MKL_RT"] = hits[0]
                return


def _pardiso():
    try:
        _locate_mkl()
        import pypardiso
    except (ImportError, OSError) as exc:
        log.debug("pardiso unavailable: %s", exc)
        return None
    return pypardiso


def available_backends() -> list[str]:
    out = ["superlu"]
    if _pardiso() is not None:
        out.insert(0, "pardiso")
    return out


def _solve_pardiso(L: Liouvillian) -> np.ndarray:
    pypardiso = _pardiso()
    R, T = _hermitian_system(L)
    rhs = np.zeros(R.shape[0])
    rhs[0] = 1.0
    solver = pypardiso.PyPardisoSolver(mtype=11)
    solver.set_iparm(1, 1)  # use the settings below instead of defaults
    solver.set_iparm(2, 2)  # METIS fill-reducing ordering
    solver.set_iparm(10, 13)  # pivot perturbation 1e-13
    solver.set_iparm(11, 1)  # scaling
    solver.set_iparm(13, 1)  # weighted matching
    try:
        solver.factorize(R)
        x = solver.solve(R, rhs)
        if np.abs(R @ x - rhs).max() > _REFINE_TOL:
            # Perturbed pivots leave a low-rank error in the factors; GMRES
            # preconditioned by them removes it in a few iterations.
            P = spla.LinearOperator(R.shape, lambda v: solver.solve(R, v), dtype=float)
            x, _ = spla.gmres(R, rhs, x0=x, M=P, rtol=1e-10, atol=0.0, restart=20, maxiter=3)
    except pypardiso.pardiso_wrapper.PyPardisoError as exc:
        if "-2" in str(exc):
            raise MemoryError(str(exc)) from exc
        raise RuntimeError(str(exc)) from exc
    finally:
        solver.free_memory(everything=True)
    return T @ x


def _nested_dissection(M: sp.spmatrix) -> np.ndarray | None:
    try:
        import pymetis
    except ImportError:
        return None
    pattern = sp.csr_matrix(M, copy=True)
    pattern.data = np.ones_like(pattern.data, dtype=np.int8)
    G = (pattern + pattern.T).tocsr()
    G.setdiag(0)
    G.eliminate_zeros()
    perm, _ = pymetis.nested_dissection(adjacency=pymetis.CSRAdjacency(G.indptr, G.indices))
    return np.asarray(perm, dtype=np.int64)


def _solve_superlu(L: Liouvillian) -> np.ndarray:
    M = _trace_row_system(L)
    rhs = np.zeros(M.shape[0], dtype=complex)
    rhs[0] = 1.0
    perm = _nested_dissection(M)
    if perm is not None:
        Mp = M.tocsr()[perm][:, perm].tocsc()
        try:
            lu = spla.splu(
                Mp,
                permc_spec="NATURAL",
                diag_pivot_thresh=0.0,
                options=dict(SymmetricMode=True),
            )
            xp = lu.solve(rhs[perm])
            x = np.empty_like(xp)
            x[perm] = xp
            if np.all(np.isfinite(x)):
                return x
        except RuntimeError as exc:
            # static pivoting may hit a zero pivot; retry with partial pivoting
            log.debug("static-pivot factorisation failed (%s); retrying", exc)
    return spla.splu(M, permc_spec="COLAMD").solve(rhs)


def kernel_dimension(L: Liouvillian, rtol: float = 1e-10) -> int:
    """Numerical nullity of ``L`` from a dense SVD (small systems only)."""
    s = la.svdvals(L.superop.toarray())
    if s[0] == 0:
        return len(s)
    return int(np.sum(s <= rtol * s[0]))


def _residual(L: Liouvillian, x: np.ndarray) -> float:
    return float(np.abs(L.superop @ x).max())


def refine_steady_state(L: Liouvillian, rho: DensityMatrix, steps: int = 2) -> DensityMatrix:
    """Iterative refinement with residuals accumulated in extended precision.

    Intended for small instances; used as an independent check on the
    double-precision direct solve.
    """
    D = L.dims.dim
    M = _trace_row_system(L).tocoo()
    rows, cols = M.row, M.col
    data = M.data.astype(np.clongdouble)
    b = np.zeros(D * D, dtype=np.clongdouble)
    b[0] = 1.0
    x = rho.matrix.reshape(-1, order="F").astype(np.clongdouble)
    lu = spla.splu(M.tocsc(), permc_spec="COLAMD")
    for _ in range(steps):
        Mx = np.zeros(D * D, dtype=np.clongdouble)
        np.add.at(Mx, rows, data * x[cols])
        dx = lu.solve((b - Mx).astype(complex))
        x = x + dx.astype(np.clongdouble)
    out = np.asarray(x, dtype=complex).reshape(D, D, order="F")
    out = 0.5 * (out + out.conj().T)
    out = out / np.trace(out).real
    return DensityMatrix(L.dims, out, info={"method": "refined"})


def steady_state(
    L: Liouvillian,
    method: str = "direct",
    backend: str = "auto",
    tol: float = 1e-8,
    check_kernel: bool | None = None,
    max_dim: int | None = None,
) -> DensityMatrix:
    """Solve L[rho] = 0 with Tr rho = 1.

    ``method`` is ``"direct"`` (sparse LU of the trace-augmented system),
    ``"svd"`` (dense null vector, small systems) or ``"iterative"`` (restarted
    GMRES preconditioned by an incomplete LU).  For the direct method,
    ``backend`` picks MKL pardiso on the real Hermitian parametrisation
    (``"pardiso"``), SuperLU on the complex system with a nested-dissection
    ordering (``"superlu"``), or the first available (``"auto"``).  The direct
    method falls back to the iterative one when the factorisation runs out of
    memory.

    The result is Hermitised, trace-normalised and clipped to be positive;
    ``rho.info`` records the method, the residual max|L vec(rho)| and the
    smallest eigenvalue before clipping.
    """
    cap = max_dim if max_dim is not None else max_liouville_dim()
    N = L.dims.liouville_dim
    if N > cap:
        raise ResourceCapError(f"Liouville dimension {N} exceeds cap {cap} ({MAX_LIOUVILLE_DIM_ENV})")
    if check_kernel is None:
        check_kernel = N <= 1600
    if check_kernel or method == "svd":
        k = kernel_dimension(L)
        if k != 1:
            raise DegenerateSteadyStateError(f"Liouvillian kernel has dimension {k}")

    D = L.dims.dim
    residuals: list[float] = []
    used = method
    if method == "svd":
        _, _, vh = la.svd(L.superop.toarray())
        x = vh[-1].conj()
        x = x / x.reshape(D, D, order="F").trace()
    elif method == "direct":
        if backend == "auto":
            backend = available_backends()[0]
        if backend not in ("pardiso", "superlu"):
            raise ValueError(f"unknown backend {backend!r}")
        if backend == "pardiso" and _pardiso() is None:
            raise ImportError("pardiso backend requested but pypardiso/MKL is unavailable")
        used = backend
        try:
            x = _solve_pardiso(L) if backend == "pardiso" else _solve_superlu(L)
        except MemoryError:
            log.warning("direct factorisation ran out of memory; trying the iterative solver")
            x, residuals = _iterative(L, tol)
            used = "iterative"
        except RuntimeError as exc:
            raise DegenerateSteadyStateError(f"trace-augmented system is singular: {exc}") from exc
    elif method == "iterative":
        x, residuals = _iterative(L, tol)
    else:
        raise ValueError(f"unknown method {method!r}")

    if not np.all(np.isfinite(x)):
        raise SteadyStateError("steady-state solve produced non-finite values", residuals)
    residual = _residual(L, x)
    residuals.append(residual)
    if residual > tol:
        raise SteadyStateError(f"steady-state residual {residual:.3g} exceeds {tol:g}", residuals)
    rho, lo = _clean_state(x.reshape(D, D, order="F"))
    info = {"method": used, "residual": residual, "min_eig": lo, "residuals": residuals}
    return DensityMatrix(L.dims, rho, info=info)


def _iterative(L: Liouvillian, tol: float, restart: int = 200, maxiter: int = 50):
    M = _trace_row_system(L)
    rhs = np.zeros(M.shape[0], dtype=complex)
    rhs[0] = 1.0
    try:
        ilu = spla.spilu(M, drop_tol=1e-5, fill_factor=20)
    except RuntimeError as exc:
        raise SteadyStateError(f"incomplete LU failed: {exc}") from exc
    P = spla.LinearOperator(M.shape, ilu.solve, dtype=complex)
    history: list[float] = []
    x, info = spla.gmres(
        M,
        rhs,
        M=P,
        rtol=tol * 1e-2,
        atol=0.0,
        restart=restart,
        maxiter=maxiter,
        callback=lambda r: history.append(float(r)),
        callback_type="pr_norm",
    )
    if info != 0:
        raise SteadyStateError(f"GMRES did not converge (info={info})", history)
    return x, history


# ---------------------------------------------------------------------------
# truncation studies


@dataclass
class ConvergenceResult:
    value: float
    dims: FockConfig
    ladder: list[tuple[FockConfig, float]]


def _observable_fn(observable) -> Callable[[DensityMatrix], float]:
    if callable(observable):
        return observable
    from . import observables as obs

    table = {
        "photon_number": obs.photon_number,
        "amp_sq": obs.amplitude_squared,
        "g2": obs.g2_zero,
        "phonon_number": obs.phonon_number,
    }
    try:
        return table[observable]
    except KeyError:
        raise ValueError(f"unknown observable {observable!r}; choose from {sorted(table)}") from None


def _grow(n: int, factor: float) -> int:
    return max(n + 1, int(math.ceil(n * factor)))


def convergence_study(
    p: PhysicalParams,
    seed_dims: FockConfig,
    observable="photon_number",
    rtol: float = 0.005,
    growth: float = 1.25,
    max_dim: int | None = None,
    system: str | None = None,
    **solver_kwargs,
) -> ConvergenceResult:
    """Grow n_a, then n_b, by ``growth`` until the observable settles.

    A mode counts as converged once two consecutive enlargements change the
    observable by less than ``rtol`` (relative).  ``system`` defaults to the
    Kerr medium for optical-only seeds and to the optomechanical system
    otherwise.  Raises :class:`ResourceCapError` (with the ladder attached as
    ``exc.ladder``) when the next size would exceed the Liouville-dimension
    cap.
    """
    fn = _observable_fn(observable)
    cap = max_dim if max_dim is not None else max_liouville_dim()
    if system is None:
        system = "om" if seed_dims.has_mechanics else "kerr"
    build = liouvillian_om if system == "om" else liouvillian_kerr
    ladder: list[tuple[FockConfig, float]] = []

    def evaluate(dims: FockConfig) -> float:
        if dims.liouville_dim > cap:
            exc = ResourceCapError(f"{dims} exceeds the Liouville dimension cap {cap}")
            exc.ladder = list(ladder)
            raise exc
        rho = steady_state(build(p, dims), max_dim=cap, **solver_kwargs)
        value = float(np.real(fn(rho)))
        ladder.append((dims, value))
        log.info("convergence ladder %s -> %.10g", dims, value)
        return value

    dims = seed_dims
    value = evaluate(dims)
    modes = ["n_a", "n_b"] if dims.has_mechanics else ["n_a"]
    for mode in modes:
        hits = 0
        while hits < 2:
            grown = {mode: _grow(getattr(dims, mode), growth)}
            nxt = FockConfig(**{**{"n_a": dims.n_a, "n_b": dims.n_b}, **grown})
            new = evaluate(nxt)
            change = abs(new - value) / max(abs(value), 1e-12)
            hits = hits + 1 if change < rtol else 0
            dims, value = nxt, new
    return ConvergenceResult(value=value, dims=dims, ladder=ladder)


def polaron_check(p: PhysicalParams, dims: FockConfig, window: tuple[int, int] | None = None) -> float:
    """Largest matrix element of U H0 U+ - (H_K + w_m b+b) inside a safe window.

    ``U = exp[(g0/w_m)(b - b+) a+a]``.  The window defaults to photon numbers
    below n_a/2 and phonon numbers below n_b/2, away from the truncation edge.
    """
    if p.eps != 0:
        warnings.warn("polaron_check ignores the drive; the transform is exact for eps = 0", stacklevel=2)
    if not dims.has_mechanics:
        raise DimensionError("polaron_check needs a mechanical mode")
    beta = p.g0 / p.omega_m
    if beta > 0.3:
        warnings.warn(f"g0/omega_m = {beta:.3g} > 0.3; truncation effects may dominate", stacklevel=2)
    na, nb = dims.n_a, dims.n_b
    wa, wb = window if window is not None else (na // 2, nb // 2)
    bop = _annihilation(nb).toarray()
    gen = bop - bop.conj().T
    p0 = PhysicalParams(
        g0=p.g0, omega_m=p.omega_m, gamma_m=p.gamma_m, delta0=p.delta0, eps=0.0,
        n_th=p.n_th, kappa=p.kappa,
    )
    H0 = build_hamiltonian_om(p0, dims).toarray()
    blocks = [la.expm(beta * n * gen) for n in range(na)]
    U = la.block_diag(*blocks)
    transformed = U @ H0 @ U.conj().T
    HK = build_hamiltonian_kerr(p0, dims.optical).toarray()
    target = np.kron(HK, np.eye(nb)) + p.omega_m * np.kron(np.eye(na), bop.conj().T @ bop)
    diff = (transformed - target).reshape(na, nb, na, nb)
    return float(np.abs(diff[:wa, :wb, :wa, :wb]).max())
