"""Riemannian geometry of symmetric positive-definite matrices.

The workhorse space is the set of unit-determinant SPD matrices, realized
as the quotient SL(n)/SO(n) through the polar factorization.  A general
SPD matrix splits into its unit-determinant part and a scalar log-det
channel, and the metric splits accordingly.

Geodesic distance between unit-determinant matrices::

    d(P1, P2) = || log sqrt(P1^-1 P2^2 P1^-1) ||_F

Tangent vectors are stored in the chart at the identity: the group action
``g . P = sqrt(g P^2 g^T)`` moves any base point to ``I``, and a tangent
vector at ``P`` is kept as its push-forward coordinates there (a symmetric,
trace-free matrix for unit-determinant bases).  In this chart the metric is
the Frobenius inner product, ``exp_map(P, V) = sqrt(P expm(2V) P)``, and
parallel transport from ``P1`` to ``P2`` is conjugation by the orthogonal
matrix ``O = P2^-1 P1 sqrt(P1^-1 P2^2 P1^-1)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Eigenvalues below this are treated as a violation of positive-definiteness.
EPS_PD = 1e-12
# |log det| tolerance for unit-determinant inputs.
UNIT_DET_TOL = 1e-8
# |trace| tolerance for tangent coordinates at a unit-determinant base.
TRACE_TOL = 1e-8
# Tolerance used when matching tangent base points.
_BASE_ATOL = 1e-10


class NotPositiveDefiniteError(ValueError):
    """Input matrix is not symmetric positive-definite."""


class DimensionMismatchError(ValueError):
    """Operands have incompatible dimensions."""


class BasePointMismatchError(ValueError):
    """Tangent vectors anchored at different base points were combined."""


def symmetrize(M: np.ndarray) -> np.ndarray:
    """Return (M + M^T)/2; the result is exactly symmetric in floating point."""
    return 0.5 * (M + M.T)


def check_square(M: np.ndarray, name: str = "matrix") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatchError(f"{name} must be square, got shape {M.shape}")
    return M


def check_same_dim(A: np.ndarray, B: np.ndarray) -> None:
    if A.shape != B.shape:
        raise DimensionMismatchError(f"dimension mismatch: {A.shape} vs {B.shape}")


def _eigh_pd(P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of an SPD matrix, rejecting eigenvalues below EPS_PD."""
    P = check_square(P)
    w, U = np.linalg.eigh(symmetrize(P))
    if w[0] < EPS_PD:
        raise NotPositiveDefiniteError(
            f"matrix is not positive definite: smallest eigenvalue {w[0]:.6e} "
            f"< {EPS_PD:.0e}"
        )
    return w, U


def sym_sqrt(P: np.ndarray) -> np.ndarray:
    """Symmetric positive-definite square root of an SPD matrix."""
    w, U = _eigh_pd(P)
    return symmetrize((U * np.sqrt(w)) @ U.T)


def sym_log(P: np.ndarray) -> np.ndarray:
    """Matrix logarithm of an SPD matrix (a symmetric matrix)."""
    w, U = _eigh_pd(P)
    return symmetrize((U * np.log(w)) @ U.T)


def sym_exp(A: np.ndarray) -> np.ndarray:
    """Matrix exponential of a symmetric matrix (an SPD matrix)."""
    A = check_square(A)
    w, U = np.linalg.eigh(symmetrize(A))
    return symmetrize((U * np.exp(w)) @ U.T)


def sym_pow(P: np.ndarray, alpha: float) -> np.ndarray:
    """Matrix power P^alpha of an SPD matrix."""
    w, U = _eigh_pd(P)
    return symmetrize((U * w**alpha) @ U.T)


def log_det(P: np.ndarray) -> float:
    """log det(P) computed as the sum of log-eigenvalues (overflow safe)."""
    w, _ = _eigh_pd(P)
    return float(np.sum(np.log(w)))


def is_spd(P: np.ndarray) -> bool:
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        return False
    if not np.allclose(P, P.T, atol=1e-10):
        return False
    return bool(np.linalg.eigvalsh(symmetrize(P))[0] >= EPS_PD)


def require_unit_det(P: np.ndarray, tol: float = UNIT_DET_TOL) -> None:
    ld = log_det(P)
    if abs(ld) > tol:
        raise ValueError(f"matrix is not unit-determinant: |log det| = {abs(ld):.3e}")


def normalize_det(P: np.ndarray) -> tuple[np.ndarray, float]:
    """Split an SPD matrix into its unit-determinant part and log-det channel.

    Returns ``(P / det(P)^(1/n), log det(P) / n)``.  The determinant is taken
    through log-eigenvalues, never a direct product.
    """
    w, U = _eigh_pd(P)
    n = P.shape[0]
    channel = float(np.mean(np.log(w)))
    unit = symmetrize((U * (w * np.exp(-channel))) @ U.T)
    return unit, channel


@dataclass(frozen=True)
class Tangent:
    """Tangent vector at ``base``, stored in identity-chart coordinates.

    ``coords`` is symmetric; for a unit-determinant base it is trace-free.
    """

    base: np.ndarray
    coords: np.ndarray

    def __post_init__(self):
        base = check_square(np.asarray(self.base, dtype=float), "base")
        coords = check_square(np.asarray(self.coords, dtype=float), "coords")
        check_same_dim(base, coords)
        if not np.allclose(coords, coords.T, atol=1e-9):
            raise ValueError("tangent coordinates must be symmetric")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "coords", symmetrize(coords))

    @property
    def dim(self) -> int:
        return self.base.shape[0]

    def norm(self) -> float:
        return float(np.linalg.norm(self.coords))


def _check_same_base(V: Tangent, W: Tangent) -> None:
    if V.base.shape != W.base.shape or not np.allclose(
        V.base, W.base, atol=_BASE_ATOL
    ):
        raise BasePointMismatchError(
            "tangent vectors are anchored at different base points"
        )


def inner(base: np.ndarray, V: Tangent, W: Tangent) -> float:
    """Riemannian inner product of two tangent vectors at a common base."""
    base = check_square(base, "base")
    for X in (V, W):
        if X.base.shape != base.shape or not np.allclose(X.base, base, atol=_BASE_ATOL):
            raise BasePointMismatchError("tangent vector is not anchored at `base`")
    _check_same_base(V, W)
    return float(np.sum(V.coords * W.coords))


def _require_tracefree(coords: np.ndarray) -> None:
    tr = abs(float(np.trace(coords)))
    if tr > TRACE_TOL:
        raise ValueError(
            f"tangent coordinates at a unit-determinant base must be trace-free; "
            f"|trace| = {tr:.3e}"
        )


def exp_map(base: np.ndarray, V) -> np.ndarray:
    """Riemannian exponential: the geodesic from ``base`` with velocity ``V``, at t=1.

    ``V`` may be a `Tangent` (its base must match) or a raw symmetric
    coordinate matrix in the identity chart.
    """
    base = check_square(base, "base")
    if isinstance(V, Tangent):
        if not np.allclose(V.base, base, atol=_BASE_ATOL):
            raise BasePointMismatchError("tangent vector is not anchored at `base`")
        coords = V.coords
    else:
        coords = symmetrize(check_square(np.asarray(V, dtype=float), "coords"))
    check_same_dim(base, coords)
    _require_tracefree(coords)
    inner_exp = sym_exp(2.0 * coords)
    return sym_sqrt(symmetrize(base @ inner_exp @ base))


def log_map(P1: np.ndarray, P2: np.ndarray) -> Tangent:
    """Inverse exponential: tangent at ``P1`` pointing to ``P2``."""
    P1 = check_square(P1, "P1")
    P2 = check_square(P2, "P2")
    check_same_dim(P1, P2)
    _eigh_pd(P2)
    Y = np.linalg.solve(P1, P2)
    M = symmetrize(Y @ Y.T)  # = P1^-1 P2^2 P1^-1, symmetric by construction
    w, U = _eigh_pd(M)
    coords = symmetrize((U * (0.5 * np.log(w))) @ U.T)
    return Tangent(base=P1, coords=coords)


def _pair_log_norm(P1: np.ndarray, P2: np.ndarray) -> float:
    Y = np.linalg.solve(P1, P2)
    w = np.linalg.eigvalsh(symmetrize(Y @ Y.T))
    if w[0] < EPS_PD:
        raise NotPositiveDefiniteError(
            f"matrix is not positive definite: smallest eigenvalue {w[0]:.6e} "
            f"< {EPS_PD:.0e}"
        )
    return float(0.5 * np.sqrt(np.sum(np.log(w) ** 2)))


def dist_unitdet(P1: np.ndarray, P2: np.ndarray) -> float:
    """Geodesic distance on the unit-determinant SPD manifold.

    Exactly symmetric in its arguments: the operands are put in a canonical
    order before evaluation so that ``d(A, B)`` and ``d(B, A)`` are computed
    bit-for-bit identically.
    """
    P1 = check_square(P1, "P1")
    P2 = check_square(P2, "P2")
    check_same_dim(P1, P2)
    if np.array_equal(P1, P2):
        _eigh_pd(P1)
        return 0.0
    if P2.tobytes() < P1.tobytes():
        P1, P2 = P2, P1
    return _pair_log_norm(P1, P2)


def dist_full(Pt1: np.ndarray, Pt2: np.ndarray, w_det: float | None = None) -> float:
    """Distance between general SPD matrices: unit-det part plus weighted log-det.

    ``w_det`` defaults to ``1/n``.  The squared distance is
    ``dist_unitdet(P1, P2)^2 + w_det * (log det Pt2 - log det Pt1)^2``.
    """
    Pt1 = check_square(Pt1, "Pt1")
    Pt2 = check_square(Pt2, "Pt2")
    check_same_dim(Pt1, Pt2)
    n = Pt1.shape[0]
    if w_det is None:
        w_det = 1.0 / n
    if w_det < 0:
        raise ValueError(f"w_det must be nonnegative, got {w_det}")
    U1, c1 = normalize_det(Pt1)
    U2, c2 = normalize_det(Pt2)
    du = dist_unitdet(U1, U2)
    dld = n * (c2 - c1)  # = log det Pt2 - log det Pt1
    return float(np.sqrt(du * du + w_det * dld * dld))


def log_euclidean_dist(P1: np.ndarray, P2: np.ndarray) -> float:
    """Log-Euclidean distance ||log P1 - log P2||_F (baseline metric)."""
    P1 = check_square(P1, "P1")
    P2 = check_square(P2, "P2")
    check_same_dim(P1, P2)
    return float(np.linalg.norm(sym_log(P1) - sym_log(P2)))


def geodesic(P1: np.ndarray, P2: np.ndarray, t: float) -> np.ndarray:
    """Point at parameter ``t`` in [0, 1] on the geodesic from P1 to P2."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"geodesic parameter must lie in [0, 1], got {t}")
    if t == 0.0:
        return np.array(check_square(P1), dtype=float)
    if t == 1.0:
        return np.array(check_square(P2), dtype=float)
    V = log_map(P1, P2)
    inner_exp = sym_exp(2.0 * t * V.coords)
    return sym_sqrt(symmetrize(V.base @ inner_exp @ V.base))


def transport_rotation(P1: np.ndarray, P2: np.ndarray) -> np.ndarray:
    """Orthogonal matrix O realizing parallel transport P1 -> P2 by conjugation.

    In identity-chart coordinates the transported vector is ``O V O^T``.
    O = P2^-1 P1 P12 is orthogonal in exact arithmetic; it is re-projected
    onto the orthogonal group by polar factorization for numerical hygiene.
    """
    P1 = check_square(P1, "P1")
    P2 = check_square(P2, "P2")
    check_same_dim(P1, P2)
    Y = np.linalg.solve(P1, P2)
    P12 = sym_sqrt(symmetrize(Y @ Y.T))
    O = np.linalg.solve(P2, P1 @ P12)
    U, _, Vt = np.linalg.svd(O)
    return U @ Vt


def parallel_transport(V: Tangent, P1: np.ndarray, P2: np.ndarray) -> Tangent:
    """Parallel transport of ``V`` along the geodesic from P1 to P2."""
    P1 = check_square(P1, "P1")
    if not np.allclose(V.base, P1, atol=_BASE_ATOL):
        raise BasePointMismatchError("V is not anchored at P1")
    P2 = check_square(P2, "P2")
    check_same_dim(P1, P2)
    O = transport_rotation(P1, P2)
    return Tangent(base=P2, coords=symmetrize(O @ V.coords @ O.T))
