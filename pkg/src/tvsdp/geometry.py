"""Quotient geometry of the factorization ``Y -> Y Y^T``.

Factors ``Y`` are ``n x r`` arrays of full column rank. Two factors describe
the same PSD matrix iff they differ by right multiplication with an
orthogonal ``r x r`` matrix. The horizontal space at ``Y`` is
``{H : Y^T H symmetric}``, the orthogonal complement of ``{Y S : S skew}``.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from .problem import ZERO_REL_TOL, sym

HORIZONTAL_TOL = 1e-10


class RecoveryError(ValueError):
    """The target matrix cannot be reached inside the injectivity ball."""


def _as_factor(Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise ValueError(f"factor must be a 2-d array, got shape {Y.shape}")
    return Y


def sigma_min(Y) -> float:
    """Smallest singular value ``sigma_r(Y)``."""
    return float(np.linalg.svd(_as_factor(Y), compute_uv=False)[-1])


def check_full_rank(Y, rel_tol: float = ZERO_REL_TOL) -> None:
    s = np.linalg.svd(_as_factor(Y), compute_uv=False)
    if s.size == 0 or s[-1] <= rel_tol * s[0]:
        raise np.linalg.LinAlgError("factor is not of full column rank")


def phi(Y) -> np.ndarray:
    """``X = Y Y^T``."""
    Y = _as_factor(Y)
    return sym(Y @ Y.T)


def dphi(Y, H) -> np.ndarray:
    """Derivative of ``phi`` at ``Y`` in direction ``H``: ``Y H^T + H Y^T``."""
    Y, H = _as_factor(Y), _as_factor(H)
    if Y.shape != H.shape:
        raise ValueError(f"shape mismatch: Y {Y.shape} vs H {H.shape}")
    M = Y @ H.T
    return M + M.T


def skew(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    return 0.5 * (M - M.T)


def skew_size(r: int) -> int:
    return r * (r - 1) // 2


def _lower_indices(r: int) -> tuple[np.ndarray, np.ndarray]:
    # Strictly lower triangle in column-major order: (1,0), (2,0), ..., (2,1), ...
    cols, rows = np.triu_indices(r, k=1)
    return rows, cols


def vec_skew(S) -> np.ndarray:
    """Strictly lower-triangular entries of a skew matrix, column-major."""
    S = np.asarray(S, dtype=float)
    rows, cols = _lower_indices(S.shape[0])
    return S[rows, cols].copy()


def unvec_skew(v, r: int) -> np.ndarray:
    """Inverse of :func:`vec_skew`."""
    v = np.asarray(v, dtype=float)
    if v.shape != (skew_size(r),):
        raise ValueError(f"expected {skew_size(r)} skew parameters, got {v.shape}")
    S = np.zeros((r, r))
    rows, cols = _lower_indices(r)
    S[rows, cols] = v
    S[cols, rows] = -v
    return S


def skew_basis(r: int) -> np.ndarray:
    """Frobenius-orthonormal basis ``(e_i e_j^T - e_j e_i^T)/sqrt(2)``, ordered as :func:`vec_skew`."""
    rows, cols = _lower_indices(r)
    E = np.zeros((rows.size, r, r))
    k = np.arange(rows.size)
    E[k, rows, cols] = 1.0 / math.sqrt(2.0)
    E[k, cols, rows] = -1.0 / math.sqrt(2.0)
    return E


def horizontality_defect(Y, H) -> float:
    """``max |Y^T H - H^T Y|``; zero iff ``H`` is horizontal at ``Y``."""
    M = _as_factor(Y).T @ _as_factor(H)
    return float(np.max(np.abs(M - M.T), initial=0.0))


def is_horizontal(Y, H, tol: float = HORIZONTAL_TOL) -> bool:
    scale = max(1.0, float(np.linalg.norm(Y)) * float(np.linalg.norm(H)))
    return horizontality_defect(Y, H) <= tol * scale


def solve_skew_lyapunov(G, R) -> np.ndarray:
    """Solve ``G S + S G = R`` for symmetric positive definite ``G``."""
    g, W = np.linalg.eigh(sym(G))
    if g[0] <= ZERO_REL_TOL * g[-1]:
        raise np.linalg.LinAlgError("Lyapunov operator is singular: factor is rank deficient")
    Rt = W.T @ R @ W
    return W @ (Rt / (g[:, None] + g[None, :])) @ W.T


def horizontal_project(Y, V) -> np.ndarray:
    """Orthogonal projection of ``V`` onto the horizontal space at ``Y``.

    Returns ``H = V - Y S`` with ``S`` the skew solution of
    ``(Y^T Y) S + S (Y^T Y) = Y^T V - V^T Y``.
    """
    Y, V = _as_factor(Y), _as_factor(V)
    if Y.shape != V.shape:
        raise ValueError(f"shape mismatch: Y {Y.shape} vs V {V.shape}")
    M = Y.T @ V
    S = skew(solve_skew_lyapunov(Y.T @ Y, M - M.T))
    return V - Y @ S


def lower_bound_dphi(Y) -> float:
    """Sharp lower bound of ``||dphi(Y, H)||_F / ||H||_F`` over horizontal ``H``.

    ``sqrt(2) sigma_r(Y)`` if ``r < n`` and ``2 sigma_r(Y)`` if ``r = n``.
    """
    n, r = _as_factor(Y).shape
    return (2.0 if r == n else math.sqrt(2.0)) * sigma_min(Y)


def injectivity_radius(Y) -> float:
    """Radius ``sigma_r(Y)`` of the horizontal ball on which ``phi`` is injective."""
    return sigma_min(Y)


def _rank_r_eigh(X, r: int, rel_tol: float):
    lam, U = np.linalg.eigh(sym(X))
    lam, U = lam[::-1], U[:, ::-1]
    if lam[0] <= 0:
        raise ValueError("matrix has no positive eigenvalue")
    if r < lam.size and abs(lam[r]) > rel_tol * lam[0]:
        raise ValueError(f"matrix is not of rank {r}: lambda_{r + 1} = {lam[r]:.3e}")
    if lam[r - 1] <= rel_tol * lam[0]:
        raise ValueError(f"matrix has rank below {r}")
    return lam[:r], U[:, :r]


def inverse_radius(X, r: int, rel_tol: float = ZERO_REL_TOL) -> float:
    """Frobenius radius around ``X`` whose rank-r matrices all lie in ``phi(Y + B_Y)``.

    Equals ``2 lambda_r(X) / (sqrt(r + 4) + sqrt(r))``.
    """
    lam, _ = _rank_r_eigh(X, r, rel_tol)
    return 2.0 * lam[-1] / (math.sqrt(r + 4) + math.sqrt(r))


def inverse_radius_simple(X, r: int, rel_tol: float = ZERO_REL_TOL) -> float:
    """The cruder radius ``lambda_r(X) / sqrt(r + 4)``."""
    lam, _ = _rank_r_eigh(X, r, rel_tol)
    return lam[-1] / math.sqrt(r + 4)


def polar(M):
    """Polar decomposition ``M = P Q^T`` with ``P`` PSD and ``Q`` orthogonal."""
    U, s, Vt = np.linalg.svd(M)
    P = (U * s) @ U.T
    Q = Vt.T @ U.T
    return sym(P), Q


def align(Y, Z) -> np.ndarray:
    """Return ``Z Q`` with ``Q`` orthogonal minimizing ``||Y - Z Q||_F``."""
    _, Q = polar(_as_factor(Y).T @ _as_factor(Z))
    return Z @ Q


def recover_factor(Y, X_tilde, rel_tol: float = ZERO_REL_TOL) -> np.ndarray:
    """Horizontal ``H`` at ``Y`` with ``(Y + H)(Y + H)^T = X_tilde``.

    ``X_tilde`` must be PSD of rank ``r``. The result is the unique such ``H``
    with ``||H||_F < sigma_r(Y)``; a warning is issued when ``X_tilde`` lies
    outside the guaranteed radius and :class:`RecoveryError` is raised when
    no solution in the open injectivity ball is found.
    """
    Y = _as_factor(Y)
    r = Y.shape[1]
    lam, U = _rank_r_eigh(X_tilde, r, rel_tol)
    Zt = U * np.sqrt(lam)
    X = phi(Y)
    dist = float(np.linalg.norm(sym(X_tilde) - X))
    radius = 2.0 * np.linalg.eigvalsh(Y.T @ Y)[0] / (math.sqrt(r + 4) + math.sqrt(r))
    if dist >= radius:
        warnings.warn(
            f"||X_tilde - X||_F = {dist:.3e} exceeds the guaranteed radius {radius:.3e}",
            RuntimeWarning,
            stacklevel=2,
        )
    H = align(Y, Zt) - Y
    if float(np.linalg.norm(H)) >= sigma_min(Y):
        raise RecoveryError("no horizontal preimage inside the injectivity ball")
    return H


def recovery_bound(Y, X_tilde) -> float:
    """Upper bound on ``||H||_F^2`` from the distance ``||X_tilde - Y Y^T||_F``."""
    d = float(np.linalg.norm(sym(X_tilde) - phi(Y)))
    s = sigma_min(Y)
    r = _as_factor(Y).shape[1]
    return d**2 / s**2 + math.sqrt(r) * d


def orbit_distance(Y1, Y2) -> float:
    """``min_Q ||Y1 - Y2 Q||_F`` over orthogonal ``Q``."""
    Y1, Y2 = _as_factor(Y1), _as_factor(Y2)
    if Y1.shape != Y2.shape:
        raise ValueError(f"shape mismatch: {Y1.shape} vs {Y2.shape}")
    return float(np.linalg.norm(Y1 - align(Y1, Y2)))


def max_stepsize(lambda_star: float, L: float, r: int) -> float:
    """Time step ``2 lambda_* / (L (sqrt(r+4) + sqrt(r)))`` with a unique smooth local solution."""
    if not (lambda_star > 0 and L > 0):
        raise ValueError("lambda_star and L must be positive")
    return 2.0 * lambda_star / (L * (math.sqrt(r + 4) + math.sqrt(r)))
