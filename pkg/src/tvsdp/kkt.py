"""Residual, KKT map and the linearized KKT system of the factorized problem.

For an anchor ``Y_t`` and a time ``s`` the factorized problem restricted to
the horizontal space at ``Y_t`` is

    min <C_s, Y Y^T>  s.t.  A_s(Y Y^T) = b_s,  Y_t^T Y - Y^T Y_t = 0,

with multipliers ``lambda`` (length m) and a skew ``mu`` (r x r).

Unknowns of the linear system are stacked as ``vec(dY)`` (row-major,
``n*r`` entries), ``lambda`` (``m``) and the coordinates of ``mu`` in the
Frobenius-orthonormal skew basis of :func:`tvsdp.geometry.skew_basis`
(``r(r-1)/2`` entries). The second and third block rows carry a minus sign
relative to the derivative of :func:`F`, which makes the matrix symmetric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .geometry import skew_basis, skew_size, unvec_skew, vec_skew
from .problem import ProblemData, TVProblem, adjoint_A, apply_A, sym

#: Steps whose reciprocal condition number falls below this are rejected.
RCOND_MIN = 1e-14

_SQRT2 = math.sqrt(2.0)


class SingularSystemError(np.linalg.LinAlgError):
    """The linearized KKT system is singular or too ill-conditioned."""

    def __init__(self, msg: str, rcond: float = 0.0):
        super().__init__(msg)
        self.rcond = rcond


def skew_coords(S) -> np.ndarray:
    """Coordinates of a skew matrix in the orthonormal basis."""
    return _SQRT2 * vec_skew(S)


def skew_from_coords(c, r: int) -> np.ndarray:
    return unvec_skew(np.asarray(c, dtype=float) / _SQRT2, r)


@dataclass(frozen=True)
class KKTPoint:
    Y: np.ndarray
    lam: np.ndarray
    mu: np.ndarray

    @classmethod
    def at(cls, Y, lam, mu=None) -> "KKTPoint":
        Y = np.asarray(Y, dtype=float)
        r = Y.shape[1]
        mu = np.zeros((r, r)) if mu is None else np.asarray(mu, dtype=float)
        return cls(Y, np.asarray(lam, dtype=float), mu)


def _data(problem: TVProblem | ProblemData, t: float) -> ProblemData:
    return problem if isinstance(problem, ProblemData) else problem.evaluate(t)


def residual_blocks(problem, t: float, Y, lam) -> tuple[np.ndarray, np.ndarray]:
    """Stationarity ``2 (C_t - A*(lam)) Y`` and feasibility ``A(Y Y^T) - b_t``."""
    d = _data(problem, t)
    Y = np.asarray(Y, dtype=float)
    stat = 2.0 * (d.C - adjoint_A(d.A, lam)) @ Y
    feas = apply_A(d.A, sym(Y @ Y.T)) - d.b
    return stat, feas


def residual(problem, t: float, Y, lam, norm: str = "inf") -> float:
    """Largest absolute entry of the stacked stationarity and feasibility violations.

    ``norm="fro"`` returns the Euclidean norm of the stacked entries instead,
    which is exactly invariant under ``Y -> Y Q``.
    """
    stat, feas = residual_blocks(problem, t, Y, lam)
    if norm == "inf":
        return float(max(np.max(np.abs(stat), initial=0.0), np.max(np.abs(feas), initial=0.0)))
    if norm == "fro":
        return float(math.hypot(np.linalg.norm(stat), np.linalg.norm(feas)))
    raise ValueError(f"unknown norm {norm!r}")


def F(problem, Y_anchor, s: float, point: KKTPoint) -> np.ndarray:
    """KKT map of the horizontally restricted problem, stacked as one vector."""
    d = _data(problem, s)
    Ya = np.asarray(Y_anchor, dtype=float)
    Y, lam, mu = point.Y, point.lam, point.mu
    first = 2.0 * d.C @ Y - 2.0 * adjoint_A(d.A, lam) @ Y - 2.0 * Ya @ mu
    second = apply_A(d.A, sym(Y @ Y.T)) - d.b
    M = Ya.T @ Y
    third = skew_coords(M - M.T)
    return np.concatenate([first.ravel(), second, third])


def _AY(A, Y) -> np.ndarray:
    """Rows ``vec(A_i Y)``, shape ``(m, n*r)``."""
    m, n, _ = A.mats.shape
    return (A.mats.reshape(m * n, n) @ Y).reshape(m, -1)


def _YE(Y) -> np.ndarray:
    """Rows ``vec(Y E_k)`` for the orthonormal skew basis, shape ``(p, n*r)``."""
    E = skew_basis(Y.shape[1])
    return np.einsum("il,klj->kij", Y, E).reshape(E.shape[0], -1)


@dataclass(frozen=True)
class KKTSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    n: int
    r: int
    m: int
    s: float

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def split(self, x):
        """Split a solution vector into ``(dY, lambda, mu)``."""
        nr, m = self.n * self.r, self.m
        dY = x[:nr].reshape(self.n, self.r)
        return dY, x[nr:nr + m], skew_from_coords(x[nr + m:], self.r)


def system_size(n: int, r: int, m: int) -> int:
    return n * r + m + skew_size(r)


def assemble_system(problem, Y_t, lam_t, s: float) -> KKTSystem:
    """Linearized KKT system at ``(Y_t, lam_t, mu = 0)`` with data at time ``s``.

    The unknowns are the step ``dY`` and the new multipliers (not their
    increments); the right-hand side is
    ``(-2 C_s Y_t, A_s(Y_t Y_t^T) - b_s, 0)``.
    """
    d = _data(problem, s)
    Y = np.asarray(Y_t, dtype=float)
    lam_t = np.asarray(lam_t, dtype=float)
    n, r = Y.shape
    m = d.m
    p = skew_size(r)
    nr = n * r
    N = nr + m + p

    K = np.zeros((N, N))
    K[:nr, :nr] = np.kron(2.0 * (d.C - adjoint_A(d.A, lam_t)), np.eye(r))
    AY = _AY(d.A, Y)
    K[:nr, nr:nr + m] = -2.0 * AY.T
    K[nr:nr + m, :nr] = -2.0 * AY
    if p:
        YE = _YE(Y)
        K[:nr, nr + m:] = -2.0 * YE.T
        K[nr + m:, :nr] = -2.0 * YE

    rhs = np.concatenate([
        (-2.0 * d.C @ Y).ravel(),
        apply_A(d.A, sym(Y @ Y.T)) - d.b,
        np.zeros(p),
    ])
    return KKTSystem(K, rhs, n, r, m, float(d.t))


@dataclass(frozen=True)
class StepResult:
    dY: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    rcond: float


def solve_system(system: KKTSystem, rcond_min: float = RCOND_MIN) -> StepResult:
    """LU solve with a 1-norm condition estimate."""
    K = system.matrix
    if not np.all(np.isfinite(K)) or not np.all(np.isfinite(system.rhs)):
        raise SingularSystemError("non-finite entries in the KKT system")
    anorm = float(np.max(np.sum(np.abs(K), axis=0)))
    lu, piv, info = lapack.dgetrf(K)
    if info != 0:
        raise SingularSystemError(f"LU factorization failed (info={info})")
    rcond, _ = lapack.dgecon(lu, anorm, norm="1")
    if not rcond >= rcond_min:
        raise SingularSystemError(f"KKT system is ill-conditioned (rcond={rcond:.2e})", rcond)
    x = sla.lu_solve((lu, piv), system.rhs, check_finite=False)
    dY, lam, mu = system.split(x)
    return StepResult(dY, lam, mu, float(rcond))


def solve_step(problem, t_next: float, Y_t, lam_t, rcond_min: float = RCOND_MIN) -> StepResult:
    """One predictor-corrector step: solve the linearized system at ``t_next``.

    Raises :class:`SingularSystemError` when the system is numerically
    singular, which callers treat as a failed step.
    """
    return solve_system(assemble_system(problem, Y_t, lam_t, t_next), rcond_min)


@dataclass
class SOSCReport:
    min_eigenvalue: float
    dimension: int
    eigenvalues: np.ndarray

    @property
    def ok(self) -> bool:
        return self.dimension == 0 or self.min_eigenvalue > 0


def sosc_check(problem, t: float, Y, lam) -> SOSCReport:
    """Second-order sufficiency on the critical subspace.

    The subspace is ``{H : A(Y H^T + H Y^T) = 0, Y^T H = H^T Y}``; the form
    ``H -> 2 trace(H^T (C - A*(lam)) H)`` is restricted to an orthonormal basis
    of it and its eigenvalues are reported.
    """
    d = _data(problem, t)
    Y = np.asarray(Y, dtype=float)
    r = Y.shape[1]
    rows = [2.0 * _AY(d.A, Y)]
    if skew_size(r):
        rows.append(2.0 * _YE(Y))
    N = sla.null_space(np.vstack(rows))
    hess = np.kron(2.0 * (d.C - adjoint_A(d.A, lam)), np.eye(r))
    if N.shape[1] == 0:
        return SOSCReport(math.inf, 0, np.empty(0))
    ev = np.linalg.eigvalsh(sym(N.T @ hess @ N))
    return SOSCReport(float(ev[0]), N.shape[1], ev)
