"""Initial primal-dual point for the tracker.

The SDP at a fixed time is solved with a dense primal-dual interior-point
method (HKM direction, Mehrotra predictor-corrector). The rank of the
returned ``X`` fixes the factor size; the factor is then polished with Newton
steps on the factorized KKT system until its residual meets the tolerance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from . import kkt
from .geometry import phi
from .problem import ZERO_REL_TOL, ProblemData, TVProblem, adjoint_A, apply_A, sym

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9


class InitializationError(RuntimeError):
    pass


class RankDetection(NamedTuple):
    r: int
    Y: np.ndarray
    tail_bound: float


def detect_rank(X, rel_tol: float = ZERO_REL_TOL) -> RankDetection:
    """Numerical rank of a PSD matrix and the factor of its top eigenpairs.

    ``r`` counts eigenvalues above ``rel_tol * lambda_1``; ``Y = U_r diag(sqrt(lambda))``.
    ``tail_bound = (n - r) lambda_{r+1}`` bounds ``||X - Y Y^T||_F``.
    """
    X = sym(X)
    n = X.shape[0]
    lam, U = np.linalg.eigh(X)
    lam, U = lam[::-1], U[:, ::-1]
    top = lam[0]
    if top <= 0:
        return RankDetection(0, np.zeros((n, 0)), float(max(0.0, -lam[-1])) * n)
    if lam[-1] < -rel_tol * top:
        raise ValueError(f"matrix is not PSD: smallest eigenvalue {lam[-1]:.3e}")
    r = int(np.sum(lam > rel_tol * top))
    Y = U[:, :r] * np.sqrt(lam[:r])
    tail = float(max(abs(lam[r]), abs(lam[-1]))) * (n - r) if r < n else 0.0
    return RankDetection(r, Y, tail)


@dataclass
class IPMResult:
    X: np.ndarray
    y: np.ndarray
    Z: np.ndarray
    iterations: int
    gap: float
    primal_infeasibility: float
    dual_infeasibility: float
    converged: bool
    status: str = ""


def _max_step(X, dX) -> float:
    """Largest ``alpha`` with ``X + alpha dX`` positive semidefinite."""
    if not np.all(np.isfinite(dX)):
        raise np.linalg.LinAlgError("non-finite search direction")
    L = np.linalg.cholesky(X)
    Li = sla.solve_triangular(L, np.eye(X.shape[0]), lower=True)
    ev = np.linalg.eigvalsh(sym(Li @ dX @ Li.T))
    lo = ev[0]
    return math.inf if lo >= 0 else -1.0 / lo


def ipm(data: ProblemData, gap_tol: float = 1e-12, feas_tol: float = 1e-12, max_iter: int = 200) -> IPMResult:
    """Infeasible primal-dual interior-point method for a single SDP."""
    C, A, b = data.C, data.A, data.b
    n, m = data.n, data.m
    mats = A.mats
    normA = np.linalg.norm(mats.reshape(m, -1), axis=1)
    xi = max(10.0, math.sqrt(n), n * float(np.max((1.0 + np.abs(b)) / (1.0 + normA))))
    eta = max(10.0, math.sqrt(n), float(np.max(normA)), float(np.linalg.norm(C)))
    X = xi * np.eye(n)
    Z = eta * np.eye(n)
    y = np.zeros(m)
    nb, nc = 1.0 + np.linalg.norm(b), 1.0 + np.linalg.norm(C)

    # Iterates this large relative to the starting point signal an infeasible
    # or unbounded instance.
    blowup = 1e12 * max(xi, eta, 1.0 + float(np.linalg.norm(b)))

    it = 0
    converged = False
    status = "iteration limit"
    for it in range(1, max_iter + 1):
        rp = b - apply_A(A, X)
        Rd = sym(C - Z - adjoint_A(A, y))
        mu = float(np.sum(X * Z)) / n
        pobj, dobj = float(np.sum(C * X)), float(b @ y)
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        pinf, dinf = np.linalg.norm(rp) / nb, np.linalg.norm(Rd) / nc
        if gap <= gap_tol and pinf <= feas_tol and dinf <= feas_tol:
            converged, status = True, "converged"
            break
        if max(np.trace(X), np.trace(Z), np.linalg.norm(y)) > blowup:
            status = "diverged (instance likely infeasible or unbounded)"
            break

        Zi = sym(np.linalg.inv(Z))
        XA = np.matmul(X, mats)  # X A_j
        G = np.matmul(XA, Zi)  # X A_j Z^{-1}
        M = sym(mats.reshape(m, -1) @ G.reshape(m, -1).T)
        try:
            cho = sla.cho_factor(M)
            solve_M = lambda v: sla.cho_solve(cho, v)  # noqa: E731
        except np.linalg.LinAlgError:
            lu = sla.lu_factor(M)
            solve_M = lambda v: sla.lu_solve(lu, v)  # noqa: E731
        XRdZi = X @ Rd @ Zi

        def direction(sigma, corr):
            Rc = sigma * mu * Zi - X
            if corr is not None:
                Rc = Rc - sym(corr @ Zi)
            dy = solve_M(rp - apply_A(A, Rc) + apply_A(A, XRdZi))
            dZ = sym(Rd - adjoint_A(A, dy))
            dX = sym(Rc - X @ dZ @ Zi)
            return dX, dy, dZ

        try:
            dX, dy, dZ = direction(0.0, None)
            ap = min(1.0, _max_step(X, dX))
            ad = min(1.0, _max_step(Z, dZ))
            mu_aff = float(np.sum((X + ap * dX) * (Z + ad * dZ))) / n
            sigma = min(1.0, (mu_aff / mu) ** 3)
            dX, dy, dZ = direction(sigma, dX @ dZ)

            gamma = 0.9 + 0.09 * min(ap, ad)
            ap = min(1.0, gamma * _max_step(X, dX))
            ad = min(1.0, gamma * _max_step(Z, dZ))
        except (np.linalg.LinAlgError, ValueError):
            status = "numerical breakdown"
            break
        X_new = sym(X + ap * dX)
        Z_new = sym(Z + ad * dZ)
        try:
            np.linalg.cholesky(X_new)
            np.linalg.cholesky(Z_new)
        except np.linalg.LinAlgError:
            log.debug("ipm: stopped at iteration %d, iterates left the cone", it)
            status = "iterates left the cone"
            break
        X, Z, y = X_new, Z_new, y + ad * dy
        if max(ap, ad) < 1e-10:
            status = "stalled"
            break

    rp = b - apply_A(A, X)
    Rd = sym(C - Z - adjoint_A(A, y))
    pobj, dobj = float(np.sum(C * X)), float(b @ y)
    return IPMResult(
        X=X,
        y=y,
        Z=Z,
        iterations=it,
        gap=abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj)),
        primal_infeasibility=float(np.linalg.norm(rp) / nb),
        dual_infeasibility=float(np.linalg.norm(Rd) / nc),
        converged=converged,
        status=status,
    )


@dataclass
class InitResult:
    X0: np.ndarray
    lambda0: np.ndarray
    Y0: np.ndarray
    r: int
    residual0: float
    iterations: int
    newton_iterations: int
    ipm: IPMResult


def solve_fixed(problem: TVProblem, t: float = 0.0, tol: float = DEFAULT_TOL, *,
                rank_tol: float = ZERO_REL_TOL, max_newton: int = 20) -> InitResult:
    """Solve the SDP at time ``t`` and return a factorized primal-dual point.

    Raises
    ------
    InitializationError
        If the interior-point method stalls far from optimality, the detected
        rank is zero, the polished residual stays above ``tol`` or the dual
        slack ``C - A*(lambda)`` is not PSD.
    """
    data = problem.evaluate(t)
    res = ipm(data)
    if not res.converged and max(res.gap, res.primal_infeasibility, res.dual_infeasibility) > 1e-6:
        raise InitializationError(
            f"interior-point method failed: {res.status} (gap={res.gap:.2e}, "
            f"pinf={res.primal_infeasibility:.2e}, dinf={res.dual_infeasibility:.2e})"
        )
    r, Y, _ = detect_rank(res.X, rank_tol)
    if r == 0:
        raise InitializationError("initial solution has rank zero")
    lam = res.y.copy()
    value = kkt.residual(data, t, Y, lam)
    k = 0
    while value > tol and k < max_newton:
        try:
            step = kkt.solve_step(data, t, Y, lam)
        except kkt.SingularSystemError as exc:
            raise InitializationError(f"Newton polish failed: {exc}") from exc
        Y, lam = Y + step.dY, step.lam
        value = kkt.residual(data, t, Y, lam)
        k += 1
    if value > tol:
        raise InitializationError(f"residual {value:.2e} above tolerance {tol:.1e} after {k} Newton steps")
    Zmin = float(np.linalg.eigvalsh(data.C - adjoint_A(data.A, lam))[0])
    if Zmin < -max(tol, 1e-9) * max(1.0, float(np.linalg.norm(data.C, 2))):
        raise InitializationError(f"dual slack is not PSD (smallest eigenvalue {Zmin:.2e})")
    return InitResult(
        X0=phi(Y),
        lambda0=lam,
        Y0=Y,
        r=r,
        residual0=value,
        iterations=res.iterations,
        newton_iterations=k,
        ipm=res,
    )
