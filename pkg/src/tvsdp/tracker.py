"""Path-following predictor-corrector tracking of a time-varying SDP.

Each iteration solves the linearized KKT system of the factorized problem
at the next time point, anchored at the current factor. With stepsize
tuning, candidates whose residual exceeds ``eps`` are rejected and the step
shrinks by ``gamma1``; accepted steps grow the next step by ``gamma2``.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import kkt
from .geometry import phi
from .problem import ZERO_REL_TOL, SyntheticTVProblem, TVProblem

log = logging.getLogger(__name__)

# A final step shorter than this fraction of the current step is merged into
# the previous one, absorbing rounding in the accumulated time.
_SNAP = 1e-3


@dataclass(frozen=True)
class TrackerConfig:
    dt0: float = 1e-2
    tuning: bool = False
    gamma1: float = 0.5
    gamma2: float = 1.2
    eps: float = 1e-4
    max_retries: int = 60
    T: float | None = None

    def __post_init__(self):
        if not self.dt0 > 0:
            raise ValueError("dt0 must be positive")
        if not 0 < self.gamma1 < 1 < self.gamma2:
            raise ValueError("need 0 < gamma1 < 1 < gamma2")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.max_retries < 1:
            raise ValueError("max_retries must be at least 1")
        if self.T is not None and not self.T > 0:
            raise ValueError("T must be positive")


@dataclass(frozen=True)
class StepRecord:
    t: float
    Y: np.ndarray
    lam: np.ndarray
    residual: float
    dt_used: float
    retries: int
    wall_time: float
    sigma_r: float
    mu: np.ndarray | None = None
    rcond: float = math.nan


@dataclass
class Trajectory:
    records: list[StepRecord]
    completed: bool
    T: float
    message: str = ""
    config: TrackerConfig = field(default_factory=TrackerConfig)

    def __len__(self):
        return len(self.records)

    @property
    def steps(self) -> int:
        """Number of accepted steps (records after the initial point)."""
        return len(self.records) - 1

    @property
    def times(self) -> np.ndarray:
        return np.array([rec.t for rec in self.records])

    @property
    def residuals(self) -> np.ndarray:
        return np.array([rec.residual for rec in self.records])

    @property
    def total_retries(self) -> int:
        return sum(rec.retries for rec in self.records)

    def mean_residual(self) -> float:
        """Mean residual over accepted steps (the initial point excluded)."""
        res = self.residuals[1:]
        return float(res.mean()) if res.size else math.nan


class _StepRejected(Exception):
    pass


def _sigma(Y) -> np.ndarray:
    return np.linalg.svd(Y, compute_uv=False)


def track(problem: TVProblem, Y0, lambda0, config: TrackerConfig = TrackerConfig()) -> Trajectory:
    """Track the solution path from ``(Y0, lambda0)`` at ``t = 0`` to ``T``.

    The factor size ``r = Y0.shape[1]`` is kept for the whole run. When a
    step cannot be accepted (singular system, rank collapse, or exhausted
    retries under tuning) the run stops and the partial trajectory is
    returned with ``completed=False``.
    """
    T = float(problem.T if config.T is None else config.T)
    Y = np.array(Y0, dtype=float)
    lam = np.array(lambda0, dtype=float)
    if Y.ndim != 2 or Y.shape[1] == 0:
        raise ValueError("initial factor must have at least one column")
    s = _sigma(Y)
    if s[-1] <= ZERO_REL_TOL * s[0]:
        raise ValueError("initial factor is not of full column rank")

    records = [StepRecord(0.0, Y, lam, kkt.residual(problem, 0.0, Y, lam), 0.0, 0, 0.0, float(s[-1]))]
    t = 0.0
    dt = min(config.dt0, T)
    while t < T:
        retries = 0
        while True:
            t_next = t + dt
            if T - t_next <= _SNAP * dt:
                t_next = T
            start = time.monotonic()
            try:
                step = kkt.solve_step(problem, t_next, Y, lam)
                wall = time.monotonic() - start
                Y_new = Y + step.dY
                s = _sigma(Y_new)
                if not np.all(np.isfinite(Y_new)) or s[-1] <= ZERO_REL_TOL * s[0]:
                    raise _StepRejected("factor lost full column rank")
                res = kkt.residual(problem, t_next, Y_new, step.lam)
                if not math.isfinite(res):
                    raise _StepRejected("non-finite residual")
                failure = None
            except (kkt.SingularSystemError, _StepRejected) as exc:
                wall = time.monotonic() - start
                failure = str(exc)
                res = math.inf

            if failure is None and not (config.tuning and res > config.eps):
                break
            if not config.tuning or retries >= config.max_retries:
                reason = failure or f"residual {res:.2e} above eps after {retries} retries"
                msg = f"aborted at t={t:.6g} with dt={dt:.3g}: {reason}"
                log.warning(msg)
                return Trajectory(records, False, T, msg, config)
            dt *= config.gamma1
            retries += 1

        records.append(StepRecord(t_next, Y_new, step.lam, res, t_next - t, retries, wall,
                                  float(s[-1]), step.mu, step.rcond))
        t, Y, lam = t_next, Y_new, step.lam
        if config.tuning:
            dt = min(T - t, config.gamma2 * dt)
        else:
            dt = min(T - t, dt)
    return Trajectory(records, True, T, "", config)


def reconstruct_primal(traj: Trajectory) -> list[np.ndarray]:
    """Primal iterates ``X_k = Y_k Y_k^T``."""
    return [phi(rec.Y) for rec in traj.records]


@dataclass(frozen=True)
class StepConditionReport:
    delta: float
    dt: float
    lambda_star: float
    Lambda_star: float
    L: float
    K: float
    m: float
    M: float
    r: int
    cond1: bool
    cond2: bool
    cond3: bool
    lhs1: float
    rhs1: float
    lhs3: float
    rhs3: float
    lambda0_bound: float
    X0_bound: float
    lambda0_ok: bool | None = None
    X0_ok: bool | None = None

    @property
    def ok(self) -> bool:
        return self.cond1 and self.cond2 and self.cond3

    @property
    def primal_error_bound(self) -> float:
        """Guaranteed ``||X_k - X_{t_k}||_F`` when all conditions hold."""
        return (2.0 * math.sqrt(self.Lambda_star) + self.delta) * self.delta


def check_step_conditions(delta: float, dt: float, lambda_star: float, Lambda_star: float,
                          L: float, K: float, m: float, M: float, r: int,
                          lambda0_error: float | None = None,
                          X0_error: float | None = None) -> StepConditionReport:
    """Evaluate the three sufficient conditions for tracking with fixed ``dt``.

    ``lambda_star``/``Lambda_star`` bound the smallest nonzero and the largest
    eigenvalue of ``X_t``, ``L`` and ``K`` bound ``||dX_t/dt||_F`` and
    ``||dlambda_t/dt||``, ``1/m`` bounds the inverse KKT operator and ``M`` is
    its Lipschitz constant. The optional initial errors are compared with the
    sufficient initialization bounds.
    """
    vals = (delta, dt, lambda_star, Lambda_star, L, K, m, M)
    if any(not (v >= 0 and math.isfinite(v)) for v in vals) or r < 1:
        raise ValueError("all constants must be non-negative and finite, r >= 1")
    if lambda_star <= 0 or m <= 0 or M <= 0:
        raise ValueError("lambda_star, m and M must be positive")
    root = 2.0 * math.sqrt(Lambda_star)
    drift = (root + delta) * delta + L * dt
    rhs1 = 2.0 * lambda_star / (math.sqrt(r + 4) + math.sqrt(r))
    ratio = 2.0 / 3.0 * m / M
    bracket = drift**2 / lambda_star + math.sqrt(r) * (root + delta) * delta + L * dt
    lhs3 = bracket**2 + (delta + K * dt) ** 2
    rhs3 = ratio * delta
    lam0_bound = delta / math.sqrt(2.0)
    a = r * lambda_star**2
    X0_bound = (math.sqrt(a + 2.0 * math.sqrt(2.0) * delta * lambda_star) - math.sqrt(a)) / 2.0
    return StepConditionReport(
        delta=delta, dt=dt, lambda_star=lambda_star, Lambda_star=Lambda_star, L=L, K=K, m=m, M=M, r=r,
        cond1=drift < rhs1,
        cond2=delta < ratio,
        cond3=lhs3 <= rhs3,
        lhs1=drift, rhs1=rhs1, lhs3=lhs3, rhs3=rhs3,
        lambda0_bound=lam0_bound,
        X0_bound=X0_bound,
        lambda0_ok=None if lambda0_error is None else lambda0_error <= lam0_bound,
        X0_ok=None if X0_error is None else X0_error <= X0_bound,
    )


@dataclass(frozen=True)
class PathConstants:
    lambda_star: float
    Lambda_star: float
    L: float
    K: float


def measure_path_constants(problem: SyntheticTVProblem, num: int = 201) -> PathConstants:
    """Estimate the path constants of a synthetic instance on a time grid."""
    lo, hi, L = math.inf, 0.0, 0.0
    for t in np.linspace(0.0, problem.T, num):
        Y, _ = problem.solution(t)
        ev = np.linalg.eigvalsh(Y.T @ Y)
        lo, hi = min(lo, ev[0]), max(hi, ev[-1])
        dX = problem.Y1 @ Y.T
        L = max(L, float(np.linalg.norm(dX + dX.T)))
    return PathConstants(float(lo), float(hi), L, float(np.linalg.norm(problem.lam1)))
