"""Time-varying SDP instances.

A problem is a map ``t -> (C_t, A_t, b_t)`` on ``[0, T]`` for the SDP

    min <C_t, X>  s.t.  A_t(X) = b_t,  X >= 0.

Matrices are plain ``ndarray`` objects; symmetric matrices are symmetrized on
construction so that ``X[i, j] == X[j, i]`` holds bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

#: An eigenvalue or singular value counts as zero if it is at most this
#: fraction of the largest one.
ZERO_REL_TOL = 1e-8

INSTANCE_FORMAT = "tvsdp-instance/1"


def sym(M) -> np.ndarray:
    """Return the symmetric part of a square matrix, exactly symmetric."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    S = 0.5 * (M + M.T)
    # 0.5*(a+b) is commutative in floating point, so S is exactly symmetric.
    return S


def numerical_rank(values, rel_tol: float = ZERO_REL_TOL) -> int:
    """Count entries of ``values`` above ``rel_tol`` times the largest one."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return 0
    top = float(np.max(np.abs(values)))
    if top == 0.0:
        return 0
    return int(np.sum(values > rel_tol * top))


@dataclass(frozen=True)
class LinearOperatorA:
    """The constraint map ``X -> (<A_1, X>, ..., <A_m, X>)``.

    ``mats`` is stored as an ``(m, n, n)`` array of symmetric matrices.
    """

    mats: np.ndarray

    def __post_init__(self):
        mats = np.asarray(self.mats, dtype=float)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise ValueError(f"constraint matrices must have shape (m, n, n), got {mats.shape}")
        mats = 0.5 * (mats + mats.transpose(0, 2, 1))
        mats.setflags(write=False)
        object.__setattr__(self, "mats", mats)

    @property
    def m(self) -> int:
        return self.mats.shape[0]

    @property
    def n(self) -> int:
        return self.mats.shape[1]

    def __call__(self, X) -> np.ndarray:
        return apply_A(self, X)

    def adjoint(self, lam) -> np.ndarray:
        return adjoint_A(self, lam)

    def as_matrix(self) -> np.ndarray:
        """The ``m x n(n+1)/2`` matrix of vectorized constraints.

        Off-diagonal entries are weighted by sqrt(2) so that the rows are
        isometric images of the matrices in the Frobenius inner product.
        """
        iu = np.triu_indices(self.n)
        w = np.where(iu[0] == iu[1], 1.0, math.sqrt(2.0))
        return self.mats[:, iu[0], iu[1]] * w

    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.as_matrix(), compute_uv=False)

    def is_surjective(self, rel_tol: float = ZERO_REL_TOL) -> bool:
        return numerical_rank(self.singular_values(), rel_tol) == self.m

    def norm(self) -> float:
        """Operator norm of ``A`` from Frobenius to Euclidean norm."""
        return float(self.singular_values()[0])


def apply_A(A: LinearOperatorA, X) -> np.ndarray:
    """Evaluate ``A(X)``: component ``i`` is the Frobenius product ``<A_i, X>``."""
    X = np.asarray(X, dtype=float)
    if X.shape != (A.n, A.n):
        raise ValueError(f"X has shape {X.shape}, operator expects ({A.n}, {A.n})")
    return np.einsum("kij,ij->k", A.mats, X)


def adjoint_A(A: LinearOperatorA, lam) -> np.ndarray:
    """Evaluate ``A*(lam) = sum_i lam_i A_i``."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (A.m,):
        raise ValueError(f"lambda has shape {lam.shape}, operator expects ({A.m},)")
    return sym(np.tensordot(lam, A.mats, axes=1))


@dataclass(frozen=True)
class ProblemData:
    """Data of the SDP frozen at one time point."""

    t: float
    C: np.ndarray
    A: LinearOperatorA
    b: np.ndarray

    @property
    def n(self) -> int:
        return self.C.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[0]


class TVProblem:
    """Base class for time-varying instances.

    Subclasses implement :meth:`evaluate` and :meth:`to_dict`. Evaluation is
    a pure function of ``t``.
    """

    kind: str = "abstract"
    n: int
    m: int
    T: float

    def evaluate(self, t: float) -> ProblemData:
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError

    def _check_time(self, t: float) -> float:
        t = float(t)
        if not (0.0 <= t <= self.T) or not math.isfinite(t):
            raise ValueError(f"t={t} outside [0, {self.T}]")
        return t


@dataclass(frozen=True, eq=False)
class AffineTVProblem(TVProblem):
    """Instance with data affine in time: ``C_t = C0 + t C1``, ``b_t = b0 + t b1``.

    The constraint operator is constant. Max-Cut instances and explicit
    instances read from JSON are of this form.
    """

    C0: np.ndarray
    C1: np.ndarray
    A: LinearOperatorA
    b0: np.ndarray
    b1: np.ndarray
    T: float = 1.0
    kind: str = "explicit"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        C0, C1 = sym(self.C0), sym(self.C1)
        b0 = np.asarray(self.b0, dtype=float).copy()
        b1 = np.asarray(self.b1, dtype=float).copy()
        n, m = self.A.n, self.A.m
        if C0.shape != (n, n) or C1.shape != (n, n):
            raise ValueError("objective matrices do not match the constraint dimension")
        if b0.shape != (m,) or b1.shape != (m,):
            raise ValueError("right-hand sides do not match the number of constraints")
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        for arr in (C0, C1, b0, b1):
            arr.setflags(write=False)
        object.__setattr__(self, "C0", C0)
        object.__setattr__(self, "C1", C1)
        object.__setattr__(self, "b0", b0)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "T", float(self.T))

    @property
    def n(self) -> int:
        return self.A.n

    @property
    def m(self) -> int:
        return self.A.m

    def evaluate(self, t: float) -> ProblemData:
        t = self._check_time(t)
        return ProblemData(t, self.C0 + t * self.C1, self.A, self.b0 + t * self.b1)

    def to_dict(self) -> dict[str, Any]:
        head = {"format": INSTANCE_FORMAT, "kind": self.kind, "n": self.n, "m": self.m, "T": self.T}
        if self.kind == "maxcut":
            return head | self.params
        return head | {
            "C0": self.C0.tolist(),
            "C1": self.C1.tolist(),
            "A": self.A.mats.tolist(),
            "b0": self.b0.tolist(),
            "b1": self.b1.tolist(),
        }


def maxcut_operator(n: int) -> LinearOperatorA:
    """Diagonal constraints ``X_ii = 1``: ``A_i = e_i e_i^T``."""
    mats = np.zeros((n, n, n))
    idx = np.arange(n)
    mats[idx, idx, idx] = 1.0
    return LinearOperatorA(mats)


def _streams(seed: int, count: int) -> list[np.random.Generator]:
    # One independent PCG64 stream per random quantity, spawned from the seed.
    children = np.random.SeedSequence(int(seed)).spawn(count)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def make_maxcut_tv(n: int, density: float = 0.5, seed: int = 0) -> AffineTVProblem:
    """Time-varying Max-Cut relaxation with ``W_t = W0 + t W1`` on ``[0, 1]``.

    Each strict upper-triangular position is an edge with probability
    ``density``. Edge weights of ``W0`` are drawn from N(10, 10^2) and those of
    ``W1`` from N(1, 1); both share the edge pattern and have zero diagonal.
    Streams: pattern, ``W0`` weights and ``W1`` weights are drawn from three
    children of ``SeedSequence(seed)``.
    """
    if not 0.0 < density <= 1.0:
        raise ValueError(f"density must lie in (0, 1], got {density}")
    if n < 2:
        raise ValueError("need at least two vertices")
    rng_pattern, rng_w0, rng_w1 = _streams(seed, 3)
    iu = np.triu_indices(n, k=1)
    present = rng_pattern.random(iu[0].size) < density
    w0 = np.where(present, rng_w0.normal(10.0, 10.0, iu[0].size), 0.0)
    w1 = np.where(present, rng_w1.normal(1.0, 1.0, iu[0].size), 0.0)
    W0 = np.zeros((n, n))
    W1 = np.zeros((n, n))
    W0[iu] = w0
    W1[iu] = w1
    W0 = W0 + W0.T
    W1 = W1 + W1.T
    return AffineTVProblem(
        C0=W0,
        C1=W1,
        A=maxcut_operator(n),
        b0=np.ones(n),
        b1=np.zeros(n),
        T=1.0,
        kind="maxcut",
        params={"density": float(density), "seed": int(seed)},
    )


def maxcut_edge_mask(problem: AffineTVProblem) -> np.ndarray:
    """Boolean adjacency pattern of a Max-Cut instance."""
    mask = problem.C0 != 0
    np.fill_diagonal(mask, False)
    return mask


def orthogonal_complement_projector(Y: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto the complement of ``range(Y)``."""
    Q, _ = np.linalg.qr(Y)
    return np.eye(Y.shape[0]) - Q @ Q.T


@dataclass(frozen=True, eq=False)
class SyntheticTVProblem(TVProblem):
    """Instance built backwards from a known primal-dual solution curve.

    ``Y_t = Y0 + t Y1`` and ``lambda_t = lam0 + t lam1``; ``b_t = A(Y_t Y_t^T)``
    and ``C_t = A*(lambda_t) + Z_t`` with ``Z_t = P_t D P_t`` where ``P_t``
    projects onto the orthogonal complement of ``range(Y_t)``. Hence
    ``(Y_t Y_t^T, Z_t)`` is a strictly complementary optimal pair for all t.
    """

    A: LinearOperatorA
    Y0: np.ndarray
    Y1: np.ndarray
    lam0: np.ndarray
    lam1: np.ndarray
    D: np.ndarray
    T: float = 1.0
    seed: int | None = None
    velocity: float = 0.1
    kind: str = "synthetic"

    @property
    def n(self) -> int:
        return self.A.n

    @property
    def m(self) -> int:
        return self.A.m

    @property
    def r(self) -> int:
        return self.Y0.shape[1]

    def solution(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Known optimal factor and multiplier ``(Y_t, lambda_t)``."""
        t = self._check_time(t)
        return self.Y0 + t * self.Y1, self.lam0 + t * self.lam1

    def primal(self, t: float) -> np.ndarray:
        Y, _ = self.solution(t)
        return sym(Y @ Y.T)

    def dual_slack(self, t: float) -> np.ndarray:
        Y, _ = self.solution(t)
        P = orthogonal_complement_projector(Y)
        return sym(P @ self.D @ P)

    def evaluate(self, t: float) -> ProblemData:
        t = self._check_time(t)
        Y, lam = self.solution(t)
        C = sym(adjoint_A(self.A, lam) + self.dual_slack(t))
        b = apply_A(self.A, sym(Y @ Y.T))
        return ProblemData(t, C, self.A, b)

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": INSTANCE_FORMAT,
            "kind": "synthetic",
            "n": self.n,
            "m": self.m,
            "r": self.r,
            "T": self.T,
            "seed": self.seed,
            "velocity": self.velocity,
            "ground_truth": {
                "Y0": self.Y0.tolist(),
                "Y1": self.Y1.tolist(),
                "lambda0": self.lam0.tolist(),
                "lambda1": self.lam1.tolist(),
            },
        }


def make_synthetic_tv(n: int, r: int, m: int, seed: int = 0, *, velocity: float = 0.1,
                      max_tries: int = 50) -> SyntheticTVProblem:
    """Build an instance with a known smooth solution curve on ``[0, 1]``.

    Draws are retried (from the same seed sequence) until the constraint
    operator is surjective, ``Y_t`` keeps full column rank on ``[0, 1]`` and
    the map ``lambda -> A*(lambda) Y_0`` is injective.

    Parameters
    ----------
    n, r, m : int
        Matrix size, factor rank and number of constraints. Requires
        ``r(r+1)/2 <= m <= n(n+1)/2`` and ``r < n``.
    seed : int
        Seed of the generator.
    velocity : float
        Scale of ``Y1`` and ``lam1`` relative to ``Y0`` and ``lam0``; controls
        how fast the solution path moves.
    """
    if not r < n:
        raise ValueError("need r < n")
    if not r * (r + 1) // 2 <= m <= n * (n + 1) // 2:
        raise ValueError(f"need r(r+1)/2 <= m <= n(n+1)/2, got r={r}, m={m}, n={n}")
    grid = np.linspace(0.0, 1.0, 101)
    for child in np.random.SeedSequence(int(seed)).spawn(max_tries):
        rng_a, rng_y, rng_l, rng_d = (np.random.Generator(np.random.PCG64(c)) for c in child.spawn(4))
        G = rng_a.standard_normal((m, n, n))
        A = LinearOperatorA(G / math.sqrt(n))
        Y0 = rng_y.standard_normal((n, r))
        Y1 = velocity * rng_y.standard_normal((n, r))
        lam0 = rng_l.standard_normal(m)
        lam1 = velocity * rng_l.standard_normal(m)
        D = np.diag(1.0 + rng_d.random(n))
        if not A.is_surjective():
            continue
        smin = min(np.linalg.svd(Y0 + t * Y1, compute_uv=False)[-1] for t in grid)
        if smin < 0.1:
            continue
        AY = np.einsum("kij,jl->kil", A.mats, Y0).reshape(m, -1).T
        if numerical_rank(np.linalg.svd(AY, compute_uv=False)) < m:
            continue
        return SyntheticTVProblem(A=A, Y0=Y0, Y1=Y1, lam0=lam0, lam1=lam1, D=D, T=1.0,
                                  seed=int(seed), velocity=float(velocity))
    raise RuntimeError(f"could not generate a regular synthetic instance from seed {seed}")


def barvinok_pataki_ok(r: int, m: int) -> bool:
    return r * (r + 1) // 2 <= m


@dataclass
class NondegeneracyReport:
    primal_nondegenerate: bool
    strictly_complementary: bool
    AY_singular_values: np.ndarray
    rank_X: int
    rank_Z: int
    eig_X: np.ndarray
    eig_Z: np.ndarray

    @property
    def ok(self) -> bool:
        return self.primal_nondegenerate and self.strictly_complementary


def check_nondegeneracy(problem: TVProblem, t: float, Y, Z, rel_tol: float = ZERO_REL_TOL) -> NondegeneracyReport:
    """Numerical primal non-degeneracy and strict complementarity checks.

    Primal non-degeneracy is tested through injectivity of
    ``lambda -> A*(lambda) Y``: the ``nr x m`` matrix with columns
    ``vec(A_i Y)`` must have rank ``m``. Strict complementarity requires
    ``rank(Y Y^T) + rank(Z) = n``. Never raises on failing properties.
    """
    data = problem.evaluate(t)
    Y = np.asarray(Y, dtype=float)
    Z = sym(Z)
    n, m = data.n, data.m
    AY = np.einsum("kij,jl->kil", data.A.mats, Y).reshape(m, -1).T
    sv = np.linalg.svd(AY, compute_uv=False)
    eig_X = np.linalg.eigvalsh(sym(Y @ Y.T))[::-1]
    eig_Z = np.linalg.eigvalsh(Z)[::-1]
    # Ranks share one scale so that Z = 0 counts as rank zero.
    scale = max(eig_X[0], abs(eig_Z[0]), 0.0)
    rank_X = int(np.sum(eig_X > rel_tol * scale)) if scale > 0 else 0
    rank_Z = int(np.sum(eig_Z > rel_tol * scale)) if scale > 0 else 0
    return NondegeneracyReport(
        primal_nondegenerate=sv.size >= m and numerical_rank(sv, rel_tol) == m,
        strictly_complementary=rank_X + rank_Z == n,
        AY_singular_values=sv,
        rank_X=rank_X,
        rank_Z=rank_Z,
        eig_X=eig_X,
        eig_Z=eig_Z,
    )


def problem_from_dict(d: dict[str, Any]) -> TVProblem:
    kind = d.get("kind")
    if kind == "maxcut":
        prob = make_maxcut_tv(int(d["n"]), float(d["density"]), int(d["seed"]))
    elif kind == "synthetic":
        prob = make_synthetic_tv(int(d["n"]), int(d["r"]), int(d["m"]), int(d["seed"]),
                                 velocity=float(d.get("velocity", 0.1)))
    elif kind == "explicit":
        prob = AffineTVProblem(
            C0=np.array(d["C0"], dtype=float),
            C1=np.array(d["C1"], dtype=float),
            A=LinearOperatorA(np.array(d["A"], dtype=float)),
            b0=np.array(d["b0"], dtype=float),
            b1=np.array(d["b1"], dtype=float),
            T=float(d.get("T", 1.0)),
        )
    else:
        raise ValueError(f"unknown instance kind {kind!r}")
    if prob.n != int(d["n"]) or prob.m != int(d["m"]):
        raise ValueError("instance dimensions do not match the file header")
    return prob


def dumps_problem(problem: TVProblem) -> str:
    return json.dumps(problem.to_dict(), sort_keys=True, indent=1) + "\n"


def save_problem(problem: TVProblem, path) -> None:
    Path(path).write_text(dumps_problem(problem))


def load_problem(path) -> TVProblem:
    return problem_from_dict(json.loads(Path(path).read_text()))
