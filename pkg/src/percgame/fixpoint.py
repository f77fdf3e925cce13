"""Fixed-point machinery for the win/loss/draw probabilities.

The probabilities of the first mover losing (matrix L, entries indexed by the
two starting capitals) and winning (matrix W) are the extreme fixed points of
a monotone operator h acting on the set of (kappa-1) x (kappa-1) matrices
with entries in [0, 1]:

    h(X) = f[ p_m1 e1 1^T + P (J - f(p_m1 1 e1^T + (J - X) P^T)) ]

where f applies the offspring generating function G entrywise, P is the
tridiagonal matrix of edge-weight probabilities and J the all-ones matrix.
h is the two-fold composition of the simpler map

    g(X) = f[ p_m1 e1 1^T + P (J - X^T) ],

and iterating the win/loss recurrences from zero produces monotone sequences
converging to L from below and to J - W from above.  Their difference is the
draw matrix D; D = 0 exactly when h has a unique fixed point.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .offspring import OffspringDistribution, distribution_from_json

logger = logging.getLogger(__name__)

MAX_KAPPA = 1024

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 10**6
DEFAULT_DRAW_EPSILON = 1e-8
DEFAULT_POSITIVE_THRESHOLD = 1e-6
DEFAULT_CLUSTER_RADIUS = 1e-6
DEFAULT_SEED_GRID_RANDOM = 64
SEED_GRID_RNG_SEED = 20240817


class InternalInconsistencyError(RuntimeError):
    """A structural guarantee of the model was violated numerically."""


@dataclass(frozen=True)
class EdgeWeightLaw:
    """Probabilities of the edge weights -1, 0, +1."""

    p_minus1: float
    p_0: float
    p_1: float

    def __post_init__(self):
        probs = (self.p_minus1, self.p_0, self.p_1)
        if any(p < -1e-12 or p > 1.0 + 1e-12 for p in probs):
            raise ValueError(f"edge-weight probabilities must lie in [0, 1]: {probs}")
        if abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError(f"edge-weight probabilities must sum to 1: {probs}")
        # absorb float roundoff from arithmetic like 1 - p0 - p1
        for name in ("p_minus1", "p_0", "p_1"):
            object.__setattr__(self, name, float(min(1.0, max(0.0, getattr(self, name)))))

    @classmethod
    def from_p0_p1(cls, p_0: float, p_1: float) -> "EdgeWeightLaw":
        return cls(1.0 - p_0 - p_1, p_0, p_1)

    @property
    def strictly_positive(self) -> bool:
        return self.p_minus1 > 0.0 and self.p_0 > 0.0 and self.p_1 > 0.0

    def to_json(self) -> dict:
        return {"p_minus1": self.p_minus1, "p_0": self.p_0, "p_1": self.p_1}

    @classmethod
    def from_json(cls, obj: dict) -> "EdgeWeightLaw":
        return cls(float(obj["p_minus1"]), float(obj["p_0"]), float(obj["p_1"]))


@dataclass(frozen=True)
class GameSpec:
    """Target capital kappa plus offspring law and edge-weight law.

    Interior capital pairs run over {1, ..., kappa-1}^2; kappa = 1 leaves no
    interior state, so kappa >= 2 is required.
    """

    kappa: int
    dist: OffspringDistribution
    law: EdgeWeightLaw

    def __post_init__(self):
        if not (isinstance(self.kappa, (int, np.integer)) and self.kappa >= 2):
            raise ValueError("kappa must be an integer >= 2")
        if self.kappa > MAX_KAPPA:
            raise ValueError(f"kappa too large (limit {MAX_KAPPA})")

    @property
    def size(self) -> int:
        return self.kappa - 1

    def to_json(self) -> dict:
        return {"kappa": self.kappa, "dist": self.dist.to_json(), "law": self.law.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "GameSpec":
        return cls(int(obj["kappa"]), distribution_from_json(obj["dist"]), EdgeWeightLaw.from_json(obj["law"]))


class Verdict(Enum):
    ZERO = "ZERO"
    POSITIVE = "POSITIVE"
    INCONCLUSIVE = "INCONCLUSIVE"


def ensure_prob_matrix(X, size: int) -> np.ndarray:
    """Validate an element of the operator domain: size x size, entries in [0, 1]."""
    A = np.asarray(X, dtype=float)
    if A.shape != (size, size):
        raise ValueError(f"matrix has shape {A.shape}, expected {(size, size)}")
    if np.any(A < -1e-12) or np.any(A > 1.0 + 1e-12):
        raise ValueError("matrix entries must lie in [0, 1]")
    return np.clip(A, 0.0, 1.0)


def weight_matrix(spec: GameSpec) -> np.ndarray:
    """Tridiagonal matrix P with P[i, i-1] = p_m1, P[i, i] = p_0, P[i, i+1] = p_1."""
    n = spec.size
    P = np.zeros((n, n))
    idx = np.arange(n)
    P[idx, idx] = spec.law.p_0
    P[idx[:-1], idx[:-1] + 1] = spec.law.p_1
    P[idx[1:], idx[1:] - 1] = spec.law.p_minus1
    return P


def apply_f(dist: OffspringDistribution, A) -> np.ndarray:
    """Apply the generating function entrywise."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    return np.asarray(dist.pgf(np.clip(A, 0.0, 1.0)))


def _g_fast(dist_pgf, kappa: int, p1: float, p0: float, pm1: float, X: np.ndarray) -> np.ndarray:
    """g(X) via the padded complement; boundary columns are the constants
    (1 - X[j, 0]) = 1 and (1 - X[j, kappa]) = 0."""
    n = kappa - 1
    comp = np.empty((n, kappa + 1))
    comp[:, 0] = 1.0
    comp[:, kappa] = 0.0
    comp[:, 1:kappa] = 1.0 - X
    arg = (pm1 * comp[:, 0:n] + p0 * comp[:, 1:n + 1] + p1 * comp[:, 2:n + 2]).T
    return np.asarray(dist_pgf(arg))


def apply_g(spec: GameSpec, X) -> np.ndarray:
    """One half-step of the fixed-point operator: g(X) = f[p_m1 e1 1^T + P(J - X^T)]."""
    X = ensure_prob_matrix(X, spec.size)
    return _g_fast(spec.dist.pgf, spec.kappa, spec.law.p_1, spec.law.p_0, spec.law.p_minus1, X)


def apply_h(spec: GameSpec, X) -> np.ndarray:
    """The full operator, computed from its one-shot matrix expression.

    Kept deliberately independent of apply_g so the identity h = g(g(.)) can
    serve as a cross-check of both implementations.
    """
    X = ensure_prob_matrix(X, spec.size)
    n = spec.size
    P = weight_matrix(spec)
    J = np.ones((n, n))
    e1_row = np.zeros((n, n))
    e1_row[0, :] = 1.0   # e1 1^T
    e1_col = np.zeros((n, n))
    e1_col[:, 0] = 1.0   # 1 e1^T
    pm1 = spec.law.p_minus1
    inner = apply_f(spec.dist, pm1 * e1_col + (J - X) @ P.T)
    return apply_f(spec.dist, pm1 * e1_row + P @ (J - inner))


@dataclass
class IterationRun:
    """Monotone iteration of the win/loss recurrences from the zero start."""

    ell: np.ndarray
    w: np.ndarray
    iterations: int
    delta: float
    converged: bool
    ell_iterates: Optional[list] = None
    w_iterates: Optional[list] = None


def iterate_from_below(spec: GameSpec, tol: float = DEFAULT_TOL,
                       max_iter: int = DEFAULT_MAX_ITER,
                       keep_iterates: bool = False) -> IterationRun:
    """Run the alternating loss/win recurrences from the all-zero start.

    Each step applies

        ell'[i, j] = G(p1 w[j, i+1] + p0 w[j, i] + pm1 w[j, i-1])
        w'[i, j]   = 1 - G(1 - p1 ell[j, i+1] - p0 ell[j, i] - pm1 ell[j, i-1])

    with the constant boundary values w[j, 0] = 1, w[j, kappa] = 0,
    ell[j, 0] = 0, ell[j, kappa] = 1.  Both sequences increase monotonically
    to the loss matrix L and the win matrix W.  Stops once the max-norm
    change of both falls below tol.
    """
    if tol < 0:
        raise ValueError("tol must be non-negative")
    n = spec.size
    p1, p0, pm1 = spec.law.p_1, spec.law.p_0, spec.law.p_minus1
    pgf = spec.dist.pgf
    ell = np.zeros((n, n))
    ybar = np.ones((n, n))          # ybar = 1 - w
    ells = [ell.copy()] if keep_iterates else None
    ws = [np.zeros((n, n))] if keep_iterates else None
    delta = np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        ell_next = _g_fast(pgf, spec.kappa, p1, p0, pm1, ybar)
        ybar_next = _g_fast(pgf, spec.kappa, p1, p0, pm1, ell)
        if np.any(ell_next < ell - 1e-12) or np.any(ybar_next > ybar + 1e-12):
            raise InternalInconsistencyError("monotone iteration moved backwards")
        delta = max(float(np.max(np.abs(ell_next - ell))),
                    float(np.max(np.abs(ybar_next - ybar))))
        ell, ybar = ell_next, ybar_next
        if keep_iterates:
            ells.append(ell.copy())
            ws.append(1.0 - ybar)
        if delta < tol:
            converged = True
            break
    else:
        if max_iter == 0:
            converged = True  # degenerate request: the start is the answer
    if tol == 0.0:
        converged = True      # fixed-step run, e.g. horizon iterates
    return IterationRun(ell=ell, w=1.0 - ybar, iterations=it, delta=float(delta) if delta != np.inf else 0.0,
                        converged=converged, ell_iterates=ells, w_iterates=ws)


def horizon_iterates(spec: GameSpec, horizon: int):
    """Exact finite-horizon probabilities ell^(n), w^(n) for n = 0..horizon."""
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    run = iterate_from_below(spec, tol=0.0, max_iter=horizon, keep_iterates=True)
    return run.ell_iterates, run.w_iterates


@dataclass
class SolveResult:
    """Converged loss/win/draw matrices for one game specification."""

    spec: GameSpec
    L: np.ndarray
    W: np.ndarray
    D: np.ndarray                  # draw matrix, small entries clamped to 0
    gap: np.ndarray                # raw 1 - W - L before clamping
    iterations: int
    residual: float
    converged: bool
    tol: float = DEFAULT_TOL
    draw_epsilon: float = DEFAULT_DRAW_EPSILON

    def to_json_dict(self) -> dict:
        return {
            "L": self.L.tolist(),
            "W": self.W.tolist(),
            "D": self.D.tolist(),
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
        }

    def csv_rows(self) -> list:
        rows = []
        n = self.spec.size
        for i in range(1, n + 1):
            for j in range(1, n + 1):
                rows.append({"i": i, "j": j,
                             "ell": self.L[i - 1, j - 1],
                             "w": self.W[i - 1, j - 1],
                             "d": self.D[i - 1, j - 1]})
        return rows


def solve(spec: GameSpec, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
          draw_epsilon: float = DEFAULT_DRAW_EPSILON) -> SolveResult:
    """Compute L, W and the draw matrix D = J - W - L.

    Entries of the raw gap no larger than draw_epsilon are clamped to zero:
    they are indistinguishable from iteration residue.  After convergence the
    extremes are verified to be fixed points of the full operator within
    10 * tol.
    """
    run = iterate_from_below(spec, tol=tol, max_iter=max_iter)
    L, W = run.ell, run.w
    gap = 1.0 - W - L
    if np.any(gap < -max(10 * tol, 1e-15)):
        raise InternalInconsistencyError("draw matrix has a significantly negative entry")
    D = np.where(np.abs(gap) <= draw_epsilon, 0.0, np.maximum(gap, 0.0))
    ybar = 1.0 - W
    residual = max(float(np.max(np.abs(apply_h(spec, L) - L))),
                   float(np.max(np.abs(apply_h(spec, ybar) - ybar))))
    converged = run.converged and residual <= 10 * tol
    return SolveResult(spec=spec, L=L, W=W, D=D, gap=gap, iterations=run.iterations,
                       residual=residual, converged=converged, tol=tol,
                       draw_epsilon=draw_epsilon)


def default_seed_matrices(kappa: int, n_random: int = DEFAULT_SEED_GRID_RANDOM,
                          seed: int = SEED_GRID_RNG_SEED) -> list:
    """Multi-start grid: all-zeros, all-ones, constant levels, random matrices."""
    n = kappa - 1
    seeds = [np.zeros((n, n)), np.ones((n, n))]
    seeds += [np.full((n, n), c) for c in np.arange(0.1, 0.95, 0.1)]
    rng = np.random.default_rng(seed)
    seeds += [rng.random((n, n)) for _ in range(n_random)]
    return seeds


def find_fixed_points(spec: GameSpec, seeds: Optional[Sequence] = None,
                      tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                      cluster_radius: float = DEFAULT_CLUSTER_RADIUS) -> list:
    """Locate fixed points of h by iterating from many starting matrices.

    Limits closer than cluster_radius in max-norm are merged.  Seeds whose
    orbit fails to settle within max_iter are dropped with a warning.  The
    distinct limits are returned sorted lexicographically by their entries,
    an order that extends the entrywise partial order.
    """
    if seeds is None:
        seeds = default_seed_matrices(spec.kappa)
    p1, p0, pm1 = spec.law.p_1, spec.law.p_0, spec.law.p_minus1
    pgf = spec.dist.pgf
    found = []
    dropped = 0
    for seed_matrix in seeds:
        X = ensure_prob_matrix(seed_matrix, spec.size)
        settled = False
        for _ in range(max_iter):
            Xn = _g_fast(pgf, spec.kappa, p1, p0, pm1,
                         _g_fast(pgf, spec.kappa, p1, p0, pm1, X))
            if np.max(np.abs(Xn - X)) < tol:
                X = Xn
                settled = True
                break
            X = Xn
        if not settled:
            dropped += 1
            continue
        if not any(np.max(np.abs(X - F)) < cluster_radius for F in found):
            found.append(X)
    if dropped:
        logger.warning("find_fixed_points: dropped %d non-converging seed(s)", dropped)
    found.sort(key=lambda F: tuple(F.ravel()))
    return found


def classify_draw(result: SolveResult,
                  positive_threshold: float = DEFAULT_POSITIVE_THRESHOLD) -> np.ndarray:
    """Per-entry draw verdicts from a converged solve.

    An entry is ZERO below 10 * tol, POSITIVE above positive_threshold and
    INCONCLUSIVE in between.  When all three edge-weight probabilities are
    strictly positive the draw probabilities vanish jointly or are jointly
    positive, so one POSITIVE entry promotes every entry; a simultaneous
    ZERO and POSITIVE in that regime is reported as an internal error.
    """
    if not result.converged:
        raise ValueError("classify_draw requires a converged solve result")
    D = result.D
    verdicts = np.empty(D.shape, dtype=object)
    verdicts[...] = Verdict.INCONCLUSIVE
    verdicts[D < 10 * result.tol] = Verdict.ZERO
    verdicts[D > positive_threshold] = Verdict.POSITIVE
    if result.spec.law.strictly_positive:
        has_pos = bool(np.any(verdicts == Verdict.POSITIVE))
        has_zero = bool(np.any(verdicts == Verdict.ZERO))
        if has_pos and has_zero:
            raise InternalInconsistencyError(
                "mixed ZERO and POSITIVE draw verdicts under a strictly positive edge-weight law")
        if has_pos:
            verdicts[...] = Verdict.POSITIVE
    return verdicts
