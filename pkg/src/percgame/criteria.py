"""Closed-form certificates about the draw probabilities and game duration.

Four groups of tests:

* target capital 2: exact phase boundaries deciding d = 0 for the binomial,
  Poisson, negative binomial and two-point offspring families;
* target capital 3: lower bounds A on the loss probabilities, upper bounds B
  on one minus the win probabilities, and contraction coefficients E built
  from them -- max E < 1 certifies a unique fixed point, hence no draws;
* target capital 3 special regimes: the 1 : a : a^2 weight-ratio interval
  test on the binary tree, and the p_0 = 0 product test;
* the duration certificate: with all draws zero, row sums below 1 of a
  coefficient matrix built from G' at the win/loss mixtures imply finite
  expected game length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fixpoint import (EdgeWeightLaw, GameSpec, InternalInconsistencyError,
                       SolveResult, Verdict, classify_draw)
from .offspring import Binomial, NegBinomial, OffspringDistribution, Poisson, TwoPoint

# Interval endpoints for the 1 : a : a^2 weight-ratio certificate on the
# binary tree, as published (6 significant figures, no derivation shown).
SPECIAL_RATIO_LOW = 0.242915
SPECIAL_RATIO_HIGH = 2.57162


class UnsupportedFamilyError(ValueError):
    """The requested closed-form test does not cover this offspring family."""


# ---------------------------------------------------------------------------
# target capital 2
# ---------------------------------------------------------------------------

def kappa2_draw_zero(dist: OffspringDistribution, law: EdgeWeightLaw) -> bool:
    """Exact draw-probability dichotomy at target capital 2.

    Returns True when the draw probability d_{1,1} is zero, which holds iff
    the family-specific inequality below is satisfied.
    """
    p0, p1, pm1 = law.p_0, law.p_1, law.p_minus1
    if isinstance(dist, Binomial):
        d, pi = dist.n, dist.pi
        if d < 2:
            raise UnsupportedFamilyError("binomial test requires n >= 2")
        return p0 * pi * (1.0 - pi * p1) ** (d - 1) <= (d + 1) ** (d - 1) * d ** (-d)
    if isinstance(dist, Poisson):
        return p0 * dist.lam * math.exp(-dist.lam * p1) <= math.e
    if isinstance(dist, NegBinomial):
        r, pi = dist.r, dist.pi
        return ((r - 1) ** (r + 1) * (1.0 - pi) * p0 * pi**r
                <= (p1 + pi - p1 * pi) ** (r + 1) * r**r)
    if isinstance(dist, TwoPoint):
        d, pi = dist.d, dist.pi
        return (p0 * pi * (pi * (1.0 - p1) + pm1 * (1.0 - pi)) ** (d - 1)
                <= (d + 1) ** (d - 1) / d**d)
    raise UnsupportedFamilyError(f"no closed-form capital-2 test for family {dist.family!r}")


# ---------------------------------------------------------------------------
# target capital 3: contraction bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Kappa3Bounds:
    """Probability bounds and contraction coefficients at target capital 3.

    A[i, j] bounds the loss probability from below, B[i, j] bounds one minus
    the win probability from above, and E[i, j] is the per-variable
    contraction coefficient assembled from derivative maxima over the
    [A, B] box.
    """

    A: np.ndarray
    B: np.ndarray
    E: np.ndarray

    def __post_init__(self):
        if np.any(self.A < -1e-12) or np.any(self.B > 1.0 + 1e-12):
            raise InternalInconsistencyError("bounds escaped [0, 1]")
        if np.any(self.A > self.B + 1e-12):
            raise InternalInconsistencyError("lower bound exceeds upper bound")
        if np.any(self.E < 0):
            raise InternalInconsistencyError("contraction coefficients must be non-negative")


def kappa3_bounds(dist: OffspringDistribution, law: EdgeWeightLaw) -> Kappa3Bounds:
    """Compute the A/B probability bounds and the coefficients E at kappa = 3.

    The A entries arise from explicit forced-loss events (for instance every
    root edge carrying weight -1), the B entries from forced-win events, and
    E[i, j] sums, over the four composed-map components, the product of the
    inner derivative maximum (attained at A) and the outer derivative maximum
    (attained at B).
    """
    G = dist.pgf
    Gp = dist.pgf_derivative
    p0, p1, pm1 = law.p_0, law.p_1, law.p_minus1

    A11 = A12 = G(pm1)
    B21 = B22 = G(1.0 - p1)
    A21 = G(pm1 * (1.0 - G(1.0 - (1.0 - pm1) * G(pm1))))
    A22 = (G(pm1 * (1.0 - G(1.0 - G(pm1))))
           + G((1.0 - p1) * (1.0 - G(1.0 - p1)))
           - G(pm1 * (1.0 - G(1.0 - p1) - G(1.0 - G(pm1))
                      + G((1.0 - p1) * (1.0 - G(pm1))))))
    B11 = (G(1.0 - (1.0 - pm1) * G(pm1))
           - G((1.0 - pm1) * (1.0 - G(pm1)) + pm1)
           + G((1.0 - pm1) * (1.0 - G(pm1)) + pm1
               - p1 * G(1.0 - G(1.0 - p1)) + p1 * G(pm1 * (1.0 - G(1.0 - p1)))))
    B12 = G(1.0 - p1 * G((1.0 - p1) * (1.0 - G(1.0 - p1))))
    A = np.array([[A11, A12], [A21, A22]], dtype=float)
    B = np.array([[B11, B12], [B21, B22]], dtype=float)

    def f1(x1, x2):
        return G(1.0 - p1 * x2 - p0 * x1)

    def f2(x1, x2):
        return G(p0 + pm1 - p0 * x2 - pm1 * x1)

    def d_f1(j, x1, x2):
        # |partial_j f1|; the chain factor is p0 for the first argument, p1 for the second
        return (p0 if j == 1 else p1) * Gp(1.0 - p1 * x2 - p0 * x1)

    def d_f2(j, x1, x2):
        return (pm1 if j == 1 else p0) * Gp(p0 + pm1 - p0 * x2 - pm1 * x1)

    f1B2, f1B1 = f1(B[1, 0], B[1, 1]), f1(B[0, 0], B[0, 1])
    f2B2, f2B1 = f2(B[1, 0], B[1, 1]), f2(B[0, 0], B[0, 1])
    outer = (Gp(1.0 - p1 * f1B2 - p0 * f1B1),
             Gp(1.0 - p1 * f2B2 - p0 * f2B1),
             Gp(p0 + pm1 - p0 * f1B2 - pm1 * f1B1),
             Gp(p0 + pm1 - p0 * f2B2 - pm1 * f2B1))

    E = np.zeros((2, 2))
    for i in (1, 2):
        # weight of the row-i inner block inside the two outer layers:
        # p_{i-1} multiplies the first-layer terms, p_{i-2} the second.
        w_first = p0 if i == 1 else p1
        w_second = pm1 if i == 1 else p0
        for j in (1, 2):
            d1 = d_f1(j, A[i - 1, 0], A[i - 1, 1])
            d2 = d_f2(j, A[i - 1, 0], A[i - 1, 1])
            E[i - 1, j - 1] = (w_first * d1 * outer[0] + w_first * d2 * outer[1]
                               + w_second * d1 * outer[2] + w_second * d2 * outer[3])
    return Kappa3Bounds(A=A, B=B, E=E)


def kappa3_contraction_holds(bounds: Kappa3Bounds) -> bool:
    """True when every contraction coefficient is below 1.

    Sufficient for all four draw probabilities at kappa = 3 to vanish; the
    converse does not hold.
    """
    return bool(np.max(bounds.E) < 1.0)


# ---------------------------------------------------------------------------
# target capital 3: special regimes
# ---------------------------------------------------------------------------

def ratio_law(alpha: float) -> EdgeWeightLaw:
    """Edge-weight law with probabilities in ratio 1 : alpha : alpha^2 for
    weights -1, 0, +1."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    z = 1.0 + alpha + alpha * alpha
    return EdgeWeightLaw(1.0 / z, alpha / z, alpha * alpha / z)


def kappa3_special_ratio(alpha: float) -> bool:
    """Binary tree, weights in ratio 1 : alpha : alpha^2 at kappa = 3.

    True certifies that all four draw probabilities vanish; False is
    inconclusive (not a proof of a positive draw).
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    return alpha < SPECIAL_RATIO_LOW or alpha > SPECIAL_RATIO_HIGH


def kappa3_p0_zero_maps(dist: OffspringDistribution, p_minus1: float):
    """The pair of scalar maps a(x) = G(p_m1 - p_m1 x), b(x) = G(1 - p1 x)
    governing the p_0 = 0 regime at kappa = 3 (p1 = 1 - p_m1)."""
    if not 0.0 <= p_minus1 <= 1.0:
        raise ValueError("p_minus1 must lie in [0, 1]")
    p1 = 1.0 - p_minus1

    def a(x):
        return dist.pgf(p_minus1 - p_minus1 * x)

    def b(x):
        return dist.pgf(1.0 - p1 * x)

    return a, b


def kappa3_p0_zero_check(dist: OffspringDistribution, p_minus1: float) -> bool:
    """Sufficient product test for zero draws at kappa = 3 when p_0 = 0.

    Evaluates p_m1 (1 - p_m1) G'(1 - (1 - p_m1) G(p_m1)) G'(p_m1 (1 - G(p_m1)))
    and returns True when it is below 1, certifying that all four draw
    probabilities vanish.
    """
    if not 0.0 <= p_minus1 <= 1.0:
        raise ValueError("p_minus1 must lie in [0, 1]")
    G = dist.pgf
    Gp = dist.pgf_derivative
    product = (p_minus1 * (1.0 - p_minus1)
               * Gp(1.0 - (1.0 - p_minus1) * G(p_minus1))
               * Gp(p_minus1 * (1.0 - G(p_minus1))))
    return bool(product < 1.0)


def count_scalar_fixed_points(fn, tol: float = 1e-12, max_iter: int = 10**6,
                              radius: float = 1e-6, n_random: int = 32,
                              seed: int = 7) -> int:
    """Multi-start fixed-point count for a scalar self-map of [0, 1]."""
    rng = np.random.default_rng(seed)
    starts = [0.0, 1.0] + list(np.arange(0.1, 0.95, 0.1)) + list(rng.random(n_random))
    found = []
    for x in starts:
        settled = False
        for _ in range(max_iter):
            xn = float(fn(x))
            if abs(xn - x) < tol:
                x = xn
                settled = True
                break
            x = xn
        if settled and not any(abs(x - f) < radius for f in found):
            found.append(x)
    return len(found)


# ---------------------------------------------------------------------------
# duration certificate
# ---------------------------------------------------------------------------

@dataclass
class DurationReport:
    """Row-sum certificate for finite expected game duration.

    alpha[i, j] mixes the win probabilities of the responding player over the
    mover's shifted capital, beta[i, j] does the same with one minus the loss
    probabilities; they coincide when all draws vanish.  criterion_holds is
    True when draws_zero holds and every row sum of the coefficient matrix is
    strictly below 1 (a tie reports False).
    """

    alpha: np.ndarray
    beta: np.ndarray
    row_sums: dict
    criterion_holds: bool
    draws_zero: bool

    def to_json_dict(self) -> dict:
        return {
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "row_sums": {f"{i},{j}": v for (i, j), v in sorted(self.row_sums.items())},
            "criterion_holds": self.criterion_holds,
            "draws_zero": self.draws_zero,
        }


def duration_criterion(spec: GameSpec, result: SolveResult, tol: float) -> DurationReport:
    """Evaluate the finite-expected-duration certificate.

    Requires a strictly positive edge-weight law and a converged solve.  When
    any draw verdict is not ZERO the report still carries alpha, beta and the
    row sums as diagnostics with criterion_holds False.
    """
    if not spec.law.strictly_positive:
        raise ValueError("duration criterion requires p_minus1, p_0, p_1 all positive")
    if not result.converged:
        raise ValueError("duration criterion requires a converged solve result")
    k = spec.kappa
    n = spec.size
    p1, p0, pm1 = spec.law.p_1, spec.law.p_0, spec.law.p_minus1
    Gp = spec.dist.pgf_derivative

    wpad = np.empty((n, k + 1))
    wpad[:, 0] = 1.0
    wpad[:, k] = 0.0
    wpad[:, 1:k] = result.W
    lpad = np.empty((n, k + 1))
    lpad[:, 0] = 0.0
    lpad[:, k] = 1.0
    lpad[:, 1:k] = result.L

    alpha = np.empty((n, n))
    beta = np.empty((n, n))
    for i in range(1, k):
        for j in range(1, k):
            alpha[i - 1, j - 1] = (pm1 * wpad[j - 1, i - 1] + p0 * wpad[j - 1, i]
                                   + p1 * wpad[j - 1, i + 1])
            beta[i - 1, j - 1] = (pm1 * (1.0 - lpad[j - 1, i - 1]) + p0 * (1.0 - lpad[j - 1, i])
                                  + p1 * (1.0 - lpad[j - 1, i + 1]))

    verdicts = classify_draw(result)
    draws_zero = bool(np.all(verdicts == Verdict.ZERO))
    if draws_zero and float(np.max(np.abs(alpha - beta))) >= 10 * tol:
        raise InternalInconsistencyError(
            "alpha and beta disagree beyond tolerance although all draws are zero")

    probs = {-1: pm1, 0: p0, 1: p1}
    Gp_beta = Gp(beta)
    Gp_alpha = Gp(alpha)
    row_sums = {}
    for ip in range(1, k):
        for jp in range(1, k):
            total = 0.0
            for s in range(max(1, ip - 1), min(k - 1, ip + 1) + 1):
                for t in range(max(1, jp - 1), min(k - 1, jp + 1) + 1):
                    total += (Gp_beta[s - 1, t - 1] * Gp_alpha[t - 1, ip - 1]
                              * probs[ip - s] * probs[jp - t])
            row_sums[(ip, jp)] = float(total)
    criterion_holds = draws_zero and all(v < 1.0 for v in row_sums.values())
    return DurationReport(alpha=alpha, beta=beta, row_sums=row_sums,
                          criterion_holds=criterion_holds, draws_zero=draws_zero)
