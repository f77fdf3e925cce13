import math

import numpy as np
import pytest

from percgame import (Binomial, Dirac, EdgeWeightLaw, GameSpec, Kappa3Bounds,
                      NegBinomial, Poisson, TwoPoint, UniformRange,
                      UnsupportedFamilyError, duration_criterion, geometric,
                      kappa2_draw_zero, kappa3_bounds, kappa3_contraction_holds,
                      kappa3_p0_zero_check, kappa3_p0_zero_maps, kappa3_special_ratio,
                      ratio_law, solve)
from percgame.criteria import count_scalar_fixed_points


def law(p0, p1):
    return EdgeWeightLaw.from_p0_p1(p0, p1)


# ---------------------------------------------------------------------------
# capital-2 dichotomy
# ---------------------------------------------------------------------------

def test_kappa2_geometric_always_zero():
    rng = np.random.default_rng(5)
    for _ in range(25):
        p0 = rng.random()
        p1 = rng.random() * (1 - p0)
        assert kappa2_draw_zero(NegBinomial(1, rng.uniform(0.05, 0.95)), law(p0, p1))


def test_kappa2_poisson2_zero_on_whole_simplex():
    # sup of p0 * 2 * exp(-2 p1) over the simplex is 2 < e
    for p0 in np.linspace(0, 1, 11):
        for p1 in np.linspace(0, 1, 11):
            if p0 + p1 <= 1:
                assert kappa2_draw_zero(Poisson(2.0), law(p0, p1))


def test_kappa2_poisson10_positive_example():
    # 0.99 * 10 * exp(-0.05) = 9.417... > e
    assert not kappa2_draw_zero(Poisson(10.0), law(0.99, 0.005))
    assert 0.99 * 10 * math.exp(-0.05) > math.e


def test_kappa2_matches_literal_inequalities():
    cases = [(0.8, 0.1), (0.5, 0.25), (0.95, 0.02), (0.2, 0.5)]
    for p0, p1 in cases:
        lw = law(p0, p1)
        d, pi = 5, 0.5
        lhs = p0 * pi * (1 - pi * p1) ** (d - 1)
        assert kappa2_draw_zero(Binomial(d, pi), lw) == (lhs <= (d + 1) ** (d - 1) * d ** (-d))
        lam = 3.0
        assert kappa2_draw_zero(Poisson(lam), lw) == (p0 * lam * math.exp(-lam * p1) <= math.e)
        r, pi = 2, 0.4
        lhs = (r - 1) ** (r + 1) * (1 - pi) * p0 * pi**r
        rhs = (p1 + pi - p1 * pi) ** (r + 1) * r**r
        assert kappa2_draw_zero(NegBinomial(r, pi), lw) == (lhs <= rhs)
        pi, d = 0.5, 3
        lhs = p0 * pi * (pi * (1 - p1) + lw.p_minus1 * (1 - pi)) ** (d - 1)
        assert kappa2_draw_zero(TwoPoint(pi, d), lw) == (lhs <= (d + 1) ** (d - 1) / d**d)


def test_kappa2_unsupported_family():
    with pytest.raises(UnsupportedFamilyError):
        kappa2_draw_zero(Dirac(2), law(0.8, 0.1))
    with pytest.raises(UnsupportedFamilyError):
        kappa2_draw_zero(UniformRange(3), law(0.8, 0.1))
    with pytest.raises(UnsupportedFamilyError):
        kappa2_draw_zero(Binomial(1, 0.5), law(0.8, 0.1))


# ---------------------------------------------------------------------------
# capital-3 bounds
# ---------------------------------------------------------------------------

def test_kappa3_bounds_poisson5_closed_forms():
    b = kappa3_bounds(Poisson(5.0), EdgeWeightLaw(0.35, 0.3, 0.35))
    # evaluate the displayed closed forms independently
    a21 = math.exp(5 * (0.35 * (1 - math.exp(-5 * 0.65 * math.exp(5 * (0.35 - 1)))) - 1))
    assert b.A[1, 0] == pytest.approx(a21, rel=1e-12)
    assert b.A[0, 0] == pytest.approx(math.exp(5 * (0.35 - 1)), rel=1e-12)
    assert b.B[1, 0] == pytest.approx(math.exp(-5 * 0.35), rel=1e-12)
    assert b.A[1, 1] == pytest.approx(0.0991, rel=1e-3)
    assert b.B[0, 0] == pytest.approx(0.44488, rel=1e-3)
    assert b.B[0, 1] == pytest.approx(0.84123, rel=1e-3)


def test_kappa3_bounds_dirac15_closed_forms():
    b = kappa3_bounds(Dirac(15), EdgeWeightLaw(0.35, 0.3, 0.35))
    assert b.A[0, 0] == pytest.approx(0.35**15, rel=1e-12)
    assert b.B[1, 0] == pytest.approx(0.65**15, rel=1e-12)
    assert b.A[1, 0] == pytest.approx(2.57866e-95, rel=1e-3)
    assert b.B[0, 0] == pytest.approx(0.00188145, rel=1e-3)
    assert b.B[0, 1] == pytest.approx(0.992019, rel=1e-3)


@pytest.mark.parametrize("dist,lw", [
    (Poisson(2.0), law(0.5, 0.3)),
    (Poisson(5.0), law(0.3, 0.35)),
    (Dirac(5), law(0.3, 0.35)),
    (Binomial(6, 0.5), law(0.6, 0.2)),
    (geometric(0.5), law(0.4, 0.3)),
    (UniformRange(4), law(0.55, 0.25)),
])
def test_bounds_sandwich_solved_probabilities(dist, lw):
    b = kappa3_bounds(dist, lw)
    r = solve(GameSpec(3, dist, lw))
    assert r.converged
    assert np.all(b.A <= r.L + 1e-9)
    assert np.all(1 - r.W <= b.B + 1e-9)
    assert np.all(b.A <= b.B + 1e-12)


def test_kappa3_bounds_partials_match_finite_differences():
    dist, lw = Poisson(5.0), EdgeWeightLaw(0.35, 0.3, 0.35)
    G = dist.pgf
    p0, p1, pm1 = lw.p_0, lw.p_1, lw.p_minus1
    h = 1e-6

    def f1(x1, x2):
        return G(1 - p1 * x2 - p0 * x1)

    def f2(x1, x2):
        return G(p0 + pm1 - p0 * x2 - pm1 * x1)

    Gp = dist.pgf_derivative
    for (x1, x2) in ((0.2, 0.3), (0.05, 0.6)):
        assert -p0 * Gp(1 - p1 * x2 - p0 * x1) == pytest.approx(
            (f1(x1 + h, x2) - f1(x1 - h, x2)) / (2 * h), abs=1e-5)
        assert -p1 * Gp(1 - p1 * x2 - p0 * x1) == pytest.approx(
            (f1(x1, x2 + h) - f1(x1, x2 - h)) / (2 * h), abs=1e-5)
        assert -pm1 * Gp(p0 + pm1 - p0 * x2 - pm1 * x1) == pytest.approx(
            (f2(x1 + h, x2) - f2(x1 - h, x2)) / (2 * h), abs=1e-5)
        assert -p0 * Gp(p0 + pm1 - p0 * x2 - pm1 * x1) == pytest.approx(
            (f2(x1, x2 + h) - f2(x1, x2 - h)) / (2 * h), abs=1e-5)


def test_contraction_holds_cases():
    assert kappa3_contraction_holds(
        Kappa3Bounds(A=np.zeros((2, 2)), B=np.ones((2, 2)), E=np.zeros((2, 2))))
    b = kappa3_bounds(Poisson(50.0), EdgeWeightLaw(0.3, 0.4, 0.3))
    assert kappa3_contraction_holds(b)
    assert np.max(b.E) < 1e-3
    b = kappa3_bounds(Poisson(5.0), EdgeWeightLaw(0.1, 0.8, 0.1))
    assert not kappa3_contraction_holds(b)
    assert np.max(b.E) > 1


def test_contraction_soundness_implies_zero_draws():
    cases = [
        (Poisson(50.0), EdgeWeightLaw(0.3, 0.4, 0.3)),
        (Poisson(25.0), EdgeWeightLaw(0.35, 0.3, 0.35)),
        (Dirac(20), EdgeWeightLaw(0.35, 0.3, 0.35)),
        (Dirac(30), EdgeWeightLaw(0.25, 0.5, 0.25)),
    ]
    for dist, lw in cases:
        if kappa3_contraction_holds(kappa3_bounds(dist, lw)):
            r = solve(GameSpec(3, dist, lw))
            assert np.all(r.D < 1e-8), (dist, lw)


# ---------------------------------------------------------------------------
# special regimes
# ---------------------------------------------------------------------------

def test_special_ratio_intervals():
    assert kappa3_special_ratio(0.1)
    assert not kappa3_special_ratio(1.0)
    assert kappa3_special_ratio(3.0)
    assert kappa3_special_ratio(0.0)
    assert not kappa3_special_ratio(0.242915)     # left endpoint excluded
    assert not kappa3_special_ratio(2.57162)      # right endpoint excluded
    with pytest.raises(ValueError):
        kappa3_special_ratio(-0.5)


def test_ratio_law_normalization():
    lw = ratio_law(2.0)
    assert lw.p_minus1 + lw.p_0 + lw.p_1 == pytest.approx(1.0)
    assert lw.p_0 / lw.p_minus1 == pytest.approx(2.0)
    assert lw.p_1 / lw.p_0 == pytest.approx(2.0)


def test_special_ratio_certificate_agrees_with_solve():
    for alpha in (0.1, 0.2, 3.0, 5.0):
        assert kappa3_special_ratio(alpha)
        r = solve(GameSpec(3, Dirac(2), ratio_law(alpha)))
        assert np.all(r.D < 1e-8), alpha


def test_p0_zero_check_validation_and_formula():
    with pytest.raises(ValueError):
        kappa3_p0_zero_check(Dirac(2), 1.5)
    assert kappa3_p0_zero_check(Dirac(2), 0.0)
    dist, pm1 = Poisson(3.0), 0.6
    G, Gp = dist.pgf, dist.pgf_derivative
    product = pm1 * (1 - pm1) * Gp(1 - (1 - pm1) * G(pm1)) * Gp(pm1 * (1 - G(pm1)))
    assert kappa3_p0_zero_check(dist, pm1) == (product < 1)


def test_p0_zero_uniqueness_equivalence():
    # d_{1,1} = 0 iff the composed scalar map b(b(a(a(.)))) has a unique fixed
    # point; likewise d_{1,2} with b(a(a(b(.)))).  Cross-validate the scalar
    # multi-start count against the full solve on a parameter grid.
    grids = {
        Dirac(2): np.linspace(0.05, 0.95, 7),
        Poisson(2.0): np.linspace(0.05, 0.95, 7),
        Poisson(50.0): [0.85, 0.9],
        Dirac(10): [0.3, 0.7],
    }
    for dist, grid in grids.items():
        for pm1 in grid:
            a, b = kappa3_p0_zero_maps(dist, pm1)
            r = solve(GameSpec(3, dist, EdgeWeightLaw(pm1, 0.0, 1.0 - pm1)))
            assert r.converged
            n11 = count_scalar_fixed_points(lambda x: b(b(a(a(x)))))
            n12 = count_scalar_fixed_points(lambda x: b(a(a(b(x)))))
            assert (r.D[0, 0] < 1e-8) == (n11 == 1), (dist, pm1)
            assert (r.D[0, 1] < 1e-8) == (n12 == 1), (dist, pm1)
            # part-4 parity pairing: (1,1) with (2,2) and (1,2) with (2,1)
            assert (r.D[0, 0] < 1e-8) == (r.D[1, 1] < 1e-8)
            assert (r.D[0, 1] < 1e-8) == (r.D[1, 0] < 1e-8)
            if kappa3_p0_zero_check(dist, pm1):
                assert np.all(r.D < 1e-8)


# ---------------------------------------------------------------------------
# duration certificate
# ---------------------------------------------------------------------------

def _independent_row_sums(spec, result):
    """Literal re-implementation of the coefficient row sums."""
    k = spec.kappa
    pm1, p0, p1 = spec.law.p_minus1, spec.law.p_0, spec.law.p_1
    Gp = spec.dist.pgf_derivative

    def wv(j, c):
        if c == 0:
            return 1.0
        if c == k:
            return 0.0
        return result.W[j - 1, c - 1]

    def lv(j, c):
        if c == 0:
            return 0.0
        if c == k:
            return 1.0
        return result.L[j - 1, c - 1]

    prob = {-1: pm1, 0: p0, 1: p1}

    def alpha(i, j):
        return pm1 * wv(j, i - 1) + p0 * wv(j, i) + p1 * wv(j, i + 1)

    def beta(i, j):
        return pm1 * (1 - lv(j, i - 1)) + p0 * (1 - lv(j, i)) + p1 * (1 - lv(j, i + 1))

    sums = {}
    for ip in range(1, k):
        for jp in range(1, k):
            total = 0.0
            for s in range(1, k):
                for t in range(1, k):
                    if abs(ip - s) <= 1 and abs(jp - t) <= 1:
                        total += (Gp(beta(s, t)) * Gp(alpha(t, ip))
                                  * prob[ip - s] * prob[jp - t])
            sums[(ip, jp)] = total
    return sums


def test_duration_requires_positive_law_and_convergence():
    spec = GameSpec(3, Dirac(2), EdgeWeightLaw(0.4, 0.0, 0.6))
    r = solve(spec)
    with pytest.raises(ValueError):
        duration_criterion(spec, r, tol=1e-10)
    spec = GameSpec(3, Dirac(2), EdgeWeightLaw.from_p0_p1(0.9, 0.05))
    r = solve(spec, max_iter=3)
    with pytest.raises(ValueError):
        duration_criterion(spec, r, tol=1e-10)


def test_duration_zero_draw_case():
    spec = GameSpec(3, Dirac(2), EdgeWeightLaw.from_p0_p1(0.8, 0.15))
    r = solve(spec, tol=1e-13)
    report = duration_criterion(spec, r, tol=1e-11)
    assert report.draws_zero
    # draws vanish, so the certificate reduces to the row-sum test; here one
    # row exceeds 1 so the certificate does not apply (recorded oracle value)
    assert not report.criterion_holds
    assert float(np.max(np.abs(report.alpha - report.beta))) < 1e-10
    expected = _independent_row_sums(spec, r)
    for key, value in expected.items():
        assert report.row_sums[key] == pytest.approx(value, rel=1e-9)
    assert report.row_sums[(2, 2)] > 1.0
    assert report.row_sums[(1, 2)] < 1.0


def test_duration_positive_draws_disable_certificate():
    spec = GameSpec(3, Dirac(2), EdgeWeightLaw.from_p0_p1(0.9, 0.05))
    r = solve(spec)
    report = duration_criterion(spec, r, tol=1e-10)
    assert not report.draws_zero
    assert not report.criterion_holds
    assert report.row_sums  # diagnostics still present


def test_duration_certificate_holds_somewhere():
    # a strongly contracting point: all draws zero and all row sums below 1
    spec = GameSpec(3, Poisson(25.0), EdgeWeightLaw(0.35, 0.3, 0.35))
    r = solve(spec, tol=1e-13)
    report = duration_criterion(spec, r, tol=1e-11)
    assert report.draws_zero
    assert report.criterion_holds
    assert all(v < 1 for v in report.row_sums.values())


def test_duration_kappa2_reduction():
    spec = GameSpec(2, Poisson(2.0), EdgeWeightLaw.from_p0_p1(0.8, 0.1))
    r = solve(spec, tol=1e-13)
    report = duration_criterion(spec, r, tol=1e-11)
    assert report.draws_zero
    Gp = spec.dist.pgf_derivative
    beta11 = float(report.beta[0, 0])
    assert report.row_sums[(1, 1)] == pytest.approx(
        Gp(beta11) ** 2 * spec.law.p_0 ** 2, rel=1e-9)


def test_duration_report_serialization():
    spec = GameSpec(3, Dirac(2), EdgeWeightLaw.from_p0_p1(0.8, 0.15))
    r = solve(spec, tol=1e-13)
    obj = duration_criterion(spec, r, tol=1e-11).to_json_dict()
    assert set(obj) == {"alpha", "beta", "row_sums", "criterion_holds", "draws_zero"}
    assert "2,2" in obj["row_sums"]
