import itertools
import math
from fractions import Fraction

import pytest
import sympy
from hypothesis import given, strategies as st

from dualchain import analysis
from dualchain.analysis import FailureModel


def enumerate_af(model: FailureModel) -> Fraction:
    """Exhaustive oracle: walk every ordered sequence of committee member sets."""
    bad = set(range(model.misbehaving))

    def walk(pool, rank):
        if rank == model.committees:
            return Fraction(1)
        choices = list(itertools.combinations(sorted(pool), model.committee_size))
        total = Fraction(0)
        for c in choices:
            if len(bad.intersection(c)) >= model.liveness_threshold:
                total += walk(pool - set(c), rank + 1)
        return total / len(choices)

    return walk(set(range(model.population)), 0)


def enumerate_seat_patterns(model: FailureModel) -> Fraction:
    """Exhaustive oracle over every bad/good labelling of the sampled seats.

    A labelling with x bad seats has probability (M)_x (N-M)_(t-x) / (N)_t
    under sequential draws without replacement.
    """
    n, m, cs, t = model.population, model.misbehaving, model.committee_size, model.sampled

    def falling(a, k):
        return math.prod(range(a - k + 1, a + 1)) if k <= a else 0

    total = Fraction(0)
    for seats in itertools.product((0, 1), repeat=t):
        per = [sum(seats[r * cs : (r + 1) * cs]) for r in range(model.committees)]
        if all(c >= model.liveness_threshold for c in per):
            x = sum(seats)
            total += Fraction(falling(m, x) * falling(n - m, t - x), falling(n, t))
    return total


def small_models():
    out = []
    for cs in range(1, 7):
        for kappa in range(0, 12 // cs):
            t = (kappa + 1) * cs
            for n in range(t, t + 4):
                for th in range(0, cs + 1):
                    for m in sorted({0, 1, n // 2, n}):
                        out.append(FailureModel(n, m, cs, kappa, th))
    return out


def grid_models():
    out = []
    for cs in range(2, 11):
        for kappa in range(0, 30 // cs):
            t = (kappa + 1) * cs
            for n in (t, t + 7, 2 * t + 3):
                for th in sorted({1, (cs + 2) // 3, cs // 2, cs}):
                    m = n // 3
                    out.append(FailureModel(n, m, cs, kappa, th))
    return out


def test_grid_size():
    assert len(grid_models()) >= 200
    assert all(m.sampled <= 30 for m in grid_models())


@pytest.mark.parametrize("model", [m for m in small_models() if m.sampled <= 6 and m.population <= 8])
def test_committee_walk_agrees(model):
    exact = enumerate_af(model)
    assert analysis.pr_af_hypergeometric(model) == exact
    assert analysis.pr_af_generating_function(model) == exact


def test_seat_enumeration_agrees():
    models = small_models()
    assert max(m.sampled for m in models) == 12
    for model in models:
        exact = enumerate_seat_patterns(model)
        assert analysis.pr_af_hypergeometric(model) == exact, model
        assert analysis.pr_af_generating_function(model) == exact, model


def test_formulas_agree_exactly_on_grid():
    for model in grid_models():
        assert analysis.pr_af_hypergeometric(model) == analysis.pr_af_generating_function(model), model


def test_single_committee_example():
    model = FailureModel(6, 2, 3, 0, 1)
    assert enumerate_af(model) == 1 - Fraction(math.comb(4, 3), math.comb(6, 3)) == Fraction(4, 5)
    assert analysis.pr_af_hypergeometric(model) == Fraction(4, 5)


def test_trivial_cases():
    assert analysis.pr_af_hypergeometric(FailureModel(10, 3, 4, 0, 0)) == 1
    assert analysis.pr_af_generating_function(FailureModel(10, 1, 4, 1, 2)) == 0
    assert analysis.pr_af_hypergeometric(FailureModel(10, 1, 4, 1, 2)) == 0


def test_three_committee_example():
    model = FailureModel(40, 10, 5, 2, 2)
    assert analysis.pr_af_hypergeometric(model) == analysis.pr_af_generating_function(model)


def test_invalid_model():
    with pytest.raises(ValueError):
        analysis.pr_af(FailureModel(5, 1, 3, 1, 1))
    with pytest.raises(ValueError):
        analysis.pr_af(FailureModel(10, 11, 3, 1, 1))


@pytest.mark.parametrize("cs,committees,th", [(3, 2, 1), (4, 2, 2), (5, 3, 2), (6, 1, 3), (4, 3, 0)])
def test_coefficients_match_derivatives(cs, committees, th):
    y = sympy.symbols("y")
    psi = sum(sympy.binomial(cs, i) * y**i for i in range(th, cs + 1)) ** committees
    coef = analysis.failing_patterns(cs, committees, th)
    for x in range(cs * committees + 1):
        symbolic = sympy.diff(psi, y, x).subs(y, 0) / sympy.factorial(x)
        assert int(symbolic) == coef[x]


@given(st.integers(2, 8), st.integers(0, 2), st.integers(0, 8), st.integers(0, 40))
def test_monotonicity(cs, kappa, th, m):
    th = min(th, cs)
    n = 3 * cs + 16
    m = min(m, n - 1)
    base = analysis.pr_af_generating_function(FailureModel(n, m, cs, kappa, th))
    assert analysis.pr_af_generating_function(FailureModel(n, m, cs, kappa + 1, th)) <= base
    if th < cs:
        assert analysis.pr_af_generating_function(FailureModel(n, m, cs, kappa, th + 1)) <= base
    assert analysis.pr_af_generating_function(FailureModel(n, m + 1, cs, kappa, th)) >= base


SPOT = [
    FailureModel(60, 20, 6, 1, 2),
    FailureModel(40, 10, 5, 2, 2),
    FailureModel(30, 12, 4, 1, 2),
    FailureModel(100, 30, 10, 1, 4),
    FailureModel(50, 25, 5, 3, 3),
    FailureModel(20, 8, 5, 1, 2),
    FailureModel(90, 30, 8, 2, 3),
    FailureModel(45, 15, 9, 0, 3),
    FailureModel(70, 35, 7, 2, 4),
    FailureModel(24, 6, 3, 3, 1),
]


@pytest.mark.parametrize("model", SPOT)
def test_monte_carlo_within_three_se(model):
    exact = float(analysis.pr_af_generating_function(model))
    est, _ = analysis.monte_carlo_af(model, 100_000, seed=3)
    se = math.sqrt(exact * (1 - exact) / 100_000)
    assert abs(est - exact) <= 3 * se


def test_monte_carlo_trivial_thresholds():
    assert analysis.monte_carlo_af(FailureModel(20, 5, 4, 1, 5), 2000, 1)[0] == 0.0
    assert analysis.monte_carlo_af(FailureModel(20, 5, 4, 1, 0), 2000, 1)[0] == 1.0


def test_monte_carlo_reproducible():
    m = SPOT[0]
    assert analysis.monte_carlo_af(m, 5000, 9, chunk=700) == analysis.monte_carlo_af(m, 5000, 9, chunk=700)


def chernoff_oracle(p, gamma, failure):
    p, gamma = sympy.Rational(p), sympy.Rational(gamma)
    log_inv = sympy.log(1 / sympy.Rational(failure))
    if gamma / p < 2:
        value = 3 * p * log_inv / (gamma - p) ** 2
    else:
        value = 3 * log_inv / (gamma - p)
    return int(sympy.ceiling(sympy.N(value, 50)))


@pytest.mark.parametrize("p", ["1/4", "3/10"])
@pytest.mark.parametrize("failure", ["1e-10", "1e-5", "1e-3"])
def test_committee_bound_matches_oracle(p, failure):
    got = analysis.committee_size_bound(float(Fraction(p)), 1 / 3, float(failure))
    assert got == chernoff_oracle(p, "1/3", Fraction(failure))


def test_committee_bound_published_values():
    for p, f, want in [(0.25, 1e-10, 2487), (0.30, 1e-10, 18651), (0.25, 1e-5, 1244), (0.30, 1e-5, 9326), (0.25, 1e-3, 747)]:
        assert analysis.committee_size_bound(p, 1 / 3, f) == want


def test_committee_bound_second_branch():
    assert analysis.committee_size_bound(0.1, 0.2, 1e-3) == chernoff_oracle("1/10", "1/5", Fraction("1e-3"))
    assert analysis.committee_size_bound(0.1, 0.3, 1e-3) == chernoff_oracle("1/10", "3/10", Fraction("1e-3"))


def test_committee_bound_unbounded():
    with pytest.raises(analysis.UnboundedCommittee):
        analysis.committee_size_bound(0.4, 1 / 3, 1e-5)
