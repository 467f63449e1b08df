"""Autorecovery failure probability and committee sizing.

An epoch fails to recover when the primary and every backup committee each
hold at least ``theta_l`` misbehaving members, where committees are drawn
without replacement from a population of ``N`` nodes of which ``M``
misbehave. Two exact expressions are provided: a nested product of
shrinking hypergeometric terms, and a generating-function form that
groups outcomes by the total misbehaving count. Both use exact integer and
``Fraction`` arithmetic; floats only appear when a caller asks for one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class FailureModel:
    population: int
    misbehaving: int
    committee_size: int
    backups: int
    liveness_threshold: int

    @property
    def committees(self) -> int:
        return self.backups + 1

    @property
    def sampled(self) -> int:
        return self.committees * self.committee_size

    @property
    def gamma(self) -> Fraction:
        return Fraction(self.liveness_threshold, self.committee_size)

    @property
    def misbehaving_rate(self) -> Fraction:
        return Fraction(self.misbehaving, self.population)

    @property
    def expected_misbehaving(self) -> Fraction:
        return self.misbehaving_rate * self.committee_size

    @property
    def slack(self) -> Fraction:
        return self.liveness_threshold - self.expected_misbehaving

    def validate(self) -> None:
        if self.sampled > self.population:
            raise ValueError("(kappa+1)*cs exceeds the population")
        if not 0 <= self.misbehaving <= self.population:
            raise ValueError("misbehaving count out of range")
        if not 0 <= self.liveness_threshold <= self.committee_size:
            raise ValueError("liveness threshold out of range")
        if self.backups < 0 or self.committee_size < 1:
            raise ValueError("need at least one committee of positive size")


def pr_af_hypergeometric(model: FailureModel) -> Fraction:
    """Nested sum over per-committee misbehaving counts x_0..x_kappa."""
    model.validate()
    n, m, cs, th = model.population, model.misbehaving, model.committee_size, model.liveness_threshold
    k1 = model.committees

    @lru_cache(maxsize=None)
    def tail(i: int, bad_left: int) -> Fraction:
        if i == k1:
            return Fraction(1)
        pop_left = n - i * cs
        good_left = pop_left - bad_left
        total = Fraction(0)
        denom = math.comb(pop_left, cs)
        for x in range(th, min(cs, bad_left) + 1):
            ways = math.comb(bad_left, x) * math.comb(good_left, cs - x)
            if ways:
                total += Fraction(ways, denom) * tail(i + 1, bad_left - x)
        return total

    return tail(0, m)


def failing_patterns(cs: int, committees: int, threshold: int) -> list[int]:
    """Coefficients of (sum_{i>=threshold} C(cs, i) y^i) ** committees.

    Entry x counts the ways to pick x misbehaving seats among all
    committees such that every committee receives at least ``threshold``.
    """
    base = [math.comb(cs, i) if i >= threshold else 0 for i in range(cs + 1)]
    poly = [1]
    for _ in range(committees):
        out = [0] * (len(poly) + cs)
        for a, ca in enumerate(poly):
            if ca:
                for b, cb in enumerate(base):
                    if cb:
                        out[a + b] += ca * cb
        poly = out
    return poly


def pr_af_generating_function(model: FailureModel) -> Fraction:
    model.validate()
    n, m, cs, th = model.population, model.misbehaving, model.committee_size, model.liveness_threshold
    total = model.sampled
    coef = failing_patterns(cs, model.committees, th)
    denom = math.comb(n, total)
    pr = Fraction(0)
    for x in range(model.committees * th, total + 1):
        if not coef[x]:
            continue
        drawn = math.comb(m, x) * math.comb(n - m, total - x)
        if drawn:
            pr += Fraction(drawn * coef[x], denom * math.comb(total, x))
    return pr


def pr_af(model: FailureModel) -> float:
    return float(pr_af_generating_function(model))


def monte_carlo_af(
    model: FailureModel, trials: int, seed: int = 0, chunk: int = 0
) -> tuple[float, float]:
    """Estimate by drawing committees member by member without replacement.

    Returns the failure fraction and its binomial standard error. Work is
    split into chunks with independent child seeds, so the result depends
    only on ``seed`` and ``chunk``.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    n, cs, k1 = model.population, model.committee_size, model.committees
    t = model.sampled
    if chunk <= 0:
        chunk = max(1, min(trials, 4_000_000 // max(n, 1)))
    population = np.zeros(n, dtype=np.int8)
    population[: model.misbehaving] = 1
    sizes = [chunk] * (trials // chunk) + ([trials % chunk] if trials % chunk else [])
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    failures = 0
    for size, child in zip(sizes, children):
        rng = np.random.default_rng(child)
        draws = rng.permuted(np.broadcast_to(population, (size, n)), axis=1)[:, :t]
        per_committee = draws.reshape(size, k1, cs).sum(axis=2)
        failures += int(np.all(per_committee >= model.liveness_threshold, axis=1).sum())
    est = failures / trials
    se = math.sqrt(est * (1 - est) / trials)
    return est, se


class UnboundedCommittee(ValueError):
    pass


def committee_size_bound(p: float, gamma: float, failure: float) -> int:
    """Smallest committee size meeting a target failure probability.

    With mean ``p * cs`` misbehaving members and slack ``(gamma - p) * cs``
    the multiplicative Chernoff tail gives two regimes. The boundary
    ``gamma / p == 2`` uses the second one.
    """
    if not 0 < p < gamma < 1:
        raise UnboundedCommittee(f"need 0 < p < gamma < 1, got p={p}, gamma={gamma}")
    log_inv = math.log(1 / failure)
    gap = gamma - p
    if gamma / p < 2:
        return math.ceil(3 * p * log_inv / gap**2)
    return math.ceil(3 * log_inv / gap)
