"""Ambient relatedness / uncertain allele frequencies via the DM urn.

A coancestry coefficient theta turns independent gene-pool draws into a
Polya urn: the urn starts with pseudo-counts alpha_a = q_a (1-theta)/theta
and every drawn gene is returned with one copy added, so purportedly
unrelated genotypes become exchangeably dependent.  Equivalently the allele
frequencies carry a Dirichlet prior with effective database size
(1-theta)/theta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement

from .genotype import AlleleFrequencyTable

__all__ = [
    "UnsupportedCombinationError",
    "CoancestryParams",
    "dm_pmf",
    "bb_pmf",
    "DMSequentialPrior",
    "dm_genotype_prior",
    "likelihood_with_coancestry",
]


class UnsupportedCombinationError(ValueError):
    """Coancestry cannot be combined with close-relationship structure."""


@dataclass(frozen=True)
class CoancestryParams:
    theta: float

    def __post_init__(self):
        if not 0 <= self.theta < 1:
            raise ValueError("theta must lie in [0, 1)")

    @property
    def alpha_total(self) -> float:
        if self.theta == 0:
            return math.inf
        return (1.0 - self.theta) / self.theta

    def alphas(self, freqs: AlleleFrequencyTable, marker: str) -> dict[int, float]:
        at = self.alpha_total
        return {a: at * q for a, q in freqs.freq_map(marker).items()}


def dm_pmf(x, alphas) -> float:
    """Dirichlet-multinomial pmf at counts x (aligned with alphas)."""
    n = sum(x)
    a_tot = sum(alphas)
    logp = math.lgamma(n + 1) + math.lgamma(a_tot) - math.lgamma(a_tot + n)
    for xi, ai in zip(x, alphas):
        logp += math.lgamma(ai + xi) - math.lgamma(ai) - math.lgamma(xi + 1)
    return math.exp(logp)


def bb_pmf(x: int, n: int, a: float, b: float) -> float:
    """Beta-binomial pmf; BB(1, a, b) reduces to Bernoulli(a / (a + b))."""
    if not 0 <= x <= n:
        return 0.0
    logp = (
        math.lgamma(n + 1) - math.lgamma(x + 1) - math.lgamma(n - x + 1)
        + math.lgamma(a + x) + math.lgamma(b + n - x) + math.lgamma(a + b)
        - math.lgamma(a) - math.lgamma(b) - math.lgamma(a + b + n)
    )
    return math.exp(logp)


class DMSequentialPrior:
    """Sequential genotype conditionals n_i | n_1..n_{i-1} ~ DM(2, alpha + counts)."""

    def __init__(self, freqs: AlleleFrequencyTable, marker: str, theta: float):
        if not 0 <= theta < 1:
            raise ValueError("theta must lie in [0, 1)")
        self.theta = theta
        self.fmap = freqs.freq_map(marker)
        self.alleles = tuple(sorted(self.fmap))

    def conditional(self, prev_counts: dict[int, int] | None = None) -> dict[tuple[int, int], float]:
        """Genotype pmf for the next individual given accumulated counts."""
        prev = prev_counts or {}
        out = {}
        for pair in combinations_with_replacement(self.alleles, 2):
            out[pair] = self.genotype_probability(pair, prev)
        return out

    def genotype_probability(self, pair, prev_counts: dict[int, int]) -> float:
        a, b = min(pair), max(pair)
        if self.theta == 0:
            p = self.fmap[a] * self.fmap[b]
            return p if a == b else 2 * p
        at = (1.0 - self.theta) / self.theta
        t = sum(prev_counts.values())
        pa = (at * self.fmap[a] + prev_counts.get(a, 0)) / (at + t)
        extra = 1 if a == b else 0
        pb = (at * self.fmap[b] + prev_counts.get(b, 0) + extra) / (at + t + 1)
        p = pa * pb
        return p if a == b else 2 * p

    def joint(self, pairs) -> float:
        counts: dict[int, int] = {}
        p = 1.0
        for pair in pairs:
            p *= self.genotype_probability(pair, counts)
            for x in pair:
                counts[x] = counts.get(x, 0) + 1
        return p


def dm_genotype_prior(ordering, freqs: AlleleFrequencyTable, marker: str, theta: float):
    """Sequential genotype conditionals along a contributor ordering.

    Returns one callable per contributor; each maps the accumulated allele
    counts of the earlier individuals (dict allele_key -> count) to that
    contributor's conditional genotype pmf, DM(2, alpha + counts).
    """
    prior = DMSequentialPrior(freqs, marker, theta)
    return [prior.conditional for _ in ordering]


def likelihood_with_coancestry(
    epgs,
    freqs: AlleleFrequencyTable,
    params,
    contributors,
    theta: float,
    known=None,
    typed=None,
    dist=None,
) -> float:
    """Engine likelihood with the gene pool replaced by the DM urn.

    theta = 0 reproduces the independent-draw engine exactly (identical code
    path).  Close-relationship pattern distributions are rejected: the
    combined model is out of scope.
    """
    from . import engine

    if dist is not None and len(dist.ids) > 1 and theta > 0:
        raise UnsupportedCombinationError(
            "close relationships (pattern distribution) together with "
            "coancestry theta > 0 are not supported"
        )
    return engine.likelihood(
        epgs, freqs, params, contributors,
        known=known, typed=typed, dist=None if theta > 0 else dist, theta=theta,
    )
