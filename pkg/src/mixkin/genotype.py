"""Allele frequencies, genotype profiles and relationship-aware genotype math.

Alleles are STR repeat designations, possibly with a micro-variant digit
(e.g. 15.3).  Internally every allele is keyed by its integer deci-repeat
(value times ten), which makes equality and the one-repeat-step arithmetic
used by the stutter model exact.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass
from fractions import Fraction
from itertools import product

import numpy as np

from .ibd import IBDPatternDistribution, marginalize

__all__ = [
    "UnknownAlleleError",
    "ImpossibleEvidenceError",
    "allele_key",
    "allele_str",
    "AlleleFrequencyTable",
    "GenotypeProfile",
    "PatternRow",
    "ConditionedPatternTable",
    "joint_genotype_probability",
    "condition_on_typed",
    "simulate_profiles",
    "simulate_conditioned",
]


class UnknownAlleleError(KeyError):
    """An allele is missing from the frequency table (see --extend-freqs)."""


class ImpossibleEvidenceError(ValueError):
    """Typed genotypes have probability zero under every IBD pattern."""

    def __init__(self, marker: str, detail: str = ""):
        self.marker = marker
        msg = f"typed genotypes are impossible at marker {marker!r}"
        super().__init__(msg + (f": {detail}" if detail else ""))


def allele_key(value) -> int:
    """Canonical integer key (deci-repeats) for an allele designation."""
    if isinstance(value, int):
        return value * 10
    return int(round(float(value) * 10))


def allele_str(key: int) -> str:
    return str(key // 10) if key % 10 == 0 else f"{key // 10}.{key % 10}"


class AlleleFrequencyTable:
    """Per-marker allele lists with population frequencies.

    Frequencies are renormalized on load; a per-marker sum farther than 1e-6
    from one is rejected.
    """

    def __init__(self, data: dict[str, dict[int, float]]):
        self._data: dict[str, tuple[tuple[int, ...], np.ndarray]] = {}
        for marker, fmap in data.items():
            keys = tuple(sorted(fmap))
            freqs = np.array([float(fmap[k]) for k in keys])
            if len(keys) == 0:
                raise ValueError(f"marker {marker!r} has no alleles")
            if np.any(freqs <= 0):
                raise ValueError(f"marker {marker!r} has non-positive frequencies")
            s = freqs.sum()
            if abs(s - 1.0) > 1e-6:
                raise ValueError(
                    f"marker {marker!r} frequencies sum to {s:.8f}, not 1"
                )
            if abs(s - 1.0) > 1e-9:
                warnings.warn(
                    f"marker {marker!r} frequencies sum to {s:.8f}; renormalizing"
                )
            self._data[marker] = (keys, freqs / s)

    @property
    def markers(self) -> tuple[str, ...]:
        return tuple(self._data)

    def alleles(self, marker: str) -> tuple[int, ...]:
        return self._seq(marker)[0]

    def frequencies(self, marker: str) -> np.ndarray:
        return self._seq(marker)[1]

    def _seq(self, marker: str):
        try:
            return self._data[marker]
        except KeyError:
            raise KeyError(f"unknown marker {marker!r}") from None

    def freq(self, marker: str, key: int) -> float:
        keys, freqs = self._seq(marker)
        try:
            return float(freqs[keys.index(key)])
        except ValueError:
            raise UnknownAlleleError(
                f"allele {allele_str(key)} not in frequency table for {marker!r}"
            ) from None

    def freq_map(self, marker: str) -> dict[int, float]:
        keys, freqs = self._seq(marker)
        return {k: float(f) for k, f in zip(keys, freqs)}

    def extended(self, extra: dict[str, list], eps: float = 1e-4) -> "AlleleFrequencyTable":
        """New table with the given alleles added at frequency ``eps``."""
        data = {m: self.freq_map(m) for m in self.markers}
        for marker, alleles in extra.items():
            fmap = data.setdefault(marker, {})
            for a in alleles:
                fmap.setdefault(allele_key(a), eps)
            total = sum(fmap.values())
            for k in fmap:
                fmap[k] /= total
        return AlleleFrequencyTable(data)

    @classmethod
    def from_csv(cls, text: str) -> "AlleleFrequencyTable":
        data: dict[str, dict[int, float]] = {}
        reader = csv.reader(l for l in text.splitlines() if l.strip())
        header = next(reader)
        if [h.strip().lower() for h in header[:3]] != ["marker", "allele", "frequency"]:
            raise ValueError("expected header marker,allele,frequency")
        for row in reader:
            data.setdefault(row[0], {})[allele_key(row[1])] = float(row[2])
        return cls(data)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["marker", "allele", "frequency"])
        for marker in self.markers:
            keys, freqs = self._seq(marker)
            for k, f in zip(keys, freqs):
                w.writerow([marker, allele_str(k), repr(float(f))])
        return buf.getvalue()

    @classmethod
    def load(cls, path) -> "AlleleFrequencyTable":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_csv(fh.read())


class GenotypeProfile:
    """Unordered allele pair per marker for one individual."""

    def __init__(self, pairs: dict[str, tuple]):
        self.pairs: dict[str, tuple[int, int]] = {}
        for marker, pair in pairs.items():
            a, b = (allele_key(x) for x in pair)
            self.pairs[marker] = (min(a, b), max(a, b))

    @classmethod
    def from_keys(cls, pairs: dict[str, tuple[int, int]]) -> "GenotypeProfile":
        prof = cls({})
        prof.pairs = {m: (min(p), max(p)) for m, p in pairs.items()}
        return prof

    @property
    def markers(self) -> tuple[str, ...]:
        return tuple(self.pairs)

    def pair(self, marker: str) -> tuple[int, int]:
        return self.pairs[marker]

    def __eq__(self, other):
        return isinstance(other, GenotypeProfile) and self.pairs == other.pairs

    @classmethod
    def from_csv(cls, text: str) -> "GenotypeProfile":
        pairs = {}
        reader = csv.reader(l for l in text.splitlines() if l.strip())
        header = next(reader)
        if [h.strip().lower() for h in header[:3]] != ["marker", "allele1", "allele2"]:
            raise ValueError("expected header marker,allele1,allele2")
        for row in reader:
            pairs[row[0]] = (row[1], row[2])
        return cls(pairs)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["marker", "allele1", "allele2"])
        for marker, (a, b) in self.pairs.items():
            w.writerow([marker, allele_str(a), allele_str(b)])
        return buf.getvalue()

    @classmethod
    def load(cls, path) -> "GenotypeProfile":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_csv(fh.read())


def _norm_pair(pair) -> tuple[int, int]:
    a, b = (allele_key(x) for x in pair)
    return (min(a, b), max(a, b))


# -- joint genotype probability ------------------------------------------------


def joint_genotype_probability(
    dist: IBDPatternDistribution,
    freqs: AlleleFrequencyTable,
    marker: str,
    genotypes: dict[str, tuple],
) -> float:
    """Probability that the named individuals carry the given genotypes.

    Sums, over IBD patterns, the probability of every distinct consistent
    assignment of alleles to gene labels, one frequency factor per distinct
    label.  Individuals of the distribution absent from ``genotypes`` are
    marginalized out.
    """
    if not genotypes:
        return 1.0
    ids = list(genotypes)
    sub = marginalize(dist, ids) if tuple(ids) != dist.ids else dist
    fmap = freqs.freq_map(marker)
    gts = []
    for i in ids:
        pair = _norm_pair(genotypes[i])
        for a in pair:
            if a not in fmap:
                raise UnknownAlleleError(
                    f"allele {allele_str(a)} not in frequency table for {marker!r}"
                )
        gts.append(pair)
    total = 0.0
    for pattern, pr in sub.items():
        assignments = set()
        for bits in product((0, 1), repeat=len(ids)):
            binding: dict[int, int] = {}
            ok = True
            for j, pair in enumerate(gts):
                l1, l2 = pattern.pair(j)
                x1, x2 = pair if bits[j] == 0 else (pair[1], pair[0])
                for lab, val in ((l1, x1), (l2, x2)):
                    if binding.setdefault(lab, val) != val:
                        ok = False
                        break
                if not ok:
                    break
            if ok:
                assignments.add(frozenset(binding.items()))
        if assignments:
            p_pat = 0.0
            for assignment in assignments:
                term = 1.0
                for _, val in assignment:
                    term *= fmap[val]
                p_pat += term
            total += float(pr) * p_pat
    return total


# -- conditioning on typed relatives --------------------------------------------

# a contributor gene is either pinned to an allele or drawn from the gene pool
FIXED = "fixed"
DRAW = "draw"


@dataclass(frozen=True)
class PatternRow:
    """One surviving permuted pattern with its contributor gene sources.

    ``genes[i]`` holds the two gene sources of contributor i, each either
    ``(FIXED, allele_key)`` or ``(DRAW, slot)``.  Slots are numbered by first
    occurrence within the row; genes sharing an IBD label share a slot.
    """

    weight: float
    raw_weight: float
    genes: tuple[tuple[tuple, tuple], ...]

    @property
    def ndraws(self) -> int:
        slots = {g[1] for pair in self.genes for g in pair if g[0] == DRAW}
        return len(slots)


@dataclass
class ConditionedPatternTable:
    marker: str
    contributors: tuple[str, ...]
    rows: list[PatternRow]
    p_typed: float

    @property
    def ndraws(self) -> int:
        return max((r.ndraws for r in self.rows), default=0)


def condition_on_typed(
    dist: IBDPatternDistribution,
    freqs: AlleleFrequencyTable,
    marker: str,
    contributors,
    typed: dict[str, tuple],
) -> ConditionedPatternTable:
    """Condition the pattern distribution on typed relatives' genotypes.

    Each pattern is expanded over all within-pair label orderings of the
    typed individuals with equal prior weight; rows whose labels cannot be
    matched to the observed alleles are dropped, and the rest are weighted
    by the frequency product of the gene-pool draws pinned down by the
    typed genotypes.  Duplicate contributor-side rows are merged, and
    weights renormalized.

    Raises ImpossibleEvidenceError when no row survives.
    """
    contributors = [str(c) for c in contributors]
    typed_ids = list(typed)
    overlap = set(contributors) & set(typed_ids)
    if overlap:
        raise ValueError(f"ids cannot be both contributor and typed: {sorted(overlap)}")
    ids = contributors + typed_ids
    sub = marginalize(dist, ids) if tuple(ids) != dist.ids else dist
    fmap = freqs.freq_map(marker)
    gts = []
    n_het = 0
    for t in typed_ids:
        pair = _norm_pair(typed[t])
        for a in pair:
            if a not in fmap:
                raise UnknownAlleleError(
                    f"allele {allele_str(a)} not in frequency table for {marker!r}"
                )
        gts.append(pair)
        n_het += pair[0] != pair[1]
    nc = len(contributors)
    nt = len(typed_ids)
    share = 1.0 / (1 << nt)

    merged: dict[tuple, float] = {}
    for pattern, pr in sub.items():
        base = float(pr) * share
        for bits in product((0, 1), repeat=nt):
            binding: dict[int, int] = {}
            ok = True
            for j in range(nt):
                l1, l2 = pattern.pair(nc + j)
                x1, x2 = gts[j] if bits[j] == 0 else (gts[j][1], gts[j][0])
                for lab, val in ((l1, x1), (l2, x2)):
                    if binding.setdefault(lab, val) != val:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                continue
            qprod = 1.0
            for val in binding.values():
                qprod *= fmap[val]
            slots: dict[int, int] = {}
            genes = []
            for i in range(nc):
                pair_sources = []
                for lab in pattern.pair(i):
                    if lab in binding:
                        pair_sources.append((FIXED, binding[lab]))
                    else:
                        if lab not in slots:
                            slots[lab] = len(slots)
                        pair_sources.append((DRAW, slots[lab]))
                genes.append(tuple(pair_sources))
            key = tuple(genes)
            merged[key] = merged.get(key, 0.0) + base * qprod
    total = sum(merged.values())
    if total == 0.0:
        raise ImpossibleEvidenceError(marker)
    rows = [
        PatternRow(weight=w / total, raw_weight=w, genes=key)
        for key, w in merged.items()
    ]
    return ConditionedPatternTable(
        marker=marker,
        contributors=tuple(contributors),
        rows=rows,
        p_typed=total * (1 << n_het),
    )


# -- simulation ------------------------------------------------------------------


def simulate_profiles(
    dist: IBDPatternDistribution,
    freqs: AlleleFrequencyTable,
    seed=None,
    rng: np.random.Generator | None = None,
) -> dict[str, GenotypeProfile]:
    """Draw one joint genotype profile per individual of the distribution.

    Per marker independently: pick a pattern, draw one allele per distinct
    label from the gene pool, then read each individual's pair off its
    labels.
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    patterns = list(dist.patterns)
    probs = np.array([float(p) for p in dist.patterns.values()])
    probs = probs / probs.sum()
    out: dict[str, dict[str, tuple[int, int]]] = {i: {} for i in dist.ids}
    for marker in freqs.markers:
        keys = freqs.alleles(marker)
        q = freqs.frequencies(marker)
        pattern = patterns[rng.choice(len(patterns), p=probs)]
        labels = sorted(set(pattern.labels))
        draws = rng.choice(len(keys), size=len(labels), p=q)
        gene = {lab: keys[d] for lab, d in zip(labels, draws)}
        for j, iid in enumerate(dist.ids):
            l1, l2 = pattern.pair(j)
            out[iid][marker] = (gene[l1], gene[l2])
    return {i: GenotypeProfile.from_keys(pairs) for i, pairs in out.items()}


def simulate_conditioned(
    table: ConditionedPatternTable,
    freqs: AlleleFrequencyTable,
    seed=None,
    rng: np.random.Generator | None = None,
) -> dict[str, tuple[int, int]]:
    """Draw contributor genotypes at the table's marker given the typed data."""
    if rng is None:
        rng = np.random.default_rng(seed)
    if not table.rows:
        raise ImpossibleEvidenceError(table.marker, "conditioned table is empty")
    weights = np.array([r.weight for r in table.rows])
    row = table.rows[rng.choice(len(table.rows), p=weights / weights.sum())]
    keys = freqs.alleles(table.marker)
    q = freqs.frequencies(table.marker)
    draws = rng.choice(len(keys), size=max(row.ndraws, 1), p=q)
    result = {}
    for cid, pair in zip(table.contributors, row.genes):
        vals = []
        for kind, ref in pair:
            vals.append(ref if kind == FIXED else keys[draws[ref]])
        result[cid] = (min(vals), max(vals))
    return result
