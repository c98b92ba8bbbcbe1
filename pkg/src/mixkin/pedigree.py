"""Pedigree representation, parsing and pairwise relationship coefficients.

A pedigree is a table of individuals with optional father/mother links; an
individual has either both parents in the table or neither (founders).  All
relationship math downstream is autosomal, so the optional sex column is
carried through but never used in any computation.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

__all__ = [
    "PedigreeError",
    "Individual",
    "Pedigree",
    "PairwiseCoefficients",
    "parse_pedigree",
    "load_pedigree",
    "kinship",
    "pairwise_coefficients",
]

ABSENT = {"0", "*"}
HALF = Fraction(1, 2)


class PedigreeError(ValueError):
    """Raised for structurally invalid pedigrees or unknown individuals."""


@dataclass(frozen=True)
class Individual:
    iid: str
    father: str | None = None
    mother: str | None = None
    sex: str | None = None

    @property
    def is_founder(self) -> bool:
        return self.father is None


class Pedigree:
    """Immutable, validated pedigree.

    Validation enforces: unique ids, both-or-neither parents, parent ids that
    resolve within the pedigree, and acyclic parent links.  Instances are
    safe to share between threads; every method is a pure function of the
    construction-time state.
    """

    def __init__(self, individuals: list[Individual]):
        members: dict[str, Individual] = {}
        for ind in individuals:
            if ind.iid in members:
                raise PedigreeError(f"duplicate individual id {ind.iid!r}")
            if (ind.father is None) != (ind.mother is None):
                raise PedigreeError(
                    f"individual {ind.iid!r} has exactly one parent; "
                    "either both or neither must be present"
                )
            members[ind.iid] = ind
        for ind in members.values():
            for pid in (ind.father, ind.mother):
                if pid is not None and pid not in members:
                    raise PedigreeError(
                        f"unknown parent id {pid!r} (child {ind.iid!r})"
                    )
        self._members = members
        self._children: dict[str, list[str]] = {iid: [] for iid in members}
        for ind in members.values():
            if ind.father is not None:
                self._children[ind.father].append(ind.iid)
                self._children[ind.mother].append(ind.iid)
        self._topo = self._toposort()
        self._rank = {iid: k for k, iid in enumerate(self._topo)}

    def _toposort(self) -> list[str]:
        # Kahn's algorithm over parent->child edges; leftovers mean a cycle.
        indeg = {
            iid: (0 if ind.is_founder else 2) for iid, ind in self._members.items()
        }
        order = [iid for iid, d in indeg.items() if d == 0]
        head = 0
        while head < len(order):
            for child in self._children[order[head]]:
                indeg[child] -= 1
                if indeg[child] == 0:
                    order.append(child)
            head += 1
        if len(order) != len(self._members):
            cyclic = sorted(iid for iid, d in indeg.items() if d > 0)
            raise PedigreeError(f"cycle detected in parent links involving {cyclic}")
        return order

    # -- basic accessors ---------------------------------------------------

    def __contains__(self, iid: str) -> bool:
        return iid in self._members

    def __len__(self) -> int:
        return len(self._members)

    def __getitem__(self, iid: str) -> Individual:
        try:
            return self._members[iid]
        except KeyError:
            raise PedigreeError(f"unknown individual id {iid!r}") from None

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(self._members)

    @property
    def founders(self) -> frozenset[str]:
        return frozenset(i for i, m in self._members.items() if m.is_founder)

    def children(self, iid: str) -> tuple[str, ...]:
        self[iid]
        return tuple(self._children[iid])

    def parents(self, iid: str) -> tuple[str, str] | None:
        ind = self[iid]
        if ind.is_founder:
            return None
        return (ind.father, ind.mother)

    def topological_order(self) -> tuple[str, ...]:
        """All ids, parents strictly before children."""
        return tuple(self._topo)

    def rank(self, iid: str) -> int:
        self[iid]
        return self._rank[iid]

    def ancestor_closure(self, ids) -> tuple[str, ...]:
        """ids plus all their ancestors, in topological order."""
        seen: set[str] = set()
        stack = [self[i].iid for i in ids]
        while stack:
            iid = stack.pop()
            if iid in seen:
                continue
            seen.add(iid)
            p = self.parents(iid)
            if p is not None:
                stack.extend(p)
        return tuple(i for i in self._topo if i in seen)

    def consanguineous_couples(self) -> list[tuple[str, str]]:
        """Parent couples that are themselves related (inbreeding loops)."""
        couples = {
            (m.father, m.mother) for m in self._members.values() if not m.is_founder
        }
        return sorted(c for c in couples if kinship(self, c[0], c[1]) > 0)


def parse_pedigree(text: str) -> Pedigree:
    """Parse a whitespace-delimited pedigree table.

    Rows are ``id father mother [sex]`` with ``0`` or ``*`` for an absent
    parent; ``#`` starts a comment and blank lines are skipped.
    """
    individuals = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) not in (3, 4):
            raise PedigreeError(
                f"line {lineno}: expected 'id father mother [sex]', got {raw!r}"
            )
        iid, father, mother = fields[:3]
        sex = fields[3] if len(fields) == 4 else None
        if sex is not None and sex not in ("M", "F"):
            sex = None
        individuals.append(
            Individual(
                iid,
                None if father in ABSENT else father,
                None if mother in ABSENT else mother,
                sex,
            )
        )
    return Pedigree(individuals)


def load_pedigree(path) -> Pedigree:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_pedigree(fh.read())


# -- pairwise coefficients -------------------------------------------------

# Canonical two-person patterns for the nine condensed identity classes,
# indexed 1..9 in the conventional order.
_JACQUARD_PATTERNS = {
    (1, 1, 1, 1): 1,
    (1, 1, 2, 2): 2,
    (1, 1, 1, 2): 3,
    (1, 1, 2, 3): 4,
    (1, 2, 1, 1): 5,
    (1, 2, 3, 3): 6,
    (1, 2, 1, 2): 7,
    (1, 2, 1, 3): 8,
    (1, 2, 3, 4): 9,
}


@dataclass(frozen=True)
class PairwiseCoefficients:
    """Condensed identity coefficients for one pair of individuals.

    ``delta`` is the 9-vector of condensed coefficients; ``kappa`` is only
    defined when the first six vanish (no inbreeding involved), in which
    case kappa = (delta9, delta8, delta7).  ``theta`` is the kinship
    coefficient delta1 + (delta3+delta5+delta7)/2 + delta8/4.
    """

    delta: tuple[Fraction, ...]

    def __post_init__(self):
        if len(self.delta) != 9:
            raise ValueError("delta must have 9 entries")
        total = sum(self.delta)
        if total != 1:
            raise ValueError(f"delta must sum to 1, got {total}")

    @property
    def kappa(self) -> tuple[Fraction, Fraction, Fraction] | None:
        if any(self.delta[i] != 0 for i in range(6)):
            return None
        return (self.delta[8], self.delta[7], self.delta[6])

    @property
    def theta(self) -> Fraction:
        d = self.delta
        return d[0] + (d[2] + d[4] + d[6]) / 2 + d[7] / 4

    def delta_floats(self) -> tuple[float, ...]:
        return tuple(float(x) for x in self.delta)

    def kappa_floats(self) -> tuple[float, float, float] | None:
        k = self.kappa
        return None if k is None else tuple(float(x) for x in k)


def pairwise_coefficients(ped: Pedigree, a: str, b: str) -> PairwiseCoefficients:
    """Condensed identity coefficients for individuals ``a`` and ``b``.

    Computed exactly by marginalizing the two-person IBD pattern
    distribution; the self-pair ``a == b`` yields the degenerate
    delta1/delta7 split driven by a's inbreeding coefficient.
    """
    from . import ibd  # deferred: ibd imports this module for Pedigree

    dist = ibd.pattern_distribution(ped, [a, b])
    delta = [Fraction(0)] * 9
    for pattern, pr in dist.items():
        delta[_JACQUARD_PATTERNS[pattern.labels] - 1] += pr
    return PairwiseCoefficients(tuple(delta))


def kinship(ped: Pedigree, a: str, b: str) -> Fraction:
    """Kinship coefficient by the classic recursion over parent links.

    Founders are treated as non-inbred and mutually unrelated.  This is an
    independent route to theta; ``pairwise_coefficients`` must agree with it.
    """

    @lru_cache(maxsize=None)
    def phi(x: str, y: str) -> Fraction:
        if ped.rank(x) < ped.rank(y):
            x, y = y, x
        # x is now not a strict ancestor of y
        px = ped.parents(x)
        if x == y:
            if px is None:
                return HALF
            return HALF + phi(px[0], px[1]) / 2
        if px is None:
            return Fraction(0)
        return (phi(px[0], y) + phi(px[1], y)) / 2

    return phi(ped[a].iid, ped[b].iid)
