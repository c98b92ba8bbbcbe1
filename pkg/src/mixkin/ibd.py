"""Multi-person IBD pattern distributions computed from pedigrees.

An IBD pattern for n individuals is a vector of 2n gene labels, entries
(2i-1, 2i) belonging to individual i, where equal labels mean identity by
descent.  Patterns are considered equivalent under swapping the two labels
of any individual and under any 1-1 relabelling; we work with the
lexicographically minimal representative of each equivalence class.

The exact computation sweeps the pedigree in topological order keeping a
compressed distribution over partial label states: individuals whose genes
can no longer influence the targets are projected out, and equivalent
partial states are coalesced after canonicalization (active-set pruning).
All probabilities are dyadic rationals and are kept exact as ``Fraction``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from itertools import product

import numpy as np

from .pedigree import Pedigree, PedigreeError

__all__ = [
    "IBDPattern",
    "IBDPatternDistribution",
    "PatternStateLimitError",
    "MeiosisCapError",
    "canonicalize",
    "canonical_labels",
    "pattern_distribution",
    "pattern_distribution_naive",
    "marginalize",
    "count_states",
    "STANDARD_KAPPA",
]


class PatternStateLimitError(RuntimeError):
    """Active-set state count exceeded the configured limit."""


class MeiosisCapError(RuntimeError):
    """Naive enumeration would need too many meiosis vectors."""


# -- canonical form ----------------------------------------------------------


def canonical_labels(seq: tuple[int, ...]) -> tuple[int, ...]:
    """Minimal representative of a label vector under pair swaps + relabelling.

    Greedy left-to-right first-occurrence renumbering, choosing the
    within-pair orientation that minimizes the output.  The only ambiguous
    situation is a pair of two fresh labels that both recur first inside one
    later pair; that case branches and the smallest completion wins.
    """
    npairs = len(seq) // 2
    # next occurrence position of each label after a given index
    best: list[int] | None = None
    out: list[int] = []

    def rec(k: int, mapping: dict[int, int]):
        nonlocal best
        if k == npairs:
            if best is None or out < best:
                best = out[:]
            return
        x, y = seq[2 * k], seq[2 * k + 1]
        mx, my = mapping.get(x), mapping.get(y)
        if mx is not None and my is not None:
            out.append(min(mx, my))
            out.append(max(mx, my))
            rec(k + 1, mapping)
            del out[-2:]
        elif mx is not None or my is not None:
            if mx is None:
                x, y = y, x
                mx = my
            f = len(mapping) + 1
            out.append(mx)
            out.append(f)
            mapping[y] = f
            rec(k + 1, mapping)
            del mapping[y]
            del out[-2:]
        elif x == y:
            f = len(mapping) + 1
            out.append(f)
            out.append(f)
            mapping[x] = f
            rec(k + 1, mapping)
            del mapping[x]
            del out[-2:]
        else:
            f = len(mapping) + 1
            rest = seq[2 * k + 2 :]
            try:
                px = rest.index(x)
            except ValueError:
                px = -1
            try:
                py = rest.index(y)
            except ValueError:
                py = -1
            out.append(f)
            out.append(f + 1)
            if px < 0 and py < 0:
                choices = [(x, y)]
            elif px < 0:
                choices = [(y, x)]
            elif py < 0:
                choices = [(x, y)]
            elif px // 2 == py // 2:
                # both recur first within the same future pair: genuinely
                # ambiguous, explore both assignments
                choices = [(x, y), (y, x)]
            else:
                choices = [(x, y)] if px < py else [(y, x)]
            for lo, hi in choices:
                mapping[lo] = f
                mapping[hi] = f + 1
                rec(k + 1, mapping)
                del mapping[lo]
                del mapping[hi]
            del out[-2:]

    rec(0, {})
    return tuple(best)


def _canonical_bruteforce(seq: tuple[int, ...]) -> tuple[int, ...]:
    # reference implementation: minimum over all 2^n pair orientations of the
    # first-occurrence relabelling; used by tests to validate canonical_labels
    npairs = len(seq) // 2
    best = None
    for mask in range(1 << npairs):
        v = list(seq)
        for i in range(npairs):
            if mask >> i & 1:
                v[2 * i], v[2 * i + 1] = v[2 * i + 1], v[2 * i]
        mapping: dict[int, int] = {}
        relab = []
        for lab in v:
            if lab not in mapping:
                mapping[lab] = len(mapping) + 1
            relab.append(mapping[lab])
        if best is None or relab < best:
            best = relab
    return tuple(best)


@dataclass(frozen=True)
class IBDPattern:
    """A canonical IBD pattern over n individuals (2n labels)."""

    labels: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.labels) // 2

    def pair(self, i: int) -> tuple[int, int]:
        return (self.labels[2 * i], self.labels[2 * i + 1])

    def restrict(self, indices) -> "IBDPattern":
        sel = []
        for i in indices:
            sel.append(self.labels[2 * i])
            sel.append(self.labels[2 * i + 1])
        return IBDPattern(canonical_labels(tuple(sel)))

    def __str__(self) -> str:
        return "(" + ",".join(str(x) for x in self.labels) + ")"


def canonicalize(raw) -> IBDPattern:
    """Canonicalize a raw label vector into an IBDPattern."""
    labels = tuple(int(x) for x in raw)
    if len(labels) % 2:
        raise ValueError(f"label vector must have even length, got {len(labels)}")
    if any(x <= 0 for x in labels):
        raise ValueError("labels must be positive integers")
    return IBDPattern(canonical_labels(labels))


# -- distribution container --------------------------------------------------


class IBDPatternDistribution:
    """Sparse distribution over canonical IBD patterns for named individuals."""

    def __init__(self, ids, patterns: dict[IBDPattern, Fraction]):
        self.ids: tuple[str, ...] = tuple(ids)
        n = len(self.ids)
        for p in patterns:
            if p.n != n:
                raise ValueError(f"pattern {p} does not match {n} individuals")
            if p.labels != canonical_labels(p.labels):
                raise ValueError(f"pattern {p} is not canonical")
        if any(pr <= 0 for pr in patterns.values()):
            raise ValueError("pattern probabilities must be positive")
        total = sum(patterns.values())
        if isinstance(total, Fraction):
            if total != 1:
                raise ValueError(f"probabilities must sum to 1, got {total}")
        elif abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities must sum to 1, got {total}")
        self.patterns: dict[IBDPattern, Fraction] = dict(patterns)

    @property
    def n(self) -> int:
        return len(self.ids)

    def __len__(self) -> int:
        return len(self.patterns)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, IBDPatternDistribution)
            and self.ids == other.ids
            and self.patterns == other.patterns
        )

    def items(self):
        return self.patterns.items()

    def probability(self, pattern: IBDPattern) -> Fraction:
        return self.patterns.get(pattern, Fraction(0))

    def as_floats(self) -> dict[tuple[int, ...], float]:
        return {p.labels: float(pr) for p, pr in self.patterns.items()}

    def relabelled(self, ids) -> "IBDPatternDistribution":
        """Same distribution with individuals renamed positionally."""
        ids = tuple(ids)
        if len(ids) != self.n:
            raise ValueError("id count mismatch")
        return IBDPatternDistribution(ids, self.patterns)

    # -- constructors --------------------------------------------------------

    @classmethod
    def unrelated(cls, ids) -> "IBDPatternDistribution":
        ids = tuple(ids)
        labels = tuple(range(1, 2 * len(ids) + 1))
        return cls(ids, {IBDPattern(labels): Fraction(1)})

    @classmethod
    def from_kappa(cls, kappa, ids) -> "IBDPatternDistribution":
        """Two-person distribution from (kappa0, kappa1, kappa2)."""
        ids = tuple(ids)
        if len(ids) != 2:
            raise ValueError("kappa coefficients describe exactly two individuals")
        k = [Fraction(x) if not isinstance(x, float) else Fraction(*x.as_integer_ratio()) for x in kappa]
        if sum(k) != 1:
            raise ValueError(f"kappa must sum to 1, got {sum(k)}")
        shapes = [(1, 2, 3, 4), (1, 2, 1, 3), (1, 2, 1, 2)]
        patterns = {
            IBDPattern(s): pr for s, pr in zip(shapes, k) if pr > 0
        }
        return cls(ids, patterns)

    @classmethod
    def from_delta(cls, delta, ids) -> "IBDPatternDistribution":
        """Two-person distribution from the 9 condensed coefficients."""
        from .pedigree import _JACQUARD_PATTERNS

        ids = tuple(ids)
        if len(ids) != 2 or len(tuple(delta)) != 9:
            raise ValueError("delta describes two individuals with 9 coefficients")
        by_index = {v: k for k, v in _JACQUARD_PATTERNS.items()}
        patterns = {}
        for i, pr in enumerate(delta, start=1):
            frac = Fraction(pr) if not isinstance(pr, float) else Fraction(*pr.as_integer_ratio())
            if frac > 0:
                patterns[IBDPattern(by_index[i])] = frac
        return cls(ids, patterns)

    # -- CSV round trip -------------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# ids=" + ",".join(self.ids) + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["pr"] + [f"label_{i+1}" for i in range(2 * self.n)])
        rows = sorted(self.patterns.items(), key=lambda kv: (-kv[1], kv[0].labels))
        for pattern, pr in rows:
            writer.writerow([repr(float(pr))] + list(pattern.labels))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, ids=None) -> "IBDPatternDistribution":
        lines = text.splitlines()
        body = []
        for line in lines:
            if line.startswith("# ids="):
                ids = tuple(line[len("# ids=") :].strip().split(","))
            elif line.strip():
                body.append(line)
        if ids is None:
            raise ValueError("no ids given and none found in CSV header comment")
        reader = csv.reader(body)
        header = next(reader)
        if header[0] != "pr":
            raise ValueError("expected header starting with 'pr'")
        patterns: dict[IBDPattern, Fraction] = {}
        for row in reader:
            pr = Fraction(*float(row[0]).as_integer_ratio())
            pat = canonicalize(row[1:])
            patterns[pat] = patterns.get(pat, Fraction(0)) + pr
        return cls(ids, patterns)


# -- exact computation --------------------------------------------------------


def _closure_schedule(ped: Pedigree, targets):
    closure = ped.ancestor_closure(targets)
    pos = {iid: k for k, iid in enumerate(closure)}
    tset = set(targets)
    last = {}
    for iid in closure:
        if iid in tset:
            last[iid] = len(closure)
        else:
            last[iid] = max(pos[c] for c in ped.children(iid) if c in pos)
    return closure, last


def _project_states(states, active, requested):
    idx = {a: j for j, a in enumerate(active)}
    out: dict[IBDPattern, Fraction] = {}
    for labels, pr in states.items():
        sel = []
        for t in requested:
            j = idx[t]
            sel.append(labels[2 * j])
            sel.append(labels[2 * j + 1])
        pat = IBDPattern(canonical_labels(tuple(sel)))
        out[pat] = out.get(pat, Fraction(0)) + pr
    return out


def _exact_active_set(ped: Pedigree, targets, max_states: int):
    closure, last = _closure_schedule(ped, targets)
    active: list[str] = []
    states: dict[tuple[int, ...], Fraction] = {(): Fraction(1)}
    for k, iid in enumerate(closure):
        par = ped.parents(iid)
        nst: dict[tuple[int, ...], Fraction] = {}
        if par is None:
            for labels, pr in states.items():
                top = max(labels, default=0)
                nl = labels + (top + 1, top + 2)
                nst[nl] = nst.get(nl, Fraction(0)) + pr
        else:
            idx = {a: j for j, a in enumerate(active)}
            fi, mi = idx[par[0]], idx[par[1]]
            for labels, pr in states.items():
                fg = (labels[2 * fi], labels[2 * fi + 1])
                mg = (labels[2 * mi], labels[2 * mi + 1])
                q = pr / 4
                for g1 in fg:
                    for g2 in mg:
                        nl = labels + (g1, g2)
                        nst[nl] = nst.get(nl, Fraction(0)) + q
        new_active = active + [iid]
        keep = [j for j, a in enumerate(new_active) if last[a] > k]
        coal: dict[tuple[int, ...], Fraction] = {}
        for labels, pr in nst.items():
            sel = []
            for j in keep:
                sel.append(labels[2 * j])
                sel.append(labels[2 * j + 1])
            can = canonical_labels(tuple(sel))
            coal[can] = coal.get(can, Fraction(0)) + pr
        if len(coal) > max_states:
            raise PatternStateLimitError(
                f"active-set state count {len(coal)} exceeds limit {max_states}; "
                "consider mode='monte_carlo'"
            )
        states = coal
        active = [new_active[j] for j in keep]
    return _project_states(states, active, targets)


def pattern_distribution(
    ped: Pedigree,
    targets,
    mode: str = "exact",
    mc_samples: int = 1_000_000,
    seed: int = 0,
    max_states: int = 1_000_000,
) -> IBDPatternDistribution:
    """IBD pattern distribution of ``targets`` under the pedigree.

    ``mode='exact'`` runs the active-set sweep with exact rational
    probabilities; ``mode='monte_carlo'`` estimates the distribution from
    ``mc_samples`` seeded gene-dropping draws.  Founders are assumed
    non-inbred and mutually unrelated: all inbreeding comes from loops in
    the pedigree itself.
    """
    targets = [str(t) for t in targets]
    if not targets:
        raise ValueError("empty target list")
    for t in targets:
        ped[t]
    if mode == "exact":
        patterns = _exact_active_set(ped, targets, max_states)
    elif mode == "monte_carlo":
        patterns = _monte_carlo(ped, targets, mc_samples, seed)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return IBDPatternDistribution(targets, patterns)


def pattern_distribution_naive(
    ped: Pedigree, targets, max_meioses: int = 24
) -> IBDPatternDistribution:
    """Reference computation by full enumeration of meiosis vectors.

    Exponential in the meiosis count; retained as the independent oracle for
    the active-set sweep.
    """
    targets = [str(t) for t in targets]
    if not targets:
        raise ValueError("empty target list")
    for t in targets:
        ped[t]
    closure, _ = _closure_schedule(ped, targets)
    nonfounders = [iid for iid in closure if ped.parents(iid) is not None]
    nmei = 2 * len(nonfounders)
    if nmei > max_meioses:
        raise MeiosisCapError(
            f"{nmei} meioses exceed the naive cap {max_meioses}; "
            "use the active-set exact mode or mode='monte_carlo'"
        )
    base: dict[str, tuple[int, int]] = {}
    label = 1
    for iid in closure:
        if ped.parents(iid) is None:
            base[iid] = (label, label + 1)
            label += 2
    out: dict[IBDPattern, Fraction] = {}
    share = Fraction(1, 1 << nmei)
    for bits in product((0, 1), repeat=nmei):
        genes = dict(base)
        for j, iid in enumerate(nonfounders):
            fa, mo = ped.parents(iid)
            genes[iid] = (genes[fa][bits[2 * j]], genes[mo][bits[2 * j + 1]])
        sel = []
        for t in targets:
            sel.extend(genes[t])
        pat = IBDPattern(canonical_labels(tuple(sel)))
        out[pat] = out.get(pat, Fraction(0)) + share
    return IBDPatternDistribution(targets, out)


def _monte_carlo(ped: Pedigree, targets, nsamples: int, seed: int):
    closure, last = _closure_schedule(ped, targets)
    rng = np.random.default_rng(seed)
    genes: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    label = 1
    for k, iid in enumerate(closure):
        par = ped.parents(iid)
        if par is None:
            genes[iid] = (
                np.full(nsamples, label, dtype=np.int32),
                np.full(nsamples, label + 1, dtype=np.int32),
            )
            label += 2
        else:
            f1, f2 = genes[par[0]]
            m1, m2 = genes[par[1]]
            bf = rng.integers(0, 2, size=nsamples)
            bm = rng.integers(0, 2, size=nsamples)
            genes[iid] = (np.where(bf == 0, f1, f2), np.where(bm == 0, m1, m2))
        for a in list(genes):
            if last[a] <= k and a not in targets:
                del genes[a]
    mat = np.column_stack([g for t in targets for g in genes[t]])
    uniq, counts = np.unique(mat, axis=0, return_counts=True)
    out: dict[IBDPattern, Fraction] = {}
    for row, cnt in zip(uniq, counts):
        pat = IBDPattern(canonical_labels(tuple(int(x) for x in row)))
        out[pat] = out.get(pat, Fraction(0)) + Fraction(int(cnt), nsamples)
    return out


# -- derived operations -------------------------------------------------------


def marginalize(dist: IBDPatternDistribution, subset) -> IBDPatternDistribution:
    """Restrict a pattern distribution to a subset of its individuals."""
    subset = [str(s) for s in subset]
    idx = {a: j for j, a in enumerate(dist.ids)}
    missing = [s for s in subset if s not in idx]
    if missing:
        raise ValueError(f"ids not in distribution: {missing}")
    indices = [idx[s] for s in subset]
    out: dict[IBDPattern, Fraction] = {}
    for pattern, pr in dist.items():
        sub = pattern.restrict(indices)
        out[sub] = out.get(sub, Fraction(0)) + pr
    return IBDPatternDistribution(subset, out)


def _set_partitions_rgs(m: int):
    # restricted growth strings: a[0]=0, a[k] <= max(a[:k]) + 1
    a = [0] * m
    mx = [0] * m

    def rec(k: int):
        if k == m:
            yield tuple(a)
            return
        top = mx[k - 1]
        for v in range(top + 2):
            a[k] = v
            mx[k] = max(top, v)
            yield from rec(k + 1)

    if m == 0:
        yield ()
    else:
        mx[0] = 0
        yield from rec(1)


def count_states(n: int, inbreeding: bool = True, cap: int = 5) -> int:
    """Number of genotypically distinct IBD states for n individuals.

    Counts set partitions of the 2n genes modulo within-pair swaps and
    relabelling; ``inbreeding=False`` excludes every state where some
    individual's own two genes are identical by descent.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > cap:
        raise ValueError(f"n={n} exceeds enumeration cap {cap}")
    seen: set[tuple[int, ...]] = set()
    for rgs in _set_partitions_rgs(2 * n):
        labels = tuple(v + 1 for v in rgs)
        if not inbreeding and any(
            labels[2 * i] == labels[2 * i + 1] for i in range(n)
        ):
            continue
        seen.add(canonical_labels(labels))
    return len(seen)


#: kappa coefficients of the standard non-inbred pairwise relationships
STANDARD_KAPPA: dict[str, tuple[Fraction, Fraction, Fraction]] = {
    "unrelated": (Fraction(1), Fraction(0), Fraction(0)),
    "monozygotic-twins": (Fraction(0), Fraction(0), Fraction(1)),
    "parent-child": (Fraction(0), Fraction(1), Fraction(0)),
    "sibs": (Fraction(1, 4), Fraction(1, 2), Fraction(1, 4)),
    "half-sibs": (Fraction(1, 2), Fraction(1, 2), Fraction(0)),
    "cousins": (Fraction(3, 4), Fraction(1, 4), Fraction(0)),
    "half-cousins": (Fraction(7, 8), Fraction(1, 8), Fraction(0)),
    "double-first-cousins": (Fraction(9, 16), Fraction(6, 16), Fraction(1, 16)),
}
