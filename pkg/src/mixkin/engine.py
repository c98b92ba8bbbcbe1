"""Exact mixture likelihood p(z) = sum_n p(n) p(z|n) by allele-sweep DP.

The genotype prior is factorized into conditioned pattern rows (module
genotype); within a row every untyped gene is a draw from the gene pool.
For one marker the sweep walks the allele grid left to right, tracking which
draws have already been assigned an allele.  Exchangeable draws are grouped
into classes, so a state is the vector of per-class unassigned counts plus,
where the next grid position sits one repeat above, the allele counts just
produced (the stutter factor for position a needs the counts at a+1, so
emitting L_a lags one step).

State sums are accumulated with math.fsum, which returns the correctly
rounded exact sum: totals are bit-identical under any reordering of
contributors or markers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement, product

import numpy as np

from .genotype import (
    DRAW,
    FIXED,
    AlleleFrequencyTable,
    ConditionedPatternTable,
    GenotypeProfile,
    ImpossibleEvidenceError,
    UnknownAlleleError,
    allele_str,
    condition_on_typed,
    joint_genotype_probability,
)
from .ibd import IBDPatternDistribution
from .peakmodel import EPGData, MixtureModelParams, allele_log_factor, marker_loglik

__all__ = [
    "EngineLimitError",
    "PreparedLikelihood",
    "likelihood",
    "marker_logliks",
    "brute_force_likelihood",
    "brute_force_marker_logliks",
    "first_impossible_marker",
]

NEG_INF = float("-inf")
_RESCALE = 1e250
_LOG_RESCALE = math.log(_RESCALE)


class EngineLimitError(RuntimeError):
    """Draw-state space exceeds the configured limit."""


@dataclass
class _Row:
    log_weight: float
    # per grid position, tuple of per-contributor fixed counts
    fixed_cols: list[tuple[int, ...]]
    # draw classes: (per-contributor increment vector, class size)
    classes: list[tuple[tuple[int, ...], int]]
    ndraws: int


@dataclass
class _MarkerCase:
    marker: str
    grid: tuple[int, ...]
    q: tuple[float, ...]
    rows: list[_Row] | None  # None marks impossible typed evidence
    obs: list[dict[int, float]]  # per EPG: grid index -> raw height
    urn_base: tuple[int, ...] | None
    p_typed: float


def _pairs_for(profile: GenotypeProfile, marker: str, who: str) -> tuple[int, int]:
    try:
        return profile.pair(marker)
    except KeyError:
        raise KeyError(f"profile for {who!r} has no marker {marker!r}") from None


class PreparedLikelihood:
    """Likelihood of one or more EPGs under a fixed hypothesis structure.

    The pattern conditioning, allele grids and draw classes depend only on
    the hypothesis and the data, so they are built once; ``loglik`` can then
    be evaluated repeatedly at different parameter values (the use case of
    the maximum-likelihood search).

    Contributors come in three kinds: ids in ``known`` carry a full genotype
    profile and contribute fixed allele counts; ids covered by ``dist``
    (and not known) are untyped-related, with their joint prior conditioned
    on the ``typed`` genotypes; any other id is untyped-unrelated, drawing
    two independent genes from the pool.  ``theta`` switches the gene pool
    to the Dirichlet-multinomial urn and requires ``dist=None``.
    """

    def __init__(
        self,
        epgs,
        freqs: AlleleFrequencyTable,
        contributors,
        known: dict[str, GenotypeProfile] | None = None,
        dist: IBDPatternDistribution | None = None,
        typed: dict[str, GenotypeProfile] | None = None,
        theta: float = 0.0,
        max_draw_states: int = 1 << 20,
    ):
        self.epgs = [epgs] if isinstance(epgs, EPGData) else list(epgs)
        if not self.epgs:
            raise ValueError("need at least one EPG")
        self.freqs = freqs
        self.contributors = tuple(str(c) for c in contributors)
        self.known = dict(known or {})
        self.typed = dict(typed or {})
        self.dist = dist
        self.theta = float(theta)
        if not 0 <= self.theta < 1:
            raise ValueError("theta must lie in [0, 1)")
        if self.theta > 0 and dist is not None and len(dist.ids) > 1:
            raise ValueError(
                "coancestry (theta > 0) combined with a close-relationship "
                "pattern distribution is not supported; supply dist=None"
            )
        unknown = set(self.known) - set(self.contributors)
        if unknown:
            raise ValueError(f"known ids are not contributors: {sorted(unknown)}")
        overlap = set(self.typed) & set(self.contributors)
        if overlap:
            raise ValueError(
                f"typed ids cannot also be contributors: {sorted(overlap)}; "
                "pass fully typed contributors via known="
            )
        markers = self.epgs[0].markers
        for e in self.epgs[1:]:
            if set(e.markers) != set(markers):
                raise ValueError("all EPGs must cover the same marker set")
        dist_ids = set(dist.ids) if dist is not None else set()
        self.related = tuple(
            c for c in self.contributors if c in dist_ids and c not in self.known
        )
        self.unrelated = tuple(
            c
            for c in self.contributors
            if c not in self.known and c not in self.related
        )
        if self.related and 4 ** len(self.contributors) > max_draw_states:
            raise EngineLimitError("too many contributors for the draw-state sweep")
        self.max_draw_states = max_draw_states
        self.cases = [self._build_case(m) for m in markers]
        self._assign_cache: dict[tuple[int, ...], list] = {}

    # -- construction --------------------------------------------------------

    def _build_case(self, marker: str) -> _MarkerCase:
        freqs = self.freqs
        fmap = freqs.freq_map(marker)
        cidx = {c: i for i, c in enumerate(self.contributors)}
        nC = len(self.contributors)

        typed_pairs: dict[str, tuple[int, int]] = {}
        dist_ids = set(self.dist.ids) if self.dist is not None else set()
        for tid, prof in self.typed.items():
            if tid in dist_ids or self.theta > 0:
                typed_pairs[tid] = _pairs_for(prof, marker, tid)
        for kid, prof in self.known.items():
            if kid in dist_ids:
                typed_pairs[kid] = _pairs_for(prof, marker, kid)

        known_pairs = {
            kid: _pairs_for(prof, marker, kid) for kid, prof in self.known.items()
        }

        rows_src: list[tuple[float, tuple]] = []
        p_typed = 1.0
        if self.related or (self.dist is not None and typed_pairs):
            cond_typed = {
                t: (p[0] / 10, p[1] / 10)
                for t, p in typed_pairs.items()
                if t in dist_ids
            }
            try:
                table = condition_on_typed(
                    self.dist, freqs, marker, self.related, cond_typed
                )
            except ImpossibleEvidenceError:
                return _MarkerCase(marker, (), (), None, [], None, 0.0)
            p_typed = table.p_typed
            rows_src = [(r.weight, r.genes) for r in table.rows]
        else:
            rows_src = [(1.0, tuple(() for _ in self.related))]

        carriers = set(fmap)
        for pair in known_pairs.values():
            carriers.update(pair)
        for _, genes in rows_src:
            for pair in genes:
                for kind, ref in pair:
                    if kind == FIXED:
                        carriers.add(ref)
        grid_set = set(carriers) | {c - 10 for c in carriers}
        for epg in self.epgs:
            grid_set.update(epg.heights(marker))
        grid = tuple(sorted(grid_set))
        pos = {a: i for i, a in enumerate(grid)}
        q = tuple(fmap.get(a, 0.0) for a in grid)

        base_fixed = [[0] * nC for _ in grid]
        for kid, pair in known_pairs.items():
            for a in pair:
                base_fixed[pos[a]][cidx[kid]] += 1

        rows: list[_Row] = []
        for weight, genes in rows_src:
            fixed_cols = [list(col) for col in base_fixed]
            slot_inc: dict[int, list[int]] = {}
            for rel_i, pair in zip(self.related, genes):
                i = cidx[rel_i]
                for kind, ref in pair:
                    if kind == FIXED:
                        fixed_cols[pos[ref]][i] += 1
                    else:
                        slot_inc.setdefault(ref, [0] * nC)[i] += 1
            incs = [tuple(v) for v in slot_inc.values()]
            for u in self.unrelated:
                e = [0] * nC
                e[cidx[u]] = 1
                incs.extend([tuple(e), tuple(e)])
            classes: dict[tuple[int, ...], int] = {}
            for inc in incs:
                classes[inc] = classes.get(inc, 0) + 1
            ndraws = len(incs)
            if 1 << ndraws > self.max_draw_states:
                raise EngineLimitError(
                    f"2^{ndraws} draw states exceed the limit at marker {marker!r}"
                )
            rows.append(
                _Row(
                    log_weight=math.log(weight),
                    fixed_cols=[tuple(col) for col in fixed_cols],
                    classes=sorted(classes.items()),
                    ndraws=ndraws,
                )
            )

        urn_base = None
        if self.theta > 0:
            base = [0] * len(grid)
            for pair in known_pairs.values():
                for a in pair:
                    base[pos[a]] += 1
            for tid, pair in typed_pairs.items():
                if tid in known_pairs:
                    continue
                for a in pair:
                    if a not in fmap:
                        raise UnknownAlleleError(
                            f"typed allele {allele_str(a)} not in frequency table "
                            f"for {marker!r} (required with theta > 0)"
                        )
                    base[pos[a]] += 1
            urn_base = tuple(base)

        obs = [dict(epg.heights(marker)) for epg in self.epgs]
        obs_idx = [
            {pos[a]: z for a, z in heights.items()} for heights in obs
        ]
        return _MarkerCase(marker, grid, q, rows, obs_idx, urn_base, p_typed)

    # -- evaluation ------------------------------------------------------------

    def _assignments(self, remaining: tuple[int, ...]):
        """All ways to assign draws at one position: (s, multiplicity, total)."""
        cached = self._assign_cache.get(remaining)
        if cached is None:
            cached = []
            for s in product(*(range(r + 1) for r in remaining)):
                coef = 1
                for r, si in zip(remaining, s):
                    coef *= math.comb(r, si)
                cached.append((s, float(coef), sum(s)))
            self._assign_cache[remaining] = cached
        return cached

    def _params_list(self, params) -> list[MixtureModelParams]:
        plist = [params] if isinstance(params, MixtureModelParams) else list(params)
        if len(plist) != len(self.epgs):
            raise ValueError("need one parameter set per EPG")
        for p in plist:
            if len(p.phi) != len(self.contributors):
                raise ValueError(
                    f"phi length {len(p.phi)} != {len(self.contributors)} contributors"
                )
        return plist

    def marker_logliks(self, params) -> dict[str, float]:
        plist = self._params_list(params)
        out = {}
        for case in self.cases:
            out[case.marker] = self._eval_case(case, plist)
        return out

    def loglik(self, params) -> float:
        mlls = self.marker_logliks(params)
        if any(v == NEG_INF for v in mlls.values()):
            return NEG_INF
        return math.fsum(mlls[m] for m in sorted(mlls))

    def _eval_case(self, case: _MarkerCase, plist: list[MixtureModelParams]) -> float:
        if case.rows is None:
            return NEG_INF
        grid = case.grid
        n = len(grid)
        nC = len(self.contributors)
        alpha_tot = 0.0
        if self.theta > 0:
            alpha_tot = (1.0 - self.theta) / self.theta
        obs = [
            {i: z for i, z in heights.items() if z > p.threshold}
            for heights, p in zip(case.obs, plist)
        ]

        fcache: dict[tuple, float] = {}

        def factor(idx: int, own: tuple[int, ...], stut: tuple[int, ...]) -> float:
            key = (idx, own, stut)
            val = fcache.get(key)
            if val is not None:
                return val
            val = 1.0
            for e, p in enumerate(plist):
                phi = p.phi
                d_own = 0.0
                d_stut = 0.0
                for i in range(nC):
                    d_own += phi[i] * own[i]
                    d_stut += phi[i] * stut[i]
                shape = p.rho * ((1.0 - p.xi) * d_own + p.xi * d_stut)
                lf = allele_log_factor(obs[e].get(idx), shape, p)
                if lf == NEG_INF:
                    val = 0.0
                    break
                val *= math.exp(lf)
            fcache[key] = val
            return val

        zero = (0,) * nC
        row_terms: list[float] = []
        for row in case.rows:
            if self.theta > 0:
                base_tot = sum(case.urn_base)
                denom_log = math.fsum(
                    math.log(alpha_tot + base_tot + j) for j in range(row.ndraws)
                )
            else:
                denom_log = 0.0
            full = tuple(size for _, size in row.classes)
            inc_nonzero = [
                [(i, inc[i]) for i in range(nC) if inc[i]] for inc, _ in row.classes
            ]
            states: dict[tuple, float] = {(full, None): 1.0}
            offset = 0.0
            dead = False
            for idx in range(n):
                adj_out = idx + 1 < n and grid[idx + 1] == grid[idx] + 10
                qa = case.q[idx]
                if self.theta > 0:
                    aa = alpha_tot * qa + case.urn_base[idx]
                fixed_col = row.fixed_cols[idx]
                acc: dict[tuple, list[float]] = {}
                for (remaining, pend), val in states.items():
                    for s, coef, k in self._assignments(remaining):
                        if k:
                            if self.theta > 0:
                                w = coef
                                for j in range(k):
                                    w *= aa + j
                            else:
                                if qa == 0.0:
                                    continue
                                w = coef * qa**k
                        else:
                            w = 1.0
                        cnt = list(fixed_col)
                        for c, sc in enumerate(s):
                            if sc:
                                for i, gi in inc_nonzero[c]:
                                    cnt[i] += sc * gi
                        cnt = tuple(cnt)
                        f = val * w
                        if pend is not None:
                            f *= factor(idx - 1, pend, cnt)
                            if f == 0.0:
                                continue
                        if adj_out:
                            key = (
                                tuple(r - si for r, si in zip(remaining, s)),
                                cnt,
                            )
                        else:
                            f *= factor(idx, cnt, zero)
                            if f == 0.0:
                                continue
                            key = (
                                tuple(r - si for r, si in zip(remaining, s)),
                                None,
                            )
                        acc.setdefault(key, []).append(f)
                states = {k: math.fsum(v) for k, v in acc.items()}
                if not states:
                    dead = True
                    break
                m = max(abs(v) for v in states.values())
                if m == 0.0:
                    dead = True
                    break
                if m < 1.0 / _RESCALE:
                    states = {k: v * _RESCALE for k, v in states.items()}
                    offset += _LOG_RESCALE
            if dead:
                row_terms.append(NEG_INF)
                continue
            total = math.fsum(
                v for (rem, _), v in states.items() if not any(rem)
            )
            if total <= 0.0:
                row_terms.append(NEG_INF)
            else:
                row_terms.append(
                    row.log_weight + math.log(total) - offset - denom_log
                )
        finite = [t for t in row_terms if t != NEG_INF]
        if not finite:
            return NEG_INF
        top = max(finite)
        return top + math.log(math.fsum(math.exp(t - top) for t in finite))


# -- convenience wrappers -------------------------------------------------------


def marker_logliks(
    epgs,
    freqs: AlleleFrequencyTable,
    params,
    contributors,
    known=None,
    dist=None,
    typed=None,
    theta: float = 0.0,
) -> dict[str, float]:
    prep = PreparedLikelihood(
        epgs, freqs, contributors, known=known, dist=dist, typed=typed, theta=theta
    )
    return prep.marker_logliks(params)


def likelihood(
    epgs,
    freqs: AlleleFrequencyTable,
    params,
    contributors,
    known=None,
    dist=None,
    typed=None,
    theta: float = 0.0,
) -> float:
    """Total log-likelihood of the peak heights given the hypothesis.

    Conditional on all typed/known genotypes; -inf signals impossible
    evidence (use ``first_impossible_marker`` on the per-marker dict for the
    diagnostic).
    """
    prep = PreparedLikelihood(
        epgs, freqs, contributors, known=known, dist=dist, typed=typed, theta=theta
    )
    return prep.loglik(params)


def first_impossible_marker(mlls: dict[str, float]) -> str | None:
    for marker, v in mlls.items():
        if v == NEG_INF:
            return marker
    return None


# -- brute force oracle -----------------------------------------------------------


def _genotype_space(fmap) -> list[tuple[int, int]]:
    return list(combinations_with_replacement(sorted(fmap), 2))


def _hwe(pair, fmap) -> float:
    a, b = pair
    return fmap[a] ** 2 if a == b else 2 * fmap[a] * fmap[b]


def _polya_joint(pairs, fmap, alleles, theta, base: dict[int, int]) -> float:
    """Joint probability of unordered genotype pairs under the DM urn."""
    alpha_tot = (1.0 - theta) / theta
    counts = dict(base)
    t = sum(base.values())
    p = 1.0
    for a, b in pairs:
        p *= (alpha_tot * fmap[a] + counts.get(a, 0)) / (alpha_tot + t)
        counts[a] = counts.get(a, 0) + 1
        t += 1
        p *= (alpha_tot * fmap[b] + counts.get(b, 0)) / (alpha_tot + t)
        counts[b] = counts.get(b, 0) + 1
        t += 1
        if a != b:
            p *= 2.0
    return p


def brute_force_marker_logliks(
    epgs,
    freqs: AlleleFrequencyTable,
    params,
    contributors,
    known=None,
    dist=None,
    typed=None,
    theta: float = 0.0,
    max_terms: int = 10**6,
) -> dict[str, float]:
    """Literal enumeration of every untyped genotype combination (Eq. oracle).

    Exponential in the number of untyped contributors; only suitable for
    tests and the ``--oracle`` CLI mode.
    """
    prep = PreparedLikelihood(
        epgs, freqs, contributors, known=known, dist=dist, typed=typed, theta=theta
    )
    plist = prep._params_list(params)
    out: dict[str, float] = {}
    for case in prep.cases:
        marker = case.marker
        if case.rows is None:
            out[marker] = NEG_INF
            continue
        fmap = prep.freqs.freq_map(marker)
        space = _genotype_space(fmap)
        untyped = list(prep.related) + list(prep.unrelated)
        if len(space) ** len(untyped) > max_terms:
            raise EngineLimitError(
                f"{len(space) ** len(untyped)} enumeration terms exceed the cap"
            )
        known_pairs = {k: prep.known[k].pair(marker) for k in prep.known}
        typed_pairs = {}
        dist_ids = set(prep.dist.ids) if prep.dist is not None else set()
        for tid, prof in prep.typed.items():
            if tid in dist_ids or theta > 0:
                typed_pairs[tid] = prof.pair(marker)
        for kid, pair in known_pairs.items():
            if kid in dist_ids:
                typed_pairs[kid] = pair
        raw = lambda pair: (pair[0] / 10, pair[1] / 10)
        p_typed = 1.0
        if prep.dist is not None and typed_pairs:
            p_typed = joint_genotype_probability(
                prep.dist, prep.freqs, marker, {t: raw(p) for t, p in typed_pairs.items()}
            )
            if p_typed == 0.0:
                out[marker] = NEG_INF
                continue
        pos = {a: i for i, a in enumerate(case.grid)}
        counts0 = np.zeros((len(prep.contributors), len(case.grid)), dtype=np.int64)
        cidx = {c: i for i, c in enumerate(prep.contributors)}
        for kid, pair in known_pairs.items():
            for a in pair:
                counts0[cidx[kid], pos[a]] += 1
        obs = [
            {case.grid[i]: z for i, z in heights.items()}
            for heights in case.obs
        ]
        base_urn = {}
        if theta > 0:
            for pair in list(known_pairs.values()) + [
                p for t, p in typed_pairs.items() if t not in known_pairs
            ]:
                for a in pair:
                    base_urn[a] = base_urn.get(a, 0) + 1
        terms = []
        for combo in product(space, repeat=len(untyped)):
            assign = dict(zip(untyped, combo))
            if theta > 0:
                prior = _polya_joint(
                    [assign[u] for u in untyped], fmap, sorted(fmap), theta, base_urn
                )
            else:
                prior = 1.0
                rel_gts = {r: raw(assign[r]) for r in prep.related}
                if rel_gts or typed_pairs:
                    if prep.dist is not None:
                        joint = joint_genotype_probability(
                            prep.dist,
                            prep.freqs,
                            marker,
                            {**rel_gts, **{t: raw(p) for t, p in typed_pairs.items()}},
                        )
                        prior *= joint / p_typed
                for u in prep.unrelated:
                    prior *= _hwe(assign[u], fmap)
            if prior == 0.0:
                continue
            counts = counts0.copy()
            for u, pair in assign.items():
                for a in pair:
                    counts[cidx[u], pos[a]] += 1
            ll = 0.0
            for e, p in enumerate(plist):
                ll += marker_loglik(obs[e], counts, case.grid, p)
                if ll == NEG_INF:
                    break
            if ll == NEG_INF:
                continue
            terms.append(math.log(prior) + ll)
        if not terms:
            out[marker] = NEG_INF
        else:
            top = max(terms)
            out[marker] = top + math.log(
                math.fsum(math.exp(t - top) for t in terms)
            )
    return out


def brute_force_likelihood(
    epgs,
    freqs: AlleleFrequencyTable,
    params,
    contributors,
    known=None,
    dist=None,
    typed=None,
    theta: float = 0.0,
    max_terms: int = 10**6,
) -> float:
    mlls = brute_force_marker_logliks(
        epgs, freqs, params, contributors,
        known=known, dist=dist, typed=typed, theta=theta, max_terms=max_terms,
    )
    if any(v == NEG_INF for v in mlls.values()):
        return NEG_INF
    return math.fsum(mlls[m] for m in sorted(mlls))
