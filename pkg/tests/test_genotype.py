import math
from fractions import Fraction
from itertools import combinations_with_replacement, product

import numpy as np
import pytest
from scipy.stats import chi2

from mixkin.genotype import (
    DRAW,
    FIXED,
    AlleleFrequencyTable,
    GenotypeProfile,
    ImpossibleEvidenceError,
    UnknownAlleleError,
    allele_key,
    allele_str,
    condition_on_typed,
    joint_genotype_probability,
    simulate_conditioned,
    simulate_profiles,
)
from mixkin.ibd import IBDPatternDistribution, pattern_distribution

F = Fraction


def table(marker="m", alleles=(10, 11, 12), freqs=(0.1, 0.2, 0.7)):
    return AlleleFrequencyTable(
        {marker: {allele_key(a): f for a, f in zip(alleles, freqs)}}
    )


def genotypes_for(alleles):
    return list(combinations_with_replacement(sorted(allele_key(a) for a in alleles), 2))


def oracle_joint_probability(dist, fmap, genotypes):
    """Independent oracle: enumerate every label->allele map per pattern."""
    ids = list(genotypes)
    genotypes = {
        i: tuple(sorted(allele_key(x) for x in pair)) for i, pair in genotypes.items()
    }
    total = 0.0
    for pattern, pr in dist.items():
        labels = sorted(set(pattern.labels))
        p_pat = 0.0
        for combo in product(fmap, repeat=len(labels)):
            mapping = dict(zip(labels, combo))
            ok = True
            for j, iid in enumerate(ids):
                l1, l2 = pattern.pair(j)
                want = genotypes[iid]
                got = tuple(sorted((mapping[l1], mapping[l2])))
                if got != want:
                    ok = False
                    break
            if ok:
                p_pat += math.prod(fmap[a] for a in combo)
        total += float(pr) * p_pat
    return total


# -- allele keys and tables ------------------------------------------------------


def test_allele_key_round_trip():
    assert allele_key("15.3") == 153
    assert allele_key(15) == 150
    assert allele_str(153) == "15.3"
    assert allele_str(150) == "15"


def test_frequency_table_load_and_renormalize():
    csv_text = "marker,allele,frequency\nm,10,0.1\nm,11,0.2\nm,12,0.7000002\n"
    with pytest.warns(UserWarning, match="renormaliz"):
        tab = AlleleFrequencyTable.from_csv(csv_text)
    assert abs(tab.frequencies("m").sum() - 1.0) < 1e-15


def test_frequency_table_rejects_bad_sum():
    with pytest.raises(ValueError, match="sum"):
        table(freqs=(0.1, 0.2, 0.2))


def test_frequency_table_extend():
    tab = table().extended({"m": [13]}, eps=0.01)
    assert allele_key(13) in tab.alleles("m")
    assert abs(tab.frequencies("m").sum() - 1.0) < 1e-12


def test_genotype_profile_csv_round_trip():
    prof = GenotypeProfile({"m1": (15, "15.3"), "m2": (9, 9)})
    assert GenotypeProfile.from_csv(prof.to_csv()) == prof


# -- joint genotype probability ---------------------------------------------------


def test_kappa_closed_form():
    qa, qb, qc = 0.1, 0.2, 0.7
    tab = table(freqs=(qa, qb, qc))
    for kappa in [(0.25, 0.5, 0.25), (0.5, 0.5, 0.0), (1.0, 0.0, 0.0)]:
        dist = IBDPatternDistribution.from_kappa(
            tuple(F(x).limit_denominator() for x in kappa), ["A", "B"]
        )
        got = joint_genotype_probability(
            dist, tab, "m", {"A": (10, 11), "B": (10, 12)}
        )
        want = kappa[0] * 4 * qa * qa * qb * qc + kappa[1] * qa * qb * qc
        assert got == pytest.approx(want, rel=1e-14)


def test_single_homozygote_is_hardy_weinberg():
    tab = table()
    dist = IBDPatternDistribution.unrelated(["A"])
    assert joint_genotype_probability(dist, tab, "m", {"A": (10, 10)}) == pytest.approx(
        0.01, rel=1e-14
    )


def test_incest_distribution_matches_enumeration_oracle(incest_sibs):
    dist = pattern_distribution(incest_sibs, ["F", "M", "C"])
    tab = table()
    fmap = tab.freq_map("m")
    for gF, gM, gC in [
        ((10, 11), (10, 11), (10, 10)),
        ((10, 11), (10, 12), (11, 12)),
        ((12, 12), (12, 12), (12, 12)),
        ((10, 12), (11, 12), (12, 12)),
    ]:
        gts = {"F": gF, "M": gM, "C": gC}
        got = joint_genotype_probability(dist, tab, "m", gts)
        assert got == pytest.approx(oracle_joint_probability(dist, fmap, gts), rel=1e-12)


def test_joint_probability_sums_to_one(incest_gf):
    dist = pattern_distribution(incest_gf, ["GF", "M", "C"])
    tab = table()
    total = 0.0
    gts = [(a / 10, b / 10) for a, b in genotypes_for([10, 11, 12])]
    for ga, gb, gc in product(gts, repeat=3):
        total += joint_genotype_probability(
            dist, tab, "m", {"GF": ga, "M": gb, "C": gc}
        )
    assert total == pytest.approx(1.0, abs=1e-12)


def test_unknown_allele_rejected():
    tab = table()
    dist = IBDPatternDistribution.unrelated(["A"])
    with pytest.raises(UnknownAlleleError):
        joint_genotype_probability(dist, tab, "m", {"A": (10, 19)})


# -- conditioning -----------------------------------------------------------------


def test_worked_example_table(trio_gf):
    # contributors F and M; child (a,b) and paternal grandfather (b,c) typed
    qa, qb, qc = 0.1, 0.2, 0.3
    tab = table(alleles=(10, 11, 12, 13), freqs=(qa, qb, qc, 0.4))
    a, b, c = allele_key(10), allele_key(11), allele_key(12)
    dist = pattern_distribution(trio_gf, ["F", "M", "C", "GF"])
    t = condition_on_typed(dist, tab, "m", ["F", "M"], {"C": (10, 11), "GF": (11, 12)})
    by_genes = {row.genes: row for row in t.rows}
    assert len(t.rows) == 5
    w1 = 0.125 * qa * qb * qc
    w2 = 0.125 * qa * qb * qb * qc
    expected = {
        (((FIXED, b), (DRAW, 0)), ((FIXED, a), (DRAW, 1))): w1,
        (((FIXED, a), (FIXED, b)), ((FIXED, b), (DRAW, 0))): w2,
        (((FIXED, b), (FIXED, b)), ((FIXED, a), (DRAW, 0))): w2,
        (((FIXED, a), (FIXED, c)), ((FIXED, b), (DRAW, 0))): w2,
        (((FIXED, b), (FIXED, c)), ((FIXED, a), (DRAW, 0))): w2,
    }
    for genes, raw in expected.items():
        assert by_genes[genes].raw_weight == pytest.approx(raw, rel=1e-14)
    assert t.ndraws == 2
    assert sum(r.weight for r in t.rows) == pytest.approx(1.0, rel=1e-14)


def test_paternity_table(trio):
    qa, qb, qc = 0.1, 0.2, 0.3
    tab = table(alleles=(10, 11, 12, 13), freqs=(qa, qb, qc, 0.4))
    a, b, c = allele_key(10), allele_key(11), allele_key(12)
    dist = pattern_distribution(trio, ["F", "M", "C"])
    t = condition_on_typed(dist, tab, "m", ["F"], {"M": (10, 11), "C": (11, 12)})
    assert len(t.rows) == 1
    row = t.rows[0]
    assert row.genes == ((((FIXED, c), (DRAW, 0))),)
    assert row.raw_weight == pytest.approx(0.25 * qa * qb * qc, rel=1e-14)
    assert row.weight == 1.0
    # p_typed restores the unordered-genotype probability of the typed pair
    assert t.p_typed == pytest.approx(
        joint_genotype_probability(dist, tab, "m", {"M": (10, 11), "C": (11, 12)}),
        rel=1e-12,
    )


def test_no_typed_reproduces_patterns(incest_sibs):
    tab = table()
    dist = pattern_distribution(incest_sibs, ["F", "M", "C"])
    t = condition_on_typed(dist, tab, "m", ["F", "M", "C"], {})
    assert t.p_typed == pytest.approx(1.0)
    assert len(t.rows) == len(dist.patterns)
    weights = sorted(r.weight for r in t.rows)
    probs = sorted(float(p) for p in dist.patterns.values())
    assert weights == pytest.approx(probs)


def test_restriction_merges_rows(incest_sibs):
    # with only the child as contributor, the seven patterns collapse to the
    # inbred/outbred pair of draw structures
    tab = table()
    dist = pattern_distribution(incest_sibs, ["F", "M", "C"])
    t = condition_on_typed(dist, tab, "m", ["C"], {})
    got = {row.genes: row.weight for row in t.rows}
    assert got == {
        (((DRAW, 0), (DRAW, 0)),): pytest.approx(0.25),
        (((DRAW, 0), (DRAW, 1)),): pytest.approx(0.75),
    }


def test_impossible_evidence_raises(trio):
    tab = table()
    dist = pattern_distribution(trio, ["F", "M", "C"])
    # child must inherit one paternal gene: (11,12) from a (10,10) father is out
    with pytest.raises(ImpossibleEvidenceError, match="m"):
        condition_on_typed(dist, tab, "m", ["M"], {"F": (10, 10), "C": (11, 12)})
    with pytest.raises(ValueError, match="both contributor and typed"):
        condition_on_typed(dist, tab, "m", ["F"], {"F": (10, 10)})


def bayes_contributor_distribution(t, tab):
    """Contributor genotype pmf implied by a conditioned table."""
    keys = tab.alleles(t.marker)
    q = tab.freq_map(t.marker)
    pmf = {}
    for row in t.rows:
        nd = row.ndraws
        for combo in product(keys, repeat=nd):
            p = row.weight * math.prod(q[a] for a in combo)
            gts = []
            for pair in row.genes:
                vals = [ref if kind == FIXED else combo[ref] for kind, ref in pair]
                gts.append(tuple(sorted(vals)))
            key = tuple(gts)
            pmf[key] = pmf.get(key, 0.0) + p
    return pmf


@pytest.mark.parametrize("typed_gt", [(10, 11), (11, 11), (11, 12)])
def test_bayes_consistency_exhaustive(trio_gf, typed_gt):
    tab = table(alleles=(10, 11, 12, 13), freqs=(0.15, 0.25, 0.35, 0.25))
    dist = pattern_distribution(trio_gf, ["F", "M", "C", "GF"])
    t = condition_on_typed(dist, tab, "m", ["F", "M"], {"C": typed_gt})
    pmf = bayes_contributor_distribution(t, tab)
    p_typed = joint_genotype_probability(dist, tab, "m", {"C": typed_gt})
    assert t.p_typed == pytest.approx(p_typed, rel=1e-12)
    for gF, gM in product(genotypes_for([10, 11, 12, 13]), repeat=2):
        joint = joint_genotype_probability(
            dist,
            tab,
            "m",
            {"F": (gF[0] / 10, gF[1] / 10), "M": (gM[0] / 10, gM[1] / 10), "C": typed_gt},
        )
        assert pmf.get((gF, gM), 0.0) == pytest.approx(joint / p_typed, abs=1e-12)


# -- simulators -------------------------------------------------------------------


def many_marker_table(n_markers, n_alleles, seed=0):
    rng = np.random.default_rng(seed)
    freqs = rng.dirichlet(np.full(n_alleles, 5.0))
    fmap = {allele_key(10 + i): float(f) for i, f in enumerate(freqs)}
    return AlleleFrequencyTable({f"M{i:05d}": fmap for i in range(n_markers)})


def test_simulated_single_profile_is_hardy_weinberg():
    tab = many_marker_table(20000, 4, seed=1)
    dist = IBDPatternDistribution.unrelated(["A"])
    profs = simulate_profiles(dist, tab, seed=11)
    counts = {}
    for marker in tab.markers:
        counts[profs["A"].pair(marker)] = counts.get(profs["A"].pair(marker), 0) + 1
    keys = tab.alleles(tab.markers[0])
    q = tab.freq_map(tab.markers[0])
    stat = 0.0
    dof = 0
    for g in combinations_with_replacement(keys, 2):
        p = q[g[0]] ** 2 if g[0] == g[1] else 2 * q[g[0]] * q[g[1]]
        expected = 20000 * p
        stat += (counts.get(g, 0) - expected) ** 2 / expected
        dof += 1
    assert stat < chi2.ppf(1 - 1e-4, dof - 1)


def test_simulated_child_shares_gene_with_parent(trio):
    tab = many_marker_table(2000, 6, seed=2)
    dist = pattern_distribution(trio, ["F", "C"])
    profs = simulate_profiles(dist, tab, seed=5)
    for marker in tab.markers:
        assert set(profs["F"].pair(marker)) & set(profs["C"].pair(marker))


def test_simulated_sib_pair_ibd_fractions():
    # near-unique alleles so that identity by state reads as identity by
    # descent; fractions of markers sharing 0/1/2 genes approach kappa
    n = 30000
    fmap = {allele_key(i + 100): 1.0 / 2000 for i in range(2000)}
    tab = AlleleFrequencyTable({f"M{i:05d}": fmap for i in range(n)})
    dist = IBDPatternDistribution.from_kappa((F(1, 4), F(1, 2), F(1, 4)), ["A", "B"])
    profs = simulate_profiles(dist, tab, seed=17)
    shared = [0, 0, 0]
    for marker in tab.markers:
        a = list(profs["A"].pair(marker))
        b = list(profs["B"].pair(marker))
        k = 0
        for x in a:
            if x in b:
                b.remove(x)
                k += 1
        shared[k] += 1
    fractions = [s / n for s in shared]
    assert fractions == pytest.approx([0.25, 0.5, 0.25], abs=0.01)


def test_simulate_conditioned_father_always_carries_c(trio):
    tab = table(alleles=(10, 11, 12, 13), freqs=(0.1, 0.2, 0.3, 0.4))
    a, b, c = allele_key(10), allele_key(11), allele_key(12)
    dist = pattern_distribution(trio, ["F", "M", "C"])
    t = condition_on_typed(dist, tab, "m", ["F"], {"M": (10, 11), "C": (11, 12)})
    rng = np.random.default_rng(3)
    for _ in range(200):
        gt = simulate_conditioned(t, tab, rng=rng)
        assert c in gt["F"]


def test_simulate_conditioned_no_draws_is_deterministic(trio):
    tab = table()
    dist = pattern_distribution(trio, ["F", "C"])
    t = condition_on_typed(dist, tab, "m", ["C"], {"F": (10, 10)})
    rng = np.random.default_rng(4)
    draws = {tuple(simulate_conditioned(t, tab, rng=rng).items()) for _ in range(50)}
    # child's paternal gene is fixed to allele 10; maternal gene drawn
    assert all(allele_key(10) in dict(d)["C"] for d in draws)


def test_simulate_conditioned_matches_analytic_row_weights(trio_gf):
    qa, qb, qc, qd = 0.1, 0.2, 0.3, 0.4
    tab = table(alleles=(10, 11, 12, 13), freqs=(qa, qb, qc, qd))
    a, b, c = allele_key(10), allele_key(11), allele_key(12)
    dist = pattern_distribution(trio_gf, ["F", "M", "C", "GF"])
    t = condition_on_typed(dist, tab, "m", ["F", "M"], {"C": (10, 11), "GF": (11, 12)})
    # analytic P(F carries allele b), counting draw slots that may hit b
    p_b = 0.0
    for row in t.rows:
        fixed = [ref for kind, ref in row.genes[0] if kind == FIXED]
        nd = len([1 for kind, _ in row.genes[0] if kind == DRAW])
        if b in fixed:
            p_b += row.weight
        else:
            p_b += row.weight * (1 - (1 - qb) ** nd)
    n = 100_000
    rng = np.random.default_rng(9)
    hits = sum(b in simulate_conditioned(t, tab, rng=rng)["F"] for _ in range(n))
    se = math.sqrt(p_b * (1 - p_b) / n)
    assert abs(hits / n - p_b) < 3 * se
