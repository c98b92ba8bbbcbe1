from fractions import Fraction

import pytest

from mixkin.pedigree import (
    PedigreeError,
    kinship,
    pairwise_coefficients,
    parse_pedigree,
)

F = Fraction


def test_parse_minimal_trio(trio):
    assert set(trio.ids) == {"F", "M", "C"}
    assert trio.founders == {"F", "M"}
    assert trio.parents("C") == ("F", "M")
    assert trio.parents("F") is None


def test_parse_accepts_star_and_zero_for_absent_parent():
    ped = parse_pedigree("A 0 0\nB * *\nC A B M\n")
    assert ped.founders == {"A", "B"}
    assert ped["C"].sex == "M"


def test_parse_rejects_unknown_parent():
    with pytest.raises(PedigreeError, match="unknown parent"):
        parse_pedigree("C F M\n")


def test_parse_rejects_single_parent():
    with pytest.raises(PedigreeError, match="one parent"):
        parse_pedigree("F * *\nC F *\n")


def test_parse_rejects_duplicate_id():
    with pytest.raises(PedigreeError, match="duplicate"):
        parse_pedigree("A * *\nA * *\n")


def test_parse_rejects_cycle():
    with pytest.raises(PedigreeError, match="cycle"):
        parse_pedigree("A B C\nB A C\nC * *\n")


def test_topological_order_parents_first(caesars):
    order = caesars.topological_order()
    pos = {iid: k for k, iid in enumerate(order)}
    for iid in order:
        p = caesars.parents(iid)
        if p:
            assert pos[p[0]] < pos[iid] and pos[p[1]] < pos[iid]


def test_parent_child_kappa(trio):
    coef = pairwise_coefficients(trio, "F", "C")
    assert coef.kappa == (0, 1, 0)
    assert coef.theta == F(1, 4)


def test_half_sibs_kappa():
    ped = parse_pedigree("P * *\nA * *\nB * *\nX P A\nY P B\n")
    assert pairwise_coefficients(ped, "X", "Y").kappa == (F(1, 2), F(1, 2), 0)


def test_full_sibs_kappa():
    ped = parse_pedigree("P * *\nQ * *\nX P Q\nY P Q\n")
    coef = pairwise_coefficients(ped, "X", "Y")
    assert coef.kappa == (F(1, 4), F(1, 2), F(1, 4))
    assert coef.theta == F(1, 4)


def test_cousins_and_half_cousins_kappa():
    cousins = parse_pedigree(
        "GP * *\nGM * *\nA GP GM\nB GP GM\nHA * *\nHB * *\nX HA A\nY HB B\n"
    )
    assert pairwise_coefficients(cousins, "X", "Y").kappa == (F(3, 4), F(1, 4), 0)
    half = parse_pedigree(
        "GP * *\nGA * *\nGB * *\nA GP GA\nB GP GB\nHA * *\nHB * *\nX HA A\nY HB B\n"
    )
    assert pairwise_coefficients(half, "X", "Y").kappa == (F(7, 8), F(1, 8), 0)


def test_sib_mating_children_delta(sib_mating_kids):
    coef = pairwise_coefficients(sib_mating_kids, "A", "B")
    assert coef.delta == (
        F(1, 16),
        F(1, 32),
        F(1, 8),
        F(1, 32),
        F(1, 8),
        F(1, 32),
        F(7, 32),
        F(5, 16),
        F(1, 16),
    )
    assert coef.kappa is None  # inbreeding present


def test_mother_and_sister_share_theta_but_not_kappa():
    ped = parse_pedigree("P * *\nQ * *\nME P Q\nSIS P Q\n")
    mother = pairwise_coefficients(ped, "ME", "Q")
    sister = pairwise_coefficients(ped, "ME", "SIS")
    assert mother.theta == sister.theta == F(1, 4)
    assert mother.kappa != sister.kappa


def test_two_founders_are_unrelated(trio):
    coef = pairwise_coefficients(trio, "F", "M")
    assert coef.delta[8] == 1
    assert coef.kappa == (1, 0, 0)


def test_self_pair_founder_and_inbred(incest_sibs):
    me = pairwise_coefficients(incest_sibs, "GP", "GP")
    assert me.delta[6] == 1  # both genes distinct, shared twice over
    assert me.theta == F(1, 2)
    child = pairwise_coefficients(incest_sibs, "C", "C")
    # C's inbreeding coefficient is 1/4: kinship of full sibs
    assert child.delta[0] == F(1, 4)
    assert child.delta[6] == F(3, 4)
    assert child.theta == F(5, 8)


def test_theta_matches_recursive_kinship(caesars, incest_sibs, star):
    for ped, pairs in [
        (caesars, [("Germanicus", "Agrippina_Maior"), ("Caligula", "Nero"),
                   ("Claudius", "Nero"), ("Nero", "Nero")]),
        (incest_sibs, [("F", "M"), ("C", "F"), ("C", "C")]),
        (star, [("C1", "C2"), ("C1", "C3")]),
    ]:
        for a, b in pairs:
            assert pairwise_coefficients(ped, a, b).theta == kinship(ped, a, b)


def test_unknown_id_raises(trio):
    with pytest.raises(PedigreeError, match="unknown individual"):
        pairwise_coefficients(trio, "F", "nope")


def test_caesars_roster(caesars):
    assert len(caesars) == 35
    assert caesars.consanguineous_couples() == [
        ("Germanicus", "Agrippina_Maior"),
        ("Gnaeus_Domitius", "Agrippina_Minor"),
    ]


def test_germanicus_agrippina_kappa(caesars):
    coef = pairwise_coefficients(caesars, "Germanicus", "Agrippina_Maior")
    assert coef.kappa == (F(15, 16), F(1, 16), 0)
    assert coef.kappa_floats() == (0.9375, 0.0625, 0.0)
