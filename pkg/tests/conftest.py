import importlib.resources

import pytest

from mixkin.pedigree import parse_pedigree

TRIO = """
F * *
M * *
C F M
"""

# trio plus the father's father
TRIO_GF = """
GF * *
GM * *
F GF GM
M * *
C F M
"""

# three cousins, star arrangement: mothers are full sibs
COUSINS_STAR = """
GP * *
GM * *
S1 GP GM
S2 GP GM
S3 GP GM
H1 * *
H2 * *
H3 * *
C1 H1 S1
C2 H2 S2
C3 H3 S3
"""

# three cousins, cyclic arrangement: each pair of cousins linked through a
# different sibling pair
COUSINS_CYCLIC = """
GPa * *
GMa * *
GPb * *
GMb * *
GPc * *
GMc * *
P1 GPa GMa
Q1 GPa GMa
P2 GPb GMb
Q2 GPb GMb
P3 GPc GMc
Q3 GPc GMc
C1 P1 Q2
C2 P2 Q3
C3 P3 Q1
"""

# father of C is the brother of the mother
INCEST_SIBS = """
GP * *
GM * *
F GP GM
M GP GM
C F M
"""

# maternal grandfather of C is also the father of C
INCEST_GF = """
GF * *
GM * *
M GF GM
C GF M
"""

# two children of a brother-sister mating
SIB_MATING_KIDS = """
GP * *
GM * *
F GP GM
M GP GM
A F M
B F M
"""


@pytest.fixture
def trio():
    return parse_pedigree(TRIO)


@pytest.fixture
def trio_gf():
    return parse_pedigree(TRIO_GF)


@pytest.fixture
def star():
    return parse_pedigree(COUSINS_STAR)


@pytest.fixture
def cyclic():
    return parse_pedigree(COUSINS_CYCLIC)


@pytest.fixture
def incest_sibs():
    return parse_pedigree(INCEST_SIBS)


@pytest.fixture
def incest_gf():
    return parse_pedigree(INCEST_GF)


@pytest.fixture
def sib_mating_kids():
    return parse_pedigree(SIB_MATING_KIDS)


@pytest.fixture(scope="session")
def caesars():
    text = (
        importlib.resources.files("mixkin.data").joinpath("caesars.ped").read_text()
    )
    return parse_pedigree(text)
