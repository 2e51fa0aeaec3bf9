import pytest

from unfoeq.normalform import to_normal_form
from unfoeq.syntax import Signature, parse_formula


@pytest.fixture
def sig1():
    """One unary, one binary base symbol, one equivalence."""
    return Signature.parse("base P 1\nbase R 2\neq E1\n")


@pytest.fixture
def sig2():
    """Two unary, one binary base symbol, two equivalences."""
    return Signature.parse("base P 1\nbase Q 1\nbase R 2\neq E1\neq E2\n")


def nf_of(text, sig):
    nf, _ = to_normal_form(parse_formula(text, sig), sig)
    return nf


@pytest.fixture
def make_nf():
    return nf_of
