import itertools

import pytest

from unfoeq.modelfinder import (SearchBudget, enumerate_models,
                                enumerate_structures, find_model,
                                is_satisfiable_upto)
from unfoeq.normalform import (FragmentRejected, NormalFormError,
                               reduce_to_transitive, symmetrize_model,
                               to_normal_form)
from unfoeq.semantics import check_model, evaluate
from unfoeq.structures import (EquivalenceViolation, FiniteStructure,
                               load_structure, validate_equivalences)
from unfoeq.syntax import Atom, Signature, is_quantifier_free, parse_formula

SIG = Signature.parse("base P 1\nbase R 2\neq E1\n")


def nf_of(text, sig=SIG):
    return to_normal_form(parse_formula(text, sig), sig)


# -- shape and fixed points ----------------------------------------------------

def test_already_normal_is_fixed_point():
    text = ("(forall x1 x2 . ~(R(x1,x2) & E1(x1,x2))) & "
            "(forall x . ~(~(exists y1 . R(x,y1) & ~P(y1))))")
    nf, ext = nf_of(text)
    assert ext == SIG  # zero fresh symbols
    assert nf.t == 2 and nf.m == 1
    assert nf.conjuncts[0].witnesses == ("y1",)
    assert is_quantifier_free(nf.phi0)
    # normalizing the printed normal form is again a fixed point
    nf2, ext2 = nf_of(nf.pretty())
    assert ext2 == SIG and nf2 == nf


def test_pure_universal_conjunct():
    nf, ext = nf_of("forall x y . ~R(x,y)")
    assert nf.t == 2 and nf.m == 0 and ext == SIG
    assert nf.phi0 == Atom("R", ("x1", "x2"))


def test_inner_negated_quantifier_gets_one_fresh_symbol():
    nf, ext = nf_of("exists x . (P(x) & ~(exists y . R(x,y)))")
    fresh = [n for n, _ in ext.base if not SIG.has(n)]
    assert fresh == ["_nf0"]
    assert nf.m == 2  # the naming axiom plus the outer existential


def test_fresh_names_are_deterministic():
    text = "exists x . (~(exists y . R(x,y)) & ~(exists y . E1(x,y) & P(y)))"
    nf1, ext1 = nf_of(text)
    nf2, ext2 = nf_of(text)
    assert ext1 == ext2 and nf1 == nf2
    fresh = [n for n, _ in ext1.base if not SIG.has(n)]
    assert fresh == ["_nf0", "_nf1"]


def test_rejects_fragment_violations():
    with pytest.raises(FragmentRejected):
        nf_of("~(x = y)")
    with pytest.raises(NormalFormError):
        nf_of("P(x)")  # not a sentence


def test_bgnfo_mode_accepted():
    text = "~(exists x y . R(x,y) & ~E1(x,y))"
    nf, ext = nf_of(text)
    assert ext == SIG
    assert nf.t == 2 and nf.m == 0
    s_yes = load_structure("domain 2\nrel R: (0,1)\nrel E1: (0,1)\nrel P:\n", SIG)
    s_no = load_structure("domain 2\nrel R: (0,1)\nrel E1:\nrel P:\n", SIG)
    assert check_model(s_yes, nf)
    assert not check_model(s_no, nf)


# -- the equivalence statement, by exhaustive projection ------------------------

def _project_models(nf, ext, orig_sig, n):
    out = set()
    for s in enumerate_structures(ext, n):
        if check_model(s, nf):
            out.add(_encode(s.drop_symbols([name for name, _ in ext.base
                                            if not orig_sig.has(name)])))
    return out


def _direct_models(f, sig, n):
    return {_encode(s) for s in enumerate_structures(sig, n)
            if evaluate(s, f)}


def _encode(s):
    parts = [tuple(sorted(s.base_rel(name))) for name, _ in s.sig.base]
    parts += [s.eq_classes(name) for name in s.sig.eqs]
    return tuple(parts)


@pytest.mark.parametrize("text", [
    "exists x . (P(x) & ~(exists y . R(x,y)))",
    "(forall x y . ~R(x,y)) | (exists x . P(x))",
    "exists x . ~(exists y . E1(x,y) & ~P(y))",
    "~(exists x . (P(x) & ~(exists y . E1(x,y) & P(y))))",
])
def test_models_project_exactly(text):
    """Every model of the normal form restricts to a model of the original,
    and every model of the original expands: projected model sets coincide."""
    small = Signature.parse("base P 1\nbase R 2\neq E1\n")
    f = parse_formula(text, small)
    nf, ext = to_normal_form(f, small)
    for n in (1, 2):
        assert _project_models(nf, ext, small, n) == _direct_models(f, small, n)


def test_normal_form_soundness_at_small_sizes():
    text = "exists x . (P(x) & ~(exists y . R(x,y)))"
    f = parse_formula(text, SIG)
    nf, ext = to_normal_form(f, SIG)
    found = 0
    for n in (1, 2, 3):
        for s in enumerate_models(nf, n, limit=5):
            assert evaluate(s.drop_symbols(
                [name for name, _ in ext.base if not SIG.has(name)]), f)
            found += 1
    assert found >= 3


# -- reduction to transitive semantics -------------------------------------------

def test_reduce_rewrites_atoms_and_appends_reflexivity():
    nf, _ = nf_of("(forall x1 x2 . ~(R(x1,x2) & ~P(x1))) & "
                  "(forall x . ~(~(exists y1 . E1(x,y1) & P(y1))))")
    red = reduce_to_transitive(nf)
    assert red.m == nf.m + SIG.k
    text = red.conjuncts[0].matrix.pretty()
    assert "E1(x, y1)" in text and "E1(y1, x)" in text
    last = red.conjuncts[-1]
    assert last.witnesses == () and last.matrix == Atom("E1", ("x", "x"))


def test_reduce_identity_without_distinguished_symbols():
    sig0 = Signature.parse("base P 1\nbase R 2\n")
    nf, _ = nf_of("forall x y . ~R(x,y)", sig0)
    assert reduce_to_transitive(nf) == nf


def test_reduction_equisatisfiable_small():
    nf, _ = nf_of("(forall x1 x2 . ~(R(x1,x2) & E1(x1,x2))) & "
                  "(forall x . ~(~(exists y1 . R(x,y1))))")
    red = reduce_to_transitive(nf)
    for n in (1, 2, 3):
        assert is_satisfiable_upto(nf, n) == \
            is_satisfiable_upto(red, n, transitive_dist=True)
    m = find_model(red, SearchBudget(max_size=3, transitive_dist=True))
    sym = symmetrize_model(m)
    assert validate_equivalences(sym)
    assert check_model(sym, nf)


# -- symmetrization ---------------------------------------------------------------

def _brute_largest_symmetric(n, rel):
    best = set()
    pairs = sorted(rel)
    for mask in range(1 << len(pairs)):
        sub = {p for i, p in enumerate(pairs) if mask >> i & 1}
        if all((b, a) in sub for a, b in sub) and len(sub) > len(best):
            best = sub
    return best


def test_symmetrize_already_equivalence_is_fixed_point():
    s = load_structure("domain 2\nrel E1: (0,1)\nrel R:\nrel P:\n", SIG)
    assert symmetrize_model(s) == s


def test_symmetrize_drops_one_way_pairs():
    s = FiniteStructure.pre_closure(
        SIG, 2, {}, {"E1": {(0, 0), (1, 1), (0, 1)}})
    out = symmetrize_model(s)
    assert out.eq_classes("E1") == ((0,), (1,))
    brute = _brute_largest_symmetric(2, {(0, 0), (1, 1), (0, 1)})
    assert set(out.eq_raw_pairs("E1")) == brute


def test_symmetrize_requires_transitive_reflexive():
    s = FiniteStructure.pre_closure(SIG, 2, {}, {"E1": {(0, 1)}})
    with pytest.raises(EquivalenceViolation):
        symmetrize_model(s)
    s2 = FiniteStructure.pre_closure(
        SIG, 3, {}, {"E1": {(0, 0), (1, 1), (2, 2), (0, 1), (1, 2)}})
    with pytest.raises(EquivalenceViolation):
        symmetrize_model(s2)
