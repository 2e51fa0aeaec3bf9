import itertools
import random

import pytest

from unfoeq.modelfinder import SearchBudget, find_model
from unfoeq.normalform import to_normal_form
from unfoeq.semantics import (HomConstraint, SemanticsError, check_model,
                              check_model_lemma3, evaluate, find_homomorphism,
                              find_witnesses, is_homomorphism,
                              phi_witness_structure)
from unfoeq.structures import FiniteStructure, load_structure, restrict
from unfoeq.syntax import And, Atom, Equality, Exists, Neg, Or, Signature, \
    UnivNeg, parse_formula

SIG = Signature.parse("base P 1\nbase R 2\neq E1\n")


def random_structure(rng, sig, n):
    interp = {}
    for name, arity in sig.base:
        tuples = list(itertools.product(range(n), repeat=arity))
        interp[name] = [t for t in tuples if rng.random() < 0.35]
    for name in sig.eqs:
        interp[name] = [(a, b) for a in range(n) for b in range(n)
                        if rng.random() < 0.25]
    return FiniteStructure.make(sig, n, interp, close=True)


# -- independent oracle: set-semantics evaluator without short-circuiting -----

def naive_eval(s, f, asg):
    rels = {name: set(s.base_rel(name)) for name, _ in s.sig.base}
    for name in s.sig.eqs:
        rels[name] = set(s.eq_raw_pairs(name))

    def go(f, asg):
        if isinstance(f, Atom):
            return tuple(asg[v] for v in f.args) in rels[f.symbol]
        if isinstance(f, Equality):
            return asg[f.left] == asg[f.right]
        if isinstance(f, And):
            results = [go(f.left, asg), go(f.right, asg)]
            return all(results)
        if isinstance(f, Or):
            results = [go(f.left, asg), go(f.right, asg)]
            return any(results)
        if isinstance(f, Neg):
            return not go(f.body, asg)
        if isinstance(f, UnivNeg):
            f = Neg(Exists(f.vars, f.body))
            return not go(f.body, asg)
        if isinstance(f, Exists):
            hits = []
            for tup in itertools.product(range(s.n), repeat=len(f.vars)):
                inner = dict(asg)
                inner.update(dict(zip(f.vars, tup)))
                hits.append(go(f.body, inner))
            return any(hits)
        raise TypeError(f)

    return go(f, dict(asg))


def test_evaluate_trivia():
    s = load_structure("domain 1\nrel P: (0)\nrel R:\nrel E1:\n", SIG)
    assert evaluate(s, parse_formula("exists x . P(x)", SIG))
    assert evaluate(s, parse_formula("forall x y . ~R(x,y)", SIG))
    with pytest.raises(SemanticsError):
        evaluate(s, parse_formula("P(x)", SIG))


def test_evaluate_matches_naive_on_random_cases():
    rng = random.Random(77)
    texts = [
        "forall x y . ~(R(x,y) & ~P(x))",
        "exists x . (P(x) & ~(exists y . R(x,y)))",
        "exists x y . (E1(x,y) & ~P(y))",
        "forall x . ~(P(x) & ~(exists y . E1(x,y) & ~P(y)))",
        "exists x . ~(exists y . R(x,y) | E1(x,y))",
    ]
    formulas = [parse_formula(t, SIG) for t in texts]
    for _ in range(100):
        s = random_structure(rng, SIG, 4)
        f = rng.choice(formulas)
        assert evaluate(s, f) == naive_eval(s, f, {})


def test_checkmodel_agrees_with_naive(make_nf=None):
    rng = random.Random(78)
    nf, _ = to_normal_form(parse_formula(
        "(forall x1 x2 . ~(R(x1,x2) & ~P(x1))) & "
        "(forall x . ~(~(exists y1 . E1(x,y1) & P(y1))))", SIG), SIG)
    sentence = nf.as_formula()
    for _ in range(100):
        s = random_structure(rng, SIG, rng.randint(1, 4))
        assert check_model(s, nf) == naive_eval(s, sentence, {})


# -- witnesses ---------------------------------------------------------------

def nf_text(text):
    nf, _ = to_normal_form(parse_formula(text, SIG), SIG)
    return nf


def test_reflexive_self_witness():
    nf = nf_text("(forall x1 x2 . ~(R(x1,x2) & ~P(x1))) & "
                 "(forall x . ~(~(exists y1 . E1(x,y1))))")
    s = load_structure("domain 2\nrel E1:\nrel R:\nrel P:\n", SIG)
    w = find_witnesses(s, nf, 1, 1)
    assert w is not None and w.members == frozenset({1})
    assert w.structure == restrict(s, [1])


def test_witness_exhaustive_scan_oracle():
    nf = nf_text("(forall x1 x2 . ~(R(x1,x2) & R(x2,x1))) & "
                 "(forall x . ~(~(exists y1 . R(x,y1) & ~P(y1))))")
    s = load_structure("domain 3\nrel R: (0,1) (0,2) (1,2) (2,0)\nrel P: (1)\nrel E1:\n",
                       SIG)
    w = find_witnesses(s, nf, 0, 1)
    conj = nf.conjuncts[0]
    oracle = [b for b in range(s.n)
              if evaluate(s, conj.matrix, {"x": 0, "y1": b})]
    assert oracle and w.members == frozenset({0, oracle[0]})
    assert w.members == frozenset({0, 2})


def test_witness_absent():
    nf = nf_text("(forall x1 x2 . ~(R(x1,x2) & R(x2,x1))) & "
                 "(forall x . ~(~(exists y1 . R(x,y1))))")
    s = load_structure("domain 2\nrel R: (0,1)\nrel P:\nrel E1:\n", SIG)
    assert find_witnesses(s, nf, 1, 1) is None
    assert phi_witness_structure(s, nf, 1) is None
    full = phi_witness_structure(s, nf, 0)
    assert full is not None and full.members == frozenset({0, 1})


def test_witness_union_and_determinism():
    nf = nf_text("(forall x1 x2 . ~(R(x1,x2) & R(x2,x1))) & "
                 "(forall x . ~(~(exists y1 . R(x,y1)))) & "
                 "(forall x . ~(~(exists y1 . E1(x,y1) & P(y1))))")
    s = load_structure(
        "domain 3\nrel R: (0,1) (1,0)\nrel P: (2)\nrel E1: (0,2) (1,2)\n", SIG)
    w1 = phi_witness_structure(s, nf, 0)
    w2 = phi_witness_structure(s, nf, 0)
    assert w1 == w2
    assert w1.members == frozenset({0, 1, 2})


# -- homomorphisms -------------------------------------------------------------

def _exhaustive_hom(src, dst, c=None):
    for values in itertools.product(range(dst.n), repeat=src.n):
        mapping = dict(enumerate(values))
        if is_homomorphism(src, dst, mapping, c):
            return mapping
    return None


def test_identity_with_fixed():
    rng = random.Random(5)
    s = random_structure(rng, SIG, 3)
    fixed = tuple((e, e) for e in range(3))
    h = find_homomorphism(s, s, HomConstraint(fixed=fixed))
    assert h == {0: 0, 1: 1, 2: 2}


def test_edge_into_class():
    src = load_structure("domain 2\nrel E1: (0,1)\nrel R:\nrel P:\n", SIG)
    dst = load_structure("domain 3\nrel E1: (1,2)\nrel R:\nrel P:\n", SIG)
    h = find_homomorphism(src, dst)
    assert h is not None
    assert h == _exhaustive_hom(src, dst)


def test_reflexive_into_irreflexive_absent():
    src = load_structure("domain 1\nrel R: (0,0)\nrel P:\nrel E1:\n", SIG)
    dst = load_structure("domain 3\nrel R: (0,1) (1,2)\nrel P:\nrel E1:\n", SIG)
    assert find_homomorphism(src, dst) is None
    assert _exhaustive_hom(src, dst) is None


def test_hom_matches_exhaustive_random():
    rng = random.Random(99)
    for _ in range(60):
        src = random_structure(rng, SIG, rng.randint(1, 3))
        dst = random_structure(rng, SIG, rng.randint(1, 4))
        c = HomConstraint(preserve_1types=bool(rng.getrandbits(1)))
        mine = find_homomorphism(src, dst, c)
        theirs = _exhaustive_hom(src, dst, c)
        assert (mine is None) == (theirs is None)
        if mine is not None:
            assert is_homomorphism(src, dst, mine, c)


def test_hom_composition_closed():
    rng = random.Random(123)
    for _ in range(30):
        a = random_structure(rng, SIG, 2)
        b = random_structure(rng, SIG, 3)
        c = random_structure(rng, SIG, 3)
        h1 = find_homomorphism(a, b)
        h2 = find_homomorphism(b, c)
        if h1 is None or h2 is None:
            continue
        comp = {e: h2[h1[e]] for e in range(a.n)}
        assert is_homomorphism(a, c, comp)


def test_iso_on_reflects_negatives():
    src = load_structure("domain 2\nrel R: (0,1)\nrel P:\nrel E1:\n", SIG)
    dst = load_structure("domain 2\nrel R: (0,1) (1,0)\nrel P:\nrel E1:\n", SIG)
    assert find_homomorphism(src, dst) is not None
    c = HomConstraint(iso_on=(frozenset({0, 1}),))
    assert find_homomorphism(src, dst, c) is None  # R(1,0) not reflected


# -- modelhood criterion --------------------------------------------------------

def _double(s):
    """Disjoint union of two copies of s (for an equivalence-free signature)."""
    interp = {}
    for name, _ in s.sig.base:
        tuples = set(s.base_rel(name))
        tuples |= {tuple(x + s.n for x in t) for t in s.base_rel(name)}
        interp[name] = tuples
    return FiniteStructure.make(s.sig, 2 * s.n, interp)


def test_lemma3_identity_and_union():
    sig0 = Signature.parse("base P 1\nbase R 2\n")
    nf, _ = to_normal_form(parse_formula(
        "(forall x1 x2 . ~(R(x1,x2) & R(x2,x1))) & "
        "(forall x . ~(~(exists y1 . R(x,y1))))", sig0), sig0)
    pattern = find_model(nf, SearchBudget(max_size=3))
    assert pattern is not None
    rep = check_model_lemma3(pattern, pattern, nf)
    assert rep.ok
    doubled = _double(pattern)
    rep2 = check_model_lemma3(doubled, pattern, nf)
    assert rep2.ok
    assert check_model(doubled, nf)


def test_lemma3_missing_witness_detected():
    sig0 = Signature.parse("base P 1\nbase R 2\n")
    nf, _ = to_normal_form(parse_formula(
        "(forall x1 x2 . ~(R(x1,x2) & R(x2,x1))) & "
        "(forall x . ~(~(exists y1 . R(x,y1))))", sig0), sig0)
    pattern = find_model(nf, SearchBudget(max_size=3))
    bad = FiniteStructure.make(
        sig0, pattern.n + 1,
        {name: pattern.base_rel(name) for name, _ in sig0.base})
    rep = check_model_lemma3(bad, pattern, nf)
    assert not rep.ok
    assert pattern.n in rep.witness_failures
    assert not check_model(bad, nf)


def test_lemma3_soundness_link():
    rng = random.Random(31)
    nf = nf_text("(forall x1 x2 . ~(R(x1,x2) & ~P(x1))) & "
                 "(forall x . ~(~(exists y1 . E1(x,y1))))")
    pattern = find_model(nf, SearchBudget(max_size=2))
    for _ in range(40):
        cand = random_structure(rng, SIG, rng.randint(1, 3))
        if check_model_lemma3(cand, pattern, nf).ok:
            assert check_model(cand, nf)
