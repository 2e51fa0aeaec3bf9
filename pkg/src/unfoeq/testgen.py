"""Seeded random generation of small normal-form sentences, shared by the
fuzz command and the acceptance corpora.  Matrices are conjunctions of
literals with negation applied to unary atoms only, so every generated
sentence is in the accepted fragment by construction."""

from __future__ import annotations

import itertools
import random

from .modelfinder import SearchBudget, find_model
from .normalform import NormalFormConjunct, NormalFormFormula
from .syntax import And, Atom, Neg, Signature, conjoin


def _unary_symbols(sig):
    return [name for name, arity in sig.base if arity == 1]


def _binary_base(sig):
    return [name for name, arity in sig.base if arity == 2]


def _random_literal(rng, sig, vars_, allow_cross=True):
    """One literal over the given variables; negation only on unary atoms."""
    unaries = _unary_symbols(sig)
    binaries = _binary_base(sig) + list(sig.eqs)
    choices = []
    if unaries:
        choices += ["unary", "neg-unary"]
    if binaries and (allow_cross or len(vars_) == 1):
        choices.append("binary")
    kind = rng.choice(choices)
    if kind == "unary":
        return Atom(rng.choice(unaries), (rng.choice(vars_),))
    if kind == "neg-unary":
        return Neg(Atom(rng.choice(unaries), (rng.choice(vars_),)))
    sym = rng.choice(binaries)
    u, v = rng.choice(vars_), rng.choice(vars_)
    return Atom(sym, (u, v))


def random_matrix(rng, sig, vars_, max_literals=3):
    n = rng.randint(1, max_literals)
    return conjoin(_random_literal(rng, sig, vars_) for _ in range(n))


def random_nf(rng, sig: Signature, m_max=2) -> NormalFormFormula:
    """A random sentence of the normal shape with t = 2 and single-witness
    conjuncts whose matrices mention the witness."""
    phi0 = random_matrix(rng, sig, ("x1", "x2"))
    m = rng.randint(1, m_max)
    conjuncts = []
    for _ in range(m):
        body = random_matrix(rng, sig, ("x", "y1"), max_literals=2)
        binaries = _binary_base(sig) + list(sig.eqs)
        anchor = Atom(rng.choice(binaries), ("x", "y1"))
        conjuncts.append(NormalFormConjunct("x", ("y1",), And(anchor, body)))
    return NormalFormFormula(2, phi0, tuple(conjuncts), sig)


def random_nf_corpus(sig: Signature, rng: random.Random, count: int,
                     max_size: int = 3, min_size: int = 1,
                     max_attempts: int = 10_000):
    """Yield `count` distinct satisfiable (formula, minimal model) pairs;
    satisfiability is decided by the exhaustive finder up to max_size.
    min_size skips formulas whose minimal model is smaller (degenerate)."""
    seen = set()
    produced = 0
    for _ in range(max_attempts):
        if produced >= count:
            return
        nf = random_nf(rng, sig)
        key = nf.pretty()
        if key in seen:
            continue
        seen.add(key)
        model = find_model(nf, SearchBudget(max_size=max_size))
        if model is None or model.n < min_size:
            continue
        produced += 1
        yield nf, model
    raise RuntimeError(f"corpus generation stalled after {max_attempts} attempts")
