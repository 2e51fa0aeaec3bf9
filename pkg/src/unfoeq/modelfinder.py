"""Exhaustive bounded model search: distinguished symbols are enumerated as
set partitions (or as transitive relations, for the reduction tests), base
relations as subsets.  This is the independent oracle for the rest of the
workbench, so it stays dependency-free and dumb on purpose."""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

from .normalform import NormalFormFormula
from .semantics import check_model
from .structures import FiniteStructure


class BudgetExhausted(Exception):
    """The node limit was hit before the search space was exhausted."""


@dataclass(frozen=True)
class SearchBudget:
    max_size: int = 3
    node_limit: int | None = None
    canonical_only: bool = False
    transitive_dist: bool = False

    def __post_init__(self):
        assert self.max_size >= 1


def restricted_growth_strings(n):
    """All set partitions of 0..n-1 as restricted growth strings, lex order."""
    rgs = [0] * n

    def rec(i, top):
        if i == n:
            yield tuple(rgs)
            return
        for v in range(top + 2):
            rgs[i] = v
            yield from rec(i + 1, max(top, v))

    yield from rec(1, 0) if n > 1 else iter([(0,) * n])


def _rgs_to_classes(rgs):
    groups = {}
    for e, c in enumerate(rgs):
        groups.setdefault(c, []).append(e)
    return tuple(tuple(g) for g in sorted(groups.values()))


@functools.lru_cache(maxsize=None)
def transitive_relations(n):
    """All transitive relations on 0..n-1 (raw pair sets), in mask order."""
    pairs = sorted(itertools.product(range(n), repeat=2))
    out = []
    for mask in range(1 << len(pairs)):
        rel = {p for i, p in enumerate(pairs) if mask >> i & 1}
        if all((a, d) in rel for a, b in rel for c, d in rel if b == c):
            out.append(frozenset(rel))
    return tuple(out)


def enumerate_structures(sig, n, transitive_dist=False):
    """Deterministic enumeration of all structures of size n over sig."""
    base_syms = [name for name, _ in sig.base]
    base_spaces = []
    for name in base_syms:
        tuples = sorted(itertools.product(range(n), repeat=sig.arity(name)))
        base_spaces.append((name, tuples))
    if transitive_dist:
        dist_space = transitive_relations(n)
    else:
        dist_space = [_rgs_to_classes(r) for r in restricted_growth_strings(n)]

    def base_choices():
        def rec(i, chosen):
            if i == len(base_spaces):
                yield dict(chosen)
                return
            name, tuples = base_spaces[i]
            for mask in range(1 << len(tuples)):
                chosen[name] = frozenset(t for j, t in enumerate(tuples) if mask >> j & 1)
                yield from rec(i + 1, chosen)
        yield from rec(0, {})

    for dist_choice in itertools.product(dist_space, repeat=sig.k):
        for base in base_choices():
            if transitive_dist:
                yield FiniteStructure.pre_closure(
                    sig, n, base, dict(zip(sig.eqs, dist_choice)))
            else:
                yield FiniteStructure(sig, n, dict(base),
                                      eq_classes=dict(zip(sig.eqs, dist_choice)))


def _encoding(s):
    parts = []
    for name, _ in s.sig.base:
        parts.append(tuple(sorted(s.base_rel(name))))
    for name in s.sig.eqs:
        parts.append(tuple(sorted(s.eq_raw_pairs(name))))
    return tuple(parts)


def _permuted_encoding(s, perm):
    parts = []
    for name, _ in s.sig.base:
        parts.append(tuple(sorted(tuple(perm[x] for x in t) for t in s.base_rel(name))))
    for name in s.sig.eqs:
        parts.append(tuple(sorted((perm[a], perm[b]) for a, b in s.eq_raw_pairs(name))))
    return tuple(parts)


def is_canonical(s):
    """True when s is the least structure in its isomorphism orbit."""
    own = _encoding(s)
    return all(own <= _permuted_encoding(s, perm)
               for perm in itertools.permutations(range(s.n)))


class _Counter:
    def __init__(self, limit):
        self.limit = limit
        self.count = 0

    def tick(self):
        self.count += 1
        if self.limit is not None and self.count > self.limit:
            raise BudgetExhausted(f"node limit {self.limit} exhausted")


def find_model(nf: NormalFormFormula, budget: SearchBudget) -> FiniteStructure | None:
    """First (hence minimal-size, canonically least) model within the budget,
    or None when there is no model of size <= max_size."""
    counter = _Counter(budget.node_limit)
    for n in range(1, budget.max_size + 1):
        for s in enumerate_structures(nf.sig, n, budget.transitive_dist):
            counter.tick()
            if budget.canonical_only and not is_canonical(s):
                continue
            if check_model(s, nf):
                return s
    return None


def count_models(nf: NormalFormFormula, size, transitive_dist=False,
                 canonical_only=False, node_limit=None) -> int:
    """Exact count of labeled structures of exactly `size` satisfying nf
    (canonical representatives only under canonical_only)."""
    counter = _Counter(node_limit)
    total = 0
    for s in enumerate_structures(nf.sig, size, transitive_dist):
        counter.tick()
        if canonical_only and not is_canonical(s):
            continue
        if check_model(s, nf):
            total += 1
    return total


def is_satisfiable_upto(nf: NormalFormFormula, size, transitive_dist=False,
                        node_limit=None) -> bool:
    budget = SearchBudget(max_size=size, node_limit=node_limit,
                          transitive_dist=transitive_dist)
    return find_model(nf, budget) is not None


def enumerate_models(nf: NormalFormFormula, size, transitive_dist=False,
                     limit=None):
    """All models of exactly `size`, in enumeration order (up to `limit`)."""
    found = 0
    for s in enumerate_structures(nf.sig, size, transitive_dist):
        if check_model(s, nf):
            yield s
            found += 1
            if limit is not None and found >= limit:
                return
