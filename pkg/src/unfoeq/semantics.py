"""Formula evaluation, witness structures, complete homomorphism search, and
the homomorphism-based modelhood criterion for normal-form sentences."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .normalform import NormalFormFormula
from .structures import FiniteStructure, restrict, type_slots
from .syntax import And, Atom, Equality, Exists, Formula, Neg, Or, UnivNeg, free_vars


class SemanticsError(Exception):
    pass


def evaluate(s: FiniteStructure, f: Formula, asg: dict[str, int] | None = None) -> bool:
    """Tarskian truth of f in s under the assignment (short-circuiting)."""
    asg = asg or {}
    missing = free_vars(f) - set(asg)
    if missing:
        raise SemanticsError(f"unassigned free variables: {', '.join(sorted(missing))}")
    return _eval(s, f, dict(asg))


def _eval(s, f, asg):
    if isinstance(f, Atom):
        return s.holds(f.symbol, tuple(asg[v] for v in f.args))
    if isinstance(f, Equality):
        return asg[f.left] == asg[f.right]
    if isinstance(f, And):
        return _eval(s, f.left, asg) and _eval(s, f.right, asg)
    if isinstance(f, Or):
        return _eval(s, f.left, asg) or _eval(s, f.right, asg)
    if isinstance(f, Neg):
        return not _eval(s, f.body, asg)
    if isinstance(f, UnivNeg):
        return not _eval_exists(s, f.vars, f.body, asg)
    if isinstance(f, Exists):
        return _eval_exists(s, f.vars, f.body, asg)
    raise TypeError(f"not a formula: {f!r}")


def _eval_exists(s, vars_, body, asg):
    saved = {v: asg.get(v) for v in vars_}
    try:
        for tup in itertools.product(range(s.n), repeat=len(vars_)):
            for v, e in zip(vars_, tup):
                asg[v] = e
            if _eval(s, body, asg):
                return True
        return False
    finally:
        for v, old in saved.items():
            if old is None:
                asg.pop(v, None)
            else:
                asg[v] = old


# ---------------------------------------------------------------------------
# Witness structures


@dataclass(frozen=True)
class WitnessStructure:
    owner: int
    conjunct_index: int | str      # 1-based, or "full"
    members: frozenset[int]
    structure: FiniteStructure     # induced on sorted(members)

    def member_list(self):
        return tuple(sorted(self.members))


def find_witnesses(s: FiniteStructure, nf: NormalFormFormula, a, i) -> WitnessStructure | None:
    """Lexicographically least witness tuple for element a and conjunct i."""
    if not 1 <= i <= nf.m:
        raise SemanticsError(f"conjunct index {i} out of range 1..{nf.m}")
    conj = nf.conjuncts[i - 1]
    asg = {conj.head: a}
    for tup in itertools.product(range(s.n), repeat=len(conj.witnesses)):
        for v, e in zip(conj.witnesses, tup):
            asg[v] = e
        if _eval(s, conj.matrix, asg):
            members = frozenset((a,) + tup)
            return WitnessStructure(a, i, members, restrict(s, members))
    return None


def phi_witness_structure(s: FiniteStructure, nf: NormalFormFormula, a) -> WitnessStructure | None:
    """Union of the chosen per-conjunct witness structures; None when some
    conjunct has no witnesses.  The owner is always a member."""
    members = {a}
    for i in range(1, nf.m + 1):
        w = find_witnesses(s, nf, a, i)
        if w is None:
            return None
        members |= w.members
    members = frozenset(members)
    return WitnessStructure(a, "full", members, restrict(s, members))


# ---------------------------------------------------------------------------
# Homomorphisms


@dataclass(frozen=True)
class HomConstraint:
    preserve_1types: bool = False
    fixed: tuple[tuple[int, int], ...] = ()
    iso_on: tuple[frozenset[int], ...] = ()
    allowed: tuple[tuple[int, frozenset[int]], ...] = ()


def find_homomorphism(src: FiniteStructure, dst: FiniteStructure,
                      c: HomConstraint | None = None) -> dict[int, int] | None:
    """Complete backtracking search for a map preserving all positive literals
    (base and distinguished), subject to the constraint.  Sources are tried in
    id order and targets in id order, so the result is deterministic and
    absence means no such map exists."""
    if src.sig != dst.sig:
        raise SemanticsError("homomorphism endpoints must share a signature")
    c = c or HomConstraint()
    fixed = dict(c.fixed)
    allowed = {e: s for e, s in c.allowed}
    iso_sets = [frozenset(s) for s in c.iso_on]

    binary_like = []
    for name in src.sig.symbols():
        for t in (src.base_rel(name) if src.sig.is_base(name) else src.eq_raw_pairs(name)):
            if len(set(t)) >= 2:
                binary_like.append((name, t))
    by_last = {}
    for name, t in binary_like:
        by_last.setdefault(max(t), []).append((name, t))

    one_bits_dst = [dst.one_type_bits(e) for e in range(dst.n)]
    mapping: dict[int, int] = {}

    def candidates(e):
        cand = range(dst.n)
        if e in fixed:
            cand = [fixed[e]]
        if e in allowed:
            cand = [x for x in cand if x in allowed[e]]
        return cand

    def ok(e, target):
        src_bits = src.one_type_bits(e)
        if c.preserve_1types:
            if one_bits_dst[target] != src_bits:
                return False
        elif src_bits & ~one_bits_dst[target]:
            return False
        for name, t in by_last.get(e, ()):
            if all(x in mapping or x == e for x in t):
                img = tuple(target if x == e else mapping[x] for x in t)
                if not dst.holds(name, img):
                    return False
        for group in iso_sets:
            if e not in group:
                continue
            for other in group:
                if other == e:
                    continue
                if mapping.get(other) == target:
                    return False  # injectivity on the group
                if other in mapping:
                    if src.pair_bits(e, other) != dst.pair_bits(target, mapping[other]):
                        return False
        return True

    order = sorted(range(src.n))

    def extend(idx):
        if idx == len(order):
            return True
        e = order[idx]
        for target in candidates(e):
            if ok(e, target):
                mapping[e] = target
                if extend(idx + 1):
                    return True
                del mapping[e]
        return False

    if not extend(0):
        return None
    # Full re-check, covering atoms of arity > 2 and any missed constraint.
    if not is_homomorphism(src, dst, mapping, c):
        raise SemanticsError("internal error: search produced a non-homomorphism")
    return dict(mapping)


def is_homomorphism(src, dst, mapping, c: HomConstraint | None = None) -> bool:
    """Check a complete map for positive-literal preservation and constraint."""
    if set(mapping) != set(range(src.n)):
        return False
    c = c or HomConstraint()
    for name in src.sig.symbols():
        tuples = src.base_rel(name) if src.sig.is_base(name) else src.eq_raw_pairs(name)
        for t in tuples:
            if not dst.holds(name, tuple(mapping[x] for x in t)):
                return False
    if c.preserve_1types:
        for e in range(src.n):
            if src.one_type_bits(e) != dst.one_type_bits(mapping[e]):
                return False
    for e, target in c.fixed:
        if mapping.get(e) != target:
            return False
    for e, targets in c.allowed:
        if mapping.get(e) not in targets:
            return False
    for group in c.iso_on:
        group = sorted(group)
        if len({mapping[e] for e in group}) != len(group):
            return False
        for a, b in itertools.combinations(group, 2):
            if src.pair_bits(a, b) != dst.pair_bits(mapping[a], mapping[b]):
                return False
        for a in group:
            if src.one_type_bits(a) != dst.one_type_bits(mapping[a]):
                return False
    return True


# ---------------------------------------------------------------------------
# Modelhood


def check_model(s: FiniteStructure, nf: NormalFormFormula) -> bool:
    """Direct evaluation of a normal-form sentence: the universal conjunct
    over all t-tuples, and witnesses for every element and conjunct."""
    names = nf.forall_vars()
    asg = {}
    for tup in itertools.product(range(s.n), repeat=nf.t):
        for v, e in zip(names, tup):
            asg[v] = e
        if _eval(s, nf.phi0, asg):
            return False
    for a in range(s.n):
        for i in range(1, nf.m + 1):
            if find_witnesses(s, nf, a, i) is None:
                return False
    return True


@dataclass(frozen=True)
class Lemma3Report:
    """Outcome of the homomorphism modelhood criterion: witness existence per
    element, and 1-type-preserving homomorphisms into the pattern for every
    tuple of at most t elements."""

    witness_failures: tuple[int, ...]
    tuple_failures: tuple[tuple[int, ...], ...]
    checked_tuples: int

    @property
    def ok(self):
        return not self.witness_failures and not self.tuple_failures

    def format_lines(self):
        lines = [f"witness-condition: {'pass' if not self.witness_failures else 'fail'}"]
        for a in self.witness_failures:
            lines.append(f"missing-witness-structure: {a}")
        lines.append(f"tuple-condition: {'pass' if not self.tuple_failures else 'fail'}")
        lines.append(f"tuples-checked: {self.checked_tuples}")
        for t in self.tuple_failures:
            lines.append(f"no-homomorphism-for: {','.join(map(str, t))}")
        lines.append(f"verdict: {'pass' if self.ok else 'fail'}")
        return lines


def check_model_lemma3(cand: FiniteStructure, pattern: FiniteStructure,
                       nf: NormalFormFormula) -> Lemma3Report:
    """Sufficient criterion for cand |= nf relative to a pattern model: every
    element has a full witness structure in cand, and the substructure induced
    by every tuple of at most t elements (with repetition) maps into the
    pattern by a 1-type-preserving homomorphism."""
    witness_failures = [a for a in range(cand.n)
                        if phi_witness_structure(cand, nf, a) is None]
    tuple_failures = []
    seen = set()
    checked = 0
    for tup in itertools.product(range(cand.n), repeat=nf.t):
        key = tuple(sorted(set(tup)))
        if key in seen:
            continue
        seen.add(key)
        checked += 1
        sub, _ = _induced(cand, key)
        if find_homomorphism(sub, pattern, HomConstraint(preserve_1types=True)) is None:
            tuple_failures.append(tup)
    return Lemma3Report(tuple(witness_failures), tuple(tuple_failures), checked)


def _induced(s, elems):
    from .structures import restrict_with_map
    return restrict_with_map(s, elems)
